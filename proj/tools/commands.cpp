#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <thread>

#include "cli.hpp"
#include "qja/abc.hpp"
#include "qja/error.hpp"
#include "qja/library.hpp"
#include "qja/statistics.hpp"

namespace qja::cli {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::Config, what);
}

std::string out_path(const RunContext& ctx) {
  require(!ctx.out.empty(), ctx.command + " needs --out");
  return ctx.out;
}

StopRule stop_rule(int stop_n, double stop_time) {
  return stop_time > 0.0 ? StopRule::wall_time(stop_time) : StopRule::clicks(stop_n);
}

nlohmann::json posterior_summary(const Posterior& p) {
  return {{"mean", p.mean()}, {"variance", p.variance()}, {"argmax", p.argmax()}};
}

}  // namespace

SystemConfig SystemOptions::resolve() const {
  nlohmann::json doc = nlohmann::json::object();
  if (!params.empty()) {
    if (params.front() == '{') {
      try {
        doc = nlohmann::json::parse(params);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, std::string("inline parameter document: ") + e.what());
      }
    } else {
      doc = read_json(params);
    }
  }
  if (!doc.is_object()) throw Error(ErrorKind::Config, "parameter document must be a JSON object");
  if (!doc.contains("model")) doc["model"] = model;
  SystemConfig c = SystemConfig::from_json(doc);
  if (!std::isnan(delta)) c = c.with_delta(delta);
  if (cav_dim > 0 || mech_dim > 0) {
    require(c.kind != ModelKind::Atom, "the atom has no Fock truncation");
    c = c.with_dims(cav_dim > 0 ? cav_dim : c.cav_dim, mech_dim > 0 ? mech_dim : c.mech_dim);
  }
  return c;
}

std::uint64_t RunContext::resolve_seed() {
  if (!seed_given) {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  manifest.seed = seed;
  manifest.seed_from_entropy = !seed_given;
  return seed;
}

int RunContext::resolve_workers() {
  int n = 0;
  if (const char* env = std::getenv("QJA_WORKERS")) {
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      n = 0;
    }
  }
  if (n <= 0) n = workers_flag;
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  manifest.workers = n;
  return n;
}

double parse_epsilon(const std::string& s) {
  double eps = 0.0;
  try {
    std::size_t used = 0;
    eps = std::stod(s, &used);
    require(used == s.size(), "");
  } catch (const std::exception&) {
    throw Error(ErrorKind::Config, "epsilon must be a number or inf, got '" + s + "'");
  }
  require(eps > 0.0, "epsilon must be positive");
  return eps;
}

ParameterGrid grid_for(const SystemConfig& sys, double lo, double hi, int points) {
  const ParameterGrid def = sys.kind == ModelKind::Atom ? ParameterGrid::atom_default() : ParameterGrid::optomech_default();
  return ParameterGrid::uniform(std::isnan(lo) ? def.values.front() : lo, std::isnan(hi) ? def.values.back() : hi,
                                points);
}

int run_generate(RunContext& ctx, const GenerateOptions& o) {
  const std::string out = out_path(ctx);
  LibraryHeader h;
  h.system = o.system.resolve();
  const ParameterGrid grid = grid_for(h.system, o.grid_min, o.grid_max, o.grid_points);
  h.grid_min = grid.values.front();
  h.grid_max = grid.values.back();
  h.grid_points = o.grid_points;
  h.per_point_count = o.per_point;
  h.stop = stop_rule(o.stop_n, o.stop_time);
  h.master_seed = ctx.resolve_seed();
  h.stats.total_time_n = o.total_time_n > 0 ? o.total_time_n : static_cast<std::size_t>(o.stop_n);
  h.stats.bin_width = o.bin_width;
  h.stats.tau_max = o.tau_max;
  h.validate();

  const auto rep = generate_library(h, out, ctx.resolve_workers());
  ctx.manifest.outputs = {out};
  ctx.manifest.results["header"] = h.to_json();
  ctx.manifest.results["records"] = rep.records;
  ctx.manifest.results["incomplete_points"] = rep.incomplete_points;
  ctx.manifest.results["errors"] = rep.errors;
  std::printf("%zu records written to %s\n", rep.records, out.c_str());
  if (!rep.incomplete_points.empty()) {
    std::fprintf(stderr, "qja generate-library: %zu grid points incomplete (first error: %s)\n",
                 rep.incomplete_points.size(), rep.errors.empty() ? "unknown" : rep.errors.front().c_str());
    return kExitSimulation;
  }
  return kExitOk;
}

int run_simulate(RunContext& ctx, const SimulateOptions& o) {
  const std::string out = out_path(ctx);
  const SystemConfig sys = o.system.resolve();
  const ClickPattern d =
      simulate_trajectory(sys.build(), sys.initial_state(), stop_rule(o.stop_n, o.stop_time), {ctx.resolve_seed(), o.index});
  write_clicks_csv(out, d);
  ctx.manifest.outputs = {out};
  ctx.manifest.results = {{"system", sys.to_json()}, {"clicks", d.n_clicks()}, {"span", d.span}};
  std::printf("%zu clicks over %.17g written to %s\n", d.n_clicks(), d.span, out.c_str());
  return kExitOk;
}

int run_infer_exact(RunContext& ctx, const InferExactOptions& o) {
  const std::string out = out_path(ctx);
  require(!o.data.empty(), "infer-exact needs --data");
  const SystemConfig sys = o.system.resolve();
  const ClickPattern d = read_clicks_csv(o.data);
  const ParameterGrid grid = grid_for(sys, o.grid_min, o.grid_max, o.grid_points);
  GridLikelihoodOptions go;
  go.prune_margin = o.prune_margin;
  go.workers = ctx.resolve_workers();
  const auto ll = grid_log_likelihood(sys, d, grid, go);
  const Posterior post = posterior_from_log_likelihood(ll, grid);
  write_posterior_csv(out, post);
  std::size_t pruned = 0;
  for (double v : ll) pruned += std::isinf(v) ? 1 : 0;
  ctx.manifest.outputs = {out};
  ctx.manifest.results = posterior_summary(post);
  ctx.manifest.results["system"] = sys.to_json();
  ctx.manifest.results["pruned_points"] = pruned;
  std::printf("posterior mean %.10g, variance %.10g\n", post.mean(), post.variance());
  return kExitOk;
}

int run_infer_abc(RunContext& ctx, const InferAbcOptions& o) {
  const std::string out = out_path(ctx);
  require(!o.library.empty() && !o.data.empty(), "infer-abc needs --library and --data");
  const LibraryIndex lib = load_library(o.library, LoadOptions{false, 0.01});
  const ClickPattern d = read_clicks_csv(o.data);
  const StatisticKind stat = parse_statistic(o.stat);
  double eps = parse_epsilon(o.epsilon);
  if (o.accept_fraction > 0.0) {
    require(std::isinf(eps), "give either --epsilon or --accept-fraction");
    eps = calibrate_epsilon(d, lib, stat, o.accept_fraction);
  }
  const std::size_t nu = o.nu > 0 ? o.nu : lib.size();
  AbcConfig cfg = stat == StatisticKind::TotalTime ? AbcConfig::total_time(eps, nu) : AbcConfig::histogram(eps, nu);
  cfg.with_replacement = o.with_replacement;
  const AbcResult res = abc_infer(d, lib, cfg, lib.grid(), ctx.resolve_seed());
  ctx.manifest.results = {{"statistic", to_string(stat)},
                          {"epsilon", eps},
                          {"nu", nu},
                          {"accepted", res.accepted},
                          {"used", res.used},
                          {"acceptance_rate", res.acceptance_rate}};
  if (!res.posterior) {
    ctx.manifest.results["status"] = "undersampled";
    std::fprintf(stderr, "qja infer-abc: undersampled, none of %zu draws fell within epsilon %.6g\n", res.used, eps);
    return kExitUndersampled;
  }
  write_posterior_csv(out, *res.posterior);
  ctx.manifest.outputs = {out};
  ctx.manifest.results["status"] = "ok";
  ctx.manifest.results["posterior"] = posterior_summary(*res.posterior);
  std::printf("accepted %zu of %zu draws (epsilon %.6g)\n", res.accepted, res.used, eps);
  return kExitOk;
}

int run_evaluate(RunContext& ctx, const EvaluateOptions& o) {
  require(!o.posterior_a.empty() && !o.posterior_b.empty(), "evaluate needs --posterior-a and --posterior-b");
  const double f = bhattacharyya_fidelity(read_posterior_csv(o.posterior_a), read_posterior_csv(o.posterior_b));
  std::printf("%s\n", format_double(f).c_str());
  ctx.manifest.results["fidelity"] = f;
  write_json(ctx.out, {{"fidelity", f}, {"posterior_a", o.posterior_a}, {"posterior_b", o.posterior_b}});
  ctx.manifest.outputs = {ctx.out};
  return kExitOk;
}

int run_stats(RunContext& ctx, const StatsOptions& o) {
  require(!o.data.empty(), "stats needs --data");
  nlohmann::json res = {{"statistic", o.stat}, {"files", o.data.size()}};
  if (o.stat == "gaps") {
    std::vector<double> gaps;
    for (const auto& path : o.data) {
      const auto g = waiting_gaps(read_clicks_csv(path));
      gaps.insert(gaps.end(), g.begin(), g.end());
    }
    const Moments m = empirical_moments(gaps);
    res["count"] = m.count;
    res["mean"] = m.mean;
    res["variance"] = m.variance;
    res["snr"] = m.variance > 0.0 ? snr(gaps) : std::numeric_limits<double>::quiet_NaN();
    std::printf("%zu gaps, mean %.10g, variance %.10g\n", m.count, m.mean, m.variance);
  } else if (o.stat == "total-time") {
    std::vector<double> tn;
    for (const auto& path : o.data) {
      const ClickPattern d = read_clicks_csv(path);
      tn.push_back(total_time(d, o.n > 0 ? o.n : d.n_clicks()));
    }
    const Moments m = empirical_moments(tn);
    res["total_times"] = tn;
    res["mean"] = m.mean;
    res["variance"] = m.variance;
    std::printf("%zu patterns, mean total time %.10g\n", tn.size(), m.mean);
  } else if (o.stat == "hist" || o.stat == "waiting-histogram") {
    std::vector<WaitingHistogram> hs;
    for (const auto& path : o.data) hs.push_back(waiting_histogram(read_clicks_csv(path), o.bin_width, o.tau_max));
    const HistogramBand band = histogram_band(hs);
    res["bin_width"] = o.bin_width;
    res["tau_max"] = o.tau_max;
    res["mean"] = band.mean;
    res["stddev"] = band.stddev;
    std::printf("%zu histograms of %zu bins\n", hs.size(), band.mean.size());
  } else {
    throw Error(ErrorKind::Config, "unknown statistic '" + o.stat + "' (gaps, total-time, hist)");
  }
  write_json(ctx.out, res);
  ctx.manifest.outputs = {ctx.out};
  ctx.manifest.results = res;
  return kExitOk;
}

}  // namespace qja::cli
