#include <cmath>
#include <cstdio>
#include <filesystem>

#include "cli.hpp"
#include "qja/abc.hpp"
#include "qja/error.hpp"
#include "qja/library.hpp"
#include "qja/parallel.hpp"
#include "qja/statistics.hpp"

namespace qja::cli {

namespace fs = std::filesystem;

namespace {

struct Bundle {
  fs::path dir;
  std::string figure;
  RunManifest* manifest;

  std::string write(const std::string& name, const std::vector<std::string>& cols,
                    const std::vector<std::vector<double>>& rows) const {
    const std::string path = (dir / (figure + "_" + name + ".csv")).string();
    write_csv(path, cols, rows);
    manifest->outputs.push_back(path);
    return path;
  }
};

std::string tag(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::vector<double> linspace(double lo, double hi, double step) {
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + step * static_cast<double>(i));
  return out;
}

LibraryIndex need_library(const FigureOptions& o, const std::string& generate_hint, bool keep_clicks) {
  if (o.library.empty()) {
    throw Error(ErrorKind::Config,
                o.figure + " needs --library; generate one with: qja generate-library " + generate_hint);
  }
  return load_library(o.library, LoadOptions{keep_clicks, 0.01});
}

void figure_p0_and_waiting(const Bundle& b, const FigureOptions& o, std::uint64_t seed) {
  const auto t = linspace(0.0, 3.0, 0.05);
  for (double delta : {-1.0, -7.0}) {
    const SystemConfig cfg = SystemConfig::linear_default().with_delta(delta);
    const double rate = cfg.optomech.kappa_d * std::norm(classical_steady_state(cfg.optomech).alpha_ss);
    const auto lp = log_no_click_probability(cfg.build(), DensityMatrix::pure(cfg.initial_state()), t);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < t.size(); ++i) rows.push_back({t[i], std::exp(lp[i]), std::exp(-rate * t[i])});
    b.write("p0_delta" + tag(delta), {"t", "P0_numeric", "P0_analytic"}, rows);
  }
  const double bw = 0.1, tau_max = 10.0;
  for (double delta : {1.0, 7.0}) {
    const AtomParams p{2.0, delta, 1.0};
    TrajectorySimulator sim(build_atom_model(p));
    std::vector<double> gaps;
    for (std::uint64_t k = 0; gaps.size() < static_cast<std::size_t>(o.trajectories); ++k) {
      const auto g = waiting_gaps(sim.run(StateVector::fock(Basis{2}, {0}), StopRule::clicks(200), {seed, k}));
      gaps.insert(gaps.end(), g.begin(), g.end());
    }
    gaps.resize(static_cast<std::size_t>(o.trajectories));
    const auto h = waiting_histogram(gaps, bw, tau_max);
    const double n = static_cast<double>(gaps.size());
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      const double tau = (static_cast<double>(i) + 0.5) * bw;
      rows.push_back({tau, atom_waiting_density(tau, p), h.counts[i] / (n * bw), std::sqrt(h.counts[i]) / (n * bw)});
    }
    b.write("waiting_delta" + tag(delta), {"tau", "w_analytic", "w_empirical", "error"}, rows);
  }
}

void figure_g2(const Bundle& b, const FigureOptions& o) {
  const auto tau = linspace(0.0, o.tau_max, 0.05);
  auto emit = [&](const std::string& name, const JumpModel& m) {
    const auto g = g2_numeric(m, tau);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < tau.size(); ++i) rows.push_back({tau[i], g[i]});
    b.write(name, {"tau", "g2"}, rows);
  };
  for (double delta : {1.0, 7.0}) emit("g2_atom_delta" + tag(delta), build_atom_model(AtomParams{2.0, delta, 1.0}));
  for (double delta : {-1.0, -7.0}) emit("g2_linear_delta" + tag(delta), SystemConfig::linear_default().build(delta));
  const SystemConfig nl = SystemConfig::nonlinear_default().with_dims(o.cav_dim, o.mech_dim);
  std::vector<std::vector<double>> res;
  for (int n = 1; n <= 2; ++n) {
    const double dn = resonant_detuning(n, nl.optomech);
    res.push_back({static_cast<double>(n), dn});
    emit("g2_nonlinear_n" + std::to_string(n), nl.build(dn));
  }
  b.write("resonances", {"n", "delta_n"}, res);
}

void figure_total_time(const Bundle& b, const FigureOptions& o) {
  const LibraryIndex lib = need_library(o, "--model atom --per-point 2000 --stop-n 200 --out atom.qjl", true);
  const auto& grid = lib.grid();
  const std::size_t n = lib.header().stats.total_time_n;
  std::vector<std::vector<double>> tn_rows, snr_rows;
  std::vector<std::vector<double>> tn(grid.size()), gaps(grid.size());
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const auto& r = lib.records()[i];
    if (std::isfinite(r.total_time)) tn[lib.point_of(i)].push_back(r.total_time);
    const auto g = waiting_gaps(r.clicks);
    gaps[lib.point_of(i)].insert(gaps[lib.point_of(i)].end(), g.begin(), g.end());
  }
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (tn[p].size() >= 2) {
      const Moments m = empirical_moments(tn[p]);
      tn_rows.push_back({grid.values[p], m.mean, std::sqrt(m.variance)});
    }
    if (gaps[p].size() >= 2) snr_rows.push_back({grid.values[p], snr(gaps[p])});
  }
  b.write("total_time", {"delta", "mean_tN", "std_tN"}, tn_rows);
  b.write("snr", {"delta", "snr"}, snr_rows);
  if (lib.header().system.kind == ModelKind::Atom) {
    std::vector<std::vector<double>> rows;
    for (double d : grid.values) {
      AtomParams p = lib.header().system.atom;
      p.delta = d;
      const auto m = atom_waiting_moments(p);
      rows.push_back({d, n * m.mean, std::sqrt(n * m.variance), m.mean * m.mean / m.variance});
    }
    b.write("analytic", {"delta", "mean_tN", "std_tN", "snr"}, rows);
  }
}

void figure_abc(const Bundle& b, const FigureOptions& o, std::uint64_t seed, int workers) {
  const bool atom_fig = o.figure == "f5";
  const LibraryIndex lib = need_library(
      o, atom_fig ? "--model atom --per-point 2000 --stop-n 200 --out atom.qjl"
                  : "--model nonlinear --per-point 2000 --stop-n 80 --out nonlinear.qjl",
      false);
  const SystemConfig& sys = lib.header().system;
  const ParameterGrid& grid = lib.grid();
  const StatisticKind stat = parse_statistic(!o.stat.empty() ? o.stat : o.figure == "f8" ? "hist" : "total-time");
  double delta_true = o.delta_true;
  if (std::isnan(delta_true)) delta_true = sys.kind == ModelKind::Atom ? 1.0 : resonant_detuning(2, sys.optomech);
  std::vector<std::size_t> nus = o.nu_list;
  if (nus.empty()) {
    for (std::size_t nu = 100; nu < lib.size(); nu *= 10) nus.push_back(nu);
    nus.push_back(lib.size());
  }
  if (o.observed > 1 && !o.exact.empty()) throw Error(ErrorKind::Config, "--exact covers a single observed trajectory");

  const JumpModel truth = sys.build(delta_true);
  const std::size_t m = nus.size();
  std::vector<double> sum(m, 0.0), sum_sq(m, 0.0), accepted(m, 0.0);
  double prior_fid = 0.0;
  double runs = 0.0;
  nlohmann::json eps_used = nlohmann::json::array();
  for (int k = 0; k < o.observed; ++k) {
    const ClickPattern obs =
        simulate_trajectory(truth, sys.initial_state(), lib.header().stop, {derive_seed(seed, 1u << 20), std::uint64_t(k)});
    double eps = 0.0;
    if (!o.epsilon.empty()) {
      eps = parse_epsilon(o.epsilon);
    } else if (o.accept_fraction > 0.0 || sys.kind != ModelKind::Atom) {
      eps = calibrate_epsilon(obs, lib, stat, o.accept_fraction > 0.0 ? o.accept_fraction : 0.02);
    } else {
      eps = 20.0;
    }
    eps_used.push_back(eps);
    AbcConfig cfg = stat == StatisticKind::TotalTime ? AbcConfig::total_time(eps, nus.back())
                                                     : AbcConfig::histogram(eps, nus.back());
    Posterior exact;
    if (!o.exact.empty()) {
      exact = read_posterior_csv(o.exact);
    } else {
      GridLikelihoodOptions go;
      go.workers = workers;
      exact = posterior_from_log_likelihood(grid_log_likelihood(sys, obs, grid, go), grid);
    }
    const std::string stem = "obs" + std::to_string(k);
    const std::string clicks_path = (b.dir / (b.figure + "_" + stem + "_clicks.csv")).string();
    const std::string exact_path = (b.dir / (b.figure + "_" + stem + "_exact.csv")).string();
    write_clicks_csv(clicks_path, obs);
    write_posterior_csv(exact_path, exact);
    b.manifest->outputs.push_back(clicks_path);
    b.manifest->outputs.push_back(exact_path);
    const auto snaps = abc_infer_checkpoints(obs, lib, cfg, grid, derive_seed(seed, k), nus);
    for (std::size_t j = 0; j < m; ++j) {
      if (!snaps[j].posterior) continue;
      const std::string path = (b.dir / (b.figure + "_" + stem + "_abc_nu" + std::to_string(nus[j]) + ".csv")).string();
      write_posterior_csv(path, *snaps[j].posterior);
      b.manifest->outputs.push_back(path);
    }
    const auto curve = fidelity_curve(obs, lib, cfg, nus, exact, o.repeats, derive_seed(seed, k), workers);
    for (std::size_t j = 0; j < m; ++j) {
      // Pool per-trajectory moments into moments over every run.
      const double r = o.repeats;
      sum[j] += r * curve[j].mean_fidelity;
      sum_sq[j] += (r - 1.0) * curve[j].stddev_fidelity * curve[j].stddev_fidelity +
                   r * curve[j].mean_fidelity * curve[j].mean_fidelity;
      accepted[j] += r * curve[j].mean_accepted;
    }
    runs += o.repeats;
    prior_fid += bhattacharyya_fidelity(prior_posterior(grid), exact);
  }
  prior_fid /= o.observed;
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < m; ++j) {
    const double mean = sum[j] / runs;
    const double var = runs > 1.0 ? std::max(0.0, (sum_sq[j] - runs * mean * mean) / (runs - 1.0)) : 0.0;
    rows.push_back({static_cast<double>(nus[j]), mean, std::sqrt(var), prior_fid, accepted[j] / runs});
  }
  b.write("fidelity", {"nu", "mean_fidelity", "std_fidelity", "prior_fidelity", "mean_accepted"}, rows);
  b.manifest->results["delta_true"] = delta_true;
  b.manifest->results["statistic"] = to_string(stat);
  b.manifest->results["epsilon"] = eps_used;
  b.manifest->results["prior_fidelity"] = prior_fid;
}

void figure_histograms(const Bundle& b, const FigureOptions& o) {
  const LibraryIndex lib = need_library(o, "--model nonlinear --per-point 2000 --stop-n 80 --out nonlinear.qjl", false);
  const SystemConfig& sys = lib.header().system;
  if (sys.kind != ModelKind::NonlinearOptomech) throw Error(ErrorKind::Config, "f7 needs a non-linear library");
  const auto& grid = lib.grid();
  const StatConfig& sc = lib.header().stats;
  for (int n = 1; n <= 2; ++n) {
    const double dn = resonant_detuning(n, sys.optomech);
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (std::abs(grid.values[i] - dn) < std::abs(grid.values[best] - dn)) best = i;
    }
    std::vector<WaitingHistogram> hs;
    for (const auto& r : lib.query(grid.values[best])) hs.push_back(r.histogram(sc));
    if (hs.empty()) throw Error(ErrorKind::Config, "library has no records near the resonance n=" + std::to_string(n));
    const HistogramBand band = histogram_band(hs);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < band.mean.size(); ++i) {
      rows.push_back({(static_cast<double>(i) + 0.5) * sc.bin_width, band.mean[i], band.stddev[i]});
    }
    b.write("hist_n" + std::to_string(n), {"tau", "mean_count", "std_count"}, rows);
    b.manifest->results["delta_n" + std::to_string(n)] = {{"resonance", dn}, {"grid_point", grid.values[best]}};
  }
}

}  // namespace

int run_export_figure(RunContext& ctx, const FigureOptions& o) {
  static const std::vector<std::string> known{"f2", "f3", "f4", "f5", "f6", "f7", "f8"};
  if (std::find(known.begin(), known.end(), o.figure) == known.end()) {
    throw Error(ErrorKind::Config, "--figure must be one of f2 f3 f4 f5 f6 f7 f8");
  }
  if (ctx.out.empty()) throw Error(ErrorKind::Config, "export-figure needs --out (a directory)");
  const fs::path dir = ctx.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  ctx.out = (dir / o.figure).string();
  Bundle b{dir, o.figure, &ctx.manifest};
  const std::uint64_t seed = ctx.resolve_seed();
  const int workers = ctx.resolve_workers();
  if (o.figure == "f2") figure_p0_and_waiting(b, o, seed);
  else if (o.figure == "f3") figure_g2(b, o);
  else if (o.figure == "f4") figure_total_time(b, o);
  else if (o.figure == "f7") figure_histograms(b, o);
  else figure_abc(b, o, seed, workers);
  std::printf("%zu files written to %s\n", ctx.manifest.outputs.size(), dir.string().c_str());
  return kExitOk;
}

}  // namespace qja::cli
