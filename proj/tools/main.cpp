#include <chrono>
#include <cstdio>
#include <filesystem>
#include <memory>

#include <CLI11.hpp>

#include "cli.hpp"
#include "qja/error.hpp"

using namespace qja;
using namespace qja::cli;

namespace {

// Reads a JSON run document. A "command" key names the subcommand the other
// keys belong to; otherwise top-level objects named after subcommands are
// sections. Keys are option long names without dashes.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config document is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config document must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    if (j.contains("command")) {
      section(j.at("command").get<std::string>(), j, items);
    } else {
      for (const auto& [key, value] : j.items()) {
        if (value.is_object() && key != "params") {
          section(key, value, items);
        } else {
          items.push_back(item({}, key, value));
        }
      }
    }
    return items;
  }

 private:
  static std::vector<std::string> inputs(const nlohmann::json& v) {
    if (v.is_string()) return {v.get<std::string>()};
    if (v.is_boolean()) return {v.get<bool>() ? "true" : "false"};
    if (v.is_array()) {
      std::vector<std::string> out;
      for (const auto& e : v) out.push_back(inputs(e).front());
      return out;
    }
    return {v.dump()};
  }

  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const nlohmann::json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = name;
    it.inputs = inputs(v);
    return it;
  }

  static void section(const std::string& name, const nlohmann::json& body, std::vector<CLI::ConfigItem>& items) {
    items.push_back(item({name}, "++", nlohmann::json()));
    for (const auto& [key, value] : body.items()) {
      if (key != "command") items.push_back(item({name}, key, value));
    }
    items.push_back(item({name}, "--", nlohmann::json()));
  }
};

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidDimension:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::GridMismatch:
    case ErrorKind::NotOnGrid:
    case ErrorKind::IncompatibleHistogram:
    case ErrorKind::Exhausted:
    case ErrorKind::InsufficientClicks:
      return kExitConfig;
    case ErrorKind::Io:
    case ErrorKind::CorruptFile:
    case ErrorKind::Checksum:
    case ErrorKind::VersionMismatch:
      return kExitIo;
    default:
      return kExitSimulation;
  }
}

nlohmann::json echo_options(const CLI::App& sub) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* o : sub.get_options()) {
    if (o->get_lnames().empty() || o->get_lnames().front() == "help") continue;
    const auto& res = o->results();
    if (res.empty()) {
      if (!o->get_default_str().empty()) j[o->get_lnames().front()] = o->get_default_str();
    } else if (res.size() == 1) {
      j[o->get_lnames().front()] = res.front();
    } else {
      j[o->get_lnames().front()] = res;
    }
  }
  return j;
}

void add_common(CLI::App* sub, RunContext& ctx) {
  sub->add_option("--out", ctx.out, "Output path; the run manifest is written beside it");
  sub->add_option("--seed", ctx.seed, "Master seed (drawn from entropy when absent)");
  sub->add_option("--workers", ctx.workers_flag, "Worker threads (QJA_WORKERS overrides)");
}

void add_system(CLI::App* sub, SystemOptions& s, bool with_delta) {
  sub->add_option("--model", s.model, "atom | linear | nonlinear")->capture_default_str();
  sub->add_option("--params", s.params, "Parameter document (path or inline JSON)");
  if (with_delta) sub->add_option("--delta", s.delta, "Detuning");
  sub->add_option("--cav-dim", s.cav_dim, "Cavity Fock truncation");
  sub->add_option("--mech-dim", s.mech_dim, "Mechanical Fock truncation");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum-jump trajectory simulation and likelihood-free detuning inference"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON run document; command-line flags take precedence");

  RunContext ctx;
  GenerateOptions gen;
  SimulateOptions sim;
  InferExactOptions ie;
  InferAbcOptions ia;
  EvaluateOptions ev;
  StatsOptions st;
  FigureOptions fig;

  auto* g = app.add_subcommand("generate-library", "Simulate a trajectory library over a detuning grid");
  add_system(g, gen.system, false);
  g->add_option("--grid-min", gen.grid_min, "Lowest detuning (model default when absent)");
  g->add_option("--grid-max", gen.grid_max, "Highest detuning (model default when absent)");
  g->add_option("--grid-points", gen.grid_points)->capture_default_str();
  g->add_option("--per-point", gen.per_point, "Trajectories per grid point")->capture_default_str();
  g->add_option("--stop-n", gen.stop_n, "Clicks per trajectory")->capture_default_str();
  g->add_option("--stop-time", gen.stop_time, "Observation span instead of a click count");
  g->add_option("--total-time-n", gen.total_time_n, "N of the cached total time (defaults to --stop-n)");
  g->add_option("--bin-width", gen.bin_width)->capture_default_str();
  g->add_option("--tau-max", gen.tau_max)->capture_default_str();
  add_common(g, ctx);

  auto* s = app.add_subcommand("simulate", "Simulate one click pattern");
  add_system(s, sim.system, true);
  s->add_option("--stop-n", sim.stop_n)->capture_default_str();
  s->add_option("--stop-time", sim.stop_time, "Observation span instead of a click count");
  s->add_option("--index", sim.index, "Trajectory index within the seed's family")->capture_default_str();
  add_common(s, ctx);

  auto* e = app.add_subcommand("infer-exact", "Grid posterior from the exact likelihood");
  add_system(e, ie.system, false);
  e->add_option("--data", ie.data, "Click CSV");
  e->add_option("--grid-min", ie.grid_min);
  e->add_option("--grid-max", ie.grid_max);
  e->add_option("--grid-points", ie.grid_points)->capture_default_str();
  e->add_option("--prune-margin", ie.prune_margin, "Log-likelihood margin for abandoning grid points")
      ->capture_default_str();
  add_common(e, ctx);

  auto* a = app.add_subcommand("infer-abc", "ABC rejection posterior from a library");
  a->add_option("--library", ia.library);
  a->add_option("--data", ia.data, "Click CSV");
  a->add_option("--stat", ia.stat, "total-time | hist")->capture_default_str();
  a->add_option("--epsilon", ia.epsilon, "Acceptance threshold (inf allowed)")->capture_default_str();
  a->add_option("--accept-fraction", ia.accept_fraction, "Calibrate epsilon to accept this library fraction");
  a->add_option("--nu", ia.nu, "Sample budget (library size when absent)");
  a->add_flag("--with-replacement", ia.with_replacement);
  add_common(a, ctx);

  auto* v = app.add_subcommand("evaluate", "Bhattacharyya fidelity of two posteriors");
  v->add_option("--posterior-a", ev.posterior_a);
  v->add_option("--posterior-b", ev.posterior_b);
  add_common(v, ctx);

  auto* t = app.add_subcommand("stats", "Summary statistics of click patterns");
  t->add_option("--data", st.data, "Click CSVs");
  t->add_option("--stat", st.stat, "gaps | total-time | hist")->capture_default_str();
  t->add_option("--n", st.n, "Click count for total-time (every click when absent)");
  t->add_option("--bin-width", st.bin_width)->capture_default_str();
  t->add_option("--tau-max", st.tau_max)->capture_default_str();
  add_common(t, ctx);

  auto* f = app.add_subcommand("export-figure", "Write the data behind one figure as CSV files");
  f->add_option("--figure", fig.figure, "f2 | f3 | f4 | f5 | f6 | f7 | f8");
  f->add_option("--library", fig.library);
  f->add_option("--exact", fig.exact, "Exact posterior CSV (computed when absent)");
  f->add_option("--delta-true", fig.delta_true);
  f->add_option("--stat", fig.stat, "total-time | hist (figure default when absent)");
  f->add_option("--epsilon", fig.epsilon);
  f->add_option("--accept-fraction", fig.accept_fraction);
  f->add_option("--nu-list", fig.nu_list)->delimiter(',');
  f->add_option("--repeats", fig.repeats)->capture_default_str();
  f->add_option("--observed", fig.observed, "Observed trajectories")->capture_default_str();
  f->add_option("--trajectories", fig.trajectories)->capture_default_str();
  f->add_option("--cav-dim", fig.cav_dim)->capture_default_str();
  f->add_option("--mech-dim", fig.mech_dim)->capture_default_str();
  f->add_option("--tau-max", fig.tau_max)->capture_default_str();
  add_common(f, ctx);

  for (auto* sub : app.get_subcommands({})) sub->configurable();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  CLI::App* used = app.get_subcommands().front();
  ctx.command = used->get_name();
  if (ctx.out.empty() && (ctx.command == "evaluate" || ctx.command == "stats")) ctx.out = ctx.command + ".json";
  ctx.seed_given = used->get_option("--seed")->count() > 0;
  ctx.manifest.command = ctx.command;
  ctx.manifest.inputs = echo_options(*used);

  const auto t0 = std::chrono::steady_clock::now();
  int rc = kExitOk;
  std::string error;
  try {
    if (ctx.command == "generate-library") rc = run_generate(ctx, gen);
    else if (ctx.command == "simulate") rc = run_simulate(ctx, sim);
    else if (ctx.command == "infer-exact") rc = run_infer_exact(ctx, ie);
    else if (ctx.command == "infer-abc") rc = run_infer_abc(ctx, ia);
    else if (ctx.command == "evaluate") rc = run_evaluate(ctx, ev);
    else if (ctx.command == "stats") rc = run_stats(ctx, st);
    else rc = run_export_figure(ctx, fig);
  } catch (const Error& err) {
    rc = exit_code_for(err.kind());
    error = err.what();
  } catch (const nlohmann::json::exception& err) {
    rc = kExitConfig;
    error = err.what();
  } catch (const std::bad_alloc&) {
    rc = kExitSimulation;
    error = "out of memory";
  }
  if (!error.empty()) std::fprintf(stderr, "qja %s: %s\n", ctx.command.c_str(), error.c_str());

  ctx.manifest.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ctx.manifest.results["exit_code"] = rc;
  if (!error.empty()) ctx.manifest.results["error"] = error;
  // A failed run never replaces the manifest of an earlier successful one.
  const bool keep_old = !error.empty() && std::filesystem::exists(ctx.out + ".manifest.json");
  if (!ctx.out.empty() && !keep_old) {
    try {
      write_manifest(ctx.out, ctx.manifest);
    } catch (const Error& err) {
      std::fprintf(stderr, "qja %s: %s\n", ctx.command.c_str(), err.what());
      if (rc == kExitOk) rc = kExitIo;
    }
  }
  return rc;
}
