#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "qja/io.hpp"
#include "qja/exact_inference.hpp"

namespace qja::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSimulation = 3;
inline constexpr int kExitUndersampled = 4;
inline constexpr int kExitIo = 5;

// Model selection shared by every command that builds a system.
struct SystemOptions {
  std::string model = "atom";
  // Path to a parameter document, or the document itself when it starts with '{'.
  std::string params;
  double delta = std::numeric_limits<double>::quiet_NaN();
  int cav_dim = 0;
  int mech_dim = 0;

  // Parameter document first, then flags; --model only picks defaults.
  SystemConfig resolve() const;
};

struct RunContext {
  std::string command;
  std::string out;
  RunManifest manifest;
  bool seed_given = false;
  std::uint64_t seed = 0;
  int workers_flag = 0;

  // Explicit seed, or one drawn from entropy; echoed to the manifest.
  std::uint64_t resolve_seed();
  // QJA_WORKERS, else --workers, else the hardware concurrency.
  int resolve_workers();
};

struct GenerateOptions {
  SystemOptions system;
  double grid_min = std::numeric_limits<double>::quiet_NaN();
  double grid_max = std::numeric_limits<double>::quiet_NaN();
  int grid_points = 101;
  std::size_t per_point = 2000;
  int stop_n = 200;
  double stop_time = 0.0;
  std::size_t total_time_n = 0;
  double bin_width = 0.25;
  double tau_max = 8.0;
};

struct SimulateOptions {
  SystemOptions system;
  int stop_n = 200;
  double stop_time = 0.0;
  std::uint64_t index = 0;
};

struct InferExactOptions {
  SystemOptions system;
  std::string data;
  double grid_min = std::numeric_limits<double>::quiet_NaN();
  double grid_max = std::numeric_limits<double>::quiet_NaN();
  int grid_points = 101;
  double prune_margin = 40.0;
};

struct InferAbcOptions {
  std::string library;
  std::string data;
  std::string stat = "total-time";
  std::string epsilon = "inf";
  double accept_fraction = 0.0;
  std::size_t nu = 0;
  bool with_replacement = false;
};

struct EvaluateOptions {
  std::string posterior_a;
  std::string posterior_b;
};

struct StatsOptions {
  std::vector<std::string> data;
  std::string stat = "gaps";
  std::size_t n = 0;
  double bin_width = 0.25;
  double tau_max = 8.0;
};

struct FigureOptions {
  std::string figure;
  std::string library;
  std::string exact;
  double delta_true = std::numeric_limits<double>::quiet_NaN();
  std::string stat;
  std::string epsilon;
  double accept_fraction = 0.0;
  std::vector<std::size_t> nu_list;
  int repeats = 10;
  int observed = 1;
  int trajectories = 2000;
  int cav_dim = 4;
  int mech_dim = 8;
  double tau_max = 20.0;
};

int run_generate(RunContext& ctx, const GenerateOptions& o);
int run_simulate(RunContext& ctx, const SimulateOptions& o);
int run_infer_exact(RunContext& ctx, const InferExactOptions& o);
int run_infer_abc(RunContext& ctx, const InferAbcOptions& o);
int run_evaluate(RunContext& ctx, const EvaluateOptions& o);
int run_stats(RunContext& ctx, const StatsOptions& o);
int run_export_figure(RunContext& ctx, const FigureOptions& o);

// "inf"/"infinity" or a positive number.
double parse_epsilon(const std::string& s);
ParameterGrid grid_for(const SystemConfig& sys, double lo, double hi, int points);

}  // namespace qja::cli
