#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qja/exact_inference.hpp"
#include "qja/library.hpp"
#include "qja/statistics.hpp"

namespace qja {

enum class StatisticKind { TotalTime, WaitingHistogram };
enum class DistanceKind { Absolute, L2 };

const char* to_string(StatisticKind k) noexcept;
const char* to_string(DistanceKind k) noexcept;
// "total-time" or "hist"/"waiting-histogram"; Config error otherwise.
StatisticKind parse_statistic(const std::string& s);

struct AbcConfig {
  StatisticKind statistic = StatisticKind::TotalTime;
  DistanceKind distance = DistanceKind::Absolute;
  // Time units for total-time, raw counts for histograms. May be +infinity.
  double epsilon = std::numeric_limits<double>::infinity();
  std::size_t nu = 1;
  // Draws with replacement instead of sweeping the library once.
  bool with_replacement = false;

  // Total-time pairs with the absolute distance, histograms with L2.
  static AbcConfig total_time(double epsilon, std::size_t nu);
  static AbcConfig histogram(double epsilon, std::size_t nu);
  void validate() const;
};

struct AbcResult {
  // Absent when nothing was accepted.
  std::optional<Posterior> posterior;
  std::size_t accepted = 0;
  std::size_t used = 0;
  double acceptance_rate = 0.0;
  // Accepted records per grid point.
  std::vector<std::size_t> bin_counts;
};

double distance_abs(double s, double s_prime);
// IncompatibleHistogram error unless the binnings agree.
double distance_l2(const WaitingHistogram& h, const WaitingHistogram& h_prime);

// Summary of the observed pattern under the library's statistic settings.
struct ObservedSummary {
  StatisticKind statistic;
  double total_time = 0.0;
  WaitingHistogram histogram;
};

ObservedSummary summarize(const ClickPattern& observed, StatisticKind statistic, const StatConfig& stats);

// Distance from a library record's cached statistic. A record with fewer
// than N clicks has no total time and is at NaN distance (never accepted).
double record_distance(const LibraryRecord& r, const ObservedSummary& s);

// Draws cfg.nu records and bins the detunings of those within epsilon.
// GridMismatch error unless `grid` is the library grid; Exhausted error when
// sampling without replacement and nu exceeds the library size.
AbcResult abc_infer(const ClickPattern& observed, const LibraryIndex& index, const AbcConfig& cfg,
                    const ParameterGrid& grid, std::uint64_t seed);

// One run of abc_infer(cfg with nu = checkpoints.back()), reporting the
// partial result after each checkpoint (ascending).
std::vector<AbcResult> abc_infer_checkpoints(const ClickPattern& observed, const LibraryIndex& index,
                                             const AbcConfig& cfg, const ParameterGrid& grid, std::uint64_t seed,
                                             const std::vector<std::size_t>& checkpoints);

// Sum of sqrt(p_i q_i) * bin_width; GridMismatch error for different grids.
double bhattacharyya_fidelity(const Posterior& p, const Posterior& q);

struct FidelityPoint {
  std::size_t nu = 0;
  double mean_fidelity = 0.0;
  double stddev_fidelity = 0.0;
  double mean_accepted = 0.0;
  // Runs at this checkpoint that accepted nothing (counted as fidelity 0).
  std::size_t empty_runs = 0;
};

// Mean fidelity to `exact` over `repeats` independent runs, repeat r seeded
// from (seed, r).
std::vector<FidelityPoint> fidelity_curve(const ClickPattern& observed, const LibraryIndex& index,
                                          const AbcConfig& cfg, const std::vector<std::size_t>& checkpoints,
                                          const Posterior& exact, int repeats, std::uint64_t seed, int workers = 1);

// Smallest epsilon accepting at least `fraction` of the library records.
double calibrate_epsilon(const ClickPattern& observed, const LibraryIndex& index, StatisticKind statistic,
                         double fraction);

// Seed of the r-th independent run derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t r);

}  // namespace qja
