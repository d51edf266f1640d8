#include "qja/abc.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qja/error.hpp"
#include "qja/parallel.hpp"

namespace qja {

const char* to_string(StatisticKind k) noexcept {
  return k == StatisticKind::TotalTime ? "total-time" : "hist";
}

const char* to_string(DistanceKind k) noexcept { return k == DistanceKind::Absolute ? "absolute" : "l2"; }

StatisticKind parse_statistic(const std::string& s) {
  if (s == "total-time") return StatisticKind::TotalTime;
  if (s == "hist" || s == "waiting-histogram") return StatisticKind::WaitingHistogram;
  throw Error(ErrorKind::Config, "unknown statistic '" + s + "'");
}

AbcConfig AbcConfig::total_time(double epsilon, std::size_t nu) {
  return AbcConfig{StatisticKind::TotalTime, DistanceKind::Absolute, epsilon, nu, false};
}

AbcConfig AbcConfig::histogram(double epsilon, std::size_t nu) {
  return AbcConfig{StatisticKind::WaitingHistogram, DistanceKind::L2, epsilon, nu, false};
}

void AbcConfig::validate() const {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::Config, "epsilon must be positive");
  if (nu < 1) throw Error(ErrorKind::Config, "nu must be at least 1");
  const bool paired = (statistic == StatisticKind::TotalTime) == (distance == DistanceKind::Absolute);
  if (!paired) throw Error(ErrorKind::Config, "total-time uses the absolute distance and histograms use L2");
}

double distance_abs(double s, double s_prime) { return std::abs(s - s_prime); }

double distance_l2(const WaitingHistogram& h, const WaitingHistogram& h_prime) {
  if (!h.compatible(h_prime)) throw Error(ErrorKind::IncompatibleHistogram, "histogram binning differs");
  double s = 0.0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double d = h.counts[i] - h_prime.counts[i];
    s += d * d;
  }
  return std::sqrt(s);
}

ObservedSummary summarize(const ClickPattern& observed, StatisticKind statistic, const StatConfig& stats) {
  ObservedSummary s{statistic, 0.0, {}};
  if (statistic == StatisticKind::TotalTime) {
    s.total_time = total_time(observed, stats.total_time_n);
  } else {
    s.histogram = waiting_histogram(observed, stats.bin_width, stats.tau_max);
  }
  return s;
}

double record_distance(const LibraryRecord& r, const ObservedSummary& s) {
  if (s.statistic == StatisticKind::TotalTime) return distance_abs(r.total_time, s.total_time);
  if (r.hist_counts.size() != s.histogram.counts.size()) {
    throw Error(ErrorKind::IncompatibleHistogram, "library histogram binning differs from the observed one");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < r.hist_counts.size(); ++i) {
    const double d = static_cast<double>(r.hist_counts[i]) - s.histogram.counts[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

namespace {

AbcResult snapshot(const std::vector<std::size_t>& bins, std::size_t accepted, std::size_t used,
                   const ParameterGrid& grid) {
  AbcResult r;
  r.accepted = accepted;
  r.used = used;
  r.acceptance_rate = used ? static_cast<double>(accepted) / static_cast<double>(used) : 0.0;
  r.bin_counts = bins;
  if (accepted > 0) {
    Posterior p{grid, std::vector<double>(grid.size())};
    const double norm = static_cast<double>(accepted) * grid.bin_width;
    for (std::size_t i = 0; i < bins.size(); ++i) p.density[i] = static_cast<double>(bins[i]) / norm;
    r.posterior = std::move(p);
  }
  return r;
}

}  // namespace

std::vector<AbcResult> abc_infer_checkpoints(const ClickPattern& observed, const LibraryIndex& index,
                                             const AbcConfig& cfg, const ParameterGrid& grid, std::uint64_t seed,
                                             const std::vector<std::size_t>& checkpoints) {
  cfg.validate();
  if (!grid.same_as(index.grid())) throw Error(ErrorKind::GridMismatch, "inference grid differs from the library grid");
  if (checkpoints.empty() || checkpoints.front() < 1 || !std::is_sorted(checkpoints.begin(), checkpoints.end())) {
    throw Error(ErrorKind::InvalidArgument, "checkpoints must be ascending and positive");
  }
  const std::size_t nu = checkpoints.back();
  if (!cfg.with_replacement && nu > index.size()) {
    throw Error(ErrorKind::Exhausted, "nu = " + std::to_string(nu) + " exceeds the " + std::to_string(index.size()) +
                                          " library records");
  }
  const ObservedSummary obs = summarize(observed, cfg.statistic, index.header().stats);
  LibrarySampler sampler(index, seed, cfg.with_replacement);
  std::vector<std::size_t> bins(grid.size(), 0);
  std::vector<AbcResult> out;
  out.reserve(checkpoints.size());
  std::size_t accepted = 0;
  std::size_t next_cp = 0;
  for (std::size_t used = 1; used <= nu; ++used) {
    const std::size_t k = sampler.next_index();
    if (record_distance(index.records()[k], obs) <= cfg.epsilon) {
      ++bins[index.point_of(k)];
      ++accepted;
    }
    while (next_cp < checkpoints.size() && checkpoints[next_cp] == used) {
      out.push_back(snapshot(bins, accepted, used, grid));
      ++next_cp;
    }
  }
  return out;
}

AbcResult abc_infer(const ClickPattern& observed, const LibraryIndex& index, const AbcConfig& cfg,
                    const ParameterGrid& grid, std::uint64_t seed) {
  cfg.validate();
  return abc_infer_checkpoints(observed, index, cfg, grid, seed, {cfg.nu}).back();
}

double bhattacharyya_fidelity(const Posterior& p, const Posterior& q) {
  if (!p.grid.same_as(q.grid)) throw Error(ErrorKind::GridMismatch, "posteriors live on different grids");
  if (p.density.size() != q.density.size()) throw Error(ErrorKind::GridMismatch, "posterior lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < p.density.size(); ++i) s += std::sqrt(p.density[i] * q.density[i]);
  return s * p.grid.bin_width;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t r) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[1]) << 32) | words[0];
}

std::vector<FidelityPoint> fidelity_curve(const ClickPattern& observed, const LibraryIndex& index,
                                          const AbcConfig& cfg, const std::vector<std::size_t>& checkpoints,
                                          const Posterior& exact, int repeats, std::uint64_t seed, int workers) {
  if (repeats < 1) throw Error(ErrorKind::InvalidArgument, "repeats must be positive");
  const auto nrep = static_cast<std::size_t>(repeats);
  std::vector<std::vector<double>> fid(nrep);
  std::vector<std::vector<std::size_t>> acc(nrep);
  parallel_for(nrep, workers, [&](std::size_t r) {
    const auto runs = abc_infer_checkpoints(observed, index, cfg, index.grid(), derive_seed(seed, r), checkpoints);
    for (const auto& run : runs) {
      fid[r].push_back(run.posterior ? bhattacharyya_fidelity(*run.posterior, exact) : 0.0);
      acc[r].push_back(run.accepted);
    }
  });
  std::vector<FidelityPoint> out(checkpoints.size());
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    FidelityPoint& pt = out[c];
    pt.nu = checkpoints[c];
    for (std::size_t r = 0; r < nrep; ++r) {
      pt.mean_fidelity += fid[r][c] / repeats;
      pt.mean_accepted += static_cast<double>(acc[r][c]) / repeats;
      if (acc[r][c] == 0) ++pt.empty_runs;
    }
    if (nrep > 1) {
      double v = 0.0;
      for (std::size_t r = 0; r < nrep; ++r) v += (fid[r][c] - pt.mean_fidelity) * (fid[r][c] - pt.mean_fidelity);
      pt.stddev_fidelity = std::sqrt(v / static_cast<double>(nrep - 1));
    }
  }
  return out;
}

double calibrate_epsilon(const ClickPattern& observed, const LibraryIndex& index, StatisticKind statistic,
                         double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorKind::InvalidArgument, "fraction must be in (0, 1]");
  const ObservedSummary obs = summarize(observed, statistic, index.header().stats);
  std::vector<double> d;
  d.reserve(index.size());
  for (const auto& r : index.records()) {
    const double x = record_distance(r, obs);
    if (!std::isnan(x)) d.push_back(x);
  }
  if (d.empty()) throw Error(ErrorKind::UndefinedStatistic, "no library record has the statistic");
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(index.size()))) - 1;
  if (k >= d.size()) return d.size() == index.size() ? *std::max_element(d.begin(), d.end())
                                                     : std::numeric_limits<double>::infinity();
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  // Any positive epsilon is valid; a zero quantile means an exact duplicate.
  return std::max(d[k], std::numeric_limits<double>::min());
}

}  // namespace qja
