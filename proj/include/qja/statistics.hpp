#pragma once

#include <vector>

#include "qja/integrator.hpp"
#include "qja/system_models.hpp"
#include "qja/trajectory.hpp"

namespace qja {

// Time of the N-th click; InsufficientClicks error when there are fewer.
double total_time(const ClickPattern& d, std::size_t n);

// Inter-click gaps, the first measured from t = 0.
std::vector<double> waiting_gaps(const ClickPattern& d);

// Truncated waiting-time histogram. Gap g lands in bin floor(g / bin_width)
// (with a 1e-9 bin-width tolerance so exact multiples are not split by
// rounding); gaps >= tau_max are counted in overflow only.
struct WaitingHistogram {
  double bin_width = 0.25;
  double tau_max = 8.0;
  std::vector<double> counts;
  double overflow = 0.0;
  bool normalized = false;

  static std::size_t bin_count(double bin_width, double tau_max);
  bool compatible(const WaitingHistogram& other) const;
  // In-range counts plus overflow.
  double total() const;
};

WaitingHistogram waiting_histogram(const ClickPattern& d, double bin_width = 0.25, double tau_max = 8.0);
WaitingHistogram waiting_histogram(const std::vector<double>& gaps, double bin_width, double tau_max);
// Counts divided by the total number of gaps (overflow included), so each
// bin holds the probability of a gap falling in it.
WaitingHistogram normalize(const WaitingHistogram& h);

struct HistogramBand {
  std::vector<double> mean;
  std::vector<double> stddev;
};
// Per-bin mean and sample standard deviation over compatible histograms.
HistogramBand histogram_band(const std::vector<WaitingHistogram>& hs);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t count = 0;
};

// Sample mean and unbiased variance.
Moments empirical_moments(const std::vector<double>& samples);

// mean^2 / variance; UndefinedStatistic error for zero variance.
double snr(const std::vector<double>& samples);

// Second-order correlation of the first detected channel,
// Tr[L^dag L Phi_tau(L rho_ss L^dag)] / Tr[L^dag L rho_ss]^2.
std::vector<double> g2_numeric(const JumpModel& model, const std::vector<double>& tau_grid,
                               const OdeOptions& opts = {});

}  // namespace qja
