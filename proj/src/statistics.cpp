#include "qja/statistics.hpp"

#include <cmath>

#include "qja/error.hpp"

namespace qja {

double total_time(const ClickPattern& d, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "N must be positive");
  if (d.times.size() < n) {
    throw Error(ErrorKind::InsufficientClicks,
                "pattern has " + std::to_string(d.times.size()) + " clicks, need " + std::to_string(n));
  }
  return d.times[n - 1];
}

std::vector<double> waiting_gaps(const ClickPattern& d) {
  std::vector<double> gaps;
  gaps.reserve(d.times.size());
  double prev = 0.0;
  for (double t : d.times) {
    gaps.push_back(t - prev);
    prev = t;
  }
  return gaps;
}

std::size_t WaitingHistogram::bin_count(double bin_width, double tau_max) {
  if (!(bin_width > 0.0) || !(tau_max > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "histogram bin width and range must be positive");
  }
  return static_cast<std::size_t>(std::ceil(tau_max / bin_width - 1e-9));
}

bool WaitingHistogram::compatible(const WaitingHistogram& o) const {
  return bin_width == o.bin_width && tau_max == o.tau_max && counts.size() == o.counts.size();
}

double WaitingHistogram::total() const {
  double s = overflow;
  for (double c : counts) s += c;
  return s;
}

WaitingHistogram waiting_histogram(const std::vector<double>& gaps, double bin_width, double tau_max) {
  WaitingHistogram h;
  h.bin_width = bin_width;
  h.tau_max = tau_max;
  const std::size_t nb = WaitingHistogram::bin_count(bin_width, tau_max);
  h.counts.assign(nb, 0.0);
  for (double g : gaps) {
    if (g >= tau_max) {
      h.overflow += 1.0;
      continue;
    }
    const auto idx = static_cast<std::size_t>(std::floor(g / bin_width + 1e-9));
    h.counts[std::min(idx, nb - 1)] += 1.0;
  }
  return h;
}

WaitingHistogram waiting_histogram(const ClickPattern& d, double bin_width, double tau_max) {
  return waiting_histogram(waiting_gaps(d), bin_width, tau_max);
}

WaitingHistogram normalize(const WaitingHistogram& h) {
  WaitingHistogram out = h;
  const double n = h.total();
  out.normalized = true;
  if (n == 0.0) return out;
  for (double& c : out.counts) c /= n;
  out.overflow /= n;
  return out;
}

HistogramBand histogram_band(const std::vector<WaitingHistogram>& hs) {
  if (hs.empty()) throw Error(ErrorKind::InvalidArgument, "no histograms");
  for (const auto& h : hs) {
    if (!h.compatible(hs.front())) throw Error(ErrorKind::IncompatibleHistogram, "histogram binning differs");
  }
  const std::size_t nb = hs.front().counts.size();
  HistogramBand band{std::vector<double>(nb, 0.0), std::vector<double>(nb, 0.0)};
  const double n = static_cast<double>(hs.size());
  for (const auto& h : hs) {
    for (std::size_t i = 0; i < nb; ++i) band.mean[i] += h.counts[i] / n;
  }
  if (hs.size() > 1) {
    for (const auto& h : hs) {
      for (std::size_t i = 0; i < nb; ++i) band.stddev[i] += (h.counts[i] - band.mean[i]) * (h.counts[i] - band.mean[i]);
    }
    for (double& s : band.stddev) s = std::sqrt(s / (n - 1.0));
  }
  return band;
}

Moments empirical_moments(const std::vector<double>& samples) {
  if (samples.size() < 2) throw Error(ErrorKind::InvalidArgument, "moments need at least two samples");
  Moments m;
  m.count = samples.size();
  for (double x : samples) m.mean += x;
  m.mean /= static_cast<double>(m.count);
  for (double x : samples) m.variance += (x - m.mean) * (x - m.mean);
  m.variance /= static_cast<double>(m.count - 1);
  return m;
}

double snr(const std::vector<double>& samples) {
  if (samples.size() < 2) throw Error(ErrorKind::UndefinedStatistic, "SNR needs at least two samples");
  const Moments m = empirical_moments(samples);
  if (!(m.variance > 0.0)) throw Error(ErrorKind::UndefinedStatistic, "SNR undefined for zero variance");
  return m.mean * m.mean / m.variance;
}

std::vector<double> g2_numeric(const JumpModel& model, const std::vector<double>& tau_grid, const OdeOptions& opts) {
  const auto acc = model.accessible_channels();
  if (acc.empty()) throw Error(ErrorKind::UndefinedStatistic, "model has no detected channel");
  const SparseMat& l = model.channels()[acc.front()].op.matrix();
  const SparseMat ldl = l.adjoint() * l;
  const DensityMatrix rho_ss = steady_state(model);
  const double n = (ldl * rho_ss.entries()).trace().real();
  if (!(n > 1e-300)) throw Error(ErrorKind::UndefinedStatistic, "zero stationary intensity");
  DenseMat sigma = l * rho_ss.entries() * l.adjoint();
  sigma /= sigma.trace().real();
  const auto states = master_equation_evolve(model, DensityMatrix(model.basis(), std::move(sigma)), tau_grid, opts);
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back((ldl * s.entries()).trace().real() / n);
  return out;
}

}  // namespace qja
