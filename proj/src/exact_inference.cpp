#include "qja/exact_inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qja/error.hpp"
#include "qja/parallel.hpp"

namespace qja {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

ParameterGrid ParameterGrid::uniform(double lo, double hi, int points) {
  ParameterGrid g;
  if (points == 1 && hi == lo) {
    // A single point carries a unit-width bin.
    g.bin_width = 1.0;
    g.values = {lo};
    g.prior = {1.0};
    return g;
  }
  if (points < 2 || !(hi > lo)) throw Error(ErrorKind::InvalidArgument, "grid needs hi > lo and >= 2 points");
  g.bin_width = (hi - lo) / (points - 1);
  g.values.resize(points);
  for (int i = 0; i < points; ++i) g.values[i] = lo + i * g.bin_width;
  g.values.back() = hi;
  g.prior.assign(points, 1.0 / (points * g.bin_width));
  return g;
}

void ParameterGrid::validate() const {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "empty grid");
  if (!(bin_width > 0.0)) throw Error(ErrorKind::InvalidArgument, "grid bin width must be positive");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (std::abs(values[i] - values[i - 1] - bin_width) > 1e-12 * std::max(1.0, std::abs(values[i]))) {
      throw Error(ErrorKind::InvalidArgument, "grid spacing is not uniform");
    }
  }
  if (prior.size() != values.size()) throw Error(ErrorKind::InvalidArgument, "prior length");
  double mass = 0.0;
  for (double p : prior) {
    if (!(p >= 0.0)) throw Error(ErrorKind::InvalidArgument, "negative prior weight");
    mass += p * bin_width;
  }
  if (std::abs(mass - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "prior does not integrate to 1");
}

std::size_t ParameterGrid::index_of(double delta) const {
  const double pos = (delta - values.front()) / bin_width;
  const long i = std::lround(pos);
  const long clamped = std::clamp<long>(i, 0, static_cast<long>(values.size()) - 1);
  if (i != clamped || std::abs(values[clamped] - delta) > 1e-9 * bin_width) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "detuning " << delta << " is not on the grid (nearest point " << values[clamped] << ")";
    throw Error(ErrorKind::NotOnGrid, msg.str());
  }
  return static_cast<std::size_t>(clamped);
}

bool ParameterGrid::same_as(const ParameterGrid& o) const {
  if (values.size() != o.values.size()) return false;
  if (std::abs(bin_width - o.bin_width) > 1e-12 * bin_width) return false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::abs(values[i] - o.values[i]) > 1e-9 * bin_width) return false;
  }
  return true;
}

void Posterior::validate() const {
  grid.validate();
  if (density.size() != grid.size()) throw Error(ErrorKind::InvalidArgument, "posterior length");
  double mass = 0.0;
  for (double p : density) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorKind::InvalidArgument, "invalid posterior density");
    mass += p * grid.bin_width;
  }
  if (std::abs(mass - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "posterior does not integrate to 1");
}

double Posterior::mass_in(double lo, double hi) const {
  double m = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) {
    if (grid.values[i] >= lo - 1e-12 && grid.values[i] <= hi + 1e-12) m += density[i] * grid.bin_width;
  }
  return m;
}

double Posterior::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) m += grid.values[i] * density[i] * grid.bin_width;
  return m;
}

double Posterior::variance() const {
  const double mu = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) {
    v += (grid.values[i] - mu) * (grid.values[i] - mu) * density[i] * grid.bin_width;
  }
  return v;
}

double Posterior::argmax() const {
  const auto it = std::max_element(density.begin(), density.end());
  return grid.values[static_cast<std::size_t>(it - density.begin())];
}

Posterior prior_posterior(const ParameterGrid& grid) {
  grid.validate();
  return Posterior{grid, grid.prior};
}

namespace {

// w(tau) = A e^{-a tau} [cosh(b tau) - cos(c tau)].
struct AtomLaw {
  double A = 0.0, a = 0.0, b = 0.0, c = 0.0;
  bool silent = false;
};

AtomLaw atom_law(const AtomParams& p) {
  p.validate();
  AtomLaw law;
  if (p.rabi == 0.0) {
    law.silent = true;
    return law;
  }
  const double g2 = p.gamma * p.gamma;
  const double d2 = p.delta * p.delta;
  const double o2 = p.rabi * p.rabi;
  const double chi_p = (d2 + o2) / g2;
  const double chi_m = (d2 - o2) / g2;
  const double xi = 0.25 + 2.0 * chi_m + 4.0 * chi_p * chi_p;
  if (!(xi > 0.0)) throw Error(ErrorKind::Domain, "waiting-time discriminant is not positive");
  const double sx = std::sqrt(xi);
  const double zeta_p = std::max(0.0, sx + (0.5 - 2.0 * chi_p));
  const double zeta_m = std::max(0.0, sx - (0.5 - 2.0 * chi_p));
  law.A = o2 / (p.gamma * sx);
  law.a = 0.5 * p.gamma;
  law.b = law.a * std::sqrt(zeta_p);
  law.c = law.a * std::sqrt(zeta_m);
  return law;
}

double log_waiting(double tau, const AtomLaw& law) {
  if (law.silent || !(tau > 0.0)) return kNegInf;
  const double x = law.b * tau;
  const double s = std::sin(0.5 * law.c * tau);
  // cosh x - cos y = 2 sinh^2(x/2) + 2 sin^2(y/2), free of cancellation.
  double log_bracket;
  if (x <= 1.0) {
    const double sh = std::sinh(0.5 * x);
    log_bracket = std::log(2.0 * sh * sh + 2.0 * s * s);
  } else {
    const double e = std::exp(-x);
    log_bracket = x + std::log(0.5 * (1.0 - e) * (1.0 - e) + 2.0 * s * s * e);
  }
  return std::log(law.A) - law.a * tau + log_bracket;
}

double log_survival(double x, const AtomLaw& law) {
  if (law.silent || !(x > 0.0)) return 0.0;
  const double a = law.a, b = law.b, c = law.c;
  const double eb = std::exp(-b * x);
  const double bracket = 0.5 / (a - b) + 0.5 * eb * eb / (a + b) -
                         eb * (a * std::cos(c * x) - c * std::sin(c * x)) / (a * a + c * c);
  if (!(bracket > 0.0)) return kNegInf;
  return std::min(0.0, std::log(law.A) - (a - b) * x + std::log(bracket));
}

}  // namespace

double atom_log_waiting_density(double tau, const AtomParams& p) {
  if (tau < 0.0) throw Error(ErrorKind::InvalidArgument, "negative waiting time");
  return log_waiting(tau, atom_law(p));
}

double atom_waiting_density(double tau, const AtomParams& p) { return std::exp(atom_log_waiting_density(tau, p)); }

double atom_log_survival(double x, const AtomParams& p) {
  if (x < 0.0) throw Error(ErrorKind::InvalidArgument, "negative survival time");
  return log_survival(x, atom_law(p));
}

double atom_survival(double x, const AtomParams& p) { return std::exp(atom_log_survival(x, p)); }

WaitingMoments atom_waiting_moments(const AtomParams& p) {
  const AtomLaw law = atom_law(p);
  if (law.silent) throw Error(ErrorKind::NoEmission, "no emission at zero Rabi frequency");
  // Integrate up to where the remaining tail is below e^-45.
  double upper = 1.0;
  while (log_survival(upper, law) > -45.0) upper *= 2.0;
  const double chunk = 0.5;
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  auto integrate = [&](auto&& f) {
    double total = 0.0;
    for (double lo = 0.0; lo < upper; lo += chunk) {
      total += GK::integrate(f, lo, std::min(lo + chunk, upper), 8, 1e-14);
    }
    return total;
  };
  WaitingMoments m;
  m.normalization = integrate([&](double t) { return std::exp(log_waiting(t, law)); });
  m.mean = integrate([&](double t) { return t * std::exp(log_waiting(t, law)); });
  m.variance = integrate([&](double t) { return (t - m.mean) * (t - m.mean) * std::exp(log_waiting(t, law)); });

  const double g = p.gamma, d2 = p.delta * p.delta, o2 = p.rabi * p.rabi;
  m.mean_closed_form = (g * g + 4.0 * d2 + 2.0 * o2) / (g * o2);
  const double head = (g * g + 4.0 * d2) * (g * g + 4.0 * d2) - 2.0 * (g * g - 12.0 * d2) * o2;
  m.variance_printed = (head + 4.0 * o2) / (g * g * o2 * o2);
  m.variance_corrected = (head + 4.0 * o2 * o2) / (g * g * o2 * o2);
  return m;
}

double atom_log_likelihood(const ClickPattern& d, const AtomParams& p) {
  d.validate();
  const AtomLaw law = atom_law(p);
  double ll = 0.0;
  double prev = 0.0;
  for (double t : d.times) {
    const double lw = log_waiting(t - prev, law);
    if (lw == kNegInf) return kNegInf;
    ll += lw;
    prev = t;
  }
  return ll + log_survival(d.span - prev, law);
}

double conditional_log_likelihood(const JumpModel& model, const DensityMatrix& rho0, const ClickPattern& d,
                                  const LikelihoodOptions& opts) {
  d.validate();
  if (!(rho0.basis() == model.basis())) throw Error(ErrorKind::DimensionMismatch, "density matrix basis");
  if (!(opts.renorm_interval > 0.0)) throw Error(ErrorKind::InvalidArgument, "renormalization interval");
  if (model.accessible_channels().empty()) return d.times.empty() ? 0.0 : kNegInf;

  // Each click multiplies the trace by at most the largest eigenvalue of
  // sum rate L^dag L over the detected channels.
  double max_click_gain = std::numeric_limits<double>::infinity();
  if (std::isfinite(opts.abandon_below)) {
    DenseMat m = DenseMat::Zero(model.dim(), model.dim());
    for (std::size_t k : model.accessible_channels()) {
      const auto& ch = model.channels()[k];
      m += ch.rate * DenseMat(ch.op.matrix().adjoint() * ch.op.matrix());
    }
    Eigen::SelfAdjointEigenSolver<DenseMat> es(m, Eigen::EigenvaluesOnly);
    max_click_gain = std::log(es.eigenvalues().maxCoeff());
  }

  DensityPropagator prop(model, opts.ode);
  DenseMat rho = rho0.entries();
  double tr = rho.trace().real();
  if (!(tr > 0.0)) throw Error(ErrorKind::InvalidArgument, "initial state has no weight");
  double log_offset = std::log(tr);
  rho /= tr;

  auto propagate = [&](double dt) {
    while (dt > 0.0) {
      const double step = std::min(opts.renorm_interval, dt);
      prop.advance(rho, step, true);
      dt = (step == dt) ? 0.0 : dt - step;
      const double t2 = rho.trace().real();
      if (!(t2 > 0.0)) throw Error(ErrorKind::Integration, "conditional trace vanished");
      log_offset += std::log(t2);
      rho /= t2;
    }
  };

  double t = 0.0;
  const std::size_t n = d.times.size();
  for (std::size_t i = 0; i < n; ++i) {
    propagate(d.times[i] - t);
    t = d.times[i];
    rho = prop.click_map(rho);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    const double tc = rho.trace().real();
    if (!(tc > 0.0)) return kNegInf;
    log_offset += std::log(tc);
    rho /= tc;
    if (log_offset + static_cast<double>(n - i - 1) * max_click_gain < opts.abandon_below) return kNegInf;
  }
  propagate(d.span - t);
  return log_offset;
}

double optomech_log_likelihood(const ModelBuilder& family, const StateVector& initial, const ClickPattern& d,
                               double delta, const LikelihoodOptions& opts) {
  const JumpModel model = family(delta);
  return conditional_log_likelihood(model, DensityMatrix::pure(initial), d, opts);
}

double optomech_log_likelihood(const SystemConfig& family, const ClickPattern& d, double delta,
                               const LikelihoodOptions& opts) {
  const SystemConfig cfg = family.with_delta(delta);
  return conditional_log_likelihood(cfg.build(), DensityMatrix::pure(cfg.initial_state()), d, opts);
}

std::vector<double> grid_log_likelihood(const SystemConfig& family, const ClickPattern& d,
                                        const ParameterGrid& grid, const GridLikelihoodOptions& opts) {
  grid.validate();
  d.validate();
  const std::size_t n = grid.size();
  std::vector<double> ll(n, kNegInf);
  auto eval = [&](double delta, const ClickPattern& rec, double abandon) {
    if (family.kind == ModelKind::Atom) {
      AtomParams p = family.atom;
      p.delta = delta;
      return atom_log_likelihood(rec, p);
    }
    LikelihoodOptions lo = opts.likelihood;
    lo.abandon_below = abandon;
    return optomech_log_likelihood(family, rec, delta, lo);
  };
  if (family.kind == ModelKind::Atom || !std::isfinite(opts.prune_margin)) {
    parallel_for(n, opts.workers, [&](std::size_t i) { ll[i] = eval(grid.values[i], d, kNegInf); });
    return ll;
  }
  // Rank points by the likelihood of a short prefix, evaluate the leader in
  // full, then prune the rest against it. The threshold depends only on the
  // leader, so results do not depend on the worker count.
  const std::size_t k = std::min<std::size_t>(d.times.size(), 20);
  ClickPattern prefix;
  prefix.times.assign(d.times.begin(), d.times.begin() + static_cast<long>(k));
  prefix.span = k > 0 ? prefix.times.back() : 0.0;
  std::vector<double> proxy(n, kNegInf);
  parallel_for(n, opts.workers, [&](std::size_t i) { proxy[i] = eval(grid.values[i], prefix, kNegInf); });
  const std::size_t lead = static_cast<std::size_t>(std::max_element(proxy.begin(), proxy.end()) - proxy.begin());
  ll[lead] = eval(grid.values[lead], d, kNegInf);
  const double threshold = ll[lead] - opts.prune_margin;
  parallel_for(n, opts.workers, [&](std::size_t i) {
    if (i != lead) ll[i] = eval(grid.values[i], d, threshold);
  });
  return ll;
}

Posterior posterior_from_log_likelihood(const std::vector<double>& loglik, const ParameterGrid& grid) {
  grid.validate();
  if (loglik.size() != grid.size()) throw Error(ErrorKind::InvalidArgument, "log-likelihood length");
  double top = kNegInf;
  for (double v : loglik) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw Error(ErrorKind::InvalidArgument, "log-likelihood must be finite or -infinity");
    }
    top = std::max(top, v);
  }
  if (top == kNegInf) throw Error(ErrorKind::DegeneratePosterior, "log-likelihood is -infinity everywhere");
  Posterior post{grid, std::vector<double>(grid.size())};
  double z = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    post.density[i] = std::exp(loglik[i] - top) * grid.prior[i];
    z += post.density[i] * grid.bin_width;
  }
  if (!(z > 0.0)) throw Error(ErrorKind::DegeneratePosterior, "prior excludes every likely point");
  for (double& v : post.density) v /= z;
  return post;
}

Posterior true_posterior(const std::function<double(double)>& loglik, const ParameterGrid& grid) {
  std::vector<double> ll(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) ll[i] = loglik(grid.values[i]);
  return posterior_from_log_likelihood(ll, grid);
}

RejectionSamples rejection_sample_posterior(const std::function<double(double)>& unnorm,
                                            const ParameterGrid& proposal, double M, std::size_t n_proposals,
                                            std::mt19937_64& rng) {
  proposal.validate();
  if (!(M > 0.0)) throw Error(ErrorKind::InvalidArgument, "envelope constant must be positive");
  std::discrete_distribution<std::size_t> pick(proposal.prior.begin(), proposal.prior.end());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RejectionSamples out;
  out.proposals = n_proposals;
  for (std::size_t s = 0; s < n_proposals; ++s) {
    const std::size_t i = pick(rng);
    const double theta = proposal.values[i];
    const double ratio = unnorm(theta) / (M * proposal.prior[i]);
    if (ratio > 1.0 + 1e-12) throw Error(ErrorKind::InvalidEnvelope, "M p(theta) is below the target density");
    if (unif(rng) < ratio) out.samples.push_back(theta);
  }
  out.acceptance_rate = n_proposals ? static_cast<double>(out.samples.size()) / n_proposals : 0.0;
  return out;
}

}  // namespace qja
