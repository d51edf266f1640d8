#pragma once

#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "qja/integrator.hpp"
#include "qja/system_models.hpp"
#include "qja/trajectory.hpp"

namespace qja {

// Uniformly spaced detuning grid. Each value is the centre of a bin of width
// bin_width; prior is a density, so sum(prior) * bin_width = 1.
struct ParameterGrid {
  std::vector<double> values;
  double bin_width = 0.0;
  std::vector<double> prior;

  // points == 1 requires lo == hi and gives a unit-width bin.
  static ParameterGrid uniform(double lo, double hi, int points);
  // Atom default: [0, 10] in steps of 0.1.
  static ParameterGrid atom_default() { return uniform(0.0, 10.0, 101); }
  // Optomechanical default: [-10, 0] in steps of 0.1.
  static ParameterGrid optomech_default() { return uniform(-10.0, 0.0, 101); }

  std::size_t size() const noexcept { return values.size(); }
  void validate() const;
  // Index of a grid value; NotOnGrid error (naming the nearest point)
  // unless delta lies within 1e-9 bin widths of it.
  std::size_t index_of(double delta) const;
  bool same_as(const ParameterGrid& other) const;
};

struct Posterior {
  ParameterGrid grid;
  std::vector<double> density;

  void validate() const;
  // Probability mass of grid points with lo <= value <= hi.
  double mass_in(double lo, double hi) const;
  double mean() const;
  double variance() const;
  double argmax() const;
};

// Prior of the same grid viewed as a posterior.
Posterior prior_posterior(const ParameterGrid& grid);

double atom_waiting_density(double tau, const AtomParams& p);
double atom_log_waiting_density(double tau, const AtomParams& p);
// S(x) = 1 - integral_0^x w.
double atom_survival(double x, const AtomParams& p);
double atom_log_survival(double x, const AtomParams& p);

struct WaitingMoments {
  // Quadrature values (authoritative).
  double mean = 0.0;
  double variance = 0.0;
  // Closed forms: the mean, the variance as printed (last term 4 Omega^2)
  // and with 4 Omega^4 in its place.
  double mean_closed_form = 0.0;
  double variance_printed = 0.0;
  double variance_corrected = 0.0;
  double normalization = 0.0;
};

WaitingMoments atom_waiting_moments(const AtomParams& p);

// Renewal log-likelihood: ln w of every gap (the first from t = 0) plus
// ln S of the tail after the last click.
double atom_log_likelihood(const ClickPattern& d, const AtomParams& p);

struct LikelihoodOptions {
  OdeOptions ode = [] {
    OdeOptions o;
    o.rel_tol = 1e-8;
    o.abs_tol = 0.0;
    return o;
  }();
  // Longest propagation between renormalizations.
  double renorm_interval = 1.0;
  // Evaluation stops early, returning -infinity, once the result is
  // provably below this value.
  double abandon_below = -std::numeric_limits<double>::infinity();
};

// ln of the probability density of the full click record: conditional
// no-click propagation between clicks, the unnormalized click map at each
// click, and the no-click tail up to span.
double conditional_log_likelihood(const JumpModel& model, const DensityMatrix& rho0, const ClickPattern& d,
                                  const LikelihoodOptions& opts = {});

double optomech_log_likelihood(const ModelBuilder& family, const StateVector& initial, const ClickPattern& d,
                               double delta, const LikelihoodOptions& opts = {});
double optomech_log_likelihood(const SystemConfig& family, const ClickPattern& d, double delta,
                               const LikelihoodOptions& opts = {});

struct GridLikelihoodOptions {
  LikelihoodOptions likelihood;
  // Grid points whose log-likelihood is provably more than this far below
  // the best are abandoned and reported as -infinity.
  double prune_margin = 40.0;
  int workers = 1;
};

// Log-likelihoods on every grid point of the configured system.
std::vector<double> grid_log_likelihood(const SystemConfig& family, const ClickPattern& d,
                                        const ParameterGrid& grid, const GridLikelihoodOptions& opts = {});

Posterior posterior_from_log_likelihood(const std::vector<double>& loglik, const ParameterGrid& grid);
Posterior true_posterior(const std::function<double(double)>& loglik, const ParameterGrid& grid);

struct RejectionSamples {
  std::vector<double> samples;
  std::size_t proposals = 0;
  double acceptance_rate = 0.0;
};

// Proposes n_proposals grid values from the prior and accepts each with
// probability unnorm(theta) / (M prior(theta)).
RejectionSamples rejection_sample_posterior(const std::function<double(double)>& unnorm,
                                            const ParameterGrid& proposal, double M, std::size_t n_proposals,
                                            std::mt19937_64& rng);

}  // namespace qja
