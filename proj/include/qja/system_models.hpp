#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qja/quantum_core.hpp"

namespace qja {

// Driven two-level atom. Gamma sets the time unit.
struct AtomParams {
  double rabi = 2.0;
  double delta = 0.0;
  double gamma = 1.0;

  void validate() const;
};

// Optomechanical system; kappa sets the time unit.
struct OptomechParams {
  double delta = 0.0;
  double omega_m = 0.0;
  double rabi = 0.0;
  double g = 0.0;
  double kappa = 1.0;
  double kappa_d = 1.0;
  double kappa_l = 0.0;
  double gamma = 0.0;
  double mbar = 0.0;

  void validate() const;
};

// Linear-regime parameters: 10 g = omega_m / 6 = kappa, Omega = 2 omega_m,
// gamma = omega_m / 1200, 9 kappa_l = kappa_d, mbar = 1.
OptomechParams linear_regime_params(double delta);
// Non-linear parameters: g / 4 = omega_m / (4 sqrt 2) = kappa, Omega = 0.3 omega_m,
// gamma = 1e-3 omega_m, 9 kappa_l = kappa_d, mbar = 1.
OptomechParams nonlinear_regime_params(double delta);

struct DecayChannel {
  Operator op;
  double rate;
  bool accessible;
  std::string label;
};

// Hamiltonian plus decay channels; H_cond = H - (i/2) sum rate L^dag L.
class JumpModel {
 public:
  // Channels with rate == 0 are dropped; negative rates are rejected.
  JumpModel(Operator hamiltonian, std::vector<DecayChannel> channels);

  const Basis& basis() const noexcept { return h_.basis(); }
  int dim() const noexcept { return h_.dim(); }
  const Operator& hamiltonian() const noexcept { return h_; }
  const Operator& conditional_hamiltonian() const noexcept { return h_cond_; }
  const std::vector<DecayChannel>& channels() const noexcept { return channels_; }

  std::vector<std::size_t> accessible_channels() const;

 private:
  Operator h_;
  Operator h_cond_;
  std::vector<DecayChannel> channels_;
};

struct LinearSteadyState {
  cplx alpha_ss;
  cplx beta_ss;
  double effective_detuning;
  double residual;
  bool used_time_integration = false;
};

struct SteadyStateOptions {
  double damping = 0.5;
  int max_iterations = 10000;
  double tolerance = 1e-10;
};

JumpModel build_atom_model(const AtomParams& p);
JumpModel build_nonlinear_model(const OptomechParams& p, int cav_dim = 6, int mech_dim = 15);
LinearSteadyState classical_steady_state(const OptomechParams& p, const SteadyStateOptions& opts = {});
// Residuals of the stationary classical Langevin equations at (alpha, beta).
double classical_residual(const OptomechParams& p, cplx alpha, cplx beta);
JumpModel build_linear_model(const OptomechParams& p, const LinearSteadyState& ss, int cav_dim = 5,
                             int mech_dim = 8);

double resonant_detuning(int n, const OptomechParams& p);
double energy_level(int n_cav, int n_mech, const OptomechParams& p);

enum class ModelKind { Atom, LinearOptomech, NonlinearOptomech };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

// A physical system with every parameter fixed except the detuning; the
// JSON field names are model, delta, rabi, omega_m, g, kappa, kappa_d,
// kappa_l, gamma, mbar, cav_dim, mech_dim.
struct SystemConfig {
  ModelKind kind = ModelKind::Atom;
  AtomParams atom;
  OptomechParams optomech;
  int cav_dim = 0;
  int mech_dim = 0;

  static SystemConfig atom_default();
  static SystemConfig linear_default();
  static SystemConfig nonlinear_default();

  double delta() const;
  SystemConfig with_delta(double delta) const;
  SystemConfig with_dims(int cav, int mech) const;

  JumpModel build() const;
  JumpModel build(double delta) const { return with_delta(delta).build(); }
  // Ground state for the atom, |0,0> for the optomechanical models (in the
  // displaced frame for the linear model).
  StateVector initial_state() const;

  nlohmann::json to_json() const;
  static SystemConfig from_json(const nlohmann::json& j);
};

using ModelBuilder = std::function<JumpModel(double delta)>;

}  // namespace qja
