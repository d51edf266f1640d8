#include "qja/system_models.hpp"

#include <cmath>
#include <set>

#include <Eigen/Dense>

#include "qja/error.hpp"
#include "qja/integrator.hpp"

namespace qja {

void AtomParams::validate() const {
  if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidArgument, "atom decay rate must be positive");
  if (rabi < 0.0) throw Error(ErrorKind::InvalidArgument, "Rabi frequency must be nonnegative");
}

void OptomechParams::validate() const {
  if (!(kappa > 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa must be positive");
  if (kappa_d < 0.0 || kappa_l < 0.0 || gamma < 0.0 || mbar < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "rates and thermal occupation must be nonnegative");
  }
  if (std::abs(kappa_d + kappa_l - kappa) > 1e-12 * kappa) {
    throw Error(ErrorKind::InvalidArgument, "kappa_d + kappa_l must equal kappa");
  }
}

OptomechParams linear_regime_params(double delta) {
  OptomechParams p;
  p.kappa = 1.0;
  p.g = 0.1;
  p.omega_m = 6.0;
  p.rabi = 2.0 * p.omega_m;
  p.gamma = p.omega_m / 1200.0;
  p.kappa_d = 0.9;
  p.kappa_l = 0.1;
  p.mbar = 1.0;
  p.delta = delta;
  return p;
}

OptomechParams nonlinear_regime_params(double delta) {
  OptomechParams p;
  p.kappa = 1.0;
  p.g = 4.0;
  p.omega_m = 4.0 * std::sqrt(2.0);
  p.rabi = 0.3 * p.omega_m;
  p.gamma = 1e-3 * p.omega_m;
  p.kappa_d = 0.9;
  p.kappa_l = 0.1;
  p.mbar = 1.0;
  p.delta = delta;
  return p;
}

JumpModel::JumpModel(Operator hamiltonian, std::vector<DecayChannel> channels)
    : h_(std::move(hamiltonian)), h_cond_(h_) {
  SparseMat decay(h_.dim(), h_.dim());
  for (auto& ch : channels) {
    if (ch.rate < 0.0) throw Error(ErrorKind::InvalidArgument, "negative channel rate: " + ch.label);
    if (!(ch.op.basis() == h_.basis())) throw Error(ErrorKind::DimensionMismatch, "channel basis: " + ch.label);
    if (ch.rate == 0.0) continue;
    decay += ch.rate * SparseMat(ch.op.matrix().adjoint() * ch.op.matrix());
    channels_.push_back(std::move(ch));
  }
  h_cond_ = Operator(h_.basis(), SparseMat(h_.matrix() - cplx(0.0, 0.5) * decay));
}

std::vector<std::size_t> JumpModel::accessible_channels() const {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < channels_.size(); ++k) {
    if (channels_[k].accessible) idx.push_back(k);
  }
  return idx;
}

JumpModel build_atom_model(const AtomParams& p) {
  p.validate();
  const Operator sm = sigma_minus();
  const Operator sp = sigma_plus();
  Operator h = (sp * sm) * cplx(-p.delta) + (sm + sp) * cplx(0.5 * p.rabi);
  return JumpModel(std::move(h), {DecayChannel{sm, p.gamma, true, "detected"}});
}

JumpModel build_nonlinear_model(const OptomechParams& p, int cav_dim, int mech_dim) {
  p.validate();
  if (cav_dim < 2 || mech_dim < 2) throw Error(ErrorKind::InvalidDimension, "Fock truncations must be >= 2");
  const Operator a = tensor_product(annihilation_operator(cav_dim), identity(mech_dim));
  const Operator b = tensor_product(identity(cav_dim), annihilation_operator(mech_dim));
  const Operator ad = a.adjoint();
  const Operator bd = b.adjoint();
  const Operator n_cav = ad * a;

  Operator h = n_cav * cplx(-p.delta) + (bd * b) * cplx(p.omega_m) + (a + ad) * cplx(0.5 * p.rabi) +
               (n_cav * (b + bd)) * cplx(p.g);

  std::vector<DecayChannel> channels{
      {a, p.kappa_d, true, "detected"},
      {a, p.kappa_l, false, "lost"},
      {b, p.gamma * (p.mbar + 1.0), false, "phonon-emit"},
      {bd, p.gamma * p.mbar, false, "phonon-absorb"},
  };
  return JumpModel(std::move(h), std::move(channels));
}

double classical_residual(const OptomechParams& p, cplx alpha, cplx beta) {
  const double dprime = p.delta - 2.0 * p.g * beta.real();
  const cplx ra = (kI * dprime - 0.5 * p.kappa) * alpha - kI * (0.5 * p.rabi);
  const cplx rb = (-kI * p.omega_m - 0.5 * p.gamma) * beta - kI * p.g * std::norm(alpha);
  return std::sqrt(std::norm(ra) + std::norm(rb));
}

namespace {

// One sweep of the stationary equations: alpha from the current effective
// detuning, beta from the current photon number.
std::pair<cplx, cplx> fixed_point_map(const OptomechParams& p, cplx alpha, cplx beta) {
  const double dprime = p.delta - 2.0 * p.g * beta.real();
  const cplx alpha_new = (kI * (0.5 * p.rabi)) / (kI * dprime - 0.5 * p.kappa);
  const cplx beta_new = (kI * p.g * std::norm(alpha)) / (-kI * p.omega_m - 0.5 * p.gamma);
  return {alpha_new, beta_new};
}

bool iterate_fixed_point(const OptomechParams& p, const SteadyStateOptions& opts, cplx& alpha, cplx& beta,
                         double& residual) {
  residual = classical_residual(p, alpha, beta);
  for (int it = 0; it < opts.max_iterations && residual >= opts.tolerance; ++it) {
    auto [an, bn] = fixed_point_map(p, alpha, beta);
    alpha = (1.0 - opts.damping) * alpha + opts.damping * an;
    beta = (1.0 - opts.damping) * beta + opts.damping * bn;
    residual = classical_residual(p, alpha, beta);
  }
  return residual < opts.tolerance;
}

// Time integration of the classical Langevin equations from the empty cavity.
void integrate_classical(const OptomechParams& p, double t_end, cplx& alpha, cplx& beta) {
  Eigen::Vector2cd y(alpha, beta);
  auto rhs = [&p](const Eigen::Vector2cd& s, Eigen::Vector2cd& ds) {
    const double dprime = p.delta - 2.0 * p.g * s(1).real();
    ds(0) = (kI * dprime - 0.5 * p.kappa) * s(0) - kI * (0.5 * p.rabi);
    ds(1) = (-kI * p.omega_m - 0.5 * p.gamma) * s(1) - kI * p.g * std::norm(s(0));
  };
  OdeOptions o;
  o.rel_tol = 1e-11;
  o.abs_tol = 1e-14;
  Dopri5<Eigen::Vector2cd> ode(o);
  ode.advance(rhs, y, 0.0, t_end);
  alpha = y(0);
  beta = y(1);
}

}  // namespace

LinearSteadyState classical_steady_state(const OptomechParams& p, const SteadyStateOptions& opts) {
  p.validate();
  cplx alpha = 0.0, beta = 0.0;
  double residual = 0.0;
  bool integrated = false;
  if (!iterate_fixed_point(p, opts, alpha, beta, residual)) {
    const double slowest = p.gamma > 0.0 ? std::min(p.kappa, p.gamma) : p.kappa;
    alpha = 0.0;
    beta = 0.0;
    integrate_classical(p, 50.0 / slowest, alpha, beta);
    integrated = true;
    if (!iterate_fixed_point(p, opts, alpha, beta, residual)) {
      throw NoConvergenceError("classical steady state did not converge", residual);
    }
  }
  return LinearSteadyState{alpha, beta, p.delta - p.g * 2.0 * beta.real(), residual, integrated};
}

JumpModel build_linear_model(const OptomechParams& p, const LinearSteadyState& ss, int cav_dim, int mech_dim) {
  p.validate();
  if (cav_dim < 2 || mech_dim < 2) throw Error(ErrorKind::InvalidDimension, "Fock truncations must be >= 2");
  const Basis basis{cav_dim, mech_dim};
  const Operator a = tensor_product(annihilation_operator(cav_dim), identity(mech_dim));
  const Operator b = tensor_product(identity(cav_dim), annihilation_operator(mech_dim));
  const Operator ad = a.adjoint();
  const Operator bd = b.adjoint();
  const Operator id = identity(basis);
  const cplx alpha = ss.alpha_ss;
  const cplx big_g = alpha * p.g;

  Operator h = (ad * a) * cplx(-ss.effective_detuning) + (bd * b) * cplx(p.omega_m) +
               (ad * big_g + a * std::conj(big_g)) * (b + bd);
  // With jump operator alpha + a the dissipator carries an extra commutator
  // term; this Hermitian correction cancels it so the ensemble dynamics are
  // the linearised master equation with kappa D[a].
  h = h + (ad * alpha - a * std::conj(alpha)) * (kI * (0.5 * p.kappa));

  const Operator jump = id * alpha + a;
  std::vector<DecayChannel> channels{
      {jump, p.kappa_d, true, "detected"},
      {jump, p.kappa_l, false, "lost"},
      {b, p.gamma * (p.mbar + 1.0), false, "phonon-emit"},
      {bd, p.gamma * p.mbar, false, "phonon-absorb"},
  };
  return JumpModel(std::move(h), std::move(channels));
}

double resonant_detuning(int n, const OptomechParams& p) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "resonance index must be >= 1");
  if (p.omega_m == 0.0) throw Error(ErrorKind::SingularParameter, "omega_m = 0");
  return -(p.g * p.g / p.omega_m) * static_cast<double>(n);
}

double energy_level(int n_cav, int n_mech, const OptomechParams& p) {
  if (n_cav < 0 || n_mech < 0) throw Error(ErrorKind::InvalidArgument, "occupations must be >= 0");
  if (p.omega_m == 0.0) throw Error(ErrorKind::SingularParameter, "omega_m = 0");
  const double nc = n_cav;
  // Grouped so that energy_level(n, 0) is exactly 0 at resonant_detuning(n).
  return (-p.delta - (p.g * p.g / p.omega_m) * nc) * nc + p.omega_m * n_mech;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Atom: return "atom";
    case ModelKind::LinearOptomech: return "linear-optomech";
    case ModelKind::NonlinearOptomech: return "nonlinear-optomech";
  }
  return "atom";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "atom") return ModelKind::Atom;
  if (s == "linear-optomech" || s == "linear") return ModelKind::LinearOptomech;
  if (s == "nonlinear-optomech" || s == "nonlinear") return ModelKind::NonlinearOptomech;
  throw Error(ErrorKind::Config, "unknown model '" + s + "'");
}

SystemConfig SystemConfig::atom_default() {
  SystemConfig c;
  c.kind = ModelKind::Atom;
  return c;
}

SystemConfig SystemConfig::linear_default() {
  SystemConfig c;
  c.kind = ModelKind::LinearOptomech;
  c.optomech = linear_regime_params(-1.0);
  c.cav_dim = 5;
  c.mech_dim = 8;
  return c;
}

SystemConfig SystemConfig::nonlinear_default() {
  SystemConfig c;
  c.kind = ModelKind::NonlinearOptomech;
  c.optomech = nonlinear_regime_params(0.0);
  c.optomech.delta = resonant_detuning(1, c.optomech);
  c.cav_dim = 6;
  c.mech_dim = 15;
  return c;
}

double SystemConfig::delta() const { return kind == ModelKind::Atom ? atom.delta : optomech.delta; }

SystemConfig SystemConfig::with_delta(double delta) const {
  SystemConfig c = *this;
  if (kind == ModelKind::Atom) {
    c.atom.delta = delta;
  } else {
    c.optomech.delta = delta;
  }
  return c;
}

SystemConfig SystemConfig::with_dims(int cav, int mech) const {
  SystemConfig c = *this;
  c.cav_dim = cav;
  c.mech_dim = mech;
  return c;
}

JumpModel SystemConfig::build() const {
  switch (kind) {
    case ModelKind::Atom: return build_atom_model(atom);
    case ModelKind::LinearOptomech:
      return build_linear_model(optomech, classical_steady_state(optomech), cav_dim, mech_dim);
    case ModelKind::NonlinearOptomech: return build_nonlinear_model(optomech, cav_dim, mech_dim);
  }
  throw Error(ErrorKind::Config, "unknown model kind");
}

StateVector SystemConfig::initial_state() const {
  if (kind == ModelKind::Atom) return StateVector::fock(Basis{2}, {0});
  return StateVector::fock(Basis{cav_dim, mech_dim}, {0, 0});
}

nlohmann::json SystemConfig::to_json() const {
  nlohmann::json j;
  j["model"] = to_string(kind);
  if (kind == ModelKind::Atom) {
    j["delta"] = atom.delta;
    j["rabi"] = atom.rabi;
    j["gamma"] = atom.gamma;
    return j;
  }
  j["delta"] = optomech.delta;
  j["rabi"] = optomech.rabi;
  j["omega_m"] = optomech.omega_m;
  j["g"] = optomech.g;
  j["kappa"] = optomech.kappa;
  j["kappa_d"] = optomech.kappa_d;
  j["kappa_l"] = optomech.kappa_l;
  j["gamma"] = optomech.gamma;
  j["mbar"] = optomech.mbar;
  j["cav_dim"] = cav_dim;
  j["mech_dim"] = mech_dim;
  return j;
}

SystemConfig SystemConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "parameter document must be a JSON object");
  if (!j.contains("model")) throw Error(ErrorKind::Config, "parameter document lacks 'model'");
  const ModelKind kind = parse_model_kind(j.at("model").get<std::string>());
  SystemConfig c = kind == ModelKind::Atom             ? atom_default()
                   : kind == ModelKind::LinearOptomech ? linear_default()
                                                       : nonlinear_default();
  static const std::set<std::string> atom_keys{"model", "delta", "rabi", "gamma"};
  static const std::set<std::string> om_keys{"model", "delta",   "rabi",    "omega_m", "g",       "kappa",
                                             "kappa_d", "kappa_l", "gamma", "mbar",    "cav_dim", "mech_dim"};
  const auto& keys = kind == ModelKind::Atom ? atom_keys : om_keys;
  try {
    for (const auto& [key, value] : j.items()) {
      if (!keys.count(key)) throw Error(ErrorKind::Config, "unknown parameter '" + key + "'");
    }
    if (kind == ModelKind::Atom) {
      c.atom.delta = j.value("delta", c.atom.delta);
      c.atom.rabi = j.value("rabi", c.atom.rabi);
      c.atom.gamma = j.value("gamma", c.atom.gamma);
      c.atom.validate();
      return c;
    }
    auto& p = c.optomech;
    p.delta = j.value("delta", p.delta);
    p.rabi = j.value("rabi", p.rabi);
    p.omega_m = j.value("omega_m", p.omega_m);
    p.g = j.value("g", p.g);
    p.kappa = j.value("kappa", p.kappa);
    p.kappa_d = j.value("kappa_d", p.kappa_d);
    p.kappa_l = j.value("kappa_l", p.kappa_l);
    p.gamma = j.value("gamma", p.gamma);
    p.mbar = j.value("mbar", p.mbar);
    c.cav_dim = j.value("cav_dim", c.cav_dim);
    c.mech_dim = j.value("mech_dim", c.mech_dim);
    p.validate();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    throw Error(ErrorKind::Config, e.what());
  }
  if (c.cav_dim < 2 || c.mech_dim < 2) throw Error(ErrorKind::Config, "cav_dim and mech_dim must be >= 2");
  return c;
}

}  // namespace qja
