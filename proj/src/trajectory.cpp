#include "qja/trajectory.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "qja/error.hpp"

namespace qja {

void ClickPattern::validate() const {
  double prev = -1.0;
  for (double t : times) {
    if (!(t >= 0.0) || !(t > prev)) throw Error(ErrorKind::InvalidArgument, "click times must ascend strictly");
    prev = t;
  }
  if (!times.empty() && span < times.back()) throw Error(ErrorKind::InvalidArgument, "span precedes last click");
}

StopRule StopRule::clicks(int n) {
  StopRule s{Kind::ClickCount, static_cast<double>(n)};
  s.validate();
  return s;
}

StopRule StopRule::wall_time(double t) {
  StopRule s{Kind::WallTime, t};
  s.validate();
  return s;
}

void StopRule::validate() const {
  if (!(value > 0.0)) throw Error(ErrorKind::InvalidArgument, "stop value must be positive");
  if (kind == Kind::ClickCount && value != std::floor(value)) {
    throw Error(ErrorKind::InvalidArgument, "click-count stop needs an integer");
  }
}

RngStream::RngStream(TrajectorySeed seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed.master_seed), static_cast<std::uint32_t>(seed.master_seed >> 32),
                    static_cast<std::uint32_t>(seed.trajectory_index),
                    static_cast<std::uint32_t>(seed.trajectory_index >> 32)};
  engine_.seed(seq);
}

namespace {

SparseMat minus_i(const Operator& op) { return SparseMat(op.matrix() * cplx(0.0, -1.0)); }

}  // namespace

StateVector no_jump_evolve(const JumpModel& model, const StateVector& state, double dt, const OdeOptions& opts) {
  if (!(state.basis() == model.basis())) throw Error(ErrorKind::DimensionMismatch, "no_jump_evolve basis");
  if (dt < 0.0) throw Error(ErrorKind::InvalidArgument, "negative time step");
  const SparseMat gen = minus_i(model.conditional_hamiltonian());
  CVec y = state.amplitudes();
  Dopri5<CVec> ode(opts);
  ode.advance([&gen](const CVec& v, CVec& dv) { dv.noalias() = gen * v; }, y, 0.0, dt);
  return StateVector(state.basis(), std::move(y));
}

std::size_t sample_jump_channel(const JumpModel& model, const StateVector& state, double u) {
  const auto& chans = model.channels();
  std::vector<double> weights(chans.size());
  double total = 0.0;
  for (std::size_t k = 0; k < chans.size(); ++k) {
    weights[k] = chans[k].rate * (chans[k].op.matrix() * state.amplitudes()).squaredNorm();
    total += weights[k];
  }
  if (!(total > 0.0)) throw Error(ErrorKind::DarkState, "every jump channel has zero weight");
  const double target = u * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < chans.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    last_positive = k;
    cum += weights[k];
    if (target < cum) return k;
  }
  return last_positive;
}

StateVector apply_jump(const Operator& op, const StateVector& state) {
  CVec out = op.matrix() * state.amplitudes();
  const double n2 = out.squaredNorm();
  if (n2 < 1e-14 * state.norm_squared()) throw Error(ErrorKind::DarkState, "jump onto a (numerically) dark state");
  out /= std::sqrt(n2);
  return StateVector(state.basis(), std::move(out));
}

JumpSearch find_jump_time(const JumpModel& model, const StateVector& state, double r, double horizon,
                          const OdeOptions& opts) {
  if (!(r > 0.0 && r < 1.0)) throw Error(ErrorKind::InvalidArgument, "threshold must lie in (0, 1)");
  const SparseMat gen = minus_i(model.conditional_hamiltonian());
  auto rhs = [&gen](const CVec& v, CVec& dv) { dv.noalias() = gen * v; };
  const double target = r * state.norm_squared();
  Dopri5<CVec> ode(opts);
  CVec y = state.amplitudes();
  double t = 0.0;
  double chunk = 0.25;
  while (t < horizon) {
    const double t_next = std::min(t + chunk, horizon);
    CVec y1 = y;
    ode.advance(rhs, y1, t, t_next);
    if (y1.squaredNorm() > target) {
      y.swap(y1);
      t = t_next;
      chunk = std::min(2.0 * chunk, 8.0);
      continue;
    }
    // Crossing bracketed in (t, t_next]; ylo is the state at lo.
    double lo = t, hi = t_next;
    CVec ylo = y;
    while (hi - lo > 1e-10 * hi) {
      const double mid = 0.5 * (lo + hi);
      CVec ym = ylo;
      ode.advance(rhs, ym, lo, mid);
      if (ym.squaredNorm() > target) {
        lo = mid;
        ylo.swap(ym);
      } else {
        hi = mid;
      }
    }
    ode.advance(rhs, ylo, lo, hi);
    return JumpSearch{true, hi, std::move(ylo)};
  }
  return JumpSearch{false, horizon, std::move(y)};
}

NoJumpPropagator::NoJumpPropagator(const JumpModel& model, double s0, double resolution) : basis_(model.basis()) {
  if (!(s0 > 0.0) || !(resolution > 0.0) || resolution > s0) {
    throw Error(ErrorKind::InvalidArgument, "propagator step ladder");
  }
  const DenseMat gen = DenseMat(model.conditional_hamiltonian().matrix()) * cplx(0.0, -1.0);
  for (double s = s0;; s *= 0.5) {
    steps_.push_back(s);
    tables_.push_back((gen * s).exp());
    if (s <= resolution) break;
  }
}

JumpSearch NoJumpPropagator::find(const CVec& psi, double r, double horizon) const {
  if (!(r > 0.0 && r < 1.0)) throw Error(ErrorKind::InvalidArgument, "threshold must lie in (0, 1)");
  const double target = r * psi.squaredNorm();
  CVec cur = psi;
  CVec trial(cur.size());
  CVec upper;
  double t = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  // Invariant: |cur|^2 > target at t, and |upper|^2 <= target at hi, with
  // hi - t no larger than the current level's step.
  while (t + steps_[0] <= horizon) {
    trial.noalias() = tables_[0] * cur;
    if (trial.squaredNorm() <= target) {
      hi = t + steps_[0];
      upper.swap(trial);
      break;
    }
    cur.swap(trial);
    t += steps_[0];
  }
  for (std::size_t k = 1; k < steps_.size(); ++k) {
    if (t + steps_[k] > horizon) continue;
    trial.noalias() = tables_[k] * cur;
    if (trial.squaredNorm() > target) {
      cur.swap(trial);
      t += steps_[k];
    } else {
      hi = t + steps_[k];
      upper.swap(trial);
    }
  }
  if (hi <= horizon) return JumpSearch{true, hi, std::move(upper)};
  return JumpSearch{false, horizon, std::move(cur)};
}

CVec NoJumpPropagator::propagate(const CVec& psi, double dt) const {
  CVec cur = psi;
  CVec tmp(cur.size());
  double remaining = dt;
  while (remaining >= steps_[0]) {
    tmp.noalias() = tables_[0] * cur;
    cur.swap(tmp);
    remaining -= steps_[0];
  }
  for (std::size_t k = 1; k < steps_.size(); ++k) {
    if (remaining >= steps_[k]) {
      tmp.noalias() = tables_[k] * cur;
      cur.swap(tmp);
      remaining -= steps_[k];
    }
  }
  return cur;
}

TrajectorySimulator::TrajectorySimulator(JumpModel model, SimulatorOptions opts)
    : model_(std::move(model)), prop_(model_), opts_(opts) {}

namespace {

void require_normalized(const JumpModel& model, const StateVector& initial) {
  if (!(initial.basis() == model.basis())) throw Error(ErrorKind::DimensionMismatch, "initial state basis");
  if (std::abs(initial.norm_squared() - 1.0) > 1e-10) {
    throw Error(ErrorKind::InvalidArgument, "initial state must be normalized");
  }
}

}  // namespace

ClickPattern TrajectorySimulator::run(const StateVector& initial, const StopRule& stop, TrajectorySeed seed) const {
  stop.validate();
  require_normalized(model_, initial);
  RngStream rng(seed);
  const bool by_clicks = stop.kind == StopRule::Kind::ClickCount;
  const auto n_target = static_cast<std::size_t>(stop.value);
  ClickPattern out;
  if (by_clicks) out.times.reserve(n_target);
  StateVector psi = initial;
  double t = 0.0;
  double last_click = 0.0;
  for (;;) {
    const double r = rng.uniform_open();
    const double horizon = by_clicks ? last_click + opts_.max_silence - t : stop.value - t;
    JumpSearch js = prop_.find(psi.amplitudes(), r, horizon);
    if (!js.jumped) {
      if (by_clicks) throw Error(ErrorKind::NoEmission, "no detected click within the silence limit");
      out.span = stop.value;
      return out;
    }
    t += js.time;
    const StateVector pre(model_.basis(), std::move(js.state));
    const std::size_t k = sample_jump_channel(model_, pre, rng.uniform());
    const DecayChannel& ch = model_.channels()[k];
    psi = apply_jump(ch.op, pre);
    if (!ch.accessible) continue;
    out.times.push_back(t);
    last_click = t;
    if (by_clicks && out.times.size() == n_target) {
      out.span = t;
      return out;
    }
  }
}

std::vector<double> TrajectorySimulator::observe(const StateVector& initial, const Operator& op,
                                                 const std::vector<double>& t_grid, TrajectorySeed seed) const {
  require_normalized(model_, initial);
  if (!(op.basis() == model_.basis())) throw Error(ErrorKind::DimensionMismatch, "observable basis");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (t_grid[i] < 0.0 || (i > 0 && t_grid[i] < t_grid[i - 1])) {
      throw Error(ErrorKind::InvalidArgument, "observation grid must be ascending and nonnegative");
    }
  }
  std::vector<double> out(t_grid.size());
  if (t_grid.empty()) return out;
  RngStream rng(seed);
  StateVector psi = initial;
  double t = 0.0;
  std::size_t idx = 0;
  while (idx < t_grid.size()) {
    JumpSearch js = prop_.find(psi.amplitudes(), rng.uniform_open(), t_grid.back() - t);
    const double t_jump = js.jumped ? t + js.time : std::numeric_limits<double>::infinity();
    for (; idx < t_grid.size() && t_grid[idx] < t_jump; ++idx) {
      const CVec phi = prop_.propagate(psi.amplitudes(), t_grid[idx] - t);
      out[idx] = phi.dot(op.matrix() * phi).real() / phi.squaredNorm();
    }
    if (!js.jumped) break;
    const StateVector pre(model_.basis(), std::move(js.state));
    const std::size_t k = sample_jump_channel(model_, pre, rng.uniform());
    psi = apply_jump(model_.channels()[k].op, pre);
    t = t_jump;
  }
  return out;
}

ClickPattern simulate_trajectory(const JumpModel& model, const StateVector& initial, const StopRule& stop,
                                 TrajectorySeed seed) {
  return TrajectorySimulator(model).run(initial, stop, seed);
}

namespace {

bool same_operator(const SparseMat& a, const SparseMat& b) {
  if (a.rows() != b.rows() || a.nonZeros() != b.nonZeros()) return false;
  return SparseMat(a - b).norm() == 0.0;
}

}  // namespace

DensityPropagator::DensityPropagator(const JumpModel& model, OdeOptions opts)
    : minus_i_hcond_(minus_i(model.conditional_hamiltonian())),
      minus_i_hcond_adj_(minus_i_hcond_.adjoint()),
      ode_(opts) {
  auto add = [](std::vector<Feed>& feeds, const SparseMat& op, double rate) {
    for (auto& f : feeds) {
      if (same_operator(f.op, op)) {
        f.rate += rate;
        return;
      }
    }
    feeds.push_back(Feed{op, SparseMat(op.adjoint()), rate});
  };
  for (const auto& ch : model.channels()) {
    add(full_feeds_, ch.op.matrix(), ch.rate);
    add(ch.accessible ? click_feeds_ : conditional_feeds_, ch.op.matrix(), ch.rate);
  }
}

void DensityPropagator::derivative(const DenseMat& rho, DenseMat& drho, bool conditional) const {
  // No Hermiticity shortcut: roundoff in the anti-Hermitian part must decay, not grow.
  drho.noalias() = minus_i_hcond_ * rho;
  drho.noalias() += rho * minus_i_hcond_adj_;
  DenseMat k(rho.rows(), rho.cols());
  for (const auto& f : conditional ? conditional_feeds_ : full_feeds_) {
    k.noalias() = rho * f.adj;
    drho.noalias() += f.rate * (f.op * k);
  }
}

DenseMat DensityPropagator::click_map(const DenseMat& rho) const {
  DenseMat out = DenseMat::Zero(rho.rows(), rho.cols());
  DenseMat k(rho.rows(), rho.cols());
  for (const auto& f : click_feeds_) {
    k.noalias() = rho * f.adj;
    out.noalias() += f.rate * (f.op * k);
  }
  return out;
}

void DensityPropagator::advance(DenseMat& rho, double dt, bool conditional) {
  ode_.advance([this, conditional](const DenseMat& r, DenseMat& dr) { derivative(r, dr, conditional); }, rho, 0.0,
               dt);
}

namespace {

void require_grid(const std::vector<double>& t_grid) {
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (t_grid[i] < 0.0 || (i > 0 && t_grid[i] < t_grid[i - 1])) {
      throw Error(ErrorKind::InvalidArgument, "time grid must be ascending and nonnegative");
    }
  }
}

}  // namespace

std::vector<DensityMatrix> master_equation_evolve(const JumpModel& model, const DensityMatrix& rho0,
                                                  const std::vector<double>& t_grid, const OdeOptions& opts) {
  if (!(rho0.basis() == model.basis())) throw Error(ErrorKind::DimensionMismatch, "density matrix basis");
  require_grid(t_grid);
  DensityPropagator prop(model, opts);
  DenseMat rho = rho0.entries();
  double t = 0.0;
  std::vector<DensityMatrix> out;
  out.reserve(t_grid.size());
  for (double tg : t_grid) {
    prop.advance(rho, tg - t, false);
    t = tg;
    out.emplace_back(model.basis(), rho);
  }
  return out;
}

DensityMatrix conditional_no_click_evolve(const JumpModel& model, const DensityMatrix& rho0, double t,
                                          const OdeOptions& opts) {
  if (!(rho0.basis() == model.basis())) throw Error(ErrorKind::DimensionMismatch, "density matrix basis");
  if (t < 0.0) throw Error(ErrorKind::InvalidArgument, "negative evolution time");
  DensityPropagator prop(model, opts);
  DenseMat rho = rho0.entries();
  prop.advance(rho, t, true);
  return DensityMatrix(model.basis(), std::move(rho));
}

std::vector<double> log_no_click_probability(const JumpModel& model, const DensityMatrix& rho0,
                                             const std::vector<double>& t_grid, const OdeOptions& opts) {
  if (!(rho0.basis() == model.basis())) throw Error(ErrorKind::DimensionMismatch, "density matrix basis");
  require_grid(t_grid);
  DensityPropagator prop(model, opts);
  DenseMat rho = rho0.entries();
  double log_offset = std::log(rho.trace().real());
  rho /= rho.trace().real();
  double t = 0.0;
  std::vector<double> out;
  out.reserve(t_grid.size());
  for (double tg : t_grid) {
    while (t < tg) {
      const double step = std::min(1.0, tg - t);
      prop.advance(rho, step, true);
      t = (step == tg - t) ? tg : t + step;
      const double tr = rho.trace().real();
      if (!(tr > 0.0)) throw Error(ErrorKind::Integration, "conditional trace vanished");
      log_offset += std::log(tr);
      rho /= tr;
    }
    out.push_back(log_offset);
  }
  return out;
}

std::vector<double> no_click_probability(const JumpModel& model, const DensityMatrix& rho0,
                                         const std::vector<double>& t_grid, const OdeOptions& opts) {
  std::vector<double> out = log_no_click_probability(model, rho0, t_grid, opts);
  for (double& v : out) v = std::exp(v);
  return out;
}

DensityMatrix steady_state(const JumpModel& model) {
  const int d = model.dim();
  const SparseMat& hc = model.conditional_hamiltonian().matrix();
  SparseMat id(d, d);
  id.setIdentity();
  // Column-major vec: vec(A X B) = (B^T kron A) vec(X).
  SparseMat gen = Eigen::kroneckerProduct(id, SparseMat(hc * cplx(0.0, -1.0))).eval();
  gen += Eigen::kroneckerProduct(SparseMat(SparseMat(hc.adjoint()).transpose() * cplx(0.0, 1.0)), id).eval();
  for (const auto& ch : model.channels()) {
    const SparseMat& l = ch.op.matrix();
    gen += ch.rate * SparseMat(Eigen::kroneckerProduct(SparseMat(l.conjugate()), l).eval());
  }
  std::vector<Eigen::Triplet<cplx>> trips;
  trips.reserve(gen.nonZeros() + d);
  for (int col = 0; col < gen.outerSize(); ++col) {
    for (SparseMat::InnerIterator it(gen, col); it; ++it) {
      if (it.row() != 0) trips.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int i = 0; i < d; ++i) trips.emplace_back(0, i * d + i, 1.0);
  const long n = static_cast<long>(d) * d;
  SparseMat sys(n, n);
  sys.setFromTriplets(trips.begin(), trips.end());
  sys.makeCompressed();
  Eigen::SparseLU<SparseMat> lu;
  lu.compute(sys);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "steady-state factorization failed");
  CVec rhs = CVec::Zero(n);
  rhs(0) = 1.0;
  const CVec x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "steady-state solve failed");
  DenseMat rho = Eigen::Map<const DenseMat>(x.data(), d, d);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace().real();
  return DensityMatrix(model.basis(), std::move(rho));
}

}  // namespace qja
