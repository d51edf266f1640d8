#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "qja/integrator.hpp"
#include "qja/quantum_core.hpp"
#include "qja/system_models.hpp"

namespace qja {

struct ClickPattern {
  std::vector<double> times;
  double span = 0.0;

  std::size_t n_clicks() const noexcept { return times.size(); }
  // Throws InvalidArgument unless times are nonnegative, strictly ascending
  // and no later than span.
  void validate() const;
  bool operator==(const ClickPattern&) const = default;
};

struct StopRule {
  enum class Kind { ClickCount, WallTime };
  Kind kind = Kind::ClickCount;
  double value = 1.0;

  static StopRule clicks(int n);
  static StopRule wall_time(double t);
  void validate() const;
};

struct TrajectorySeed {
  std::uint64_t master_seed = 0;
  std::uint64_t trajectory_index = 0;
};

// Per-trajectory random stream. The stream depends only on the seed pair, so
// a trajectory is reproducible whichever worker runs it.
class RngStream {
 public:
  explicit RngStream(TrajectorySeed seed);
  RngStream(std::uint64_t master_seed, std::uint64_t index) : RngStream(TrajectorySeed{master_seed, index}) {}

  std::uint64_t next() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // (0, 1).
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

StateVector no_jump_evolve(const JumpModel& model, const StateVector& state, double dt, const OdeOptions& opts = {});

// Channel index drawn with probability proportional to rate * <L^dag L>.
std::size_t sample_jump_channel(const JumpModel& model, const StateVector& state, double u);

// psi <- L psi / |L psi|; DarkState error when |L psi|^2 < 1e-14 |psi|^2.
StateVector apply_jump(const Operator& op, const StateVector& state);

struct JumpSearch {
  bool jumped = false;
  // Jump time measured from the start of the search; the horizon when no
  // jump occurred.
  double time = 0.0;
  // Unnormalized amplitudes at `time`.
  CVec state;
};

// Reference route: Dormand-Prince integration plus bisection of the norm
// threshold |psi(t)|^2 = r |psi(0)|^2 to relative time tolerance 1e-10.
JumpSearch find_jump_time(const JumpModel& model, const StateVector& state, double r,
                          double horizon = 1e6, const OdeOptions& opts = {});

// Fast route for time-independent H_cond: tables U_k = exp(-i H_cond s_k)
// with s_k = s_0 2^-k, and a greedy binary descent on the monotone norm.
class NoJumpPropagator {
 public:
  explicit NoJumpPropagator(const JumpModel& model, double s0 = 16.0, double resolution = 1e-11);

  double resolution() const noexcept { return steps_.back(); }
  int levels() const noexcept { return static_cast<int>(steps_.size()); }

  // Same contract as find_jump_time; the located time is within
  // resolution() of the exact threshold crossing.
  JumpSearch find(const CVec& psi, double r, double horizon) const;
  // Advances psi by dt, rounded down to a multiple of resolution().
  CVec propagate(const CVec& psi, double dt) const;

 private:
  std::vector<double> steps_;
  std::vector<DenseMat> tables_;
  Basis basis_;
};

struct SimulatorOptions {
  // A click-count trajectory that stops emitting for this long is an error.
  double max_silence = 1e6;
};

// Runs quantum-jump trajectories of one model; shares its tables read-only.
class TrajectorySimulator {
 public:
  explicit TrajectorySimulator(JumpModel model, SimulatorOptions opts = {});

  const JumpModel& model() const noexcept { return model_; }

  ClickPattern run(const StateVector& initial, const StopRule& stop, TrajectorySeed seed) const;

  // Normalized <op>(t) along one trajectory of the full unravelling at each
  // grid time (ascending, starting at or after 0).
  std::vector<double> observe(const StateVector& initial, const Operator& op, const std::vector<double>& t_grid,
                              TrajectorySeed seed) const;

 private:
  JumpModel model_;
  NoJumpPropagator prop_;
  SimulatorOptions opts_;
};

ClickPattern simulate_trajectory(const JumpModel& model, const StateVector& initial, const StopRule& stop,
                                 TrajectorySeed seed);

// Dense density-matrix propagation. With `conditional` the accessible
// channels do not feed the state back, so the trace is the no-click
// probability; otherwise this is the full Lindblad equation.
class DensityPropagator {
 public:
  explicit DensityPropagator(const JumpModel& model, OdeOptions opts = {});

  void advance(DenseMat& rho, double dt, bool conditional);
  // Sum over accessible channels of rate * L rho L^dag.
  DenseMat click_map(const DenseMat& rho) const;
  void derivative(const DenseMat& rho, DenseMat& drho, bool conditional) const;

  const OdeStats& stats() const noexcept { return ode_.stats(); }

 private:
  struct Feed {
    SparseMat op;
    SparseMat adj;
    double rate;
  };
  SparseMat minus_i_hcond_;
  SparseMat minus_i_hcond_adj_;
  // Channels sharing an operator are merged into one feed.
  std::vector<Feed> full_feeds_;
  std::vector<Feed> conditional_feeds_;
  std::vector<Feed> click_feeds_;
  Dopri5<DenseMat> ode_;
};

std::vector<DensityMatrix> master_equation_evolve(const JumpModel& model, const DensityMatrix& rho0,
                                                  const std::vector<double>& t_grid, const OdeOptions& opts = {});
DensityMatrix conditional_no_click_evolve(const JumpModel& model, const DensityMatrix& rho0, double t,
                                          const OdeOptions& opts = {});
// ln P0 at each grid time; the state is renormalized at least once per time
// unit so arbitrarily small probabilities stay representable.
std::vector<double> log_no_click_probability(const JumpModel& model, const DensityMatrix& rho0,
                                             const std::vector<double>& t_grid, const OdeOptions& opts = {});
// Traces of the conditional state at each grid time.
std::vector<double> no_click_probability(const JumpModel& model, const DensityMatrix& rho0,
                                         const std::vector<double>& t_grid, const OdeOptions& opts = {});

// Stationary state of the Lindblad equation by sparse LU on the vectorized
// generator with one row replaced by the trace condition.
DensityMatrix steady_state(const JumpModel& model);

}  // namespace qja
