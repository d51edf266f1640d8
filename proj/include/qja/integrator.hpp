#pragma once

// Adaptive Dormand-Prince 5(4) integrator for Eigen-valued ODEs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "qja/error.hpp"

namespace qja {

struct OdeOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  int max_consecutive_rejections = 60;
  long max_steps = 50'000'000;
};

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evaluations = 0;
};

// `Rhs` is callable as f(const State& y, State& dy) (autonomous systems only).
// `Observer` is called as obs(t, y) after every accepted step.
template <class State>
class Dopri5 {
 public:
  explicit Dopri5(OdeOptions opts = {}) : opts_(opts) {}

  const OdeStats& stats() const noexcept { return stats_; }
  double last_step() const noexcept { return h_; }

  template <class Rhs, class Observer>
  void advance(Rhs&& f, State& y, double t0, double t1, Observer&& obs) {
    if (!(t1 >= t0)) throw Error(ErrorKind::Integration, "integration interval reversed");
    if (t1 == t0) return;
    double t = t0;
    k1_ = y;
    f(y, k1_);
    ++stats_.rhs_evaluations;
    if (h_ <= 0.0) h_ = initial_step(y, t1 - t0);
    int rejections = 0;
    long steps = 0;
    while (t < t1) {
      if (++steps > opts_.max_steps) throw Error(ErrorKind::Integration, "step budget exhausted");
      double h = std::min({h_, opts_.max_step, t1 - t});
      const bool last = (t + h >= t1);
      if (last) h = t1 - t;

      tmp_ = y + h * (a21 * k1_);
      f(tmp_, k2_);
      tmp_ = y + h * (a31 * k1_ + a32 * k2_);
      f(tmp_, k3_);
      tmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
      f(tmp_, k4_);
      tmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
      f(tmp_, k5_);
      tmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
      f(tmp_, k6_);
      ynew_ = y + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
      f(ynew_, k7_);
      stats_.rhs_evaluations += 6;

      err_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
      const double scale = opts_.abs_tol + opts_.rel_tol * std::max(y.norm(), ynew_.norm());
      const double err = err_.norm() / scale;
      if (!std::isfinite(err)) throw Error(ErrorKind::Integration, "non-finite error estimate");

      if (err <= 1.0) {
        t = last ? t1 : t + h;
        y.swap(ynew_);
        k1_.swap(k7_);
        ++stats_.accepted;
        rejections = 0;
        obs(t, static_cast<const State&>(y));
        const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        // A truncated final step says nothing about the natural step size.
        if (!last || fac < 1.0) h_ = h * fac;
      } else {
        ++stats_.rejected;
        if (++rejections > opts_.max_consecutive_rejections) {
          throw Error(ErrorKind::Integration, "step rejected " + std::to_string(rejections) + " times");
        }
        h_ = h * std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
    }
  }

  template <class Rhs>
  void advance(Rhs&& f, State& y, double t0, double t1) {
    advance(std::forward<Rhs>(f), y, t0, t1, [](double, const State&) {});
  }

 private:
  double initial_step(const State& y, double span) const {
    const double sc = opts_.abs_tol + opts_.rel_tol * y.norm();
    const double d0 = y.norm() / sc;
    const double d1 = k1_.norm() / sc;
    double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    return std::min(h, span);
  }

  static constexpr double a21 = 1.0 / 5.0;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                          a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                          a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
  static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                          b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
  static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                          e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

  OdeOptions opts_;
  OdeStats stats_;
  double h_ = 0.0;
  State k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, ynew_, err_;
};

}  // namespace qja
