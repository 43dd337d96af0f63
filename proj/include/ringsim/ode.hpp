#pragma once

// Dormand-Prince 5(4) embedded Runge-Kutta pair with FSAL and standard
// PI-free step control. Works on any Eigen dense type (vector or matrix,
// real or complex).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ringsim/errors.hpp"

namespace ringsim {

struct OdeOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double initial_step = 0.0;  // 0: automatic
  double max_step = std::numeric_limits<double>::infinity();
  double min_step_rel = 1e-13;  // underflow threshold relative to max(1, |t|)
  long max_steps = 50'000'000;
};

template <class State>
class DormandPrince {
 public:
  using Rhs = std::function<void(double t, const State& y, State& dydt)>;

  DormandPrince(Rhs f, OdeOptions opt = {}) : f_(std::move(f)), opt_(opt) {}

  void reset(double t, const State& y) {
    t_ = t;
    y_ = y;
    have_k1_ = false;
  }

  double time() const { return t_; }
  const State& state() const { return y_; }
  State& mutable_state() {
    have_k1_ = false;
    return y_;
  }
  long accepted_steps() const { return accepted_; }
  long rejected_steps() const { return rejected_; }
  double last_step() const { return h_last_; }

  /// Takes one accepted adaptive step without passing t_end; returns the new time.
  double step(double t_end) {
    if (t_end <= t_) return t_;
    if (!have_k1_) {
      f_(t_, y_, k1_);
      have_k1_ = true;
      ++evals_;
    }
    if (h_ <= 0.0) h_ = opt_.initial_step > 0.0 ? opt_.initial_step : initial_step_guess(t_end);
    for (;;) {
      const double remaining = t_end - t_;
      double h = std::min({h_, opt_.max_step, remaining});
      const bool hits_end = h >= remaining * (1.0 - 1e-12);
      if (hits_end) h = remaining;
      if (h < opt_.min_step_rel * std::max(1.0, std::abs(t_)))
        throw NumericalError("step-size underflow at t = " + std::to_string(t_) +
                             " (h = " + std::to_string(h) + "); the problem is too stiff for the explicit stepper");
      if (++attempts_ > opt_.max_steps) throw NumericalError("ODE step budget exhausted");

      trial(t_, y_, h);
      const double err = error_norm();
      if (err <= 1.0) {
        t_ = hits_end ? t_end : t_ + h;
        y_.swap(y5_);
        k1_.swap(k7_);
        h_last_ = h;
        ++accepted_;
        const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        // Keep the controller's proposal when the step was truncated by t_end.
        if (!hits_end || h == h_) h_ = h * fac;
        return t_;
      }
      ++rejected_;
      h_ = h * std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }

  /// Integrates up to exactly t_end.
  void advance_to(double t_end) {
    while (t_ < t_end) step(t_end);
  }

  /// Single fixed step of size h from (t0, y0), no error control. Used to
  /// evaluate the solution inside an already accepted step.
  State fixed_step(double t0, const State& y0, double h) {
    State k1;
    f_(t0, y0, k1);
    ++evals_;
    k1_tmp_ = k1;
    trial_from(t0, y0, h, k1_tmp_);
    return y5_;
  }

  long rhs_evaluations() const { return evals_; }

 private:
  // Butcher tableau.
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  // b - b_hat
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  void trial(double t, const State& y, double h) { trial_from(t, y, h, k1_); }

  void trial_from(double t, const State& y, double h, const State& k1) {
    tmp_ = y + h * a21 * k1;
    f_(t + c2 * h, tmp_, k2_);
    tmp_ = y + h * (a31 * k1 + a32 * k2_);
    f_(t + c3 * h, tmp_, k3_);
    tmp_ = y + h * (a41 * k1 + a42 * k2_ + a43 * k3_);
    f_(t + c4 * h, tmp_, k4_);
    tmp_ = y + h * (a51 * k1 + a52 * k2_ + a53 * k3_ + a54 * k4_);
    f_(t + c5 * h, tmp_, k5_);
    tmp_ = y + h * (a61 * k1 + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    f_(t + h, tmp_, k6_);
    y5_ = y + h * (b1 * k1 + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
    f_(t + h, y5_, k7_);
    evals_ += 6;
    err_ = h * (e1 * k1 + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    y_ref_ = &y;
  }

  double error_norm() const {
    const auto scale = (opt_.atol + opt_.rtol * y_ref_->cwiseAbs().cwiseMax(y5_.cwiseAbs()).array());
    const auto ratio = err_.cwiseAbs().array() / scale;
    return std::sqrt(ratio.square().mean());
  }

  double initial_step_guess(double t_end) {
    // Hairer, Norsett & Wanner, Solving ODEs I, II.4.
    const auto scale = (opt_.atol + opt_.rtol * y_.cwiseAbs().array()).eval();
    const double d0 = std::sqrt((y_.cwiseAbs().array() / scale).square().mean());
    const double d1 = std::sqrt((k1_.cwiseAbs().array() / scale).square().mean());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t_end - t_);
    State y1 = y_ + h0 * k1_;
    State f1;
    f_(t_ + h0, y1, f1);
    ++evals_;
    const double d2 = std::sqrt(((f1 - k1_).cwiseAbs().array() / scale).square().mean()) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min(100.0 * h0, h1);
  }

  Rhs f_;
  OdeOptions opt_;
  double t_ = 0.0;
  double h_ = 0.0;
  double h_last_ = 0.0;
  State y_, y5_, tmp_, err_;
  State k1_, k2_, k3_, k4_, k5_, k6_, k7_, k1_tmp_;
  const State* y_ref_ = nullptr;
  bool have_k1_ = false;
  long accepted_ = 0, rejected_ = 0, attempts_ = 0, evals_ = 0;
};

/// Integrates y' = f(t, y) and calls observe(k, t_k, y) at every grid time.
/// The grid must be strictly increasing; grid[0] is the initial time.
template <class State, class Observer>
void integrate_on_grid(typename DormandPrince<State>::Rhs f, const State& y0, const std::vector<double>& grid,
                       const OdeOptions& opt, Observer&& observe) {
  if (grid.empty()) return;
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw std::invalid_argument("time grid must be strictly increasing");
  DormandPrince<State> dp(std::move(f), opt);
  dp.reset(grid[0], y0);
  observe(std::size_t{0}, grid[0], dp.mutable_state());
  for (std::size_t k = 1; k < grid.size(); ++k) {
    dp.advance_to(grid[k]);
    observe(k, grid[k], dp.mutable_state());
  }
}

/// Uniform grid with n_steps intervals on [t0, t1].
inline std::vector<double> uniform_grid(double t0, double t1, int n_steps) {
  if (n_steps < 1 || !(t1 > t0)) throw std::invalid_argument("uniform_grid: need t1 > t0 and n_steps >= 1");
  std::vector<double> g(std::size_t(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) g[std::size_t(k)] = t0 + (t1 - t0) * double(k) / n_steps;
  g.back() = t1;
  return g;
}

}  // namespace ringsim
