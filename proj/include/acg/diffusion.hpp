#pragma once

#include <vector>

#include "acg/numerics.hpp"

namespace acg {

/// Variance-preserving DDPM timeline.
///
/// Steps are 1-based: t in [1, T] is a noise level and t = 0 is the clean
/// state, for which alpha_bar(0) == 1 and beta(0) == 0.
class NoiseSchedule {
 public:
  /// Takes beta_1..beta_T. Throws InvalidRange unless every beta is in (0,1) and T >= 2.
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const noexcept { return static_cast<int>(beta_.size()) - 1; }

  double beta(int t) const { return beta_.at(checked(t)); }
  double alpha(int t) const { return alpha_.at(checked(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(checked(t)); }

  /// Throws StepOutOfRange unless lo <= t <= T.
  void require_step(int t, int lo = 1) const;

 private:
  std::size_t checked(int t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

/// beta linearly interpolated from beta_min to beta_max, both inclusive.
NoiseSchedule linear_schedule(int steps, double beta_min, double beta_max);

/// Desk default: endpoints 1e-4 and 0.02 quoted at 1000 steps, rescaled by
/// 1000/T so that alpha_bar(T) stays near zero for short timelines.
NoiseSchedule default_schedule(int steps = 200);

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
Vector forward_noise(const Vector& x0, int t, const NoiseSchedule& sched, RngStream& rng);

/// Tweedie clean-state estimate (x_t + (1 - abar_t) * score) / sqrt(abar_t).
Vector tweedie_x0(const Vector& x_t, const Vector& score, int t, const NoiseSchedule& sched);

/// Coefficients of the DDPM posterior q(x_{t-1} | x_t, x0).
struct PosteriorCoefficients {
  double x0 = 0.0;
  double xt = 0.0;
  double variance = 0.0;
};
PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& sched);

/// One reverse transition t -> t-1. The t == 1 step has zero variance and
/// consumes no randomness.
Vector posterior_step(const Vector& x_t, const Vector& x0_hat, int t, const NoiseSchedule& sched, RngStream& rng);

/// Reheat from level t to t + j with heat height H scaling the injected noise:
/// sqrt(abar_{t+j}/abar_t) * x + H * sqrt(1 - abar_{t+j}/abar_t) * eps.
/// t may be 0 (reheating a finished sample).
Vector renoise(const Vector& x_t, int t, int jump, double heat_height, const NoiseSchedule& sched, RngStream& rng);

}  // namespace acg
