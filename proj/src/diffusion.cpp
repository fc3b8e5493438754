#include "acg/diffusion.hpp"

#include <cmath>
#include <string>

namespace acg {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) {
  if (betas.size() < 2) fail(ErrorCode::InvalidRange, "NoiseSchedule: need at least 2 steps");
  beta_.reserve(betas.size() + 1);
  alpha_.reserve(betas.size() + 1);
  alpha_bar_.reserve(betas.size() + 1);
  beta_.push_back(0.0);
  alpha_.push_back(1.0);
  alpha_bar_.push_back(1.0);
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) fail(ErrorCode::InvalidRange, "NoiseSchedule: beta outside (0,1)");
    prod *= 1.0 - b;
    if (!(prod > 0.0) || !(prod < alpha_bar_.back())) {
      fail(ErrorCode::InvalidRange, "NoiseSchedule: alpha_bar must be strictly decreasing and positive");
    }
    beta_.push_back(b);
    alpha_.push_back(1.0 - b);
    alpha_bar_.push_back(prod);
  }
}

std::size_t NoiseSchedule::checked(int t) const {
  if (t < 0 || t > steps()) fail(ErrorCode::StepOutOfRange, "step " + std::to_string(t) + " outside [0, T]");
  return static_cast<std::size_t>(t);
}

void NoiseSchedule::require_step(int t, int lo) const {
  if (t < lo || t > steps()) {
    fail(ErrorCode::StepOutOfRange,
         "step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " + std::to_string(steps()) + "]");
  }
}

NoiseSchedule linear_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 2) fail(ErrorCode::InvalidRange, "linear_schedule: T must be >= 2");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    fail(ErrorCode::InvalidRange, "linear_schedule: need 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_min + f * (beta_max - beta_min);
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule default_schedule(int steps) {
  const double scale = 1000.0 / static_cast<double>(steps);
  return linear_schedule(steps, 1e-4 * scale, 0.02 * scale);
}

Vector forward_noise(const Vector& x0, int t, const NoiseSchedule& sched, RngStream& rng) {
  sched.require_step(t);
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * rng.normal_vector(x0.size());
}

Vector tweedie_x0(const Vector& x_t, const Vector& score, int t, const NoiseSchedule& sched) {
  sched.require_step(t, 0);
  if (x_t.size() != score.size()) fail(ErrorCode::DimensionMismatch, "tweedie_x0: state/score dims disagree");
  const double ab = sched.alpha_bar(t);
  return (x_t + (1.0 - ab) * score) / std::sqrt(ab);
}

PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& sched) {
  sched.require_step(t);
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double b = sched.beta(t);
  PosteriorCoefficients c;
  c.x0 = std::sqrt(ab_prev) * b / (1.0 - ab);
  c.xt = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  c.variance = t == 1 ? 0.0 : (1.0 - ab_prev) / (1.0 - ab) * b;
  return c;
}

Vector posterior_step(const Vector& x_t, const Vector& x0_hat, int t, const NoiseSchedule& sched, RngStream& rng) {
  if (x_t.size() != x0_hat.size()) fail(ErrorCode::DimensionMismatch, "posterior_step: dims disagree");
  const PosteriorCoefficients c = posterior_coefficients(t, sched);
  Vector mean = c.x0 * x0_hat + c.xt * x_t;
  if (c.variance == 0.0) return mean;
  return mean + std::sqrt(c.variance) * rng.normal_vector(x_t.size());
}

Vector renoise(const Vector& x_t, int t, int jump, double heat_height, const NoiseSchedule& sched, RngStream& rng) {
  if (jump < 1) fail(ErrorCode::StepOutOfRange, "renoise: jump must be >= 1");
  sched.require_step(t, 0);
  sched.require_step(t + jump);
  if (!(heat_height > 0.0 && heat_height <= 1.0)) fail(ErrorCode::InvalidRange, "renoise: heat height outside (0,1]");
  const double ratio = sched.alpha_bar(t + jump) / sched.alpha_bar(t);
  return std::sqrt(ratio) * x_t + heat_height * std::sqrt(1.0 - ratio) * rng.normal_vector(x_t.size());
}

}  // namespace acg
