#pragma once

/**
 * Dense linear algebra helpers and an exact multivariate Gaussian.
 *
 * Vectors and matrices are plain Eigen dynamic types. Everything here is
 * immutable after construction except RngStream, which is single-owner.
 */

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "acg/error.hpp"

namespace acg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using IndexSet = std::vector<Index>;

/// xoshiro256** seeded through splitmix64; normals by Box-Muller.
///
/// The generator, its constants and the normal transform are fixed so that a
/// seed produces the same stream on every platform. std::normal_distribution is
/// deliberately not used since its algorithm is implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  Vector normal_vector(Index n);

  /// Independent child stream for (this seed, index). See child_seed().
  RngStream split(std::uint64_t index) const { return RngStream(child_seed(seed_, index)); }

  /// child = splitmix64(seed ^ splitmix64(index + 0x9E3779B97F4A7C15)).
  static std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Lower-triangular L with L*L^T == m. Throws NotPositiveDefinite on a pivot <= 0.
Matrix cholesky(const Matrix& m);

/// Solves m*x = b for symmetric positive-definite m.
Vector solve_spd(const Matrix& m, const Vector& b);

Matrix symmetrize(const Matrix& m);

/// Extracts the rows/cols listed in idx. Throws IndexOutOfRange.
Vector take(const Vector& v, std::span<const Index> idx);
Matrix take(const Matrix& m, std::span<const Index> rows, std::span<const Index> cols);

void check_finite(const Vector& v, const char* what);

class MultivariateGaussian {
 public:
  /// Symmetrizes cov and factorizes it; throws NotPositiveDefinite or DimensionMismatch.
  MultivariateGaussian(Vector mean, Matrix cov);

  Index dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& cov() const noexcept { return cov_; }
  const Matrix& chol() const noexcept { return chol_; }

  double log_det() const noexcept { return log_det_; }

 private:
  Vector mean_;
  Matrix cov_;
  Matrix chol_;
  double log_det_ = 0.0;
};

Vector mvn_sample(const MultivariateGaussian& g, RngStream& rng);
double mvn_logpdf(const MultivariateGaussian& g, const Vector& x);
MultivariateGaussian mvn_marginal(const MultivariateGaussian& g, std::span<const Index> idx);

/// Gaussian conditional of the complement of obs_idx given x[obs_idx] == obs_vals.
/// A nugget of 1e-10 * trace(S_oo)/|obs| is added to S_oo before factorization.
MultivariateGaussian mvn_condition(const MultivariateGaussian& g, std::span<const Index> obs_idx,
                                   const Vector& obs_vals);

/// Conditional mean only: mu_h + S_ho (S_oo + jitter)^{-1} (v - mu_o). Does not
/// require the conditional covariance to be positive-definite.
Vector conditional_mean(const Vector& mean, const Matrix& cov, std::span<const Index> obs_idx, const Vector& obs_vals);

/// Complement of idx in [0, n), ascending.
IndexSet complement(std::span<const Index> idx, Index n);

/// Nugget used when conditioning near-singular covariances.
double conditioning_jitter(const Matrix& m);

}  // namespace acg
