#pragma once

#include <span>
#include <vector>

#include "acg/diffusion.hpp"
#include "acg/numerics.hpp"
#include "acg/score_models.hpp"

namespace acg {

struct TreeDims {
  Index a = 0;
  Index b = 0;
  Index c = 0;
};

/// Exact q(A,B,C) for the chain A - B - C, laid out as A | B | C.
struct TreeGaussian {
  MultivariateGaussian joint;
  TreeDims dims;
};

/// q(A,B) q(B,C) / q(B) in precision form. q_ab is laid out A | B and q_bc as B | C.
/// Throws InconsistentBMarginal if the two B marginals differ by more than 1e-8.
TreeGaussian compose_tree_joint(const MultivariateGaussian& q_ab, const MultivariateGaussian& q_bc, TreeDims dims);

/// Max over points of |log q(A,B,C) - log q(A,B) - log q(B,C) + log q(B)|.
double factorization_check(const TreeGaussian& tg, const MultivariateGaussian& q_ab, const MultivariateGaussian& q_bc,
                           std::span<const Vector> points);

/// Closed-form 2-Wasserstein distance between Gaussians; matrix roots through
/// symmetric eigendecomposition.
double wasserstein2_gaussian(const MultivariateGaussian& g1, const MultivariateGaussian& g2);

/// Principal square root of a symmetric PSD matrix (negative eigenvalues clipped to 0).
Matrix sqrtm_psd(const Matrix& m);

/// Sample mean and unbiased covariance, plus the numerics jitter on the diagonal
/// (1e-10 * trace/d, floored at 1e-12). Throws TooFewSamples below d + 1 samples.
MultivariateGaussian empirical_moments(std::span<const Vector> samples);

/// Max over n_points of ||score - FD(log p_t)||_inf / (1 + ||score||_inf), central
/// differences with h = 1e-5 (1 + |x_i|), at standard-normal points. Zero
/// points gives 0. Throws NoExactDensity.
double score_fd_check(const ScoreModel& model, int t, const NoiseSchedule& sched, int n_points, RngStream& rng);

/// Closed-form E[x0 | x_t] for x0 ~ N(mu, Sigma).
Vector gaussian_posterior_mean(const MultivariateGaussian& g, const Vector& x_t, int t, const NoiseSchedule& sched);

}  // namespace acg
