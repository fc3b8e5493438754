#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "acg/diffusion.hpp"
#include "acg/numerics.hpp"

namespace acg {

/// The pretrained pairwise model seen by the sampler: a score on the noised
/// marginal p_t. Clean-state predictions are only ever derived from the score
/// through tweedie_x0.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual Index dim() const = 0;
  virtual Vector score(const Vector& x, int t, const NoiseSchedule& sched) const = 0;

  /// log p_t(x) when the model has a closed-form density, nullopt otherwise.
  virtual std::optional<double> noised_logpdf(const Vector& x, int t, const NoiseSchedule& sched) const;

  /// log q(x0) of the clean law. Throws NoExactDensity by default.
  virtual double exact_logpdf0(const Vector& x0) const;
  virtual bool has_exact_density() const { return false; }
};

using ScoreModelPtr = std::shared_ptr<const ScoreModel>;

/// N(sqrt(abar_t) mu, abar_t Sigma + (1 - abar_t) I).
MultivariateGaussian noised_marginal(const MultivariateGaussian& g, int t, const NoiseSchedule& sched);

/// Exact Gaussian clean law. Sigma is eigendecomposed once, after which the
/// noised precision at any t is diagonal in the same basis, so a score costs
/// two d x d products regardless of t.
class GaussianScoreModel final : public ScoreModel {
 public:
  explicit GaussianScoreModel(MultivariateGaussian base);

  const MultivariateGaussian& base() const noexcept { return base_; }

  Index dim() const override { return base_.dim(); }
  Vector score(const Vector& x, int t, const NoiseSchedule& sched) const override;
  std::optional<double> noised_logpdf(const Vector& x, int t, const NoiseSchedule& sched) const override;
  double exact_logpdf0(const Vector& x0) const override;
  bool has_exact_density() const override { return true; }

  /// Score and log density on the noised marginal, sharing the projection.
  double score_and_logpdf(const Vector& x, int t, const NoiseSchedule& sched, Vector& score_out) const;

 private:
  MultivariateGaussian base_;
  Matrix basis_;      // eigenvectors of Sigma
  Vector spectrum_;   // eigenvalues of Sigma
};

class MixtureScoreModel final : public ScoreModel {
 public:
  /// Throws BadWeights unless weights are >= 0 and sum to 1 within 1e-12,
  /// DimensionMismatch on unequal component dims.
  MixtureScoreModel(std::vector<double> weights, std::vector<MultivariateGaussian> components);

  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<GaussianScoreModel>& components() const noexcept { return components_; }

  Index dim() const override { return components_.front().dim(); }
  /// Responsibility-weighted component scores, responsibilities in log space.
  Vector score(const Vector& x, int t, const NoiseSchedule& sched) const override;
  std::optional<double> noised_logpdf(const Vector& x, int t, const NoiseSchedule& sched) const override;
  double exact_logpdf0(const Vector& x0) const override;
  bool has_exact_density() const override { return true; }

 private:
  std::vector<double> weights_;
  std::vector<GaussianScoreModel> components_;
};

/// Free-function forms of the two scores.
Vector gaussian_score(const GaussianScoreModel& m, const Vector& x, int t, const NoiseSchedule& sched);
Vector mixture_score(const MixtureScoreModel& m, const Vector& x, int t, const NoiseSchedule& sched);

/// Joint model of the concatenated pair (A, B).
GaussianScoreModel pair_model(const Vector& mean_a, const Vector& mean_b, const Matrix& cov_ab);

/// Parses {"type": "gaussian"|"mixture", "mean", "cov", "weights", "components"}.
/// Mixture components are objects with "mean" and "cov". Throws ConfigInvalid.
ScoreModelPtr model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const ScoreModel& m);

Vector vector_from_json(const nlohmann::json& j);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const Matrix& m);

}  // namespace acg
