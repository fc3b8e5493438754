#include "acg/score_models.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace acg {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

}  // namespace

std::optional<double> ScoreModel::noised_logpdf(const Vector&, int, const NoiseSchedule&) const {
  return std::nullopt;
}

double ScoreModel::exact_logpdf0(const Vector&) const {
  fail(ErrorCode::NoExactDensity, "score model exposes no clean density");
}

MultivariateGaussian noised_marginal(const MultivariateGaussian& g, int t, const NoiseSchedule& sched) {
  sched.require_step(t, 0);
  const double ab = sched.alpha_bar(t);
  Matrix cov = ab * g.cov();
  cov.diagonal().array() += 1.0 - ab;
  return MultivariateGaussian(std::sqrt(ab) * g.mean(), std::move(cov));
}

// ---- gaussian -------------------------------------------------------------

GaussianScoreModel::GaussianScoreModel(MultivariateGaussian base) : base_(std::move(base)) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(base_.cov());
  if (eig.info() != Eigen::Success) fail(ErrorCode::NotPositiveDefinite, "GaussianScoreModel: eigensolver failed");
  basis_ = eig.eigenvectors();
  spectrum_ = eig.eigenvalues();
  if (spectrum_.minCoeff() <= 0.0) fail(ErrorCode::NotPositiveDefinite, "GaussianScoreModel: covariance not PD");
}

double GaussianScoreModel::score_and_logpdf(const Vector& x, int t, const NoiseSchedule& sched,
                                            Vector& score_out) const {
  if (x.size() != dim()) fail(ErrorCode::DimensionMismatch, "GaussianScoreModel: state dim mismatch");
  sched.require_step(t, 0);
  const double ab = sched.alpha_bar(t);
  const Vector lambda_t = (ab * spectrum_.array() + (1.0 - ab)).matrix();
  const Vector y = basis_.transpose() * (x - std::sqrt(ab) * base_.mean());
  const Vector scaled = (y.array() / lambda_t.array()).matrix();
  score_out = -(basis_ * scaled);
  const double d = static_cast<double>(dim());
  return -0.5 * (y.dot(scaled) + lambda_t.array().log().sum() + d * kLog2Pi);
}

Vector GaussianScoreModel::score(const Vector& x, int t, const NoiseSchedule& sched) const {
  Vector s;
  score_and_logpdf(x, t, sched, s);
  return s;
}

std::optional<double> GaussianScoreModel::noised_logpdf(const Vector& x, int t, const NoiseSchedule& sched) const {
  Vector s;
  return score_and_logpdf(x, t, sched, s);
}

double GaussianScoreModel::exact_logpdf0(const Vector& x0) const { return mvn_logpdf(base_, x0); }

Vector gaussian_score(const GaussianScoreModel& m, const Vector& x, int t, const NoiseSchedule& sched) {
  return m.score(x, t, sched);
}

GaussianScoreModel pair_model(const Vector& mean_a, const Vector& mean_b, const Matrix& cov_ab) {
  const Index d = mean_a.size() + mean_b.size();
  if (cov_ab.rows() != d || cov_ab.cols() != d) {
    fail(ErrorCode::DimensionMismatch, "pair_model: covariance does not match dim(A) + dim(B)");
  }
  Vector mean(d);
  mean << mean_a, mean_b;
  return GaussianScoreModel(MultivariateGaussian(std::move(mean), cov_ab));
}

// ---- mixture --------------------------------------------------------------

MixtureScoreModel::MixtureScoreModel(std::vector<double> weights, std::vector<MultivariateGaussian> components)
    : weights_(std::move(weights)) {
  if (components.empty()) fail(ErrorCode::BadWeights, "MixtureScoreModel: need at least one component");
  if (weights_.size() != components.size()) fail(ErrorCode::BadWeights, "MixtureScoreModel: weight count mismatch");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) fail(ErrorCode::BadWeights, "MixtureScoreModel: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::BadWeights, "MixtureScoreModel: weights must sum to 1");
  const Index d = components.front().dim();
  components_.reserve(components.size());
  for (auto& c : components) {
    if (c.dim() != d) fail(ErrorCode::DimensionMismatch, "MixtureScoreModel: component dims differ");
    components_.emplace_back(std::move(c));
  }
}

Vector MixtureScoreModel::score(const Vector& x, int t, const NoiseSchedule& sched) const {
  const std::size_t k = components_.size();
  std::vector<Vector> scores(k);
  std::vector<double> logr(k, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    const double lp = components_[i].score_and_logpdf(x, t, sched, scores[i]);
    if (weights_[i] > 0.0) logr[i] = std::log(weights_[i]) + lp;
    top = std::max(top, logr[i]);
  }
  double norm = 0.0;
  for (double& l : logr) {
    l = std::exp(l - top);
    norm += l;
  }
  Vector out = Vector::Zero(dim());
  for (std::size_t i = 0; i < k; ++i) {
    if (logr[i] > 0.0) out += (logr[i] / norm) * scores[i];
  }
  return out;
}

std::optional<double> MixtureScoreModel::noised_logpdf(const Vector& x, int t, const NoiseSchedule& sched) const {
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(components_.size());
  Vector scratch;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    terms.push_back(std::log(weights_[i]) + components_[i].score_and_logpdf(x, t, sched, scratch));
    top = std::max(top, terms.back());
  }
  double acc = 0.0;
  for (double l : terms) acc += std::exp(l - top);
  return top + std::log(acc);
}

double MixtureScoreModel::exact_logpdf0(const Vector& x0) const {
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    terms.push_back(std::log(weights_[i]) + components_[i].exact_logpdf0(x0));
    top = std::max(top, terms.back());
  }
  double acc = 0.0;
  for (double l : terms) acc += std::exp(l - top);
  return top + std::log(acc);
}

Vector mixture_score(const MixtureScoreModel& m, const Vector& x, int t, const NoiseSchedule& sched) {
  return m.score(x, t, sched);
}

// ---- json -----------------------------------------------------------------

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(ErrorCode::ConfigInvalid, "expected a numeric array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(ErrorCode::ConfigInvalid, "expected a numeric array");
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) fail(ErrorCode::ConfigInvalid, "expected a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) fail(ErrorCode::ConfigInvalid, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) fail(ErrorCode::ConfigInvalid, "non-numeric matrix entry");
      m(static_cast<Index>(r), static_cast<Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

nlohmann::json to_json(const Vector& v) {
  auto out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

nlohmann::json to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) out.push_back(to_json(Vector(m.row(r).transpose())));
  return out;
}

static MultivariateGaussian gaussian_from_json(const nlohmann::json& j) {
  if (!j.contains("mean") || !j.contains("cov")) fail(ErrorCode::ConfigInvalid, "gaussian needs mean and cov");
  try {
    return MultivariateGaussian(vector_from_json(j.at("mean")), matrix_from_json(j.at("cov")));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    fail(ErrorCode::ConfigInvalid, std::string("invalid gaussian: ") + e.what());
  }
}

ScoreModelPtr model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type")) fail(ErrorCode::ConfigInvalid, "model needs a \"type\" field");
  const std::string type = j.at("type").get<std::string>();
  if (type == "gaussian") return std::make_shared<GaussianScoreModel>(gaussian_from_json(j));
  if (type == "mixture") {
    if (!j.contains("weights") || !j.contains("components")) {
      fail(ErrorCode::ConfigInvalid, "mixture needs weights and components");
    }
    std::vector<double> weights;
    for (const auto& w : j.at("weights")) weights.push_back(w.get<double>());
    std::vector<MultivariateGaussian> comps;
    for (const auto& c : j.at("components")) comps.push_back(gaussian_from_json(c));
    try {
      return std::make_shared<MixtureScoreModel>(std::move(weights), std::move(comps));
    } catch (const Error& e) {
      fail(ErrorCode::ConfigInvalid, std::string("invalid mixture: ") + e.what());
    }
  }
  fail(ErrorCode::ConfigInvalid, "unknown model type \"" + type + "\"");
}

nlohmann::json model_to_json(const ScoreModel& m) {
  if (const auto* g = dynamic_cast<const GaussianScoreModel*>(&m)) {
    return {{"type", "gaussian"}, {"mean", to_json(g->base().mean())}, {"cov", to_json(g->base().cov())}};
  }
  if (const auto* mix = dynamic_cast<const MixtureScoreModel*>(&m)) {
    auto comps = nlohmann::json::array();
    for (const auto& c : mix->components()) {
      comps.push_back({{"mean", to_json(c.base().mean())}, {"cov", to_json(c.base().cov())}});
    }
    return {{"type", "mixture"}, {"weights", mix->weights()}, {"components", comps}};
  }
  fail(ErrorCode::ConfigInvalid, "model has no JSON form");
}

}  // namespace acg
