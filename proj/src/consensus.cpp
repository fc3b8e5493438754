#include "acg/consensus.hpp"

#include <cmath>

namespace acg {

ConsensusOperator weighted_balanced(std::size_t branches) {
  const std::size_t n = branches == 0 ? 1 : branches;
  return WeightedConsensus{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

bool needs_unconditional(const ConsensusOperator& op) {
  const auto* u = std::get_if<UnifiedConsensus>(&op);
  return u != nullptr && u->lambda > 0.0;
}

std::string consensus_name(const ConsensusOperator& op) {
  struct Visitor {
    std::string operator()(const MeanConsensus&) const { return "mean"; }
    std::string operator()(const WeightedConsensus&) const { return "weighted"; }
    std::string operator()(const UnifiedConsensus& u) const {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "unified(%g)", u.lambda);
      return buf;
    }
  };
  return std::visit(Visitor{}, op);
}

namespace {

Vector mean_of(std::span<const Vector> predictions) {
  Vector acc = Vector::Zero(predictions.front().size());
  for (const auto& p : predictions) acc += p;
  return acc / static_cast<double>(predictions.size());
}

}  // namespace

Vector aggregate(std::span<const Vector> predictions, const std::optional<Vector>& uncond, const ConsensusOperator& op) {
  if (predictions.empty()) fail(ErrorCode::DimensionMismatch, "aggregate: no predictions");
  const Index d = predictions.front().size();
  for (const auto& p : predictions) {
    if (p.size() != d) fail(ErrorCode::DimensionMismatch, "aggregate: prediction dims differ");
  }

  if (std::holds_alternative<MeanConsensus>(op)) return mean_of(predictions);

  if (const auto* w = std::get_if<WeightedConsensus>(&op)) {
    if (w->weights.size() != predictions.size()) fail(ErrorCode::BadWeights, "aggregate: one weight per branch");
    double total = 0.0;
    for (double x : w->weights) {
      if (!(x >= 0.0)) fail(ErrorCode::BadWeights, "aggregate: negative weight");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::BadWeights, "aggregate: weights must sum to 1");
    Vector acc = Vector::Zero(d);
    for (std::size_t k = 0; k < predictions.size(); ++k) acc += w->weights[k] * predictions[k];
    return acc;
  }

  const auto& u = std::get<UnifiedConsensus>(op);
  if (!(u.lambda >= 0.0)) fail(ErrorCode::BadWeights, "aggregate: lambda must be >= 0");
  Vector mu = mean_of(predictions);
  // lambda == 0 must reproduce Mean bit for bit, uncond or not.
  if (u.lambda == 0.0) return mu;
  if (!uncond) fail(ErrorCode::MissingUnconditional, "aggregate: unified consensus needs an unconditional prediction");
  if (uncond->size() != d) fail(ErrorCode::DimensionMismatch, "aggregate: unconditional dim differs");
  return mu + u.lambda * (mu - *uncond);
}

ConsensusOperator consensus_from_json(const nlohmann::json& j, std::size_t branches) {
  if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "consensus block must be an object");
  const std::string variant = j.value("variant", "mean");
  if (variant == "mean") return MeanConsensus{};
  if (variant == "weighted") {
    if (!j.contains("weights")) return weighted_balanced(branches);
    WeightedConsensus w;
    for (const auto& x : j.at("weights")) w.weights.push_back(x.get<double>());
    double total = 0.0;
    for (double x : w.weights) {
      if (x < 0.0) fail(ErrorCode::ConfigInvalid, "consensus weights must be >= 0");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::ConfigInvalid, "consensus weights must sum to 1");
    return w;
  }
  if (variant == "unified") {
    const double lambda = j.value("lambda", 0.0);
    if (lambda < 0.0) fail(ErrorCode::ConfigInvalid, "lambda must be >= 0");
    return UnifiedConsensus{lambda};
  }
  fail(ErrorCode::ConfigInvalid, "unknown consensus variant \"" + variant + "\"");
}

nlohmann::json consensus_to_json(const ConsensusOperator& op) {
  if (std::holds_alternative<MeanConsensus>(op)) return {{"variant", "mean"}};
  if (const auto* w = std::get_if<WeightedConsensus>(&op)) return {{"variant", "weighted"}, {"weights", w->weights}};
  return {{"variant", "unified"}, {"lambda", std::get<UnifiedConsensus>(op).lambda}};
}

}  // namespace acg
