#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "acg/numerics.hpp"

namespace acg {

struct MeanConsensus {};

struct WeightedConsensus {
  std::vector<double> weights;  // one per branch, on the simplex
};

/// mu_cond + lambda * (mu_cond - B_uncond), mu_cond the plain mean.
struct UnifiedConsensus {
  double lambda = 0.0;
};

using ConsensusOperator = std::variant<MeanConsensus, WeightedConsensus, UnifiedConsensus>;

/// Uniform weights 1/N. N == 2 is the balanced alpha = beta = 1/2 fusion.
ConsensusOperator weighted_balanced(std::size_t branches);

/// Whether the operator consumes an unconditional prediction.
bool needs_unconditional(const ConsensusOperator& op);

std::string consensus_name(const ConsensusOperator& op);

/// Canonical subject from N per-branch clean-state subject predictions.
///
/// Errors: DimensionMismatch on unequal lengths or no predictions; BadWeights
/// when Weighted weights are off the simplex or do not match N;
/// MissingUnconditional when Unified has lambda > 0 and no uncond.
Vector aggregate(std::span<const Vector> predictions, const std::optional<Vector>& uncond, const ConsensusOperator& op);

/// {"variant": "mean"|"weighted"|"unified", "weights": [...], "lambda": x}.
/// A weighted block without weights means balanced over `branches`.
ConsensusOperator consensus_from_json(const nlohmann::json& j, std::size_t branches);
nlohmann::json consensus_to_json(const ConsensusOperator& op);

}  // namespace acg
