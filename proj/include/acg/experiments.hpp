#pragma once

/**
 * Batch experiments behind the command-line tool: the Gaussian-tree benchmark,
 * the schedule ablation grid, the field inpainting harness and the self-check.
 *
 * Every command reads one JSON config and produces ResultRows, which are
 * sorted on all key columns before they are written so output bytes only
 * depend on the config and the seeds.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acg/consensus.hpp"
#include "acg/diffusion.hpp"
#include "acg/driver.hpp"
#include "acg/oracle.hpp"
#include "acg/schedules.hpp"
#include "acg/score_models.hpp"

namespace acg::exp {

struct ResultRow {
  std::string preset;
  std::string consensus;
  int j_heat = 0;
  int k = 0;
  double h = 0.0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

inline constexpr const char* kCsvHeader = "preset,consensus,J_heat,K,H,seed,metric,value";

/// Orders by (preset, consensus, J_heat, K, H, seed, metric).
void sort_rows(std::vector<ResultRow>& rows);
void write_csv(std::ostream& os, const std::vector<ResultRow>& rows);

/// Row group with the lowest mean of `metric` over seeds:
/// {"preset", "consensus", "J_heat", "K", "H", "metric", "value"}.
nlohmann::json best_row(const std::vector<ResultRow>& rows, const std::string& metric);

// ---- chain of two pair models --------------------------------------------

/// q_ab over A | B and q_bc over B | C.
struct TreeProblem {
  ScoreModelPtr ab;
  ScoreModelPtr bc;
  TreeDims dims;
};

/// Per-coordinate Gaussian chain: d independent triples with unit variances,
/// corr(A,B) = corr(B,C) = rho and corr(A,C) = rho^2.
TreeProblem gaussian_chain(int d, double rho, const Vector& mean_a, const Vector& mean_b, const Vector& mean_c);

/// {"chain": {"d", "rho", "mean_a", "mean_b", "mean_c"}} or
/// {"dims": [a, b, c], "pair_ab": model, "pair_bc": model}. Throws ConfigInvalid.
TreeProblem tree_from_json(const nlohmann::json& j);

/// Marginal over idx of a Gaussian or mixture model.
ScoreModelPtr marginal_model(const ScoreModel& m, const IndexSet& idx);

/// Draw from the model's clean law conditioned on x[obs_idx] == obs_vals.
Vector sample_conditional(const ScoreModel& m, const IndexSet& obs_idx, const Vector& obs_vals, RngStream& rng);

/// Two co-generating branches (left: A | B, right: B | C) plus the B marginal
/// as the unconditional model when the consensus needs one.
EnsembleConfig tree_ensemble(const TreeProblem& p, const SchedulePreset& preset, const ConsensusOperator& op,
                             const NoiseSchedule& sched, std::uint64_t seed);

struct TreeSample {
  Vector abc;
  double disagreement = 0.0;
  double loglik_ab = 0.0;
  double loglik_bc = 0.0;
};

/// One (A, B, C) draw. IndependentOracle runs the left branch alone and
/// completes C from the exact conditional of q_bc given B.
TreeSample sample_tree(const TreeProblem& p, const SchedulePreset& preset, const ConsensusOperator& op,
                       const NoiseSchedule& sched, std::uint64_t seed);

// ---- config ---------------------------------------------------------------

struct ExperimentConfig {
  std::string kind;
  nlohmann::json raw;
  std::vector<std::uint64_t> seeds;
  int n_samples = 0;
  std::filesystem::path out_dir;
};

/// Checks kind, seeds (non-empty) and n_samples (> 0). Throws ConfigInvalid.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& expected_kind);

/// "noise": {"T", "beta": [min, max]}; defaults to default_schedule(T).
NoiseSchedule noise_from_json(const nlohmann::json& j, int steps);

struct CommandResult {
  std::vector<ResultRow> rows;
  nlohmann::json summary;
  std::vector<std::string> messages;  // human-readable lines for stdout
  std::vector<std::pair<std::string, std::string>> files;  // extra outputs: (relative path, contents)
  int exit_code = 0;
};

CommandResult cmd_gauss_tree(const ExperimentConfig& cfg);
CommandResult cmd_ablate(const ExperimentConfig& cfg);
CommandResult cmd_inpaint(const ExperimentConfig& cfg);

/// Invariant self-test; failures are reported, never thrown.
CommandResult cmd_check();

/// Writes results.csv, summary.json and the extra files under out_dir (created if needed).
void write_outputs(const CommandResult& r, const std::filesystem::path& out_dir);

}  // namespace acg::exp
