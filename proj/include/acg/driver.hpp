#pragma once

/**
 * N-branch annealed co-generation engine.
 *
 * Each branch is a pairwise score model over (context, subject). Branches
 * evolve in parallel with independent noise streams; at synchronized steps
 * their clean-state subject predictions are fused into one canonical subject
 * that is written back into every branch's prediction before the reverse
 * transition. Heating (reheat + re-cool loops) and the sync policy come from
 * a SchedulePreset.
 *
 * Usage:
 *   EnsembleConfig cfg{.branches = {left, right}, .preset = preset(PresetName::ACG, 200),
 *                      .sched = default_schedule(200), .seed = 7};
 *   RunResult r = run_acg(cfg);
 *   auto ll = within_pair_loglik(r, cfg);
 */

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "acg/consensus.hpp"
#include "acg/diffusion.hpp"
#include "acg/schedules.hpp"
#include "acg/score_models.hpp"

namespace acg {

/// Branch-local coordinates of the shared subject and of the private context.
struct IndexPartition {
  IndexSet subject;
  IndexSet context;
};

struct CoGenerate {};

/// RePaint-style conditioning: the listed branch-local coordinates are
/// replaced by a forward-noised copy of `values` at every noise level, and by
/// `values` exactly at t = 0.
struct Clamp {
  IndexSet idx;
  Vector values;
};

using ContextMode = std::variant<CoGenerate, Clamp>;

struct Branch {
  ScoreModelPtr model;
  IndexPartition partition;
  ContextMode mode = CoGenerate{};
  std::string label;

  /// Clamp over the whole context block.
  static Clamp clamp_context(const IndexPartition& partition, Vector observed);
};

struct EnsembleConfig {
  std::vector<Branch> branches;
  ScoreModelPtr uncond_model;  // subject-only model; required by Unified with lambda > 0
  ConsensusOperator consensus = MeanConsensus{};
  SchedulePreset preset;
  NoiseSchedule sched = default_schedule(200);
  std::uint64_t seed = 0;
  bool record_trace = false;
};

/// Throws DimensionMismatch / IndexOutOfRange / MissingUnconditional / InvalidRange.
void validate(const EnsembleConfig& cfg);

enum class Phase { Cool, ResampleCool, Reheat };
std::string_view phase_name(Phase p);

struct TraceRecord {
  int t = 0;            // level the step started from (reheats: level reached)
  Phase phase = Phase::Cool;
  int pass = 0;         // incremented by every reheat from the clean state
  bool sync_applied = false;
  double disagreement = 0.0;               // over raw predictions, before injection
  std::vector<Vector> branch_x0_subject;   // after injection
  std::optional<Vector> consensus;
};

struct TrajectoryLog {
  std::vector<TraceRecord> records;
};

/// One JSON object per record: {"t", "phase", "pass", "sync", "disagreement",
/// "branch_x0_subject", "consensus"?}.
void write_trace_jsonl(std::ostream& os, const TrajectoryLog& log);

struct RunResult {
  Vector canonical_subject;
  std::vector<Vector> per_branch_final;
  /// Max pairwise L-inf distance between the raw subject predictions of the
  /// last reverse step (before any consensus injection).
  double disagreement = 0.0;
  std::optional<TrajectoryLog> trace;
};

/// Mutable per-run state: branch states at a common level plus their streams.
struct EnsembleState {
  std::vector<Vector> x;
  std::optional<Vector> uncond;
  std::vector<RngStream> streams;  // N branch streams, then the unconditional one
  int t = 0;
};

/// Branch k draws from RngStream::child_seed(seed, k); the unconditional branch uses index N.
EnsembleState initial_state(const EnsembleConfig& cfg);

struct StepOutcome {
  bool synced = false;
  std::vector<Vector> raw_subjects;       // Tweedie subject predictions
  std::vector<Vector> injected_subjects;  // after consensus (== raw when not synced)
  std::optional<Vector> consensus;
  double disagreement = 0.0;
};

/// Reverse transition t -> t-1 for every branch:
/// scores -> Tweedie x0 -> optional consensus injection -> posterior step ->
/// re-clamp. The sync decision is taken (and the visit recorded) through the tracker.
StepOutcome synchronized_step(EnsembleState& state, const EnsembleConfig& cfg, VisitTracker& tracker);

/// Reheats every branch jointly from state.t to state.t + jump, then re-clamps.
void reheat(EnsembleState& state, const EnsembleConfig& cfg, int jump, double height);

/// Executes plan_trajectory(cfg.preset) from x_T ~ N(0, I).
RunResult run_acg(const EnsembleConfig& cfg);

/// Sawtooth schedule; throws UnknownPreset unless the preset is post-hoc.
RunResult run_posthoc(const EnsembleConfig& cfg);

/// log q_k(context_k + canonical subject) under each branch's clean law.
/// Throws NoExactDensity if a branch model has no closed-form density.
std::vector<double> within_pair_loglik(const RunResult& result, const EnsembleConfig& cfg);

double max_pairwise_linf(const std::vector<Vector>& vs);

}  // namespace acg
