#pragma once

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "acg/error.hpp"

namespace acg {

// ============================================================================
// Heating
// ============================================================================

/// Piecewise heat schedule: inside [t_end, t_start] every step maps to
/// (jump, iterations, height); outside it maps to (0, 0, 1).
struct HeatSchedule {
  int t_start = 0;
  int t_end = 0;
  int jump = 0;        // J_heat
  int iterations = 0;  // K
  double height = 1.0; // H in (0, 1]

  bool operator==(const HeatSchedule&) const = default;
};

struct HeatParams {
  int jump = 0;
  int iterations = 0;
  double height = 1.0;

  bool operator==(const HeatParams&) const = default;
};

HeatParams heat_params(const HeatSchedule& hs, int t);

/// Throws InvalidRange on t_start < t_end, negative jump/iterations or height outside (0,1].
void validate(const HeatSchedule& hs);

// ============================================================================
// Synchronization
// ============================================================================

struct SyncNever {
  bool operator==(const SyncNever&) const = default;
};
struct SyncEveryStep {
  bool operator==(const SyncEveryStep&) const = default;
};
/// Sync only the first time a step is traversed; revisits after a reheat are free.
struct SyncFirstVisit {
  bool operator==(const SyncFirstVisit&) const = default;
};
struct SyncWindow {
  int t_lo = 0;
  int t_hi = 0;
  bool operator==(const SyncWindow&) const = default;
};

using SyncPolicy = std::variant<SyncNever, SyncEveryStep, SyncFirstVisit, SyncWindow>;

std::string sync_name(const SyncPolicy& policy);
SyncPolicy sync_from_string(std::string_view name, int t_lo = 0, int t_hi = 0);

/// Per-run record of which reverse steps have been executed. Monotone.
class VisitTracker {
 public:
  bool visited(int t) const { return counts_.contains(t); }
  int visits(int t) const;
  void record(int t) { ++counts_[t]; }
  std::size_t distinct() const { return counts_.size(); }

 private:
  std::map<int, int> counts_;
};

/// Evaluates the policy at t, then records the visit.
bool sync_indicator(const SyncPolicy& policy, int t, VisitTracker& tracker);

// ============================================================================
// Presets and plans
// ============================================================================

enum class PresetName {
  IndependentOracle,
  Greedy,
  Consistent,
  ACG,
  PostHocNone,
  PostHocFull,
  PostHocWindowed,
};

std::string_view preset_label(PresetName name);
/// Throws UnknownPreset.
PresetName preset_from_string(std::string_view name);
const std::vector<PresetName>& all_presets();

struct SchedulePreset {
  PresetName name = PresetName::Greedy;
  HeatSchedule heat;
  SyncPolicy sync = SyncEveryStep{};
  std::vector<int> sawtooth_targets;  // post-hoc only, descending
  double reheat_height = 1.0;          // H used by the post-hoc reheats

  bool is_posthoc() const;
};

/// Sawtooth targets (100, 50, 25) are quoted at 200 steps and scaled linearly with T.
std::vector<int> scaled_sawtooth(int steps);

/// Fully populated preset for a timeline of T steps.
///
/// In-progress defaults: J_heat = 3, K = 2, H = 1.0 over [0.75 T, 0.25 T].
/// Greedy never heats and syncs every step; Consistent heats and syncs every
/// step; ACG heats and syncs on first visits only. Post-hoc presets cool to 0
/// and reheat to each sawtooth target; Windowed syncs at t <= the last target.
SchedulePreset preset(PresetName name, int steps);

struct CoolSegment {
  int from = 0;  // executes reverse steps from, from-1, ..., to+1
  int to = 0;
  bool operator==(const CoolSegment&) const = default;
};

struct ReheatSegment {
  int from = 0;
  int to = 0;
  double height = 1.0;
  bool operator==(const ReheatSegment&) const = default;
};

/// At level t: K times {reheat t -> t+jump, cool t+jump -> t}.
struct ResampleLoop {
  int t = 0;
  int jump = 0;
  int iterations = 0;
  double height = 1.0;
  bool operator==(const ResampleLoop&) const = default;
};

using PlanSegment = std::variant<CoolSegment, ReheatSegment, ResampleLoop>;

/// Deterministic execution plan.
///
/// Post-hoc: Cool[T->0] then, per target u, Reheat[0->u] and Cool[u->0].
/// In-progress: one descent T->0 interrupted by a ResampleLoop at every heat
/// window step t with (t_start - t) divisible by J_heat and t + J_heat <= T.
std::vector<PlanSegment> plan_trajectory(const SchedulePreset& preset, int steps);

/// {"preset", "T", "J_heat", "K", "H", "window": [t_start, t_end], "sawtooth": [...], "sync": name,
///  "sync_window": [lo, hi]}; every field optional over the preset defaults.
/// Throws ConfigInvalid (or UnknownPreset for a bad preset name).
SchedulePreset schedule_from_json(const nlohmann::json& j, int& steps_out);
nlohmann::json schedule_to_json(const SchedulePreset& p, int steps);

}  // namespace acg
