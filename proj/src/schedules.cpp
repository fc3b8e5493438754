#include "acg/schedules.hpp"

#include <algorithm>
#include <cmath>

namespace acg {

HeatParams heat_params(const HeatSchedule& hs, int t) {
  if (t >= hs.t_end && t <= hs.t_start) return {hs.jump, hs.iterations, hs.height};
  return {0, 0, 1.0};
}

void validate(const HeatSchedule& hs) {
  if (hs.t_start < hs.t_end) fail(ErrorCode::InvalidRange, "heat schedule: t_start < t_end");
  if (hs.jump < 0 || hs.iterations < 0) fail(ErrorCode::InvalidRange, "heat schedule: negative jump or iterations");
  if (!(hs.height > 0.0 && hs.height <= 1.0)) fail(ErrorCode::InvalidRange, "heat schedule: height outside (0,1]");
}

// ---- sync -----------------------------------------------------------------

int VisitTracker::visits(int t) const {
  auto it = counts_.find(t);
  return it == counts_.end() ? 0 : it->second;
}

bool sync_indicator(const SyncPolicy& policy, int t, VisitTracker& tracker) {
  bool on = false;
  if (std::holds_alternative<SyncEveryStep>(policy)) {
    on = true;
  } else if (std::holds_alternative<SyncFirstVisit>(policy)) {
    on = !tracker.visited(t);
  } else if (const auto* w = std::get_if<SyncWindow>(&policy)) {
    on = t >= w->t_lo && t <= w->t_hi;
  }
  tracker.record(t);
  return on;
}

std::string sync_name(const SyncPolicy& policy) {
  if (std::holds_alternative<SyncNever>(policy)) return "never";
  if (std::holds_alternative<SyncEveryStep>(policy)) return "every";
  if (std::holds_alternative<SyncFirstVisit>(policy)) return "first_visit";
  const auto& w = std::get<SyncWindow>(policy);
  return "window(" + std::to_string(w.t_lo) + "," + std::to_string(w.t_hi) + ")";
}

SyncPolicy sync_from_string(std::string_view name, int t_lo, int t_hi) {
  if (name == "never") return SyncNever{};
  if (name == "every") return SyncEveryStep{};
  if (name == "first_visit") return SyncFirstVisit{};
  if (name == "window") {
    if (t_lo > t_hi) fail(ErrorCode::ConfigInvalid, "sync window needs t_lo <= t_hi");
    return SyncWindow{t_lo, t_hi};
  }
  fail(ErrorCode::ConfigInvalid, "unknown sync policy \"" + std::string(name) + "\"");
}

// ---- presets --------------------------------------------------------------

namespace {

constexpr std::pair<PresetName, std::string_view> kPresetLabels[] = {
    {PresetName::IndependentOracle, "IndependentOracle"},
    {PresetName::Greedy, "Greedy"},
    {PresetName::Consistent, "Consistent"},
    {PresetName::ACG, "ACG"},
    {PresetName::PostHocNone, "PostHocNone"},
    {PresetName::PostHocFull, "PostHocFull"},
    {PresetName::PostHocWindowed, "PostHocWindowed"},
};

constexpr int kDefaultJump = 3;
constexpr int kDefaultIterations = 2;
constexpr double kDefaultHeight = 1.0;

HeatSchedule default_heat_window(int steps) {
  HeatSchedule hs;
  hs.t_start = static_cast<int>(std::lround(0.75 * steps));
  hs.t_end = static_cast<int>(std::lround(0.25 * steps));
  hs.jump = kDefaultJump;
  hs.iterations = kDefaultIterations;
  hs.height = kDefaultHeight;
  return hs;
}

}  // namespace

std::string_view preset_label(PresetName name) {
  for (const auto& [n, label] : kPresetLabels) {
    if (n == name) return label;
  }
  return "?";
}

PresetName preset_from_string(std::string_view name) {
  for (const auto& [n, label] : kPresetLabels) {
    if (label == name) return n;
  }
  fail(ErrorCode::UnknownPreset, "unknown preset \"" + std::string(name) + "\"");
}

const std::vector<PresetName>& all_presets() {
  static const std::vector<PresetName> names = [] {
    std::vector<PresetName> out;
    for (const auto& [n, label] : kPresetLabels) out.push_back(n);
    return out;
  }();
  return names;
}

bool SchedulePreset::is_posthoc() const {
  return name == PresetName::PostHocNone || name == PresetName::PostHocFull || name == PresetName::PostHocWindowed;
}

std::vector<int> scaled_sawtooth(int steps) {
  std::vector<int> out;
  for (int ref : {100, 50, 25}) {
    int u = static_cast<int>(std::lround(ref * static_cast<double>(steps) / 200.0));
    u = std::clamp(u, 1, steps);
    if (out.empty() || out.back() != u) out.push_back(u);
  }
  return out;
}

SchedulePreset preset(PresetName name, int steps) {
  if (steps < 2) fail(ErrorCode::InvalidRange, "preset: T must be >= 2");
  SchedulePreset p;
  p.name = name;
  switch (name) {
    case PresetName::IndependentOracle:
      p.sync = SyncNever{};
      break;
    case PresetName::Greedy:
      p.sync = SyncEveryStep{};
      break;
    case PresetName::Consistent:
      p.heat = default_heat_window(steps);
      p.sync = SyncEveryStep{};
      break;
    case PresetName::ACG:
      p.heat = default_heat_window(steps);
      p.sync = SyncFirstVisit{};
      break;
    case PresetName::PostHocNone:
      p.sync = SyncNever{};
      p.sawtooth_targets = scaled_sawtooth(steps);
      break;
    case PresetName::PostHocFull:
      p.sync = SyncEveryStep{};
      p.sawtooth_targets = scaled_sawtooth(steps);
      break;
    case PresetName::PostHocWindowed:
      p.sawtooth_targets = scaled_sawtooth(steps);
      // The final pass runs u_last -> 0; the same window also covers the
      // tail of every earlier pass.
      p.sync = SyncWindow{0, p.sawtooth_targets.back()};
      break;
  }
  return p;
}

std::vector<PlanSegment> plan_trajectory(const SchedulePreset& preset, int steps) {
  std::vector<PlanSegment> plan;
  if (preset.is_posthoc()) {
    plan.emplace_back(CoolSegment{steps, 0});
    for (int u : preset.sawtooth_targets) {
      plan.emplace_back(ReheatSegment{0, u, preset.reheat_height});
      plan.emplace_back(CoolSegment{u, 0});
    }
    return plan;
  }

  int cursor = steps;
  const HeatSchedule& hs = preset.heat;
  if (hs.jump > 0 && hs.iterations > 0) {
    for (int t = std::min(hs.t_start, steps - 1); t >= std::max(hs.t_end, 1); --t) {
      const HeatParams hp = heat_params(hs, t);
      if (hp.jump == 0 || hp.iterations == 0) continue;
      if ((hs.t_start - t) % hp.jump != 0 || t + hp.jump > steps) continue;
      if (cursor > t) plan.emplace_back(CoolSegment{cursor, t});
      plan.emplace_back(ResampleLoop{t, hp.jump, hp.iterations, hp.height});
      cursor = t;
    }
  }
  if (cursor > 0) plan.emplace_back(CoolSegment{cursor, 0});
  return plan;
}

// ---- json -----------------------------------------------------------------

SchedulePreset schedule_from_json(const nlohmann::json& j, int& steps_out) {
  if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "schedule block must be an object");
  try {
    const int steps = j.value("T", 200);
    if (steps < 2) fail(ErrorCode::ConfigInvalid, "schedule T must be >= 2");
    SchedulePreset p = preset(preset_from_string(j.value("preset", std::string("ACG"))), steps);

    if (j.contains("J_heat")) p.heat.jump = j.at("J_heat").get<int>();
    if (j.contains("K")) p.heat.iterations = j.at("K").get<int>();
    if (j.contains("H")) {
      p.heat.height = j.at("H").get<double>();
      p.reheat_height = p.heat.height;
    }
    if (j.contains("window")) {
      const auto& w = j.at("window");
      if (!w.is_array() || w.size() != 2) fail(ErrorCode::ConfigInvalid, "window must be [t_start, t_end]");
      p.heat.t_start = w[0].get<int>();
      p.heat.t_end = w[1].get<int>();
    }
    if (j.contains("sawtooth")) {
      p.sawtooth_targets = j.at("sawtooth").get<std::vector<int>>();
      for (int u : p.sawtooth_targets) {
        if (u < 1 || u > steps) fail(ErrorCode::ConfigInvalid, "sawtooth target outside [1, T]");
      }
      if (p.is_posthoc() && p.sawtooth_targets.empty()) fail(ErrorCode::ConfigInvalid, "post-hoc needs targets");
      if (p.name == PresetName::PostHocWindowed) p.sync = SyncWindow{0, p.sawtooth_targets.back()};
    }
    if (j.contains("sync")) {
      int lo = 0, hi = 0;
      if (j.contains("sync_window")) {
        lo = j.at("sync_window").at(0).get<int>();
        hi = j.at("sync_window").at(1).get<int>();
      }
      p.sync = sync_from_string(j.at("sync").get<std::string>(), lo, hi);
    }
    validate(p.heat);
    steps_out = steps;
    return p;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::UnknownPreset) throw;
    fail(ErrorCode::ConfigInvalid, e.what());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigInvalid, e.what());
  }
}

nlohmann::json schedule_to_json(const SchedulePreset& p, int steps) {
  return {{"preset", std::string(preset_label(p.name))},
          {"T", steps},
          {"J_heat", p.heat.jump},
          {"K", p.heat.iterations},
          {"H", p.heat.height},
          {"window", {p.heat.t_start, p.heat.t_end}},
          {"sawtooth", p.sawtooth_targets},
          {"sync", sync_name(p.sync)}};
}

}  // namespace acg
