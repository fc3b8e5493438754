#include "acg/driver.hpp"

#include <algorithm>
#include <ostream>

#include <json.hpp>

namespace acg {

Clamp Branch::clamp_context(const IndexPartition& partition, Vector observed) {
  return Clamp{partition.context, std::move(observed)};
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Cool: return "cool";
    case Phase::ResampleCool: return "resample_cool";
    case Phase::Reheat: return "reheat";
  }
  return "?";
}

double max_pairwise_linf(const std::vector<Vector>& vs) {
  double worst = 0.0;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      worst = std::max(worst, (vs[i] - vs[j]).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

void validate(const EnsembleConfig& cfg) {
  if (cfg.branches.empty()) fail(ErrorCode::InvalidRange, "ensemble needs at least one branch");
  const std::size_t subject_dim = cfg.branches.front().partition.subject.size();
  if (subject_dim == 0) fail(ErrorCode::InvalidRange, "subject block is empty");
  for (const auto& b : cfg.branches) {
    if (!b.model) fail(ErrorCode::InvalidRange, "branch " + b.label + " has no model");
    const Index d = b.model->dim();
    const auto& p = b.partition;
    if (p.subject.size() != subject_dim) fail(ErrorCode::DimensionMismatch, "branches disagree on subject size");
    if (p.context.empty()) fail(ErrorCode::InvalidRange, "branch " + b.label + " has an empty context");
    if (static_cast<Index>(p.subject.size() + p.context.size()) != d) {
      fail(ErrorCode::DimensionMismatch, "partition of branch " + b.label + " does not cover the model dim");
    }
    std::vector<bool> seen(static_cast<std::size_t>(d), false);
    for (const auto* block : {&p.subject, &p.context}) {
      for (Index i : *block) {
        if (i < 0 || i >= d) fail(ErrorCode::IndexOutOfRange, "partition index out of range");
        if (seen[static_cast<std::size_t>(i)]) fail(ErrorCode::InvalidRange, "subject and context overlap");
        seen[static_cast<std::size_t>(i)] = true;
      }
    }
    if (const auto* c = std::get_if<Clamp>(&b.mode)) {
      if (static_cast<Index>(c->idx.size()) != c->values.size()) {
        fail(ErrorCode::DimensionMismatch, "clamp values do not match clamp indices");
      }
      for (Index i : c->idx) {
        if (i < 0 || i >= d) fail(ErrorCode::IndexOutOfRange, "clamp index out of range");
      }
    }
  }
  if (needs_unconditional(cfg.consensus)) {
    if (!cfg.uncond_model) fail(ErrorCode::MissingUnconditional, "unified consensus needs an unconditional model");
  }
  if (cfg.uncond_model && cfg.uncond_model->dim() != static_cast<Index>(subject_dim)) {
    fail(ErrorCode::DimensionMismatch, "unconditional model must live on the subject block");
  }
  if (const auto* w = std::get_if<WeightedConsensus>(&cfg.consensus)) {
    if (w->weights.size() != cfg.branches.size()) fail(ErrorCode::BadWeights, "one consensus weight per branch");
  }
  validate(cfg.preset.heat);
}

namespace {

void apply_clamp(Vector& x, const Branch& b, int t, const NoiseSchedule& sched, RngStream& rng) {
  const auto* c = std::get_if<Clamp>(&b.mode);
  if (c == nullptr) return;
  if (t == 0) {
    for (std::size_t i = 0; i < c->idx.size(); ++i) x[c->idx[i]] = c->values[static_cast<Index>(i)];
    return;
  }
  const Vector noised = forward_noise(c->values, t, sched, rng);
  for (std::size_t i = 0; i < c->idx.size(); ++i) x[c->idx[i]] = noised[static_cast<Index>(i)];
}

void write_block(Vector& x, const IndexSet& idx, const Vector& values) {
  for (std::size_t i = 0; i < idx.size(); ++i) x[idx[i]] = values[static_cast<Index>(i)];
}

}  // namespace

EnsembleState initial_state(const EnsembleConfig& cfg) {
  const int steps = cfg.sched.steps();
  EnsembleState s;
  s.t = steps;
  const std::size_t n = cfg.branches.size();
  s.streams.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) s.streams.emplace_back(RngStream::child_seed(cfg.seed, k));
  for (std::size_t k = 0; k < n; ++k) {
    const auto& b = cfg.branches[k];
    Vector x = s.streams[k].normal_vector(b.model->dim());
    apply_clamp(x, b, steps, cfg.sched, s.streams[k]);
    s.x.push_back(std::move(x));
  }
  if (cfg.uncond_model) s.uncond = s.streams[n].normal_vector(cfg.uncond_model->dim());
  return s;
}

StepOutcome synchronized_step(EnsembleState& state, const EnsembleConfig& cfg, VisitTracker& tracker) {
  const int t = state.t;
  cfg.sched.require_step(t);
  const std::size_t n = cfg.branches.size();
  if (state.x.size() != n) fail(ErrorCode::DimensionMismatch, "state does not match the branch list");

  // (1) clean-state predictions
  std::vector<Vector> x0(n);
  StepOutcome out;
  out.raw_subjects.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& b = cfg.branches[k];
    x0[k] = tweedie_x0(state.x[k], b.model->score(state.x[k], t, cfg.sched), t, cfg.sched);
    out.raw_subjects[k] = take(x0[k], b.partition.subject);
  }
  std::optional<Vector> uncond_x0;
  if (cfg.uncond_model && state.uncond) {
    uncond_x0 = tweedie_x0(*state.uncond, cfg.uncond_model->score(*state.uncond, t, cfg.sched), t, cfg.sched);
  }
  out.disagreement = max_pairwise_linf(out.raw_subjects);

  // (2) consensus, injected into every prediction while contexts are kept
  out.synced = sync_indicator(cfg.preset.sync, t, tracker);
  if (out.synced) {
    Vector canon = aggregate(out.raw_subjects, uncond_x0, cfg.consensus);
    for (std::size_t k = 0; k < n; ++k) write_block(x0[k], cfg.branches[k].partition.subject, canon);
    if (uncond_x0) *uncond_x0 = canon;
    out.injected_subjects.assign(n, canon);
    out.consensus = std::move(canon);
  } else {
    out.injected_subjects = out.raw_subjects;
  }

  // (3) reverse transition with per-branch noise, (4) re-clamp
  for (std::size_t k = 0; k < n; ++k) {
    state.x[k] = posterior_step(state.x[k], x0[k], t, cfg.sched, state.streams[k]);
    apply_clamp(state.x[k], cfg.branches[k], t - 1, cfg.sched, state.streams[k]);
  }
  if (uncond_x0) *state.uncond = posterior_step(*state.uncond, *uncond_x0, t, cfg.sched, state.streams[n]);
  state.t = t - 1;
  return out;
}

void reheat(EnsembleState& state, const EnsembleConfig& cfg, int jump, double height) {
  const int from = state.t;
  const std::size_t n = cfg.branches.size();
  for (std::size_t k = 0; k < n; ++k) {
    state.x[k] = renoise(state.x[k], from, jump, height, cfg.sched, state.streams[k]);
    apply_clamp(state.x[k], cfg.branches[k], from + jump, cfg.sched, state.streams[k]);
  }
  if (state.uncond) *state.uncond = renoise(*state.uncond, from, jump, height, cfg.sched, state.streams[n]);
  state.t = from + jump;
}

namespace {

class Executor {
 public:
  explicit Executor(const EnsembleConfig& cfg) : cfg_(cfg), state_(initial_state(cfg)) {
    if (cfg.record_trace) trace_.emplace();
  }

  RunResult run(const std::vector<PlanSegment>& plan) {
    for (const auto& seg : plan) {
      if (const auto* c = std::get_if<CoolSegment>(&seg)) {
        cool(c->from, c->to, Phase::Cool);
      } else if (const auto* r = std::get_if<ReheatSegment>(&seg)) {
        expect_level(r->from);
        if (r->from == 0) ++pass_;
        heat(r->to - r->from, r->height);
      } else {
        const auto& loop = std::get<ResampleLoop>(seg);
        expect_level(loop.t);
        for (int k = 0; k < loop.iterations; ++k) {
          heat(loop.jump, loop.height);
          cool(loop.t + loop.jump, loop.t, Phase::ResampleCool);
        }
      }
    }
    expect_level(0);

    RunResult result;
    std::vector<Vector> subjects;
    for (std::size_t k = 0; k < cfg_.branches.size(); ++k) {
      subjects.push_back(take(state_.x[k], cfg_.branches[k].partition.subject));
    }
    result.canonical_subject = aggregate(subjects, state_.uncond, cfg_.consensus);
    result.per_branch_final = state_.x;
    result.disagreement = last_disagreement_;
    result.trace = std::move(trace_);
    return result;
  }

 private:
  void expect_level(int t) const {
    if (state_.t != t) fail(ErrorCode::StepOutOfRange, "plan segment starts at an unexpected level");
  }

  void cool(int from, int to, Phase phase) {
    expect_level(from);
    while (state_.t > to) {
      const int t = state_.t;
      StepOutcome o = synchronized_step(state_, cfg_, tracker_);
      last_disagreement_ = o.disagreement;
      if (trace_) {
        TraceRecord rec;
        rec.t = t;
        rec.phase = phase;
        rec.pass = pass_;
        rec.sync_applied = o.synced;
        rec.disagreement = o.disagreement;
        rec.branch_x0_subject = std::move(o.injected_subjects);
        rec.consensus = std::move(o.consensus);
        trace_->records.push_back(std::move(rec));
      }
    }
  }

  void heat(int jump, double height) {
    reheat(state_, cfg_, jump, height);
    if (trace_) {
      TraceRecord rec;
      rec.t = state_.t;
      rec.phase = Phase::Reheat;
      rec.pass = pass_;
      trace_->records.push_back(std::move(rec));
    }
  }

  const EnsembleConfig& cfg_;
  EnsembleState state_;
  VisitTracker tracker_;
  std::optional<TrajectoryLog> trace_;
  int pass_ = 0;
  double last_disagreement_ = 0.0;
};

}  // namespace

RunResult run_acg(const EnsembleConfig& cfg) {
  validate(cfg);
  return Executor(cfg).run(plan_trajectory(cfg.preset, cfg.sched.steps()));
}

RunResult run_posthoc(const EnsembleConfig& cfg) {
  if (!cfg.preset.is_posthoc()) {
    fail(ErrorCode::UnknownPreset, "run_posthoc: " + std::string(preset_label(cfg.preset.name)) + " is not post-hoc");
  }
  if (cfg.preset.sawtooth_targets.empty()) fail(ErrorCode::InvalidRange, "run_posthoc: no sawtooth targets");
  return run_acg(cfg);
}

std::vector<double> within_pair_loglik(const RunResult& result, const EnsembleConfig& cfg) {
  std::vector<double> out;
  out.reserve(cfg.branches.size());
  for (std::size_t k = 0; k < cfg.branches.size(); ++k) {
    const auto& b = cfg.branches[k];
    if (!b.model->has_exact_density()) fail(ErrorCode::NoExactDensity, "branch " + b.label + " has no exact density");
    Vector full = result.per_branch_final.at(k);
    write_block(full, b.partition.subject, result.canonical_subject);
    if (const auto* c = std::get_if<Clamp>(&b.mode)) {
      for (std::size_t i = 0; i < c->idx.size(); ++i) full[c->idx[i]] = c->values[static_cast<Index>(i)];
    }
    out.push_back(b.model->exact_logpdf0(full));
  }
  return out;
}

void write_trace_jsonl(std::ostream& os, const TrajectoryLog& log) {
  for (const auto& r : log.records) {
    nlohmann::json j;
    j["t"] = r.t;
    j["phase"] = std::string(phase_name(r.phase));
    j["pass"] = r.pass;
    j["sync"] = r.sync_applied;
    j["disagreement"] = r.disagreement;
    auto snaps = nlohmann::json::array();
    for (const auto& v : r.branch_x0_subject) snaps.push_back(to_json(v));
    j["branch_x0_subject"] = std::move(snaps);
    if (r.consensus) j["consensus"] = to_json(*r.consensus);
    os << j.dump() << '\n';
  }
}

}  // namespace acg
