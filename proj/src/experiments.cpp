#include "acg/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include "acg/flowfield.hpp"

namespace acg::exp {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

IndexSet iota_set(Index begin, Index count) {
  IndexSet out(static_cast<std::size_t>(count));
  std::iota(out.begin(), out.end(), begin);
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

template <class F>
auto config_guard(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigInvalid, e.what());
  }
}

std::vector<ConsensusOperator> consensus_list(const json& raw, std::size_t branches) {
  std::vector<ConsensusOperator> out;
  if (!raw.contains("consensus")) {
    out.emplace_back(MeanConsensus{});
  } else if (raw.at("consensus").is_array()) {
    for (const auto& c : raw.at("consensus")) out.push_back(consensus_from_json(c, branches));
  } else {
    out.push_back(consensus_from_json(raw.at("consensus"), branches));
  }
  if (out.empty()) fail(ErrorCode::ConfigInvalid, "consensus list is empty");
  return out;
}

struct HeatColumns {
  int j = 0;
  int k = 0;
  double h = 0.0;
};

HeatColumns heat_columns(const SchedulePreset& p) {
  if (p.is_posthoc()) return {0, 0, p.reheat_height};
  return {p.heat.jump, p.heat.iterations, p.heat.height};
}

ResultRow make_row(const std::string& preset, const std::string& consensus, HeatColumns hc, std::uint64_t seed,
                   const std::string& metric, double value) {
  return ResultRow{preset, consensus, hc.j, hc.k, hc.h, seed, metric, value};
}

}  // namespace

// ---- rows -----------------------------------------------------------------

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.preset, a.consensus, a.j_heat, a.k, a.h, a.seed, a.metric) <
           std::tie(b.preset, b.consensus, b.j_heat, b.k, b.h, b.seed, b.metric);
  });
}

void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.preset << ',' << r.consensus << ',' << r.j_heat << ',' << r.k << ',' << fmt(r.h) << ',' << r.seed << ','
       << r.metric << ',' << fmt(r.value) << '\n';
  }
}

json best_row(const std::vector<ResultRow>& rows, const std::string& metric) {
  using Key = std::tuple<std::string, std::string, int, int, double>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows) {
    if (r.metric == metric) groups[{r.preset, r.consensus, r.j_heat, r.k, r.h}].push_back(r.value);
  }
  json best = nullptr;
  double best_value = 0.0;
  for (const auto& [key, vals] : groups) {
    const double m = mean_of(vals);
    if (best.is_null() || m < best_value) {
      best_value = m;
      best = {{"preset", std::get<0>(key)}, {"consensus", std::get<1>(key)}, {"J_heat", std::get<2>(key)},
              {"K", std::get<3>(key)},      {"H", std::get<4>(key)},         {"metric", metric},
              {"value", m}};
    }
  }
  return best;
}

// ---- tree problems --------------------------------------------------------

TreeProblem gaussian_chain(int d, double rho, const Vector& mean_a, const Vector& mean_b, const Vector& mean_c) {
  if (d <= 0) fail(ErrorCode::InvalidRange, "gaussian_chain: d must be positive");
  if (!(std::abs(rho) < 1.0)) fail(ErrorCode::InvalidRange, "gaussian_chain: |rho| must be < 1");
  if (mean_a.size() != d || mean_b.size() != d || mean_c.size() != d) {
    fail(ErrorCode::DimensionMismatch, "gaussian_chain: means must have length d");
  }
  const Matrix id = Matrix::Identity(d, d);
  Matrix pair(2 * d, 2 * d);
  pair << id, rho * id, rho * id, id;
  Vector m_ab(2 * d), m_bc(2 * d);
  m_ab << mean_a, mean_b;
  m_bc << mean_b, mean_c;
  TreeProblem p;
  p.ab = std::make_shared<GaussianScoreModel>(MultivariateGaussian(m_ab, pair));
  p.bc = std::make_shared<GaussianScoreModel>(MultivariateGaussian(m_bc, pair));
  p.dims = TreeDims{d, d, d};
  return p;
}

TreeProblem tree_from_json(const json& j) {
  return config_guard([&] {
    if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "target must be an object");
    if (j.contains("chain")) {
      const auto& c = j.at("chain");
      const int d = c.at("d").get<int>();
      auto mean = [&](const char* key) {
        return c.contains(key) ? vector_from_json(c.at(key)) : Vector(Vector::Zero(d));
      };
      try {
        return gaussian_chain(d, c.at("rho").get<double>(), mean("mean_a"), mean("mean_b"), mean("mean_c"));
      } catch (const Error& e) {
        fail(ErrorCode::ConfigInvalid, e.what());
      }
    }
    const auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() != 3 || std::any_of(dims.begin(), dims.end(), [](int v) { return v <= 0; })) {
      fail(ErrorCode::ConfigInvalid, "dims must be three positive integers");
    }
    TreeProblem p{model_from_json(j.at("pair_ab")), model_from_json(j.at("pair_bc")), {dims[0], dims[1], dims[2]}};
    if (p.ab->dim() != dims[0] + dims[1] || p.bc->dim() != dims[1] + dims[2]) {
      fail(ErrorCode::ConfigInvalid, "pair model dims do not match dims");
    }
    return p;
  });
}

ScoreModelPtr marginal_model(const ScoreModel& m, const IndexSet& idx) {
  if (const auto* g = dynamic_cast<const GaussianScoreModel*>(&m)) {
    return std::make_shared<GaussianScoreModel>(mvn_marginal(g->base(), idx));
  }
  if (const auto* mix = dynamic_cast<const MixtureScoreModel*>(&m)) {
    std::vector<MultivariateGaussian> comps;
    for (const auto& c : mix->components()) comps.push_back(mvn_marginal(c.base(), idx));
    return std::make_shared<MixtureScoreModel>(mix->weights(), std::move(comps));
  }
  fail(ErrorCode::NoExactDensity, "marginal_model: model has no closed form");
}

Vector sample_conditional(const ScoreModel& m, const IndexSet& obs_idx, const Vector& obs_vals, RngStream& rng) {
  if (const auto* g = dynamic_cast<const GaussianScoreModel*>(&m)) {
    return mvn_sample(mvn_condition(g->base(), obs_idx, obs_vals), rng);
  }
  if (const auto* mix = dynamic_cast<const MixtureScoreModel*>(&m)) {
    const auto& comps = mix->components();
    std::vector<double> logw(comps.size());
    for (std::size_t k = 0; k < comps.size(); ++k) {
      logw[k] = std::log(mix->weights()[k]) + mvn_logpdf(mvn_marginal(comps[k].base(), obs_idx), obs_vals);
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (auto& w : logw) total += (w = std::exp(w - top));
    double u = rng.uniform() * total;
    std::size_t pick = 0;
    while (pick + 1 < comps.size() && u > logw[pick]) u -= logw[pick++];
    return mvn_sample(mvn_condition(comps[pick].base(), obs_idx, obs_vals), rng);
  }
  fail(ErrorCode::NoExactDensity, "sample_conditional: model has no closed form");
}

EnsembleConfig tree_ensemble(const TreeProblem& p, const SchedulePreset& preset, const ConsensusOperator& op,
                             const NoiseSchedule& sched, std::uint64_t seed) {
  const auto [da, db, dc] = p.dims;
  EnsembleConfig cfg;
  cfg.branches.push_back(Branch{p.ab, {iota_set(da, db), iota_set(0, da)}, CoGenerate{}, "left"});
  if (preset.name != PresetName::IndependentOracle) {
    cfg.branches.push_back(Branch{p.bc, {iota_set(0, db), iota_set(db, dc)}, CoGenerate{}, "right"});
  }
  if (needs_unconditional(op)) cfg.uncond_model = marginal_model(*p.ab, iota_set(da, db));
  cfg.consensus = op;
  cfg.preset = preset;
  cfg.sched = sched;
  cfg.seed = seed;
  return cfg;
}

TreeSample sample_tree(const TreeProblem& p, const SchedulePreset& preset, const ConsensusOperator& op,
                       const NoiseSchedule& sched, std::uint64_t seed) {
  const auto [da, db, dc] = p.dims;
  const EnsembleConfig cfg = tree_ensemble(p, preset, op, sched, seed);
  const RunResult r = run_acg(cfg);
  const Vector& b = r.canonical_subject;
  Vector a = r.per_branch_final[0].head(da);
  Vector c;
  if (r.per_branch_final.size() > 1) {
    c = r.per_branch_final[1].tail(dc);
  } else {
    RngStream rng(RngStream::child_seed(seed, 1000));
    c = sample_conditional(*p.bc, iota_set(0, db), b, rng);
  }
  TreeSample s;
  s.abc.resize(da + db + dc);
  s.abc << a, b, c;
  s.disagreement = r.disagreement;
  Vector ab(da + db), bc(db + dc);
  ab << a, b;
  bc << b, c;
  s.loglik_ab = p.ab->exact_logpdf0(ab);
  s.loglik_bc = p.bc->exact_logpdf0(bc);
  return s;
}

// ---- config ---------------------------------------------------------------

ExperimentConfig parse_config(const json& j, const std::string& expected_kind) {
  return config_guard([&] {
    if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "config must be a JSON object");
    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.kind = j.value("kind", expected_kind);
    if (cfg.kind != expected_kind) {
      fail(ErrorCode::ConfigInvalid, "config kind '" + cfg.kind + "' does not match '" + expected_kind + "'");
    }
    if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty()) {
      fail(ErrorCode::ConfigInvalid, "seeds must be a non-empty list");
    }
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.n_samples = j.value("n_samples", 1);
    if (cfg.n_samples <= 0) fail(ErrorCode::ConfigInvalid, "n_samples must be positive");
    cfg.out_dir = j.value("out_dir", std::string("out"));
    return cfg;
  });
}

NoiseSchedule noise_from_json(const json& j, int steps) {
  return config_guard([&] {
    try {
      if (j.is_object() && j.contains("beta")) {
        const auto b = j.at("beta").get<std::vector<double>>();
        if (b.size() != 2) fail(ErrorCode::ConfigInvalid, "noise.beta must be [min, max]");
        return linear_schedule(steps, b[0], b[1]);
      }
      return default_schedule(steps);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigInvalid) throw;
      fail(ErrorCode::ConfigInvalid, e.what());
    }
  });
}

namespace {

SchedulePreset schedule_for(const json& raw, const std::string& preset_name, int& steps) {
  json block = raw.value("schedule", json::object());
  block["preset"] = preset_name;
  return schedule_from_json(block, steps);
}

}  // namespace

// ---- gauss-tree -----------------------------------------------------------

CommandResult cmd_gauss_tree(const ExperimentConfig& cfg) {
  const json& raw = cfg.raw;
  if (!raw.contains("target")) fail(ErrorCode::ConfigInvalid, "gauss-tree needs a target block");
  const TreeProblem p = tree_from_json(raw.at("target"));
  const auto* g_ab = dynamic_cast<const GaussianScoreModel*>(p.ab.get());
  const auto* g_bc = dynamic_cast<const GaussianScoreModel*>(p.bc.get());
  if (!g_ab || !g_bc) fail(ErrorCode::ConfigInvalid, "gauss-tree needs Gaussian pair models");
  const TreeGaussian oracle = config_guard([&] {
    try {
      return compose_tree_joint(g_ab->base(), g_bc->base(), p.dims);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigInvalid, e.what());
    }
  });
  const Index dim = p.dims.a + p.dims.b + p.dims.c;
  if (cfg.n_samples < dim + 1) {
    fail(ErrorCode::ConfigInvalid, "n_samples must be at least " + std::to_string(dim + 1) + " for the moment fit");
  }

  std::vector<std::string> names;
  if (raw.contains("presets")) {
    names = config_guard([&] { return raw.at("presets").get<std::vector<std::string>>(); });
    if (names.empty()) fail(ErrorCode::ConfigInvalid, "presets list is empty");
  } else {
    for (auto n : all_presets()) names.emplace_back(preset_label(n));
  }
  const auto ops = consensus_list(raw, 2);

  CommandResult out;
  json w2_summary = json::object();
  for (const auto& name : names) {
    int steps = 0;
    const SchedulePreset preset = schedule_for(raw, name, steps);
    const NoiseSchedule sched = noise_from_json(raw.value("noise", json::object()), steps);
    const HeatColumns hc = heat_columns(preset);
    for (const auto& op : ops) {
      const std::string cname = consensus_name(op);
      std::vector<double> w2s;
      for (std::uint64_t seed : cfg.seeds) {
        std::vector<Vector> samples;
        std::vector<double> dis, lab, lbc;
        for (int i = 0; i < cfg.n_samples; ++i) {
          const TreeSample s = sample_tree(p, preset, op, sched, RngStream::child_seed(seed, static_cast<std::uint64_t>(i)));
          samples.push_back(s.abc);
          dis.push_back(s.disagreement);
          lab.push_back(s.loglik_ab);
          lbc.push_back(s.loglik_bc);
        }
        const double w2 = wasserstein2_gaussian(empirical_moments(samples), oracle.joint);
        w2s.push_back(w2);
        out.rows.push_back(make_row(name, cname, hc, seed, "w2", w2));
        out.rows.push_back(make_row(name, cname, hc, seed, "disagreement", mean_of(dis)));
        out.rows.push_back(make_row(name, cname, hc, seed, "loglik_ab", mean_of(lab)));
        out.rows.push_back(make_row(name, cname, hc, seed, "loglik_bc", mean_of(lbc)));
      }
      w2_summary[name][cname] = mean_of(w2s);
      out.messages.push_back(name + " " + cname + " w2=" + fmt_short(mean_of(w2s)));
    }
  }
  sort_rows(out.rows);
  out.summary = {{"best", best_row(out.rows, "w2")}, {"rows", out.rows.size()}, {"w2", w2_summary}};
  return out;
}

// ---- ablate ---------------------------------------------------------------

CommandResult cmd_ablate(const ExperimentConfig& cfg) {
  const json& raw = cfg.raw;
  if (!raw.contains("target")) fail(ErrorCode::ConfigInvalid, "ablate needs a target block");
  const TreeProblem p = tree_from_json(raw.at("target"));
  const auto ops = consensus_list(raw, 2);
  if (ops.size() != 1) fail(ErrorCode::ConfigInvalid, "ablate takes a single consensus block");
  const ConsensusOperator& op = ops.front();
  const std::string cname = consensus_name(op);

  const std::string base_name = raw.value("schedule", json::object()).value("preset", std::string("ACG"));
  int steps = 0;
  const SchedulePreset base = schedule_for(raw, base_name, steps);
  if (base.is_posthoc()) fail(ErrorCode::ConfigInvalid, "ablate grids an in-progress preset");
  const NoiseSchedule sched = noise_from_json(raw.value("noise", json::object()), steps);

  const json grid = raw.value("grid", json::object());
  auto axis = [&]<class T>(const char* key, T fallback) {
    return config_guard([&] {
      if (!grid.contains(key)) return std::vector<T>{fallback};
      auto v = grid.at(key).get<std::vector<T>>();
      if (v.empty()) fail(ErrorCode::ConfigInvalid, std::string("grid axis ") + key + " is empty");
      return v;
    });
  };
  const auto ks = axis("K", base.heat.iterations);
  const auto hs = axis("H", base.heat.height);
  const auto js = axis("J_heat", base.heat.jump);
  const auto policies = axis("sync", sync_name(base.sync));
  std::vector<int> sync_window{0, 0};
  if (grid.contains("sync_window")) sync_window = config_guard([&] { return grid.at("sync_window").get<std::vector<int>>(); });
  if (sync_window.size() != 2) fail(ErrorCode::ConfigInvalid, "sync_window must be [lo, hi]");

  CommandResult out;
  auto evaluate = [&](const std::string& label, const SchedulePreset& preset) {
    const HeatColumns hc = heat_columns(preset);
    for (std::uint64_t seed : cfg.seeds) {
      std::vector<double> ll, dis;
      for (int i = 0; i < cfg.n_samples; ++i) {
        const TreeSample s = sample_tree(p, preset, op, sched, RngStream::child_seed(seed, static_cast<std::uint64_t>(i)));
        ll.push_back(s.loglik_ab + s.loglik_bc);
        dis.push_back(s.disagreement);
      }
      out.rows.push_back(make_row(label, cname, hc, seed, "loglik", mean_of(ll)));
      out.rows.push_back(make_row(label, cname, hc, seed, "nll", -mean_of(ll)));
      out.rows.push_back(make_row(label, cname, hc, seed, "disagreement", mean_of(dis)));
    }
  };

  for (int k : ks)
    for (double h : hs)
      for (const auto& pol : policies)
        for (int j : js) {
          SchedulePreset pt = base;
          pt.heat.iterations = k;
          pt.heat.height = h;
          pt.heat.jump = j;
          pt.reheat_height = h;
          try {
            pt.sync = sync_from_string(pol, sync_window[0], sync_window[1]);
            validate(pt.heat);
          } catch (const Error& e) {
            fail(ErrorCode::ConfigInvalid, e.what());
          }
          evaluate(base_name + "+" + sync_name(pt.sync), pt);
        }

  // Fixed presets evaluated next to the grid, e.g. Greedy and Consistent.
  if (raw.contains("baselines")) {
    for (const auto& name : config_guard([&] { return raw.at("baselines").get<std::vector<std::string>>(); })) {
      int s = 0;
      evaluate(name, schedule_for(raw, name, s));
    }
  }

  sort_rows(out.rows);
  const json best = best_row(out.rows, "nll");
  out.summary = {{"best", best}, {"rows", out.rows.size()}};
  if (!best.is_null()) {
    out.messages.push_back("BEST preset=" + best["preset"].get<std::string>() + " consensus=" + cname +
                           " J_heat=" + std::to_string(best["J_heat"].get<int>()) +
                           " K=" + std::to_string(best["K"].get<int>()) + " H=" + fmt_short(best["H"].get<double>()) +
                           " nll=" + fmt_short(best["value"].get<double>()));
  }
  return out;
}

// ---- inpaint --------------------------------------------------------------

namespace {

struct NamedPattern {
  std::string name;
  field::CorruptionPattern pattern;
};

NamedPattern pattern_from_json(const json& j, std::size_t index) {
  return config_guard([&] {
    NamedPattern np;
    np.name = j.value("name", "pattern" + std::to_string(index));
    if (np.name.find_first_of(",\n/ ") != std::string::npos) fail(ErrorCode::ConfigInvalid, "bad pattern name");
    const auto type = j.at("type").get<std::string>();
    if (type == "block") {
      np.pattern = field::BlockPattern{j.at("x0").get<int>(), j.at("y0").get<int>(), j.at("w").get<int>(),
                                       j.at("h").get<int>()};
    } else if (type == "stripe") {
      np.pattern = field::StripePattern{j.at("col_lo").get<int>(), j.at("col_hi").get<int>()};
    } else if (type == "random_rects") {
      np.pattern = field::RandomRectsPattern{j.at("n").get<int>(), j.at("seed").get<std::uint64_t>()};
    } else {
      fail(ErrorCode::ConfigInvalid, "unknown pattern type '" + type + "'");
    }
    return np;
  });
}

std::string grid_text(const field::FieldGrid& g) {
  std::ostringstream os;
  field::write_fgrid(os, g);
  return os.str();
}

}  // namespace

CommandResult cmd_inpaint(const ExperimentConfig& cfg) {
  const json& raw = cfg.raw;
  const json grid = raw.value("grid", json::object());
  const auto [height, width, channels, patch_w] = config_guard([&] {
    return std::tuple{grid.value("H", 16), grid.value("W", 40), grid.value("C", 1), grid.value("patch_w", 8)};
  });
  const json grf = raw.value("grf", json::object());
  const field::GRFSpec spec = config_guard([&] {
    return field::GRFSpec{grf.value("length_scale", 2.0), grf.value("variance", 1.0), grf.value("nugget", 1e-4)};
  });

  auto as_config_error = [](auto&& f) {
    try {
      return f();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::SizeCap) throw;
      fail(ErrorCode::ConfigInvalid, e.what());
    }
  };
  as_config_error([&] {
    field::validate(spec);
    if (height <= 0 || channels <= 0) fail(ErrorCode::ConfigInvalid, "grid dims must be positive");
    return 0;
  });
  if (height * width > field::kMaxPixels) fail(ErrorCode::SizeCap, "inpaint grid exceeds the size cap");
  const field::PatchLayout layout = as_config_error([&] { return field::PatchLayout(width, patch_w); });

  std::vector<NamedPattern> patterns;
  if (!raw.contains("patterns") || !raw.at("patterns").is_array() || raw.at("patterns").empty()) {
    fail(ErrorCode::ConfigInvalid, "inpaint needs a non-empty patterns list");
  }
  for (std::size_t i = 0; i < raw.at("patterns").size(); ++i) patterns.push_back(pattern_from_json(raw.at("patterns")[i], i));

  std::vector<std::string> methods = {"oracle", "single", "acg"};
  if (raw.contains("methods")) methods = config_guard([&] { return raw.at("methods").get<std::vector<std::string>>(); });
  for (const auto& m : methods) {
    if (m != "oracle" && m != "single" && m != "acg") fail(ErrorCode::ConfigInvalid, "unknown method '" + m + "'");
  }
  if (methods.empty()) fail(ErrorCode::ConfigInvalid, "methods list is empty");

  const std::string preset_name = raw.value("schedule", json::object()).value("preset", std::string("ACG"));
  int steps = 0;
  const SchedulePreset preset = schedule_for(raw, preset_name, steps);
  const NoiseSchedule sched = noise_from_json(raw.value("noise", json::object()), steps);
  const auto ops = consensus_list(raw, 2);
  if (ops.size() != 1) fail(ErrorCode::ConfigInvalid, "inpaint takes a single consensus block");

  CommandResult out;
  const HeatColumns hc = heat_columns(preset);
  for (const auto& np : patterns) {
    for (std::uint64_t seed : cfg.seeds) {
      std::map<std::string, std::vector<field::FieldMetrics>> per_method;
      for (int trial = 0; trial < cfg.n_samples; ++trial) {
        RngStream rng(RngStream::child_seed(seed, static_cast<std::uint64_t>(trial)));
        const field::FieldGrid truth = field::sample_grf(spec, height, width, channels, rng);
        const auto [corrupted, mask] = as_config_error([&] { return field::corrupt(truth, np.pattern); });
        const std::string stem = "fields/" + np.name + "_s" + std::to_string(seed);
        if (trial == 0) {
          out.files.emplace_back(stem + "_truth.fgrid", grid_text(truth));
          out.files.emplace_back(stem + "_corrupted.fgrid", grid_text(corrupted));
          std::ostringstream ms;
          field::write_fmask(ms, mask);
          out.files.emplace_back(stem + ".fmask", ms.str());
        }
        for (const auto& method : methods) {
          field::FieldGrid rec = corrupted;
          if (method == "oracle") {
            rec = field::exact_posterior(corrupted, mask, spec);
          } else {
            field::InpaintOptions opt;
            opt.preset = preset;
            opt.sched = sched;
            opt.consensus = ops.front();
            opt.seed = RngStream::child_seed(seed, 1000 + static_cast<std::uint64_t>(trial));
            opt.neighbors = method == "single" ? field::Neighbors::Single : field::Neighbors::Both;
            rec = field::inpaint_acg(corrupted, mask, spec, layout, opt);
          }
          per_method[method].push_back(field::metrics(truth, rec));
          if (trial == 0) out.files.emplace_back(stem + "_" + method + ".fgrid", grid_text(rec));
        }
      }
      for (const auto& [method, ms] : per_method) {
        const bool oracle = method == "oracle";
        const std::string cname = oracle ? "none" : consensus_name(ops.front());
        const HeatColumns cols = oracle ? HeatColumns{} : hc;
        std::vector<double> mse, psnr, ssim;
        for (const auto& m : ms) {
          mse.push_back(m.mse);
          psnr.push_back(m.psnr);
          ssim.push_back(m.ssim);
        }
        out.rows.push_back(make_row(method, cname, cols, seed, np.name + ".mse", mean_of(mse)));
        out.rows.push_back(make_row(method, cname, cols, seed, np.name + ".psnr", mean_of(psnr)));
        out.rows.push_back(make_row(method, cname, cols, seed, np.name + ".ssim", mean_of(ssim)));
      }
    }
  }

  // Pair diagnostics: cross-block correlation range and agreement of the shared patch.
  std::ostringstream diag;
  diag << "pair,cross_corr_min,cross_corr_max,shared_marginal_gap\n";
  const Index block = static_cast<Index>(height) * patch_w;
  for (int i = 0; i < layout.pairs(); ++i) {
    const Matrix cov = field::pair_joint(spec, layout, i, height).base().cov();
    const Vector sd = cov.diagonal().cwiseSqrt();
    const Matrix corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
    const Matrix cross = corr.topRightCorner(block, block);
    double gap = 0.0;
    if (i + 1 < layout.pairs()) {
      const Matrix next = field::pair_joint(spec, layout, i + 1, height).base().cov();
      gap = (cov.bottomRightCorner(block, block) - next.topLeftCorner(block, block)).cwiseAbs().maxCoeff();
    }
    diag << i << ',' << fmt(cross.minCoeff()) << ',' << fmt(cross.maxCoeff()) << ',' << fmt(gap) << '\n';
  }
  out.files.emplace_back("pair_diagnostics.csv", diag.str());
  out.messages.push_back("pairs " + std::to_string(layout.pairs()));

  sort_rows(out.rows);
  out.summary = {{"best", best_row(out.rows, patterns.front().name + ".mse")},
                 {"rows", out.rows.size()},
                 {"pairs", layout.pairs()}};
  for (const auto& r : out.rows) {
    if (r.metric.ends_with(".mse")) {
      out.messages.push_back(r.preset + " seed=" + std::to_string(r.seed) + " " + r.metric + "=" + fmt_short(r.value));
    }
  }
  return out;
}

// ---- check ----------------------------------------------------------------

namespace {

Matrix random_spd(Index d, RngStream& rng) {
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  Matrix s = a * a.transpose() / static_cast<double>(d);
  s.diagonal().array() += 0.5;
  return s;
}

}  // namespace

CommandResult cmd_check() {
  CommandResult out;
  auto report = [&](const std::string& name, bool pass, double value) {
    out.messages.push_back("CHECK " + name + (pass ? " PASS " : " FAIL ") + fmt_short(value));
    out.rows.push_back(ResultRow{"check", "none", 0, 0, 0.0, 0, name, value});
    if (!pass) out.exit_code = 1;
  };
  auto guarded = [&](const std::string& name, double limit, auto&& body) {
    try {
      const double v = body();
      report(name, v <= limit, v);
    } catch (const std::exception&) {
      report(name, false, std::nan(""));
    }
  };

  const NoiseSchedule sched = default_schedule(200);
  const int probe_steps[] = {1, 20, 60, 120, 200};

  guarded("score_fd_gaussian", 1e-6, [&] {
    RngStream rng(11);
    const GaussianScoreModel m(MultivariateGaussian(rng.normal_vector(3), random_spd(3, rng)));
    double worst = 0.0;
    for (int t : probe_steps) worst = std::max(worst, score_fd_check(m, t, sched, 20, rng));
    return worst;
  });

  guarded("score_fd_mixture", 1e-5, [&] {
    RngStream rng(12);
    std::vector<MultivariateGaussian> comps;
    for (int k = 0; k < 3; ++k) comps.emplace_back(2.0 * rng.normal_vector(2), random_spd(2, rng));
    const MixtureScoreModel m({0.5, 0.3, 0.2}, std::move(comps));
    double worst = 0.0;
    for (int t : probe_steps) worst = std::max(worst, score_fd_check(m, t, sched, 20, rng));
    return worst;
  });

  guarded("factorization", 1e-8, [&] {
    RngStream rng(13);
    double worst = 0.0;
    for (int tree = 0; tree < 5; ++tree) {
      const Matrix joint = random_spd(6, rng);
      const MultivariateGaussian full(rng.normal_vector(6), joint);
      const MultivariateGaussian q_ab = mvn_marginal(full, iota_set(0, 4));
      const MultivariateGaussian q_bc = mvn_marginal(full, iota_set(2, 4));
      const TreeGaussian tg = compose_tree_joint(q_ab, q_bc, {2, 2, 2});
      std::vector<Vector> pts;
      for (int i = 0; i < 100; ++i) pts.push_back(rng.normal_vector(6));
      worst = std::max(worst, factorization_check(tg, q_ab, q_bc, pts));
    }
    return worst;
  });

  guarded("tweedie_gaussian", 1e-10, [&] {
    RngStream rng(14);
    const MultivariateGaussian g(rng.normal_vector(3), random_spd(3, rng));
    const GaussianScoreModel m(g);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const int t = 1 + static_cast<int>(rng.next_u64() % 200);
      const Vector x = rng.normal_vector(3);
      const Vector est = tweedie_x0(x, m.score(x, t, sched), t, sched);
      worst = std::max(worst, (est - gaussian_posterior_mean(g, x, t, sched)).cwiseAbs().maxCoeff());
    }
    return worst;
  });

  guarded("unified_lambda_zero", 0.0, [&] {
    RngStream rng(15);
    double mismatches = 0.0;
    for (int i = 0; i < 100; ++i) {
      std::vector<Vector> preds{rng.normal_vector(4), rng.normal_vector(4), rng.normal_vector(4)};
      const Vector mean = aggregate(preds, std::nullopt, MeanConsensus{});
      const Vector uni = aggregate(preds, rng.normal_vector(4), UnifiedConsensus{0.0});
      if (!(mean.array() == uni.array()).all()) mismatches += 1.0;
    }
    return mismatches;
  });

  guarded("kernel_consistency", 0.02, [&] {
    RngStream rng(16);
    Vector x0(2);
    x0 << 1.0, -2.0;
    const int t = 30, jump = 20, n = 100000;
    Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
    for (int i = 0; i < n; ++i) {
      const Vector x = renoise(forward_noise(x0, t, sched, rng), t, jump, 1.0, sched, rng);
      sum += x;
      sq += x.cwiseProduct(x);
    }
    const Vector mean = sum / n;
    const Vector var = sq / n - mean.cwiseProduct(mean);
    const double ab = sched.alpha_bar(t + jump);
    const Vector want_mean = std::sqrt(ab) * x0;
    const double want_var = 1.0 - ab;
    double worst = 0.0;
    for (Index i = 0; i < 2; ++i) {
      worst = std::max(worst, std::abs(mean[i] - want_mean[i]) / std::abs(want_mean[i]));
      worst = std::max(worst, std::abs(var[i] - want_var) / want_var);
    }
    return worst;
  });

  guarded("grf_kernel_symmetry", 0.0, [&] {
    const field::GRFSpec spec;
    const Matrix k = field::grf_covariance(spec, 6, 10);
    const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
    const double diag = (k.diagonal().array() - (spec.variance + spec.nugget)).abs().maxCoeff();
    return std::max(asym, diag);
  });

  guarded("pair_shared_marginal", 0.0, [&] {
    const field::GRFSpec spec;
    const field::PatchLayout layout(40, 8);
    const Index block = 16 * 8;
    double worst = 0.0;
    for (int i = 0; i + 1 < layout.pairs(); ++i) {
      const Matrix a = field::pair_joint(spec, layout, i, 16).base().cov();
      const Matrix b = field::pair_joint(spec, layout, i + 1, 16).base().cov();
      worst = std::max(worst, (a.bottomRightCorner(block, block) - b.topLeftCorner(block, block)).cwiseAbs().maxCoeff());
    }
    return worst;
  });

  out.summary = {{"best", nullptr}, {"rows", out.rows.size()}, {"failed", out.exit_code != 0}};
  return out;
}

// ---- output ---------------------------------------------------------------

void write_outputs(const CommandResult& r, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write = [&](const fs::path& rel, const std::string& text) {
    const fs::path path = out_dir / rel;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::ConfigInvalid, "cannot write " + path.string());
    os << text;
  };
  std::ostringstream csv;
  write_csv(csv, r.rows);
  write("results.csv", csv.str());
  write("summary.json", r.summary.dump(2) + "\n");
  for (const auto& [rel, text] : r.files) write(rel, text);
}

}  // namespace acg::exp
