#include "acg/flowfield.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "acg/driver.hpp"

namespace acg::field {

namespace {

void require_shape(int h, int w, int c) {
  if (h <= 0 || w <= 0 || c <= 0) fail(ErrorCode::InvalidRange, "field dimensions must be positive");
}

}  // namespace

// ---- grid / mask ----------------------------------------------------------

FieldGrid::FieldGrid(int height, int width, int channels)
    : height_(height), width_(width), channels_(channels) {
  require_shape(height, width, channels);
  values_.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
}

FieldGrid::FieldGrid(int height, int width, int channels, std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
  require_shape(height, width, channels);
  if (values_.size() != static_cast<std::size_t>(height) * width * channels) {
    fail(ErrorCode::ShapeMismatch, "FieldGrid: value count does not match H*W*C");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) fail(ErrorCode::InvalidRange, "FieldGrid: non-finite value");
  }
}

Vector FieldGrid::channel(int c) const {
  Vector out(static_cast<Index>(height_) * width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out[static_cast<Index>(y) * width_ + x] = at(y, x, c);
  return out;
}

void FieldGrid::set_channel(int c, const Vector& v) {
  if (v.size() != static_cast<Index>(height_) * width_) fail(ErrorCode::ShapeMismatch, "set_channel: length");
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) at(y, x, c) = v[static_cast<Index>(y) * width_ + x];
}

CorruptionMask::CorruptionMask(int height, int width) : height_(height), width_(width) {
  require_shape(height, width, 1);
  bits_.assign(static_cast<std::size_t>(height) * width, 0);
}

CorruptionMask::CorruptionMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  require_shape(height, width, 1);
  if (bits_.size() != static_cast<std::size_t>(height) * width) {
    fail(ErrorCode::ShapeMismatch, "CorruptionMask: bit count does not match H*W");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

bool CorruptionMask::any() const {
  return std::any_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
}

std::size_t CorruptionMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

// ---- layout ---------------------------------------------------------------

void validate(const GRFSpec& spec) {
  if (!(spec.length_scale > 0.0) || !(spec.variance > 0.0) || !(spec.nugget >= 0.0)) {
    fail(ErrorCode::InvalidRange, "GRFSpec: need length_scale > 0, variance > 0, nugget >= 0");
  }
}

PatchLayout::PatchLayout(int width, int patch_w) : width_(width), patch_w_(patch_w) {
  if (width <= 0 || patch_w <= 0 || width % patch_w != 0) {
    fail(ErrorCode::InvalidRange, "PatchLayout: width must be a positive multiple of patch_w");
  }
  if (width / patch_w < 2) fail(ErrorCode::InvalidRange, "PatchLayout: need at least two patches");
}

IndexSet patch_pixels(const PatchLayout& layout, int height, int patch) {
  if (patch < 0 || patch >= layout.count()) fail(ErrorCode::IndexOutOfRange, "patch_pixels: patch index");
  IndexSet out;
  out.reserve(static_cast<std::size_t>(height) * layout.patch_w());
  const int x0 = patch * layout.patch_w();
  for (int y = 0; y < height; ++y)
    for (int x = x0; x < x0 + layout.patch_w(); ++x) out.push_back(static_cast<Index>(y) * layout.width() + x);
  return out;
}

// ---- corruption -----------------------------------------------------------

namespace {

void fill_rect(CorruptionMask& m, int x0, int y0, int w, int h) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) m.set(y, x, true);
}

struct MaskBuilder {
  int height;
  int width;

  CorruptionMask operator()(const BlockPattern& p) const {
    if (p.w < 0 || p.h < 0 || p.x0 < 0 || p.y0 < 0 || p.x0 + p.w > width || p.y0 + p.h > height) {
      fail(ErrorCode::OutOfBounds, "Block pattern outside the grid");
    }
    CorruptionMask m(height, width);
    fill_rect(m, p.x0, p.y0, p.w, p.h);
    return m;
  }

  CorruptionMask operator()(const RandomRectsPattern& p) const {
    if (p.n < 0) fail(ErrorCode::OutOfBounds, "RandomRects: negative count");
    CorruptionMask m(height, width);
    RngStream rng(p.seed);
    const int max_w = std::max(1, width / 4);
    const int max_h = std::max(1, height / 2);
    auto pick = [&rng](int n) { return static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n)); };
    for (int i = 0; i < p.n; ++i) {
      const int w = 1 + pick(max_w);
      const int h = 1 + pick(max_h);
      const int x0 = pick(width - w + 1);
      const int y0 = pick(height - h + 1);
      fill_rect(m, x0, y0, w, h);
    }
    return m;
  }

  CorruptionMask operator()(const StripePattern& p) const {
    if (p.col_lo < 0 || p.col_hi >= width || p.col_lo > p.col_hi) {
      fail(ErrorCode::OutOfBounds, "Stripe pattern outside the grid");
    }
    CorruptionMask m(height, width);
    fill_rect(m, p.col_lo, 0, p.col_hi - p.col_lo + 1, height);
    return m;
  }
};

}  // namespace

CorruptionMask make_mask(const CorruptionPattern& pattern, int height, int width) {
  CorruptionMask m = std::visit(MaskBuilder{height, width}, pattern);
  if (m.count() == m.bits().size()) fail(ErrorCode::OutOfBounds, "pattern leaves no known pixel");
  return m;
}

std::pair<FieldGrid, CorruptionMask> corrupt(const FieldGrid& field, const CorruptionPattern& pattern) {
  CorruptionMask m = make_mask(pattern, field.height(), field.width());
  FieldGrid out = field;
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x)
      if (m(y, x))
        for (int c = 0; c < field.channels(); ++c) out.at(y, x, c) = 0.0;
  return {std::move(out), std::move(m)};
}

// ---- GRF ------------------------------------------------------------------

Matrix grf_covariance(const GRFSpec& spec, int height, int width) {
  validate(spec);
  require_shape(height, width, 1);
  if (static_cast<long>(height) * width > kMaxPixels) {
    fail(ErrorCode::SizeCap, "grf_covariance: grid exceeds " + std::to_string(kMaxPixels) + " pixels");
  }
  const Index n = static_cast<Index>(height) * width;
  Matrix k(n, n);
  const double inv = 1.0 / (2.0 * spec.length_scale * spec.length_scale);
  for (Index p = 0; p < n; ++p) {
    const double py = static_cast<double>(p / width), px = static_cast<double>(p % width);
    for (Index q = p; q < n; ++q) {
      const double dy = py - static_cast<double>(q / width), dx = px - static_cast<double>(q % width);
      const double v = spec.variance * std::exp(-(dx * dx + dy * dy) * inv);
      k(p, q) = v;
      k(q, p) = v;
    }
    k(p, p) += spec.nugget;
  }
  return k;
}

FieldGrid sample_grf(const GRFSpec& spec, int height, int width, int channels, RngStream& rng) {
  require_shape(height, width, channels);
  const Matrix l = cholesky(grf_covariance(spec, height, width));
  FieldGrid out(height, width, channels);
  for (int c = 0; c < channels; ++c) {
    const Vector z = rng.normal_vector(l.rows());
    out.set_channel(c, l.triangularView<Eigen::Lower>() * z);
  }
  return out;
}

GaussianScoreModel pair_joint(const GRFSpec& spec, const PatchLayout& layout, int pair_index, int height,
                              PairOrientation orientation) {
  if (pair_index < 0 || pair_index >= layout.pairs()) fail(ErrorCode::IndexOutOfRange, "pair_joint: pair index");
  const Matrix k = grf_covariance(spec, height, layout.width());
  const IndexSet left = patch_pixels(layout, height, pair_index);
  const IndexSet right = patch_pixels(layout, height, pair_index + 1);
  IndexSet idx = orientation == PairOrientation::LeftContext ? left : right;
  const IndexSet& subj = orientation == PairOrientation::LeftContext ? right : left;
  idx.insert(idx.end(), subj.begin(), subj.end());
  return GaussianScoreModel(MultivariateGaussian(Vector::Zero(static_cast<Index>(idx.size())), take(k, idx, idx)));
}

// ---- inpainting -----------------------------------------------------------

FieldGrid inpaint_acg(const FieldGrid& field, const CorruptionMask& mask, const GRFSpec& spec,
                      const PatchLayout& layout, const InpaintOptions& options) {
  validate(spec);
  if (mask.height() != field.height() || mask.width() != field.width() || layout.width() != field.width()) {
    fail(ErrorCode::ShapeMismatch, "inpaint_acg: field, mask and layout disagree");
  }
  const int h = field.height();
  const int pw = layout.patch_w();
  const int n_patches = layout.count();

  auto patch_corrupted = [&](int p) {
    for (int y = 0; y < h; ++y)
      for (int x = p * pw; x < (p + 1) * pw; ++x)
        if (mask(y, x)) return true;
    return false;
  };

  // Pixel knowledge evolves: a reconstructed patch is fully known afterwards.
  CorruptionMask unknown = mask;
  auto has_known = [&](int p) {
    for (int y = 0; y < h; ++y)
      for (int x = p * pw; x < (p + 1) * pw; ++x)
        if (!unknown(y, x)) return true;
    return false;
  };

  // Every pair joint is the same stationary block; cache one per orientation.
  std::map<PairOrientation, ScoreModelPtr> models;
  auto model_for = [&](PairOrientation o) {
    auto it = models.find(o);
    if (it == models.end()) {
      it = models.emplace(o, std::make_shared<GaussianScoreModel>(pair_joint(spec, layout, 0, h, o))).first;
    }
    return it->second;
  };

  const Index block = static_cast<Index>(h) * pw;
  IndexPartition part;
  for (Index i = 0; i < block; ++i) part.context.push_back(i);
  for (Index i = 0; i < block; ++i) part.subject.push_back(block + i);

  FieldGrid out = field;
  for (int p = 0; p < n_patches; ++p) {
    if (!patch_corrupted(p)) continue;

    std::vector<int> neighbors;
    if (p > 0 && has_known(p - 1)) neighbors.push_back(p - 1);
    if (p + 1 < n_patches && has_known(p + 1)) neighbors.push_back(p + 1);
    if (neighbors.empty()) {
      fail(ErrorCode::UnreconstructablePatch, "patch " + std::to_string(p) + " has no neighbor with known pixels");
    }
    if (options.neighbors == Neighbors::Single) neighbors.resize(1);

    for (int c = 0; c < field.channels(); ++c) {
      EnsembleConfig cfg;
      cfg.consensus = options.consensus;
      cfg.preset = options.preset;
      cfg.sched = options.sched;
      cfg.seed = RngStream::child_seed(options.seed, static_cast<std::uint64_t>(p) * field.channels() + c);

      for (int q : neighbors) {
        const auto orient = q < p ? PairOrientation::LeftContext : PairOrientation::RightContext;
        Clamp clamp;
        std::vector<double> vals;
        auto collect = [&](int patch, Index offset) {
          Index local = 0;
          for (int y = 0; y < h; ++y)
            for (int x = patch * pw; x < (patch + 1) * pw; ++x, ++local)
              if (!unknown(y, x)) {
                clamp.idx.push_back(offset + local);
                vals.push_back(out.at(y, x, c));
              }
        };
        collect(q, 0);
        collect(p, block);
        clamp.values = Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
        Branch b{model_for(orient), part, CoGenerate{}, q < p ? "left" : "right"};
        if (!clamp.idx.empty()) b.mode = std::move(clamp);
        cfg.branches.push_back(std::move(b));
      }
      if (needs_unconditional(cfg.consensus)) {
        // Subject marginal of a pair joint: the single-patch prior.
        const auto& joint = static_cast<const GaussianScoreModel&>(*model_for(PairOrientation::LeftContext));
        cfg.uncond_model = std::make_shared<GaussianScoreModel>(
            MultivariateGaussian(Vector::Zero(block), joint.base().cov().bottomRightCorner(block, block)));
      }

      const RunResult r = run_acg(cfg);
      Index local = 0;
      for (int y = 0; y < h; ++y)
        for (int x = p * pw; x < (p + 1) * pw; ++x, ++local)
          if (mask(y, x)) out.at(y, x, c) = r.canonical_subject[local];
    }
    for (int y = 0; y < h; ++y)
      for (int x = p * pw; x < (p + 1) * pw; ++x) unknown.set(y, x, false);
  }
  return out;
}

FieldGrid exact_posterior(const FieldGrid& field, const CorruptionMask& mask, const GRFSpec& spec) {
  if (mask.height() != field.height() || mask.width() != field.width()) {
    fail(ErrorCode::ShapeMismatch, "exact_posterior: field and mask disagree");
  }
  FieldGrid out = field;
  if (!mask.any()) return out;
  if (mask.count() == mask.bits().size()) fail(ErrorCode::OutOfBounds, "exact_posterior: no known pixel");

  const Matrix k = grf_covariance(spec, field.height(), field.width());
  IndexSet obs;
  for (Index i = 0; i < static_cast<Index>(mask.bits().size()); ++i)
    if (!mask.bits()[static_cast<std::size_t>(i)]) obs.push_back(i);
  const IndexSet hid = complement(obs, k.rows());
  const Vector zero = Vector::Zero(k.rows());
  for (int c = 0; c < field.channels(); ++c) {
    Vector v = field.channel(c);
    const Vector m = conditional_mean(zero, k, obs, take(v, obs));
    for (std::size_t i = 0; i < hid.size(); ++i) v[hid[i]] = m[static_cast<Index>(i)];
    out.set_channel(c, v);
  }
  return out;
}

// ---- metrics --------------------------------------------------------------

namespace {

Matrix gaussian_window(int size, double sigma) {
  Matrix w(size, size);
  const double mid = 0.5 * (size - 1);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double di = i - mid, dj = j - mid;
      w(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
    }
  return w / w.sum();
}

}  // namespace

FieldMetrics metrics(const FieldGrid& ref, const FieldGrid& rec) {
  if (!ref.same_shape(rec)) fail(ErrorCode::ShapeMismatch, "metrics: shapes differ");
  const auto& a = ref.values();
  const auto& b = rec.values();
  FieldMetrics m;
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  m.mse = se / static_cast<double>(a.size());

  const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
  const double range = *hi - *lo;
  m.psnr = m.mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(range * range / m.mse);

  const int ws = std::min({7, ref.height(), ref.width()});
  const Matrix w = gaussian_window(ws, 1.5);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  double total = 0.0;
  for (int c = 0; c < ref.channels(); ++c) {
    double acc = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + ws <= ref.height(); ++y0)
      for (int x0 = 0; x0 + ws <= ref.width(); ++x0) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < ws; ++i)
          for (int j = 0; j < ws; ++j) {
            const double wt = w(i, j);
            const double x = ref.at(y0 + i, x0 + j, c), y = rec.at(y0 + i, x0 + j, c);
            mx += wt * x;
            my += wt * y;
            sxx += wt * x * x;
            syy += wt * y * y;
            sxy += wt * x * y;
          }
        sxx -= mx * mx;
        syy -= my * my;
        sxy -= mx * my;
        acc += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        ++count;
      }
    total += acc / count;
  }
  m.ssim = total / ref.channels();
  return m;
}

// ---- I/O ------------------------------------------------------------------

namespace {

void read_header(std::istream& is, int& h, int& w, int& c, const char* what) {
  if (!(is >> h >> w >> c) || h <= 0 || w <= 0 || c <= 0) {
    fail(ErrorCode::ConfigInvalid, std::string(what) + ": bad header");
  }
}

}  // namespace

void write_fgrid(std::ostream& os, const FieldGrid& g) {
  os << g.height() << ' ' << g.width() << ' ' << g.channels() << '\n';
  char buf[32];
  const int row = g.width() * g.channels();
  for (std::size_t i = 0; i < g.values().size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", g.values()[i]);
    os << buf << ((static_cast<int>(i % row) == row - 1) ? '\n' : ' ');
  }
}

FieldGrid read_fgrid(std::istream& is) {
  int h = 0, w = 0, c = 0;
  read_header(is, h, w, c, "read_fgrid");
  std::vector<double> vals(static_cast<std::size_t>(h) * w * c);
  for (auto& v : vals) {
    if (!(is >> v)) fail(ErrorCode::ConfigInvalid, "read_fgrid: truncated data");
  }
  return FieldGrid(h, w, c, std::move(vals));
}

void write_fmask(std::ostream& os, const CorruptionMask& m) {
  os << m.height() << ' ' << m.width() << " 1\n";
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) os << (m(y, x) ? '1' : '0') << (x + 1 == m.width() ? '\n' : ' ');
}

CorruptionMask read_fmask(std::istream& is) {
  int h = 0, w = 0, c = 0;
  read_header(is, h, w, c, "read_fmask");
  if (c != 1) fail(ErrorCode::ConfigInvalid, "read_fmask: masks have one channel");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(h) * w);
  for (auto& b : bits) {
    int v = 0;
    if (!(is >> v) || (v != 0 && v != 1)) fail(ErrorCode::ConfigInvalid, "read_fmask: entries must be 0 or 1");
    b = static_cast<std::uint8_t>(v);
  }
  return CorruptionMask(h, w, std::move(bits));
}

}  // namespace acg::field
