#include "acg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace acg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::MissingUnconditional: return "MissingUnconditional";
    case ErrorCode::BadWeights: return "BadWeights";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::NoExactDensity: return "NoExactDensity";
    case ErrorCode::InconsistentBMarginal: return "InconsistentBMarginal";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::SizeCap: return "SizeCap";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::UnreconstructablePatch: return "UnreconstructablePatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

// ---- rng ------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t RngStream::child_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x9E3779B97F4A7C15ULL));
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) {
    x = splitmix64(x);
    s = x;
  }
}

static inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::uniform() {
  // 53 random mantissa bits, shifted by half an ulp to stay off 0.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Vector RngStream::normal_vector(Index n) {
  Vector z(n);
  for (Index i = 0; i < n; ++i) z[i] = normal();
  return z;
}

// ---- dense helpers --------------------------------------------------------

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix cholesky(const Matrix& m) {
  if (m.rows() != m.cols()) fail(ErrorCode::DimensionMismatch, "cholesky: matrix is not square");
  const Index n = m.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double pivot = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(pivot > 0.0)) {
      fail(ErrorCode::NotPositiveDefinite, "cholesky: pivot " + std::to_string(j) + " is " + std::to_string(pivot));
    }
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (Index i = j + 1; i < n; ++i) {
      l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / d;
    }
  }
  return l;
}

Vector solve_spd(const Matrix& m, const Vector& b) {
  if (m.rows() != b.size() || m.rows() != m.cols()) {
    fail(ErrorCode::DimensionMismatch, "solve_spd: matrix/vector dims disagree");
  }
  const Matrix l = cholesky(m);
  Vector y = l.triangularView<Eigen::Lower>().solve(b);
  return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

Vector take(const Vector& v, std::span<const Index> idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= v.size()) fail(ErrorCode::IndexOutOfRange, "take: index out of range");
    out[static_cast<Index>(i)] = v[idx[i]];
  }
  return out;
}

Matrix take(const Matrix& m, std::span<const Index> rows, std::span<const Index> cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= m.rows()) fail(ErrorCode::IndexOutOfRange, "take: row out of range");
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] < 0 || cols[j] >= m.cols()) fail(ErrorCode::IndexOutOfRange, "take: col out of range");
      out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
    }
  }
  return out;
}

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) fail(ErrorCode::InvalidRange, std::string(what) + ": non-finite entry");
}

IndexSet complement(std::span<const Index> idx, Index n) {
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (Index i : idx) {
    if (i < 0 || i >= n) fail(ErrorCode::IndexOutOfRange, "complement: index out of range");
    used[static_cast<std::size_t>(i)] = true;
  }
  IndexSet out;
  for (Index i = 0; i < n; ++i) {
    if (!used[static_cast<std::size_t>(i)]) out.push_back(i);
  }
  return out;
}

double conditioning_jitter(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  return 1e-10 * m.trace() / static_cast<double>(m.rows());
}

// ---- gaussian -------------------------------------------------------------

MultivariateGaussian::MultivariateGaussian(Vector mean, Matrix cov) : mean_(std::move(mean)) {
  if (cov.rows() != cov.cols() || cov.rows() != mean_.size()) {
    fail(ErrorCode::DimensionMismatch, "MultivariateGaussian: mean/cov dims disagree");
  }
  if (!mean_.allFinite() || !cov.allFinite()) fail(ErrorCode::InvalidRange, "MultivariateGaussian: non-finite input");
  cov_ = symmetrize(cov);
  chol_ = cholesky(cov_);
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

Vector mvn_sample(const MultivariateGaussian& g, RngStream& rng) {
  const Vector z = rng.normal_vector(g.dim());
  return g.mean() + g.chol().triangularView<Eigen::Lower>() * z;
}

double mvn_logpdf(const MultivariateGaussian& g, const Vector& x) {
  if (x.size() != g.dim()) fail(ErrorCode::DimensionMismatch, "mvn_logpdf: dim mismatch");
  const Vector r = x - g.mean();
  const Vector w = g.chol().triangularView<Eigen::Lower>().solve(r);
  const double d = static_cast<double>(g.dim());
  return -0.5 * (w.squaredNorm() + g.log_det() + d * std::log(2.0 * std::numbers::pi));
}

MultivariateGaussian mvn_marginal(const MultivariateGaussian& g, std::span<const Index> idx) {
  return MultivariateGaussian(take(g.mean(), idx), take(g.cov(), idx, idx));
}

MultivariateGaussian mvn_condition(const MultivariateGaussian& g, std::span<const Index> obs_idx,
                                   const Vector& obs_vals) {
  if (static_cast<Index>(obs_idx.size()) != obs_vals.size()) {
    fail(ErrorCode::DimensionMismatch, "mvn_condition: observation length mismatch");
  }
  const IndexSet hid = complement(obs_idx, g.dim());
  if (hid.empty()) fail(ErrorCode::IndexOutOfRange, "mvn_condition: observed set must be a strict subset");

  Matrix s_oo = take(g.cov(), obs_idx, obs_idx);
  s_oo.diagonal().array() += conditioning_jitter(s_oo);
  const Matrix s_ho = take(g.cov(), hid, obs_idx);
  const Matrix s_hh = take(g.cov(), hid, hid);

  const Matrix l = cholesky(s_oo);
  const Vector resid = obs_vals - take(g.mean(), obs_idx);
  const Vector w = l.triangularView<Eigen::Lower>().solve(resid);
  // gain^T = L^{-1} S_oh
  const Matrix v = l.triangularView<Eigen::Lower>().solve(Matrix(s_ho.transpose()));

  Vector mean = take(g.mean(), hid) + v.transpose() * w;
  Matrix cov = s_hh - v.transpose() * v;
  return MultivariateGaussian(std::move(mean), std::move(cov));
}

Vector conditional_mean(const Vector& mean, const Matrix& cov, std::span<const Index> obs_idx, const Vector& obs_vals) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    fail(ErrorCode::DimensionMismatch, "conditional_mean: mean/cov dims disagree");
  }
  if (static_cast<Index>(obs_idx.size()) != obs_vals.size()) {
    fail(ErrorCode::DimensionMismatch, "conditional_mean: observation length mismatch");
  }
  const IndexSet hid = complement(obs_idx, mean.size());
  if (obs_idx.empty()) return take(mean, hid);
  Matrix s_oo = take(cov, obs_idx, obs_idx);
  s_oo.diagonal().array() += conditioning_jitter(s_oo);
  const Vector w = solve_spd(symmetrize(s_oo), obs_vals - take(mean, obs_idx));
  return take(mean, hid) + take(cov, hid, obs_idx) * w;
}

}  // namespace acg
