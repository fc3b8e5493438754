#include "acg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace acg {

namespace {

IndexSet range(Index begin, Index count) {
  IndexSet out(static_cast<std::size_t>(count));
  std::iota(out.begin(), out.end(), begin);
  return out;
}

Matrix inverse_spd(const Matrix& m) {
  const Matrix l = cholesky(m);
  const Matrix linv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(m.rows(), m.cols()));
  return symmetrize(linv.transpose() * linv);
}

}  // namespace

TreeGaussian compose_tree_joint(const MultivariateGaussian& q_ab, const MultivariateGaussian& q_bc, TreeDims dims) {
  const Index da = dims.a, db = dims.b, dc = dims.c;
  if (q_ab.dim() != da + db || q_bc.dim() != db + dc) {
    fail(ErrorCode::DimensionMismatch, "compose_tree_joint: pair dims do not match the tree dims");
  }
  const IndexSet b_in_ab = range(da, db);
  const IndexSet b_in_bc = range(0, db);
  const MultivariateGaussian qb_left = mvn_marginal(q_ab, b_in_ab);
  const MultivariateGaussian qb_right = mvn_marginal(q_bc, b_in_bc);
  const double gap = std::max((qb_left.mean() - qb_right.mean()).cwiseAbs().maxCoeff(),
                              (qb_left.cov() - qb_right.cov()).cwiseAbs().maxCoeff());
  if (gap > 1e-8) fail(ErrorCode::InconsistentBMarginal, "B marginals differ by " + std::to_string(gap));

  const Index d = da + db + dc;
  Matrix prec = Matrix::Zero(d, d);
  Vector info = Vector::Zero(d);

  const Matrix j_ab = inverse_spd(q_ab.cov());
  prec.block(0, 0, da + db, da + db) += j_ab;
  info.segment(0, da + db) += j_ab * q_ab.mean();

  const Matrix j_bc = inverse_spd(q_bc.cov());
  prec.block(da, da, db + dc, db + dc) += j_bc;
  info.segment(da, db + dc) += j_bc * q_bc.mean();

  const Matrix j_b = inverse_spd(qb_left.cov());
  prec.block(da, da, db, db) -= j_b;
  info.segment(da, db) -= j_b * qb_left.mean();

  Matrix cov = inverse_spd(symmetrize(prec));
  Vector mean = cov * info;
  return TreeGaussian{MultivariateGaussian(std::move(mean), std::move(cov)), dims};
}

double factorization_check(const TreeGaussian& tg, const MultivariateGaussian& q_ab, const MultivariateGaussian& q_bc,
                           std::span<const Vector> points) {
  const auto [da, db, dc] = tg.dims;
  if (tg.joint.dim() != da + db + dc || q_ab.dim() != da + db || q_bc.dim() != db + dc) {
    fail(ErrorCode::DimensionMismatch, "factorization_check: dims inconsistent");
  }
  const MultivariateGaussian q_b = mvn_marginal(q_ab, range(da, db));
  double worst = 0.0;
  for (const auto& x : points) {
    if (x.size() != tg.joint.dim()) fail(ErrorCode::DimensionMismatch, "factorization_check: point dim");
    const double lhs = mvn_logpdf(tg.joint, x);
    const double rhs = mvn_logpdf(q_ab, x.head(da + db)) + mvn_logpdf(q_bc, x.tail(db + dc)) -
                       mvn_logpdf(q_b, x.segment(da, db));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

Matrix sqrtm_psd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(m));
  const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

double wasserstein2_gaussian(const MultivariateGaussian& g1, const MultivariateGaussian& g2) {
  if (g1.dim() != g2.dim()) fail(ErrorCode::DimensionMismatch, "wasserstein2_gaussian: dims differ");
  const Matrix root2 = sqrtm_psd(g2.cov());
  const Matrix cross = sqrtm_psd(root2 * g1.cov() * root2);
  const double bures = g1.cov().trace() + g2.cov().trace() - 2.0 * cross.trace();
  const double mean_term = (g1.mean() - g2.mean()).squaredNorm();
  return std::sqrt(std::max(0.0, mean_term + bures));
}

MultivariateGaussian empirical_moments(std::span<const Vector> samples) {
  if (samples.empty()) fail(ErrorCode::TooFewSamples, "empirical_moments: no samples");
  const Index d = samples.front().size();
  const auto n = static_cast<Index>(samples.size());
  if (n < d + 1) fail(ErrorCode::TooFewSamples, "empirical_moments: need at least d + 1 samples");
  Vector mean = Vector::Zero(d);
  for (const auto& s : samples) {
    if (s.size() != d) fail(ErrorCode::DimensionMismatch, "empirical_moments: sample dims differ");
    mean += s;
  }
  mean /= static_cast<double>(n);
  Matrix cov = Matrix::Zero(d, d);
  for (const auto& s : samples) {
    const Vector r = s - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(r);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n - 1);
  cov.diagonal().array() += std::max(conditioning_jitter(cov), 1e-12);
  return MultivariateGaussian(std::move(mean), std::move(cov));
}

double score_fd_check(const ScoreModel& model, int t, const NoiseSchedule& sched, int n_points, RngStream& rng) {
  if (!model.noised_logpdf(Vector::Zero(model.dim()), t, sched)) {
    fail(ErrorCode::NoExactDensity, "score_fd_check: model has no noised density");
  }
  double worst = 0.0;
  for (int p = 0; p < n_points; ++p) {
    Vector x = rng.normal_vector(model.dim());
    const Vector s = model.score(x, t, sched);
    Vector fd(model.dim());
    for (Index i = 0; i < x.size(); ++i) {
      const double h = 1e-5 * (1.0 + std::abs(x[i]));
      const double keep = x[i];
      x[i] = keep + h;
      const auto up = model.noised_logpdf(x, t, sched);
      x[i] = keep - h;
      const auto down = model.noised_logpdf(x, t, sched);
      x[i] = keep;
      if (!up || !down) fail(ErrorCode::NoExactDensity, "score_fd_check: model has no noised density");
      fd[i] = (*up - *down) / (2.0 * h);
    }
    const double gap = (s - fd).cwiseAbs().maxCoeff() / (1.0 + s.cwiseAbs().maxCoeff());
    worst = std::max(worst, gap);
  }
  return worst;
}

Vector gaussian_posterior_mean(const MultivariateGaussian& g, const Vector& x_t, int t, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  Matrix m = ab * g.cov();
  m.diagonal().array() += 1.0 - ab;
  return g.mean() + std::sqrt(ab) * g.cov() * solve_spd(m, x_t - std::sqrt(ab) * g.mean());
}

}  // namespace acg
