#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "acg/oracle.hpp"

using namespace acg;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an acg::Error");
  return ErrorCode::ConfigInvalid;
}

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// 2x2 reference: tr sqrt(A^1/2 B A^1/2) = sqrt(tr(AB) + 2 sqrt(det A det B)).
double w2_ref_2d(const Vector& m1, const Matrix& a, const Vector& m2_, const Matrix& b) {
  const double cross = std::sqrt((a * b).trace() + 2.0 * std::sqrt(a.determinant() * b.determinant()));
  return std::sqrt((m1 - m2_).squaredNorm() + a.trace() + b.trace() - 2.0 * cross);
}

std::vector<Vector> grid_points(int d, int n, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<Vector> pts;
  for (int i = 0; i < n; ++i) pts.push_back(2.0 * rng.normal_vector(d));
  return pts;
}

class OpaqueModel final : public ScoreModel {
 public:
  Index dim() const override { return 2; }
  Vector score(const Vector& x, int, const NoiseSchedule&) const override { return -x; }
};

}  // namespace

TEST_CASE("tree joint of a scalar chain") {
  const double rho = 0.6;
  const MultivariateGaussian q(v2(0.5, -1.0), m2(1.0, rho, rho, 1.0));
  const MultivariateGaussian r(v2(-1.0, 2.0), m2(1.0, rho, rho, 1.0));
  const TreeGaussian tg = compose_tree_joint(q, r, TreeDims{1, 1, 1});
  REQUIRE(tg.joint.dim() == 3);
  CHECK(tg.joint.mean()[0] == doctest::Approx(0.5));
  CHECK(tg.joint.mean()[1] == doctest::Approx(-1.0));
  CHECK(tg.joint.mean()[2] == doctest::Approx(2.0));
  // Markov chain: corr(A, C) = rho^2
  CHECK(tg.joint.cov()(0, 2) == doctest::Approx(rho * rho).epsilon(1e-10));
  CHECK(tg.joint.cov()(0, 1) == doctest::Approx(rho).epsilon(1e-10));
  CHECK(tg.joint.cov()(1, 2) == doctest::Approx(rho).epsilon(1e-10));
  for (int i = 0; i < 3; ++i) CHECK(tg.joint.cov()(i, i) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("independent blocks compose block-diagonally") {
  Matrix ab = Matrix::Zero(3, 3);
  ab.topLeftCorner(2, 2) = m2(2.0, 0.3, 0.3, 1.0);
  ab(2, 2) = 0.5;
  Matrix bc = Matrix::Zero(2, 2);
  bc(0, 0) = 0.5;
  bc(1, 1) = 3.0;
  Vector mab(3), mbc(2);
  mab << 1, 2, 3;
  mbc << 3, -4;
  const MultivariateGaussian q(mab, ab), r(mbc, bc);
  const TreeGaussian tg = compose_tree_joint(q, r, TreeDims{2, 1, 1});
  Matrix want = Matrix::Zero(4, 4);
  want.topLeftCorner(3, 3) = ab;
  want(3, 3) = 3.0;
  CHECK((tg.joint.cov() - want).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(factorization_check(tg, q, r, grid_points(4, 50, 1)) <= 1e-10);
}

TEST_CASE("factorization and marginals") {
  Matrix ab(4, 4);
  ab << 1.0, 0.2, 0.5, 0.1,  //
      0.2, 1.5, 0.3, 0.4,    //
      0.5, 0.3, 1.2, 0.2,    //
      0.1, 0.4, 0.2, 0.9;
  Matrix bc(3, 3);
  bc << 1.2, 0.2, -0.3,  //
      0.2, 0.9, 0.1,     //
      -0.3, 0.1, 2.0;
  Vector mab(4), mbc(3);
  mab << 0.1, -0.2, 0.5, 1.0;
  mbc << 0.5, 1.0, -2.0;
  const MultivariateGaussian q(mab, ab), r(mbc, bc);
  const TreeDims dims{2, 2, 1};
  const TreeGaussian tg = compose_tree_joint(q, r, dims);

  const auto pts = grid_points(5, 100, 7);
  CHECK(factorization_check(tg, q, r, pts) <= 1e-8);

  const IndexSet iab{0, 1, 2, 3}, ibc{2, 3, 4};
  const auto mq = mvn_marginal(tg.joint, iab);
  const auto mr = mvn_marginal(tg.joint, ibc);
  CHECK((mq.cov() - ab).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((mr.cov() - bc).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((mq.mean() - mab).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((mr.mean() - mbc).cwiseAbs().maxCoeff() < 1e-10);

  // a perturbed joint no longer factorizes
  const TreeGaussian bad{MultivariateGaussian(tg.joint.mean(), tg.joint.cov() * 1.01), dims};
  CHECK(factorization_check(bad, q, r, pts) > 1e-3);
}

TEST_CASE("inconsistent shared marginal") {
  const MultivariateGaussian q(v2(0, 0), m2(1.0, 0.5, 0.5, 1.0));
  const MultivariateGaussian r(v2(0, 0), m2(1.1, 0.5, 0.5, 1.0));
  CHECK(code_of([&] { compose_tree_joint(q, r, TreeDims{1, 1, 1}); }) == ErrorCode::InconsistentBMarginal);
  const MultivariateGaussian s(v2(0.1, 0), m2(1.0, 0.5, 0.5, 1.0));
  CHECK(code_of([&] { compose_tree_joint(q, s, TreeDims{1, 1, 1}); }) == ErrorCode::InconsistentBMarginal);
}

TEST_CASE("wasserstein2") {
  const MultivariateGaussian a(v2(1, -1), m2(2.0, 0.5, 0.5, 1.0));
  const MultivariateGaussian b(v2(0, 2), m2(0.7, -0.2, -0.2, 1.5));
  const MultivariateGaussian c(v2(-1, 0), m2(3.0, 1.0, 1.0, 1.0));
  CHECK(wasserstein2_gaussian(a, a) == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
  const MultivariateGaussian shifted(a.mean() + v2(3, 4), a.cov());
  CHECK(wasserstein2_gaussian(a, shifted) == doctest::Approx(5.0).epsilon(1e-10));

  const MultivariateGaussian n1(Vector::Zero(1), Matrix::Identity(1, 1));
  const MultivariateGaussian n4(Vector::Zero(1), 4.0 * Matrix::Identity(1, 1));
  CHECK(wasserstein2_gaussian(n1, n4) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(wasserstein2_gaussian(a, b) == doctest::Approx(w2_ref_2d(a.mean(), a.cov(), b.mean(), b.cov())).epsilon(1e-9));
  CHECK(wasserstein2_gaussian(a, b) == doctest::Approx(wasserstein2_gaussian(b, a)).epsilon(1e-10));
  CHECK(wasserstein2_gaussian(a, c) <= wasserstein2_gaussian(a, b) + wasserstein2_gaussian(b, c) + 1e-12);
}

TEST_CASE("sqrtm_psd") {
  const Matrix m = m2(2.0, 0.5, 0.5, 1.0);
  const Matrix r = sqrtm_psd(m);
  CHECK((r * r - m).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((r - r.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  const Matrix clipped = sqrtm_psd(m2(1.0, 0.0, 0.0, -1e-9));
  CHECK(clipped(1, 1) == 0.0);
}

TEST_CASE("empirical moments") {
  SUBCASE("constant samples") {
    std::vector<Vector> s(5, v2(1.0, 2.0));
    const auto g = empirical_moments(s);
    CHECK(g.mean() == v2(1.0, 2.0));
    CHECK(g.cov()(0, 1) == 0.0);
    CHECK(g.cov()(0, 0) > 0.0);
    CHECK(g.cov()(0, 0) < 1e-9);
  }
  SUBCASE("large draws recover the law") {
    const MultivariateGaussian g(v2(0.5, -0.5), m2(1.0, 0.6, 0.6, 2.0));
    RngStream rng(42);
    std::vector<Vector> s;
    for (int i = 0; i < 100000; ++i) s.push_back(mvn_sample(g, rng));
    CHECK(wasserstein2_gaussian(empirical_moments(s), g) <= 0.03);
  }
  SUBCASE("too few") {
    std::vector<Vector> s(2, v2(0.0, 0.0));
    CHECK(code_of([&] { empirical_moments(s); }) == ErrorCode::TooFewSamples);
  }
}

TEST_CASE("score finite-difference check") {
  const NoiseSchedule sched = default_schedule(200);
  const GaussianScoreModel g(MultivariateGaussian(v2(1.0, 0.0), m2(1.0, 0.3, 0.3, 0.5)));
  RngStream rng(3);
  CHECK(score_fd_check(g, 50, sched, 0, rng) == 0.0);
  CHECK(score_fd_check(g, 50, sched, 20, rng) < 1e-6);
  const OpaqueModel o;
  CHECK(code_of([&] { score_fd_check(o, 50, sched, 5, rng); }) == ErrorCode::NoExactDensity);
}

TEST_CASE("gaussian posterior mean agrees with conditioning the joint") {
  const NoiseSchedule sched = default_schedule(200);
  const MultivariateGaussian g(v2(1.0, -2.0), m2(1.0, 0.3, 0.3, 0.5));
  const int t = 80;
  const double ab = sched.alpha_bar(t);
  // joint of (x0, x_t) = (x0, sqrt(ab) x0 + sqrt(1-ab) eps), conditioned on x_t
  Vector mean(4);
  mean << g.mean(), std::sqrt(ab) * g.mean();
  Matrix cov(4, 4);
  cov << g.cov(), std::sqrt(ab) * g.cov(), std::sqrt(ab) * g.cov(), ab * g.cov() + (1.0 - ab) * Matrix::Identity(2, 2);
  const Vector xt = v2(0.3, 0.7);
  const IndexSet obs{2, 3};
  const Vector want = conditional_mean(mean, cov, obs, xt);
  CHECK((gaussian_posterior_mean(g, xt, t, sched) - want).cwiseAbs().maxCoeff() < 1e-8);
}
