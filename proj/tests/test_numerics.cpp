#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "acg/numerics.hpp"

using namespace acg;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix random_spd(Index d, RngStream& rng, double eps = 1e-3) {
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  Matrix s = a * a.transpose();
  s.diagonal().array() += eps;
  return s;
}

}  // namespace

TEST_CASE("rng is reproducible and splits deterministically") {
  RngStream a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  CHECK(RngStream::child_seed(7, 0) == RngStream::child_seed(7, 0));
  CHECK(RngStream::child_seed(7, 0) != RngStream::child_seed(7, 1));
  CHECK(RngStream(7).split(3).seed() == RngStream::child_seed(7, 3));

  // splitmix64 reference values for seed 0 (first two outputs of the stream).
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
  CHECK(splitmix64(0x9E3779B97F4A7C15ULL) == 0x6E789E6AA1B965F4ULL);
}

TEST_CASE("uniform stays in the open unit interval") {
  RngStream r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("cholesky") {
  SUBCASE("identity") {
    CHECK(cholesky(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
  }
  SUBCASE("hand-computed 2x2") {
    const Matrix l = cholesky(mat2(4, 2, 2, 3));
    CHECK(l(0, 0) == doctest::Approx(2.0));
    CHECK(l(0, 1) == 0.0);
    CHECK(l(1, 0) == doctest::Approx(1.0));
    CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
    CHECK((l * l.transpose() - mat2(4, 2, 2, 3)).cwiseAbs().maxCoeff() <= 1e-10 * 4);
  }
  SUBCASE("indefinite") {
    CHECK_THROWS_AS(cholesky(mat2(1, 2, 2, 1)), Error);
    try {
      cholesky(mat2(1, 2, 2, 1));
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotPositiveDefinite);
    }
  }
  SUBCASE("random reconstruction") {
    RngStream rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix m = random_spd(8, rng);
      const Matrix l = cholesky(m);
      CHECK((l * l.transpose() - m).cwiseAbs().maxCoeff() <= 1e-10 * m.cwiseAbs().maxCoeff());
      CHECK(l.isLowerTriangular());
    }
  }
}

TEST_CASE("solve_spd") {
  CHECK(solve_spd(Matrix::Identity(2, 2), vec({1, 2})).isApprox(vec({1, 2})));
  CHECK(solve_spd(mat2(2, 0, 0, 4), vec({2, 4})).isApprox(vec({1, 1})));

  // inverse of [[4,2],[2,3]] is [[3,-2],[-2,4]] / 8
  const Vector x = solve_spd(mat2(4, 2, 2, 3), vec({1, 0}));
  CHECK(x[0] == doctest::Approx(3.0 / 8.0));
  CHECK(x[1] == doctest::Approx(-2.0 / 8.0));
  CHECK((mat2(4, 2, 2, 3) * x - vec({1, 0})).cwiseAbs().maxCoeff() <= 1e-9);

  CHECK_THROWS_AS(solve_spd(Matrix::Identity(3, 3), vec({1, 2})), Error);
  CHECK_THROWS_AS(solve_spd(mat2(1, 2, 2, 1), vec({1, 2})), Error);

  RngStream rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Index d = 1 + static_cast<Index>(rng.next_u64() % 64);
    const Matrix m = random_spd(d, rng, 1e-2);
    const Vector b = rng.normal_vector(d);
    const Vector sol = solve_spd(m, b);
    CHECK((m * sol - b).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + b.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("MultivariateGaussian construction") {
  CHECK_THROWS_AS(MultivariateGaussian(vec({0, 0}), mat2(1, 2, 2, 1)), Error);
  CHECK_THROWS_AS(MultivariateGaussian(vec({0, 0, 0}), Matrix::Identity(2, 2)), Error);
  // slight asymmetry is symmetrized
  const MultivariateGaussian g(vec({0, 0}), mat2(1, 0.5, 0.5 + 1e-14, 1));
  CHECK(g.cov()(0, 1) == g.cov()(1, 0));
}

TEST_CASE("mvn_sample") {
  SUBCASE("identity covariance has mean near zero") {
    const MultivariateGaussian g(Vector::Zero(3), Matrix::Identity(3, 3));
    RngStream rng(3);
    Vector sum = Vector::Zero(3);
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += mvn_sample(g, rng);
    CHECK((sum / n).cwiseAbs().maxCoeff() <= 0.02);
  }
  SUBCASE("fixed seed repeats") {
    const MultivariateGaussian g(vec({1, 2}), mat2(2, 0.3, 0.3, 1));
    RngStream a(8), b(8);
    CHECK(mvn_sample(g, a) == mvn_sample(g, b));
  }
  SUBCASE("scalar variance 4") {
    Matrix c(1, 1);
    c << 4.0;
    const MultivariateGaussian g(vec({3}), c);
    RngStream rng(4);
    double s = 0, s2 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double x = mvn_sample(g, rng)[0];
      s += x;
      s2 += x * x;
    }
    const double var = s2 / n - (s / n) * (s / n);
    CHECK(var >= 3.9);
    CHECK(var <= 4.1);
  }
  SUBCASE("empirical covariance") {
    RngStream rng(21);
    for (Index d = 1; d <= 4; ++d) {
      const Matrix sigma = random_spd(d, rng, 0.5);
      const MultivariateGaussian g(rng.normal_vector(d), sigma);
      const int n = 100000;
      Vector mean = Vector::Zero(d);
      Matrix m2 = Matrix::Zero(d, d);
      for (int i = 0; i < n; ++i) {
        const Vector x = mvn_sample(g, rng);
        mean += x;
        m2 += x * x.transpose();
      }
      mean /= n;
      const Matrix cov = m2 / n - mean * mean.transpose();
      CHECK((cov - sigma).cwiseAbs().maxCoeff() <= 0.05 * sigma.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("mvn_logpdf") {
  const double ln2pi = std::log(2.0 * std::numbers::pi);
  CHECK(mvn_logpdf(MultivariateGaussian(Vector::Zero(1), Matrix::Identity(1, 1)), Vector::Zero(1)) ==
        doctest::Approx(-0.5 * ln2pi));
  CHECK(mvn_logpdf(MultivariateGaussian(Vector::Zero(2), Matrix::Identity(2, 2)), Vector::Zero(2)) ==
        doctest::Approx(-ln2pi));
  Matrix four(1, 1);
  four << 4.0;
  CHECK(mvn_logpdf(MultivariateGaussian(vec({1}), four), vec({3})) ==
        doctest::Approx(-0.5 * std::log(8.0 * std::numbers::pi) - 0.5));
  CHECK_THROWS_AS(mvn_logpdf(MultivariateGaussian(Vector::Zero(2), Matrix::Identity(2, 2)), Vector::Zero(3)), Error);
}

TEST_CASE("mvn_marginal") {
  const MultivariateGaussian g(vec({1, 2}), mat2(1, 0.5, 0.5, 2));
  const IndexSet all{0, 1};
  const auto full = mvn_marginal(g, all);
  CHECK(full.mean() == g.mean());
  CHECK(full.cov() == g.cov());

  const IndexSet one{1};
  const auto m1 = mvn_marginal(g, one);
  CHECK(m1.mean()[0] == 2.0);
  CHECK(m1.cov()(0, 0) == 2.0);

  Matrix blocks = Matrix::Zero(4, 4);
  blocks.topLeftCorner(2, 2) = mat2(2, 0.3, 0.3, 1);
  blocks.bottomRightCorner(2, 2) = mat2(1, -0.2, -0.2, 3);
  const MultivariateGaussian bg(Vector::Zero(4), blocks);
  const IndexSet tail{2, 3};
  CHECK(mvn_marginal(bg, tail).cov() == mat2(1, -0.2, -0.2, 3));

  const IndexSet bad{5};
  CHECK_THROWS_AS(mvn_marginal(g, bad), Error);
}

TEST_CASE("mvn_condition") {
  SUBCASE("Schur complement by hand") {
    const MultivariateGaussian g(Vector::Zero(2), mat2(1, 0.5, 0.5, 1));
    const IndexSet obs{1};
    const auto c = mvn_condition(g, obs, vec({1}));
    CHECK(c.mean()[0] == doctest::Approx(0.5));
    CHECK(c.cov()(0, 0) == doctest::Approx(0.75));
  }
  SUBCASE("independent coordinates are untouched") {
    const MultivariateGaussian g(vec({1, -1}), mat2(2, 0, 0, 3));
    const IndexSet obs{0};
    const auto c = mvn_condition(g, obs, vec({10}));
    CHECK(c.mean()[0] == doctest::Approx(-1.0));
    CHECK(c.cov()(0, 0) == doctest::Approx(3.0));
  }
  SUBCASE("observing the mean leaves the conditional mean at the prior mean") {
    const MultivariateGaussian g(vec({1, 2, 3}), (Matrix(3, 3) << 2, 0.4, 0.1, 0.4, 1, 0.3, 0.1, 0.3, 1.5).finished());
    const IndexSet obs{0, 2};
    const auto c = mvn_condition(g, obs, vec({1, 3}));
    CHECK(c.mean()[0] == doctest::Approx(2.0));
  }
  SUBCASE("errors") {
    const MultivariateGaussian g(Vector::Zero(2), Matrix::Identity(2, 2));
    const IndexSet all{0, 1};
    CHECK_THROWS_AS(mvn_condition(g, all, vec({0, 0})), Error);
    const IndexSet bad{4};
    CHECK_THROWS_AS(mvn_condition(g, bad, vec({0})), Error);
  }
  SUBCASE("marginalizing over everything returns the conditional") {
    const MultivariateGaussian g(vec({0, 1, 2}), (Matrix(3, 3) << 2, 0.4, 0.1, 0.4, 1, 0.3, 0.1, 0.3, 1.5).finished());
    const IndexSet obs{1};
    const auto c = mvn_condition(g, obs, vec({0.3}));
    const IndexSet keep{0, 1};
    const auto m = mvn_marginal(c, keep);
    CHECK(m.mean() == c.mean());
    CHECK(m.cov() == c.cov());
  }
}

TEST_CASE("conditional_mean agrees with mvn_condition") {
  RngStream rng(31);
  const Matrix s = random_spd(5, rng, 0.1);
  const MultivariateGaussian g(rng.normal_vector(5), s);
  const IndexSet obs{0, 3};
  const Vector v = vec({0.4, -1.2});
  CHECK((conditional_mean(g.mean(), g.cov(), obs, v) - mvn_condition(g, obs, v).mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("take and complement") {
  const IndexSet idx{2, 0};
  CHECK(take(vec({5, 6, 7}), idx) == vec({7, 5}));
  CHECK(complement(idx, 4) == IndexSet{1, 3});
  const IndexSet bad{-1};
  CHECK_THROWS_AS(complement(bad, 3), Error);
}
