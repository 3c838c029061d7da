#include <doctest.h>

#include <cmath>

#include "crtmi/rng.hpp"
#include "crtmi/stats.hpp"

using namespace crtmi;

namespace {

// 4-standard-error band for a Monte Carlo mean with known variance.
bool within_se(double observed, double expected, double variance, int n, double n_se = 4.0) {
  return std::abs(observed - expected) <= n_se * std::sqrt(variance / n);
}

}  // namespace

TEST_CASE("streams replay and separate by key component") {
  RngStream a = make_stream(42, 0, 0, "datagen");
  RngStream b = make_stream(42, 0, 0, "datagen");
  RngStream other_replicate = make_stream(42, 0, 1, "datagen");
  RngStream other_stage = make_stream(42, 0, 0, "missing");
  RngStream other_scenario = make_stream(42, 1, 0, "datagen");

  int diff_replicate = 0, diff_stage = 0, diff_scenario = 0;
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    diff_replicate += u != other_replicate.uniform() ? 1 : 0;
    diff_stage += u != other_stage.uniform() ? 1 : 0;
    diff_scenario += u != other_scenario.uniform() ? 1 : 0;
  }
  CHECK(diff_replicate > 90);
  CHECK(diff_stage > 90);
  CHECK(diff_scenario > 90);
}

TEST_CASE("uniform and normal moments") {
  RngStream stream = make_stream(7, 0, 0, "moments");
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = stream.normal();
    sum += z;
    sum_sq += z * z;
  }
  CHECK(within_se(sum / n, 0.0, 1.0, n));
  CHECK(within_se(sum_sq / n, 1.0, 2.0, n));
}

TEST_CASE("gamma sampler matches the mean-20 cv-0.5 parameterisation") {
  RngStream stream = make_stream(7, 0, 0, "gamma");
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = draw_gamma(4.0, 5.0, stream);
    REQUIRE(g > 0.0);
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(mean == doctest::Approx(20.0).epsilon(0.01));
  const double cv = std::sqrt(var) / mean;
  CHECK(cv > 0.49);
  CHECK(cv < 0.51);
  CHECK_THROWS(draw_gamma(-1.0, 1.0, stream));
  CHECK_THROWS(draw_gamma(1.0, 0.0, stream));
}

TEST_CASE("scaled inverse chi-square mean and concentration") {
  RngStream stream = make_stream(7, 0, 0, "invchisq");
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = draw_scaled_inv_chisq(10.0, 1.0, stream);
    REQUIRE(d > 0.0);
    sum += d;
  }
  CHECK(sum / n == doctest::Approx(1.25).epsilon(0.016));

  int inside = 0;
  const int m = 2000;
  for (int i = 0; i < m; ++i) {
    const double d = draw_scaled_inv_chisq(1e6, 3.0, stream);
    inside += (d >= 2.97 && d <= 3.03) ? 1 : 0;
  }
  CHECK(inside > static_cast<int>(0.99 * m));
  CHECK_THROWS(draw_scaled_inv_chisq(0.0, 1.0, stream));
}

TEST_CASE("multivariate normal draws") {
  RngStream stream = make_stream(7, 0, 0, "mvn");

  SUBCASE("degenerate covariance returns the mean exactly") {
    Eigen::VectorXd mean(2);
    mean << 1.0, 2.0;
    const Eigen::VectorXd draw = draw_mvn(mean, Eigen::MatrixXd::Zero(2, 2), stream);
    CHECK(draw(0) == 1.0);
    CHECK(draw(1) == 2.0);
  }

  SUBCASE("sample covariance matches") {
    Eigen::MatrixXd cov(2, 2);
    cov << 1.0, 0.5, 0.5, 1.0;
    const Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    const int n = 100000;
    Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd d = draw_mvn(mean, cov, stream);
      acc += d * d.transpose();
    }
    acc /= n;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) CHECK(std::abs(acc(r, c) - cov(r, c)) < 0.03);
  }

  SUBCASE("univariate variance") {
    Eigen::MatrixXd cov(1, 1);
    cov << 4.0;
    const Eigen::VectorXd mean = Eigen::VectorXd::Zero(1);
    const int n = 100000;
    double sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = draw_mvn(mean, cov, stream)(0);
      sum_sq += d * d;
    }
    CHECK(sum_sq / n > 3.9);
    CHECK(sum_sq / n < 4.1);
  }

  SUBCASE("invalid covariance is rejected") {
    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_WITH_AS(draw_mvn(Eigen::VectorXd::Zero(2), asym, stream),
                         doctest::Contains("invalid covariance"), std::invalid_argument);
    Eigen::MatrixXd indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_WITH_AS(draw_mvn(Eigen::VectorXd::Zero(2), indefinite, stream),
                         doctest::Contains("invalid covariance"), std::invalid_argument);
  }
}

TEST_CASE("inverse Wishart") {
  RngStream stream = make_stream(7, 0, 0, "invwishart");

  SUBCASE("mean matches scale/(df-p-1) and draws are PD") {
    const Eigen::MatrixXd scale = Eigen::MatrixXd::Identity(2, 2);
    const int n = 100000;
    Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
      const Eigen::MatrixXd draw = draw_inverse_wishart(10.0, scale, stream);
      if (i < 1000) {
        Eigen::LLT<Eigen::MatrixXd> llt(draw);
        REQUIRE(llt.info() == Eigen::Success);
      }
      acc += draw;
    }
    acc /= n;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        CHECK(std::abs(acc(r, c) - (r == c ? 1.0 / 7.0 : 0.0)) < 0.01);
  }

  SUBCASE("p=1 reduces to a scaled inverse chi-square") {
    Eigen::MatrixXd scale(1, 1);
    scale << 2.0;
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += draw_inverse_wishart(5.0, scale, stream)(0, 0);
    CHECK(std::abs(sum / n - 2.0 / 3.0) < 0.02);
  }

  SUBCASE("df at or below p-1 is rejected") {
    CHECK_THROWS_WITH_AS(draw_inverse_wishart(1.0, Eigen::MatrixXd::Identity(2, 2), stream),
                         doctest::Contains("improper inverse-Wishart"), std::invalid_argument);
  }
}

TEST_CASE("gauss-hermite rule integrates normal moments") {
  const GaussHermiteRule rule = gauss_hermite_normal(64);
  double total = 0.0, second = 0.0, fourth = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    total += rule.weights[i];
    second += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
    fourth += rule.weights[i] * std::pow(rule.nodes[i], 4);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(second == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fourth == doctest::Approx(3.0).epsilon(1e-10));
}
