#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cvxspline/estimator.hpp"

using namespace cvxspline;

namespace {

std::vector<double> uniform_x(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i + 1) / static_cast<double>(n);
  return x;
}

template <class F>
std::vector<double> apply(const std::vector<double>& x, F f) {
  std::vector<double> y;
  for (double v : x) y.push_back(f(v));
  return y;
}

}  // namespace

TEST(Tuning, RuleValues) {
  // (1024 / ln 1024)^{1/5} = 2.716…
  EXPECT_NEAR(std::pow(1024.0 / std::log(1024.0), 0.2), 2.716, 1e-3);
  EXPECT_EQ(choose_tuning(1024, 2.0).K_n, 3u);
  EXPECT_DOUBLE_EQ(choose_tuning(1024, 2.0).exponent, 0.2);
  EXPECT_EQ(choose_tuning(100000, 1.5).K_n,
            static_cast<std::size_t>(std::ceil(std::pow(100000.0 / std::log(100000.0), 0.25))));
  EXPECT_LE(choose_tuning(16, 2.0).K_n, choose_tuning(1 << 20, 2.0).K_n);
}

TEST(Tuning, SmallSampleRejected) {
  try {
    choose_tuning(15, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::sample_too_small);
  }
  EXPECT_THROW(choose_tuning(100, 2.5), Error);
}

TEST(Fit, DefaultLambdaIsInverseK) {
  const auto x = uniform_x(960);
  const FitResult r = fit(x, apply(x, [](double v) { return v * v; }), FitConfig{});
  EXPECT_EQ(r.system.mode, DesignMode::simulation);
  EXPECT_NEAR(r.diagnostics.lambda, 1.0 / static_cast<double>(r.system.intervals()), 1e-15);
  EXPECT_NEAR(r.diagnostics.lambda_star, r.system.beta_n / static_cast<double>(r.system.intervals()), 1e-12);
  EXPECT_TRUE(r.diagnostics.tuned_K_n);
  EXPECT_TRUE(r.diagnostics.tuned_lambda);
}

TEST(Fit, AffineTruthReproduced) {
  const auto x = uniform_x(200);
  FitConfig cfg;
  cfg.K_n = 10;
  cfg.lambda_star = 0.0;
  const FitResult r = fit(x, apply(x, [](double v) { return 2.0 - 3.0 * v; }), cfg);
  for (std::size_t k = 0; k <= 10; ++k)
    EXPECT_NEAR(r.coefficients[static_cast<Eigen::Index>(k)], 2.0 - 3.0 * k / 10.0, 1e-8);
}

TEST(Fit, QuadraticBiasWithinInterpolationBound) {
  const auto x = uniform_x(256);
  FitConfig cfg;
  cfg.K_n = 8;
  cfg.lambda_star = 0.0;
  const FitResult r = fit(x, apply(x, [](double v) { return v * v; }), cfg);
  double worst = 0.0;
  for (std::size_t k = 0; k <= 8; ++k) {
    const double t = k / 8.0;
    worst = std::max(worst, std::abs(r.coefficients[static_cast<Eigen::Index>(k)] - t * t));
  }
  EXPECT_LE(worst, 2.0 / 64.0);
}

TEST(Fit, ConcaveTruthGivesAffineOracleFit) {
  const auto x = uniform_x(160);
  const auto y = apply(x, [](double v) { return -v * v; });
  for (std::size_t k : {4u, 8u, 10u}) {
    FitConfig cfg;
    cfg.K_n = k;
    cfg.lambda_star = 0.0;
    const FitResult r = fit(x, y, cfg);
    EXPECT_LE(second_differences(r.coefficients).cwiseAbs().maxCoeff(), 1e-9);
    const QPSolution oracle = brute_force_solve(make_problem(r.system, r.system.weighted_response(y)));
    EXPECT_LE((oracle.b_hat - r.coefficients).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(second_differences(oracle.b_hat).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Fit, ResultInvariants) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  const auto x = uniform_x(1000);
  auto y = apply(x, [](double v) { return std::exp(v); });
  for (auto& v : y) v += 0.3 * z(rng);
  FitConfig cfg;
  cfg.K_n = 10;
  const FitResult r = fit(x, y, cfg);
  EXPECT_TRUE(r.diagnostics.convex);
  EXPECT_TRUE(convexity_check(r.fitted_fn));
  EXPECT_TRUE(r.diagnostics.kkt.passes(r.diagnostics.kkt_tolerance));
  EXPECT_GE(second_differences(r.coefficients).minCoeff(), -r.diagnostics.kkt_tolerance);
  for (std::size_t k = 0; k <= 10; ++k) {
    const double knot = r.system.grid.knot(static_cast<long>(k));
    EXPECT_NEAR(r.fitted_fn(knot), r.coefficients[static_cast<Eigen::Index>(k)], 1e-14);
    EXPECT_NEAR(predict(r, knot), r.coefficients[static_cast<Eigen::Index>(k)], 1e-14);
  }
  for (std::size_t k = 0; k < 10; ++k) {
    const double mid = (k + 0.5) / 10.0;
    const double avg = 0.5 * (r.coefficients[static_cast<Eigen::Index>(k)] +
                              r.coefficients[static_cast<Eigen::Index>(k + 1)]);
    EXPECT_NEAR(predict(r, mid), avg, 1e-14);
  }
  for (std::size_t k = 1; k < 10; ++k) {
    const double a = predict(r, (k - 1) / 10.0), b = predict(r, k / 10.0), c = predict(r, (k + 1) / 10.0);
    EXPECT_LE(b, 0.5 * (a + c) + r.diagnostics.kkt_tolerance);
  }
  EXPECT_THROW(predict(r, 1.5), Error);
  EXPECT_THROW(predict(r, -0.01), Error);
}

TEST(Fit, ScalingEquivariance) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  const auto x = uniform_x(600);
  auto y = apply(x, [](double v) { return v * v; });
  for (auto& v : y) v += 0.2 * z(rng);
  FitConfig cfg;
  cfg.K_n = 12;
  cfg.lambda_star = 5.0;
  const FitResult base = fit(x, y, cfg);
  for (double c : {2.0, 10.0}) {
    std::vector<double> yc;
    for (double v : y) yc.push_back(c * v);
    const FitResult scaled = fit(x, yc, cfg);
    EXPECT_LE((scaled.coefficients - c * base.coefficients).cwiseAbs().maxCoeff(), 1e-9 * c);
  }
}

TEST(Fit, RealDataDesign) {
  std::vector<double> x, y;
  for (int i = 1; i <= 300; ++i) {
    const double t = std::pow(i / 300.0, 1.7);
    x.push_back(t);
    y.push_back(std::exp(2.0 * t));
  }
  FitConfig cfg;
  cfg.K_n = 6;
  const FitResult r = fit(x, y, cfg);
  EXPECT_EQ(r.system.mode, DesignMode::real_data);
  EXPECT_FALSE(r.system.warnings.empty());
  EXPECT_TRUE(r.diagnostics.convex);
  EXPECT_LE(std::abs(predict(r, 0.5) - std::exp(1.0)), 0.3);
}

TEST(Fit, InvalidInputsRejected) {
  const auto x = uniform_x(100);
  const auto y = apply(x, [](double v) { return v; });
  EXPECT_THROW(fit(x, std::vector<double>(99, 0.0), FitConfig{}), Error);
  std::vector<double> bad = x;
  bad[0] = 0.0;
  EXPECT_THROW(fit(bad, y, FitConfig{}), Error);
  FitConfig big;
  big.K_n = 99;
  EXPECT_THROW(fit(x, y, big), Error);
  FitConfig badr;
  badr.r = 1.0;
  EXPECT_THROW(fit(x, y, badr), Error);
  FitConfig neg;
  neg.lambda_star = -1.0;
  EXPECT_THROW(fit(x, y, neg), Error);
  std::vector<double> nan_y = y;
  nan_y[3] = std::nan("");
  EXPECT_THROW(fit(x, nan_y, FitConfig{}), Error);
}

TEST(NoiseFree, ConvexSplineTruthReproduced) {
  // Piecewise linear convex truth with kinks on the knots 1/4 and 3/4.
  auto truth = [](double x) { return std::max({0.5 - x, 0.25, 2.0 * x - 1.25}); };
  const FitResult r = noise_free_fit(truth, 400, 4, 0.0);
  for (std::size_t k = 0; k <= 4; ++k)
    EXPECT_NEAR(r.coefficients[static_cast<Eigen::Index>(k)], truth(k / 4.0), 1e-9);
}

TEST(NoiseFree, EqualsFitOnExpectedResponse) {
  auto truth = [](double x) { return x * x; };
  const FitResult a = noise_free_fit(truth, 512, 8);
  const auto x = uniform_x(512);
  FitConfig cfg;
  cfg.K_n = 8;
  const FitResult b = fit(x, apply(x, truth), cfg);
  EXPECT_LE((a.coefficients - b.coefficients).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(a.diagnostics.lambda, 1.0 / 8.0, 1e-15);
}
