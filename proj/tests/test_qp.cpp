#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cvxspline/design.hpp"
#include "cvxspline/qp.hpp"

using namespace cvxspline;

namespace {

DesignSystem design_with_lambda(std::size_t k, std::size_t m, double lambda) {
  DesignSystem s = build_design(build_knots(k), k * m, 0.0);
  return with_lambda_star(s, lambda * s.beta_n);
}

Eigen::VectorXd normal_vector(std::size_t size, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(static_cast<Eigen::Index>(size));
  for (auto& e : v) e = scale * z(rng);
  return v;
}

void expect_certified(const QPProblem& problem, const QPSolution& sol) {
  const double tol = kkt_tolerance(problem);
  EXPECT_TRUE(sol.residuals.passes(tol)) << "stat " << sol.residuals.stationarity << " slack "
                                         << sol.residuals.min_slack << " mult " << sol.residuals.min_multiplier
                                         << " comp " << sol.residuals.complementarity;
}

}  // namespace

TEST(Qp, ZeroDataGivesZeroSolution) {
  const DesignSystem s = design_with_lambda(6, 16, 1.0 / 6.0);
  const QPProblem prob = make_problem(s, Eigen::VectorXd::Zero(7));
  const QPSolution sol = solve(prob);
  EXPECT_LE(sol.b_hat.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(sol.chi.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(sol.residuals.stationarity, 1e-15);
  const QPSolution oracle = brute_force_solve(prob);
  EXPECT_LE(oracle.b_hat.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Qp, InteriorOptimumRecovered) {
  const DesignSystem s = design_with_lambda(4, 10, 0.25);
  Eigen::VectorXd bstar(5);
  for (int k = 0; k < 5; ++k) bstar[k] = (k / 4.0) * (k / 4.0);
  const QPProblem prob = make_problem(s, s.system.multiply(bstar));
  const QPSolution sol = solve(prob);
  EXPECT_LE((sol.b_hat - bstar).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(sol.active_set.empty());
  const QPSolution oracle = brute_force_solve(prob);
  EXPECT_LE((oracle.b_hat - bstar).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(oracle.active_set.empty());
}

TEST(Qp, SeededInstanceMatchesOracle) {
  const DesignSystem s = design_with_lambda(6, 16, 1.0 / 6.0);
  std::mt19937_64 rng(42);
  const QPProblem prob = make_problem(s, normal_vector(7, rng));
  const QPSolution sol = solve(prob);
  const QPSolution oracle = brute_force_solve(prob);
  EXPECT_LE((sol.b_hat - oracle.b_hat).cwiseAbs().maxCoeff(), 1e-8);
  expect_certified(prob, sol);
}

TEST(Qp, RandomInstancesNeverBeatTheOracle) {
  std::mt19937_64 rng(7);
  for (std::size_t k = 3; k <= 10; ++k)
    for (double lambda : {0.0, 1.0 / static_cast<double>(k), 0.3}) {
      const DesignSystem s = design_with_lambda(k, 16, lambda);
      for (int t = 0; t < 30; ++t) {
        const QPProblem prob = make_problem(s, normal_vector(k + 1, rng));
        const QPSolution sol = solve(prob);
        const QPSolution oracle = brute_force_solve(prob);
        EXPECT_GE(sol.objective, oracle.objective - 1e-10);
        EXPECT_LE((sol.b_hat - oracle.b_hat).cwiseAbs().maxCoeff(), 1e-8);
        expect_certified(prob, sol);
      }
    }
}

TEST(Qp, UnconstrainedMatchesDenseSolve) {
  std::mt19937_64 rng(19);
  const DesignSystem s = design_with_lambda(12, 8, 0.1);
  Eigen::VectorXd bstar(13);
  for (int k = 0; k < 13; ++k) bstar[k] = std::exp(k / 12.0);
  const Eigen::VectorXd ybar = s.system.dense() * bstar;
  const QPSolution sol = solve(make_problem(s, ybar));
  const Eigen::VectorXd dense = s.system.dense().llt().solve(ybar);
  EXPECT_LE((sol.b_hat - dense).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Qp, ConcaveDataGivesAffineFit) {
  const DesignSystem s = design_with_lambda(8, 16, 0.0);
  Eigen::VectorXd bconcave(9);
  for (int k = 0; k < 9; ++k) bconcave[k] = -(k / 8.0) * (k / 8.0);
  const QPProblem prob = make_problem(s, s.system.multiply(bconcave));
  const QPSolution sol = solve(prob);
  EXPECT_LE(second_differences(sol.b_hat).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(sol.active_set.size(), 7u);
  const QPSolution oracle = brute_force_solve(prob);
  EXPECT_LE((sol.b_hat - oracle.b_hat).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Qp, KktReportDetectsPerturbation) {
  const DesignSystem s = design_with_lambda(6, 16, 1.0 / 6.0);
  std::mt19937_64 rng(23);
  const QPProblem prob = make_problem(s, normal_vector(7, rng));
  const QPSolution sol = solve(prob);
  const KktResiduals exact = kkt_report(prob, sol.b_hat, sol.chi);
  EXPECT_LE(exact.stationarity, 1e-9);
  EXPECT_GE(exact.min_slack, -1e-9);
  EXPECT_LE(exact.complementarity, 1e-9);
  const Eigen::MatrixXd lam = s.system.dense();
  for (Eigen::Index j = 0; j < 7; ++j) {
    Eigen::VectorXd b = sol.b_hat;
    b[j] += 1.0;
    const KktResiduals r = kkt_report(prob, b, sol.chi);
    EXPECT_NEAR(r.stationarity, lam.col(j).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Qp, KktReportMinSlack) {
  const DesignSystem s = design_with_lambda(4, 8, 0.0);
  const QPProblem prob = make_problem(s, Eigen::VectorXd::Zero(5));
  Eigen::VectorXd b(5);
  b << 0.0, 1.0, 1.5, 2.0, 3.0;    // D₂ b = (−0.5, 0, 0.5)
  const KktResiduals r = kkt_report(prob, b, Eigen::VectorXd::Zero(3));
  EXPECT_DOUBLE_EQ(r.min_slack, -0.5);
  EXPECT_THROW(kkt_report(prob, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(3)), Error);
}

TEST(Qp, PiecewiseLinearInData) {
  std::mt19937_64 rng(31);
  const DesignSystem s = design_with_lambda(9, 16, 1.0 / 9.0);
  int checked = 0;
  for (int t = 0; t < 400 && checked < 20; ++t) {
    const Eigen::VectorXd y1 = normal_vector(10, rng), y2 = normal_vector(10, rng);
    const QPSolution a = solve(make_problem(s, y1));
    const QPSolution b = solve(make_problem(s, y2));
    const QPSolution c = solve(make_problem(s, y1 + y2));
    if (a.active_set != b.active_set || a.active_set != c.active_set) continue;
    EXPECT_LE((a.b_hat + b.b_hat - c.b_hat).cwiseAbs().maxCoeff(), 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Qp, ScalingEquivariance) {
  std::mt19937_64 rng(37);
  const DesignSystem s = design_with_lambda(10, 16, 0.1);
  const Eigen::VectorXd y = normal_vector(11, rng);
  const QPSolution base = solve(make_problem(s, y));
  for (double c : {2.0, 10.0}) {
    const QPSolution scaled = solve(make_problem(s, c * y));
    EXPECT_LE((scaled.b_hat - c * base.b_hat).cwiseAbs().maxCoeff(), 1e-9 * c);
  }
}

TEST(Qp, ConvexOutputOnDenseGrid) {
  std::mt19937_64 rng(41);
  const DesignSystem s = design_with_lambda(15, 8, 0.05);
  const QPSolution sol = solve(make_problem(s, normal_vector(16, rng, 3.0)));
  const double tol = 1e-9 * (1.0 + 3.0 * 5.0);
  const int grid = 1500;
  auto f = [&](double x) {
    const DesignRow r = design_row(15, x);
    return r.w0 * sol.b_hat[static_cast<Eigen::Index>(r.first)] +
           r.w1 * sol.b_hat[static_cast<Eigen::Index>(r.first + 1)];
  };
  for (int i = 1; i < grid; ++i) {
    const double h = 1.0 / grid;
    EXPECT_LE(f(i * h), 0.5 * (f((i - 1) * h) + f((i + 1) * h)) + tol);
  }
}

TEST(Qp, LargeProblemsConvergeAndCertify) {
  std::mt19937_64 rng(43);
  for (std::size_t k : {50u, 120u, 250u}) {
    const DesignSystem s = design_with_lambda(k, 8, 1.0 / static_cast<double>(k));
    for (int t = 0; t < 5; ++t) {
      const QPProblem prob = make_problem(s, normal_vector(k + 1, rng, 10.0));
      const QPSolution sol = solve(prob);
      expect_certified(prob, sol);
      EXPECT_LE(sol.iterations, 10 * k + 100);
    }
  }
}

TEST(Qp, BadInputsRejected) {
  const DesignSystem s = design_with_lambda(4, 8, 0.0);
  EXPECT_THROW(make_problem(s, Eigen::VectorXd::Zero(4)), Error);
  const DesignSystem big = design_with_lambda(15, 4, 0.0);
  EXPECT_THROW(brute_force_solve(make_problem(big, Eigen::VectorXd::Zero(16))), Error);
}
