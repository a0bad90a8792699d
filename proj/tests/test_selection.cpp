#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cvxspline/design.hpp"
#include "cvxspline/qp.hpp"
#include "cvxspline/selection.hpp"

using namespace cvxspline;

namespace {

DesignSystem design_with_lambda(std::size_t k, std::size_t m, double lambda) {
  DesignSystem s = build_design(build_knots(k), k * m, 0.0);
  return with_lambda_star(s, lambda * s.beta_n);
}

std::vector<std::size_t> random_alpha(std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> a;
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i + 1 < k; ++i)
    if (coin(rng)) a.push_back(i);
  return a;
}

}  // namespace

TEST(Selection, EmptyAlphaIsIdentity) {
  const SelectionStructure sel = build_selection({}, 7);
  EXPECT_EQ(sel.num_free(), 8u);
  EXPECT_EQ((sel.f - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Selection, AllActiveGivesBoundaryRamps) {
  const SelectionStructure sel = build_selection({0, 1, 2, 3}, 5);
  ASSERT_EQ(sel.num_free(), 2u);
  EXPECT_EQ(sel.free_nodes, (std::vector<std::size_t>{0, 5}));
  Eigen::MatrixXd expected(2, 6);
  // r₁(t) = (6 − t)/5 and r₂(t) = (t − 1)/5 at t = 1..6.
  for (int t = 1; t <= 6; ++t) {
    expected(0, t - 1) = (6.0 - t) / 5.0;
    expected(1, t - 1) = (t - 1.0) / 5.0;
  }
  EXPECT_LE((sel.f - expected).cwiseAbs().maxCoeff(), 1e-15);
  ASSERT_EQ(sel.blocks.size(), 1u);
  EXPECT_EQ(sel.blocks[0].gaps, (std::vector<std::size_t>{5}));
}

TEST(Selection, ColumnsArePartitionOfUnityAndNullSpace) {
  std::mt19937_64 rng(2);
  for (std::size_t k = 2; k <= 30; ++k)
    for (int t = 0; t < 20; ++t) {
      const auto alpha = random_alpha(k, rng);
      const SelectionStructure sel = build_selection(alpha, k);
      EXPECT_GE(sel.f.minCoeff(), 0.0);
      EXPECT_LE(sel.f.maxCoeff(), 1.0);
      EXPECT_LE((sel.f.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
      EXPECT_NEAR(sel.f.transpose().cwiseAbs().rowwise().sum().maxCoeff(), 1.0, 1e-14);
      const Eigen::MatrixXd d = difference_matrix(k);
      for (auto i : alpha)
        EXPECT_LE((d.row(static_cast<Eigen::Index>(i)) * sel.f.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(sel.f);
      EXPECT_EQ(static_cast<std::size_t>(lu.rank()), sel.num_free());
    }
}

TEST(Selection, BlocksPartitionNodes) {
  std::mt19937_64 rng(4);
  for (std::size_t k = 2; k <= 30; ++k)
    for (int t = 0; t < 20; ++t) {
      const SelectionStructure sel = build_selection(random_alpha(k, rng), k);
      std::size_t next = 0;
      for (const auto& b : sel.blocks) {
        EXPECT_EQ(b.first, next);
        next = b.last + 1;
        if (b.size() > 1) {
          EXPECT_GE(b.size(), 3u);
          for (auto h : b.gaps) EXPECT_GE(h, 2u);
        }
      }
      EXPECT_EQ(next, k + 1);
    }
}

TEST(Selection, MalformedAlphaRejected) {
  EXPECT_THROW(build_selection({3, 1}, 6), Error);
  EXPECT_THROW(build_selection({1, 1}, 6), Error);
  EXPECT_THROW(build_selection({5}, 6), Error);
  EXPECT_THROW(build_selection({}, 1), Error);
}

TEST(Selection, HashIsStableAndDistinguishes) {
  EXPECT_EQ(alpha_hash_hex({1, 2, 3}), alpha_hash_hex({1, 2, 3}));
  EXPECT_NE(alpha_hash({1, 2, 3}), alpha_hash({1, 2, 4}));
  EXPECT_NE(alpha_hash({}), alpha_hash({0}));
  EXPECT_EQ(alpha_hash_hex({}).size(), 16u);
}

TEST(Structure, HBoundsAndBandwidth) {
  std::mt19937_64 rng(6);
  for (std::size_t k : {3u, 6u, 10u, 17u, 40u}) {
    const DesignSystem s = design_with_lambda(k, 16, 1.0 / static_cast<double>(k));
    for (int t = 0; t < 25; ++t) {
      const StructureReport rep = structure_report(build_selection(random_alpha(k, rng), k), s);
      EXPECT_TRUE(rep.h_bounds_ok);
      EXPECT_TRUE(rep.g_tridiagonal);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rep.h);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
      EXPECT_LE((rep.h - rep.h.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(Structure, EmptyAlphaMarginsApproachLimits) {
  const DesignSystem s = design_with_lambda(12, 512, 0.0);
  const StructureReport rep = structure_report(build_selection({}, 12), s);
  EXPECT_LE((rep.g - s.gram.dense()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(rep.xi[0], 0.25, 5e-3);
  EXPECT_NEAR(rep.xi[12], 0.25, 5e-3);
  for (int i = 1; i < 12; ++i) EXPECT_NEAR(rep.xi[i], 0.5, 5e-3);
  EXPECT_GT(rep.xi[0], 0.2);
  EXPECT_GT(rep.xi[5], 1.0 / 3.0);
}

TEST(Structure, EstimatorLambdaKeepsDominance) {
  std::mt19937_64 rng(42);
  const DesignSystem s = design_with_lambda(8, 32, 1.0 / 8.0);
  for (int t = 0; t < 50; ++t) {
    const StructureReport rep = structure_report(build_selection(random_alpha(8, rng), 8), s);
    EXPECT_TRUE(rep.dominance_ok);
    EXPECT_GT(rep.min_xi_tilde, 0.0);
    EXPECT_LE(rep.e_unit_margin_error, 1e-12);
    EXPECT_LE(rep.e_inverse_norm, 1.0 + 1e-12);
    EXPECT_LE(rep.scaled_f_norm, 40.0);
    EXPECT_NEAR(rep.ft_norm, 1.0, 1e-14);
  }
}

TEST(Structure, LipschitzNormOfEmptyAlphaIsGammaInverseNorm) {
  const DesignSystem s = design_with_lambda(9, 16, 0.0);
  const StructureReport rep = structure_report(build_selection({}, 9), s);
  const Eigen::MatrixXd inv = s.gram.dense().inverse();
  EXPECT_NEAR(rep.lipschitz_norm, inv.cwiseAbs().rowwise().sum().maxCoeff(), 1e-12);
}

TEST(Structure, SelectionFunctionReproducesSolver) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  const DesignSystem s = design_with_lambda(10, 16, 0.1);
  int strict = 0;
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd y(11);
    for (auto& e : y) e = z(rng);
    const QPProblem prob = make_problem(s, y);
    const QPSolution sol = solve(prob);
    bool strictly_complementary = true;
    for (auto i : sol.active_set)
      if (sol.chi[static_cast<Eigen::Index>(i)] <= 1e-8) strictly_complementary = false;
    if (!strictly_complementary) continue;
    ++strict;
    const Eigen::VectorXd b = selection_function(build_selection(sol.active_set, 10), s, y);
    EXPECT_LE((b - sol.b_hat).cwiseAbs().maxCoeff(), 1e-8);
  }
  EXPECT_GT(strict, 50);
}

TEST(Structure, DimensionMismatchRejected) {
  const DesignSystem s = design_with_lambda(6, 16, 0.0);
  EXPECT_THROW(structure_report(build_selection({}, 7), s), Error);
}

TEST(Scan, SampledAlphasIncludeExtremes) {
  const auto small = sample_alphas(6, 200, 1);
  EXPECT_EQ(small.size(), 32u);
  const auto big = sample_alphas(16, 200, 1);
  EXPECT_EQ(big.size(), 204u);
  EXPECT_TRUE(big[0].empty());
  EXPECT_EQ(big[1].size(), 15u);
  EXPECT_EQ(sample_alphas(16, 200, 1), big);
  EXPECT_NE(sample_alphas(16, 200, 2), big);
}

TEST(Scan, AggregatesCellsDeterministically) {
  ScanConfig cfg;
  cfg.intervals = {6, 12};
  cfg.points_per_interval = {16};
  cfg.lambdas = {LambdaChoice{0.0, true}, LambdaChoice{0.05, false}};
  cfg.samples = 40;
  cfg.threads = 1;
  const ScanResult a = lipschitz_scan(cfg);
  cfg.threads = 4;
  const ScanResult b = lipschitz_scan(cfg);
  ASSERT_EQ(a.cells.size(), 4u);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].max_lipschitz, b.cells[i].max_lipschitz);
    EXPECT_EQ(a.cells[i].argmax_alpha, b.cells[i].argmax_alpha);
    EXPECT_EQ(a.cells[i].dominance_violations, 0u);
    EXPECT_EQ(a.cells[i].g_violations, 0u);
    EXPECT_EQ(a.cells[i].h_violations, 0u);
    EXPECT_TRUE(std::isfinite(a.cells[i].max_lipschitz));
  }
  EXPECT_EQ(a.cells[0].num_alpha, 32u);
  EXPECT_EQ(a.cells[2].num_alpha, 44u);
}

TEST(Scan, PreconditionsEnforced) {
  ScanConfig cfg;
  cfg.intervals = {6};
  cfg.points_per_interval = {4};
  cfg.lambdas = {LambdaChoice{0.0, true}};
  EXPECT_THROW(lipschitz_scan(cfg), Error);
  cfg.points_per_interval = {16};
  cfg.lambdas = {LambdaChoice{0.9, false}};
  EXPECT_THROW(lipschitz_scan(cfg), Error);
}

TEST(Scan, DominanceProbeFindsSmallThreshold) {
  const auto alphas = sample_alphas(8, 0, 1);
  const std::size_t p = probe_min_points_per_interval(8, alphas);
  EXPECT_GE(p, 2u);
  EXPECT_LE(p, 16u);
}
