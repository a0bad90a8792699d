#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include "cvxspline/banded.hpp"
#include "cvxspline/design.hpp"
#include "cvxspline/error.hpp"

namespace cvxspline {

/// min ½ bᵀΛb − bᵀȳ subject to D₂ b ≥ 0.
struct QPProblem {
  BandedSymmetric lambda_matrix;  ///< Λ, bandwidth 2
  Eigen::VectorXd ybar;

  std::size_t num_coef() const noexcept { return lambda_matrix.size(); }
  std::size_t num_constraints() const noexcept { return num_coef() - 2; }

  double objective(const Eigen::VectorXd& b) const { return 0.5 * b.dot(lambda_matrix.multiply(b)) - b.dot(ybar); }
  /// Tolerance scale 1 + ‖ȳ‖∞ shared by the solver and its certificates.
  double scale() const { return 1.0 + (ybar.size() ? ybar.cwiseAbs().maxCoeff() : 0.0); }
};

inline QPProblem make_problem(const DesignSystem& system, Eigen::VectorXd ybar) {
  if (static_cast<std::size_t>(ybar.size()) != system.num_coef())
    fail(ErrorCode::invalid_argument, "ybar length must be K_n + 1");
  return QPProblem{system.system, std::move(ybar)};
}

struct KktResiduals {
  double stationarity = 0.0;    ///< ‖Λb − ȳ − D₂ᵀχ‖∞
  double min_slack = 0.0;       ///< min (D₂ b)_i
  double min_multiplier = 0.0;  ///< min χ_i
  double complementarity = 0.0; ///< |χᵀ D₂ b|

  bool passes(double tol) const {
    return stationarity <= tol && min_slack >= -tol && min_multiplier >= -tol && complementarity <= tol;
  }
};

struct QPSolution {
  Eigen::VectorXd b_hat;
  Eigen::VectorXd chi;
  std::vector<std::size_t> active_set;  ///< 0-based constraint indices with (D₂ b̂)_i ≤ tol
  KktResiduals residuals;
  std::size_t iterations = 0;           ///< active-set changes
  double objective = 0.0;
};

inline KktResiduals kkt_report(const QPProblem& problem, const Eigen::VectorXd& b, const Eigen::VectorXd& chi) {
  if (static_cast<std::size_t>(b.size()) != problem.num_coef() ||
      static_cast<std::size_t>(chi.size()) != problem.num_constraints())
    fail(ErrorCode::invalid_argument, "kkt_report: vector lengths do not match problem");
  KktResiduals r;
  const Eigen::VectorXd grad = problem.lambda_matrix.multiply(b) - problem.ybar - second_differences_transpose(chi);
  r.stationarity = grad.cwiseAbs().maxCoeff();
  const Eigen::VectorXd slack = second_differences(b);
  r.min_slack = slack.size() ? slack.minCoeff() : 0.0;
  r.min_multiplier = chi.size() ? chi.minCoeff() : 0.0;
  r.complementarity = std::abs(chi.dot(slack));
  return r;
}

inline double kkt_tolerance(const QPProblem& problem) { return 1e-9 * problem.scale(); }

namespace detail {

/// Null-space basis of (D₂)_{W•} at integer nodes: column s of Fᵀ is the
/// piecewise-linear hat through free nodes i_{s-1}, i_s, i_{s+1}.
struct SparseBasis {
  std::vector<std::size_t> free_nodes;
  /// support[s] = (node, value) with value > 0.
  std::vector<std::vector<std::pair<std::size_t, double>>> columns;
};

inline SparseBasis null_space_basis(const std::vector<bool>& working, std::size_t num_coef) {
  SparseBasis f;
  std::vector<bool> basic(num_coef, false);
  for (std::size_t i = 0; i < working.size(); ++i)
    if (working[i]) basic[i + 1] = true;
  for (std::size_t a = 0; a < num_coef; ++a)
    if (!basic[a]) f.free_nodes.push_back(a);
  const std::size_t l = f.free_nodes.size();
  f.columns.resize(l);
  for (std::size_t s = 0; s < l; ++s) {
    const std::size_t node = f.free_nodes[s];
    if (s > 0) {
      const std::size_t prev = f.free_nodes[s - 1];
      const double h = static_cast<double>(node - prev);
      for (std::size_t a = prev + 1; a < node; ++a) f.columns[s].emplace_back(a, static_cast<double>(a - prev) / h);
    }
    f.columns[s].emplace_back(node, 1.0);
    if (s + 1 < l) {
      const std::size_t next = f.free_nodes[s + 1];
      const double h = static_cast<double>(next - node);
      for (std::size_t a = node + 1; a < next; ++a) f.columns[s].emplace_back(a, static_cast<double>(next - a) / h);
    }
  }
  return f;
}

/// Equality-constrained minimizer on working set W via the reduced system FΛFᵀ c = Fȳ.
inline Eigen::VectorXd solve_on_working_set(const QPProblem& problem, const std::vector<bool>& working) {
  const std::size_t p = problem.num_coef();
  const SparseBasis f = null_space_basis(working, p);
  const std::size_t l = f.free_nodes.size();
  const BandedSymmetric& lam = problem.lambda_matrix;
  BandedSymmetric reduced(l, 2);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(l));
  for (std::size_t s = 0; s < l; ++s) {
    double acc = 0.0;
    for (const auto& [a, v] : f.columns[s]) acc += v * problem.ybar[a];
    rhs[s] = acc;
    for (std::size_t t = s; t < std::min(l, s + 3); ++t) {
      double e = 0.0;
      for (const auto& [a, va] : f.columns[s])
        for (const auto& [b, vb] : f.columns[t]) {
          const std::size_t d = a > b ? a - b : b - a;
          if (d <= 2) e += va * lam(a, b) * vb;
        }
      reduced.at(t, s) = e;
    }
  }
  const auto chol = BandedCholesky::factor(reduced);
  if (!chol) fail(ErrorCode::numerical_breakdown, "reduced system F Λ Fᵀ is not positive definite");
  const Eigen::VectorXd c = chol->solve(rhs);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t s = 0; s < l; ++s)
    for (const auto& [a, v] : f.columns[s]) b[a] += v * c[s];
  return b;
}

/// Multipliers on W from D_Wᵀ χ_W = Λb − ȳ (normal equations, banded in compressed indexing).
inline Eigen::VectorXd working_multipliers(const QPProblem& problem, const std::vector<bool>& working,
                                           const Eigen::VectorXd& b) {
  const Eigen::VectorXd g = problem.lambda_matrix.multiply(b) - problem.ybar;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < working.size(); ++i)
    if (working[i]) idx.push_back(i);
  Eigen::VectorXd chi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(working.size()));
  if (idx.empty()) return chi;
  const std::size_t m = idx.size();
  BandedSymmetric ddt(m, 2);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(m));
  const Eigen::VectorXd dg = second_differences(g);
  for (std::size_t p = 0; p < m; ++p) {
    rhs[p] = dg[idx[p]];
    for (std::size_t q = p; q < std::min(m, p + 3); ++q) {
      const std::size_t d = idx[q] - idx[p];
      ddt.at(q, p) = d == 0 ? 6.0 : d == 1 ? -4.0 : d == 2 ? 1.0 : 0.0;
    }
  }
  const auto chol = BandedCholesky::factor(ddt);
  if (!chol) fail(ErrorCode::numerical_breakdown, "active constraint rows are dependent");
  const Eigen::VectorXd sol = chol->solve(rhs);
  for (std::size_t p = 0; p < m; ++p) chi[idx[p]] = sol[p];
  return chi;
}

inline QPSolution finalize(const QPProblem& problem, Eigen::VectorXd b, Eigen::VectorXd chi, std::size_t iterations) {
  QPSolution out;
  out.residuals = kkt_report(problem, b, chi);
  const double tol = kkt_tolerance(problem);
  const Eigen::VectorXd slack = second_differences(b);
  for (Eigen::Index i = 0; i < slack.size(); ++i)
    if (slack[i] <= tol) out.active_set.push_back(static_cast<std::size_t>(i));
  out.objective = problem.objective(b);
  out.b_hat = std::move(b);
  out.chi = std::move(chi);
  out.iterations = iterations;
  return out;
}

}  // namespace detail

/// Primal active-set solver on the cone {D₂ b ≥ 0}.
///
/// Each working set W is solved in its null-space parametrisation b = Fᵀc
/// (banded Cholesky of FΛFᵀ). The start is the unconstrained minimiser when it
/// is feasible, otherwise the minimiser with its violated constraints
/// activated, otherwise the affine fit with every constraint active. Blocking
/// and dropping ties go to the smallest index.
inline QPSolution solve(const QPProblem& problem) {
  const std::size_t p = problem.num_coef();
  if (p < 3 || static_cast<std::size_t>(problem.ybar.size()) != p)
    fail(ErrorCode::invalid_argument, "QP needs K_n >= 2 and matching ybar");
  if (!problem.ybar.allFinite()) fail(ErrorCode::invalid_argument, "ybar has non-finite entries");
  const std::size_t m = problem.num_constraints();
  const double scale = problem.scale();
  const double tol = kkt_tolerance(problem);
  const double drop_tol = 1e-13 * scale;
  const double step_tol = 1e-15 * scale;
  const std::size_t limit = 10 * (p - 1) + 100;

  std::vector<bool> working(m, false);
  Eigen::VectorXd b = detail::solve_on_working_set(problem, working);
  Eigen::VectorXd slack = second_differences(b);
  if (slack.minCoeff() < 0.0) {
    for (std::size_t i = 0; i < m; ++i) working[i] = slack[i] < 0.0;
    b = detail::solve_on_working_set(problem, working);
    slack = second_differences(b);
    bool feasible = true;
    for (std::size_t i = 0; i < m; ++i)
      if (!working[i] && slack[i] < -step_tol) feasible = false;
    if (!feasible) {
      std::fill(working.begin(), working.end(), true);
      b = detail::solve_on_working_set(problem, working);
    }
  }

  std::size_t changes = 0;
#ifndef NDEBUG
  double last_objective = problem.objective(b);
#endif
  for (;;) {
    const Eigen::VectorXd target = detail::solve_on_working_set(problem, working);
    const Eigen::VectorXd step = target - b;
    if (step.cwiseAbs().maxCoeff() <= step_tol) {
      b = target;
      const Eigen::VectorXd chi = detail::working_multipliers(problem, working, b);
      std::size_t drop = m;
      double most_negative = -drop_tol;
      for (std::size_t i = 0; i < m; ++i)
        if (working[i] && chi[i] < most_negative) {
          most_negative = chi[i];
          drop = i;
        }
      if (drop == m) {
        Eigen::VectorXd chi_out = chi.cwiseMax(0.0);
        QPSolution sol = detail::finalize(problem, std::move(b), std::move(chi_out), changes);
        if (!sol.residuals.passes(tol)) {
          std::ostringstream os;
          os << "KKT certificate failed: stationarity=" << sol.residuals.stationarity
             << " min_slack=" << sol.residuals.min_slack << " min_multiplier=" << sol.residuals.min_multiplier
             << " complementarity=" << sol.residuals.complementarity << " tol=" << tol;
          fail(ErrorCode::numerical_breakdown, os.str());
        }
        return sol;
      }
      working[drop] = false;
    } else {
      const Eigen::VectorXd ds = second_differences(step);
      const Eigen::VectorXd s = second_differences(b);
      double alpha = 1.0;
      std::size_t blocking = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (working[i] || ds[i] >= 0.0) continue;
        const double ratio = std::max(s[i], 0.0) / -ds[i];
        if (ratio < alpha) {
          alpha = ratio;
          blocking = i;
        }
      }
      if (blocking == m) {
        b = target;
        continue;
      }
      b += alpha * step;
      working[blocking] = true;
    }
#ifndef NDEBUG
    const double obj = problem.objective(b);
    assert(obj <= last_objective + 1e-10 * scale);
    last_objective = obj;
#endif
    if (++changes > limit) {
      std::ostringstream os;
      os << "active-set change limit " << limit << " exceeded; working set size "
         << std::count(working.begin(), working.end(), true) << ", objective " << problem.objective(b);
      fail(ErrorCode::solver_stalled, os.str());
    }
  }
}

/// Correctness oracle: enumerates every index set α, solves the saddle-point
/// system of each selection piece by dense LU, and keeps the KKT-feasible
/// candidate of least objective.
inline QPSolution brute_force_solve(const QPProblem& problem) {
  const std::size_t p = problem.num_coef();
  const std::size_t m = problem.num_constraints();
  if (p < 3 || m > 13) fail(ErrorCode::invalid_argument, "brute_force_solve requires 2 <= K_n <= 14");
  const double tol = kkt_tolerance(problem);
  const Eigen::MatrixXd lam = problem.lambda_matrix.dense();
  const Eigen::MatrixXd d2 = difference_matrix(p - 1);

  bool found = false;
  Eigen::VectorXd best_b, best_chi;
  double best_obj = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (1u << i)) rows.push_back(static_cast<Eigen::Index>(i));
    const auto q = static_cast<Eigen::Index>(rows.size());
    const auto pp = static_cast<Eigen::Index>(p);
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(pp + q, pp + q);
    kkt.topLeftCorner(pp, pp) = lam;
    for (Eigen::Index r = 0; r < q; ++r) {
      kkt.block(pp + r, 0, 1, pp) = d2.row(rows[r]);
      kkt.block(0, pp + r, pp, 1) = -d2.row(rows[r]).transpose();
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(pp + q);
    rhs.head(pp) = problem.ybar;
    const Eigen::VectorXd z = kkt.partialPivLu().solve(rhs);
    Eigen::VectorXd b = z.head(pp);
    Eigen::VectorXd chi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    for (Eigen::Index r = 0; r < q; ++r) chi[rows[r]] = z[pp + r];
    const Eigen::VectorXd slack = d2 * b;
    if (slack.minCoeff() < -tol || (q > 0 && chi.minCoeff() < -tol)) continue;
    const double obj = problem.objective(b);
    if (obj < best_obj) {
      best_obj = obj;
      best_b = b;
      best_chi = chi;
      found = true;
    }
  }
  if (!found) fail(ErrorCode::oracle_inconsistency, "no index set satisfies the KKT conditions");
  return detail::finalize(problem, std::move(best_b), std::move(best_chi), 0);
}

}  // namespace cvxspline
