#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cvxspline/banded.hpp"
#include "cvxspline/error.hpp"

namespace cvxspline {

/// Uniform knots k/K on [0,1] with one extension knot on each side (linear splines).
struct KnotGrid {
  std::size_t intervals = 0;   ///< K_n
  std::vector<double> knots;   ///< κ_{-1}, κ_0, ..., κ_{K_n+1}

  std::size_t num_basis() const noexcept { return intervals + 1; }
  /// κ_k for k in [-1, K_n + 1].
  double knot(long k) const { return knots.at(static_cast<std::size_t>(k + 1)); }
};

inline KnotGrid build_knots(std::size_t intervals) {
  if (intervals < 2) fail(ErrorCode::invalid_argument, "K_n must be at least 2");
  KnotGrid g;
  g.intervals = intervals;
  g.knots.reserve(intervals + 3);
  const double k = static_cast<double>(intervals);
  for (long i = -1; i <= static_cast<long>(intervals) + 1; ++i) g.knots.push_back(static_cast<double>(i) / k);
  return g;
}

/// Hat function B_k (k = 1..K_n+1) peaking at κ_{k-1}.
inline double eval_basis(const KnotGrid& grid, std::size_t k, double x) {
  if (k < 1 || k > grid.num_basis()) fail(ErrorCode::invalid_argument, "basis index out of range");
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::invalid_argument, "x must lie in [0,1]");
  const double u = static_cast<double>(grid.intervals) * x - static_cast<double>(k - 1);
  return std::max(0.0, 1.0 - std::abs(u));
}

/// Row of the design matrix: at most two nonzeros, at columns first and first+1.
struct DesignRow {
  std::size_t first = 0;
  double w0 = 0.0;
  double w1 = 0.0;
};

inline DesignRow design_row(std::size_t intervals, double x) {
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::invalid_argument, "design point outside [0,1]");
  const double u = static_cast<double>(intervals) * x;
  std::size_t j = static_cast<std::size_t>(std::floor(u));
  if (j >= intervals) j = intervals - 1;
  const double t = u - static_cast<double>(j);
  return {j, 1.0 - t, t};
}

/// Second-order difference matrix, rows (1, -2, 1).
inline Eigen::MatrixXd difference_matrix(std::size_t intervals) {
  if (intervals < 2) fail(ErrorCode::invalid_argument, "K_n must be at least 2");
  const auto rows = static_cast<Eigen::Index>(intervals - 1);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, rows + 2);
  for (Eigen::Index i = 0; i < rows; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d;
}

/// D₂ b, computed by stencil.
inline Eigen::VectorXd second_differences(const Eigen::VectorXd& b) {
  const Eigen::Index m = b.size() - 2;
  Eigen::VectorXd d(std::max<Eigen::Index>(m, 0));
  for (Eigen::Index i = 0; i < m; ++i) d[i] = b[i] - 2.0 * b[i + 1] + b[i + 2];
  return d;
}

/// D₂ᵀ v, computed by stencil.
inline Eigen::VectorXd second_differences_transpose(const Eigen::VectorXd& v) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size() + 2);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[i] += v[i];
    out[i + 1] -= 2.0 * v[i];
    out[i + 2] += v[i];
  }
  return out;
}

enum class DesignMode { simulation, real_data };

/// Design matrix, Gram summary and penalized system matrix Λ = Γ + λ D₂ᵀD₂.
struct DesignSystem {
  KnotGrid grid;
  DesignMode mode = DesignMode::simulation;
  std::vector<double> x;
  std::vector<DesignRow> rows;   ///< X by structure
  double beta_n = 0.0;
  double alpha_n = 0.0;          ///< squared column sum of B_1
  double alpha_n_last = 0.0;     ///< squared column sum of B_{K_n+1}
  double gamma_n = 0.0;
  double theta_n = 0.0;          ///< alpha_n / beta_n
  double theta_n_last = 0.0;     ///< alpha_n_last / beta_n
  double eta_n = 0.0;
  BandedSymmetric gram;          ///< Γ = XᵀX / β_n, bandwidth 1
  Eigen::MatrixXd d2;
  double lambda_star = 0.0;
  double lambda = 0.0;           ///< λ*/β_n
  BandedSymmetric system;        ///< Λ, bandwidth 2
  std::vector<std::string> warnings;

  std::size_t n() const noexcept { return x.size(); }
  std::size_t intervals() const noexcept { return grid.intervals; }
  std::size_t num_coef() const noexcept { return grid.num_basis(); }
  /// n / K_n; meaningful in simulation mode.
  double points_per_interval() const { return static_cast<double>(n()) / static_cast<double>(intervals()); }

  /// Xᵀ v for a length-n vector.
  Eigen::VectorXd xt_times(std::span<const double> v) const {
    if (v.size() != rows.size()) fail(ErrorCode::invalid_argument, "response length does not match design");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_coef()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out[rows[i].first] += rows[i].w0 * v[i];
      out[rows[i].first + 1] += rows[i].w1 * v[i];
    }
    return out;
  }

  /// Weighted response ȳ = Xᵀy / β_n.
  Eigen::VectorXd weighted_response(std::span<const double> y) const { return xt_times(y) / beta_n; }

  /// X b evaluated at the design points.
  std::vector<double> x_times(const Eigen::VectorXd& b) const {
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      out[i] = rows[i].w0 * b[rows[i].first] + rows[i].w1 * b[rows[i].first + 1];
    return out;
  }
};

namespace detail {

inline BandedSymmetric penalty_gram(std::size_t num_coef) {
  // D₂ᵀD₂ for the (1,-2,1) stencil.
  BandedSymmetric p(num_coef, 2);
  const std::size_t m = num_coef - 2;
  const double stencil[3] = {1.0, -2.0, 1.0};
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b <= a; ++b) p.at(r + a, r + b) += stencil[a] * stencil[b];
  return p;
}

/// Sets λ* and rebuilds Λ = Γ + (λ*/β_n) D₂ᵀD₂.
inline void apply_penalty(DesignSystem& s, double lambda_star) {
  if (!(lambda_star >= 0.0) || !std::isfinite(lambda_star))
    fail(ErrorCode::invalid_argument, "lambda_star must be finite and nonnegative");
  const std::size_t p = s.num_coef();
  s.lambda_star = lambda_star;
  s.lambda = lambda_star / s.beta_n;
  const BandedSymmetric pen = penalty_gram(p);
  s.system = BandedSymmetric(p, 2);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t d = 0; d <= 2 && j + d < p; ++d) s.system.at(j + d, j) = s.gram(j + d, j) + s.lambda * pen(j + d, j);
  if (!BandedCholesky::factor(s.system))
    fail(ErrorCode::degenerate_design, "penalized system matrix is not positive definite (rank-deficient design)");
}

inline DesignSystem assemble(KnotGrid grid, std::vector<double> x, DesignMode mode, double lambda_star) {
  if (!(lambda_star >= 0.0) || !std::isfinite(lambda_star))
    fail(ErrorCode::invalid_argument, "lambda_star must be finite and nonnegative");
  DesignSystem s;
  const std::size_t kn = grid.intervals;
  const std::size_t p = grid.num_basis();
  s.grid = std::move(grid);
  s.mode = mode;
  s.x = std::move(x);
  s.rows.reserve(s.x.size());
  for (double xi : s.x) s.rows.push_back(design_row(kn, xi));

  // XᵀX is tridiagonal.
  std::vector<double> diag(p, 0.0), off(p - 1, 0.0);
  for (const auto& r : s.rows) {
    diag[r.first] += r.w0 * r.w0;
    diag[r.first + 1] += r.w1 * r.w1;
    off[r.first] += r.w0 * r.w1;
  }
  if (mode == DesignMode::simulation) {
    s.beta_n = diag[1];
    s.gamma_n = off[1];
  } else {
    double sum = 0.0;
    for (std::size_t k = 1; k + 1 < p; ++k) sum += diag[k];
    s.beta_n = sum / static_cast<double>(p - 2);
    double osum = 0.0;
    for (double o : off) osum += o;
    s.gamma_n = osum / static_cast<double>(off.size());
  }
  if (!(s.beta_n > 0.0)) fail(ErrorCode::degenerate_design, "beta_n is zero: no design points in interior basis support");
  s.alpha_n = diag.front();
  s.alpha_n_last = diag.back();
  s.theta_n = s.alpha_n / s.beta_n;
  s.theta_n_last = s.alpha_n_last / s.beta_n;
  s.eta_n = s.gamma_n / s.beta_n;

  s.gram = BandedSymmetric(p, 1);
  for (std::size_t k = 0; k < p; ++k) s.gram.at(k, k) = diag[k] / s.beta_n;
  for (std::size_t k = 0; k + 1 < p; ++k) s.gram.at(k + 1, k) = off[k] / s.beta_n;

  s.d2 = difference_matrix(kn);
  apply_penalty(s, lambda_star);
  return s;
}

}  // namespace detail

/// Simulation-mode design at x_i = i/n; requires n >= 2 K_n and n/K_n integral.
inline DesignSystem build_design(const KnotGrid& grid, std::size_t n, double lambda_star) {
  if (n < 2 * grid.intervals) fail(ErrorCode::invalid_argument, "n must be at least 2 K_n");
  if (n % grid.intervals != 0) fail(ErrorCode::invalid_argument, "simulation mode needs n / K_n to be an integer");
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i + 1) / static_cast<double>(n);
  return detail::assemble(grid, std::move(x), DesignMode::simulation, lambda_star);
}

/// Real-data design at arbitrary points in [0,1]; Γ comes from X directly and
/// β_n is the mean interior squared column sum.
inline DesignSystem build_design(const KnotGrid& grid, std::span<const double> x, double lambda_star) {
  if (x.size() < grid.intervals + 2) fail(ErrorCode::invalid_argument, "need at least K_n + 2 design points");
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] < x[i - 1]) fail(ErrorCode::invalid_argument, "design points must be sorted");
  DesignSystem s = detail::assemble(grid, std::vector<double>(x.begin(), x.end()), DesignMode::real_data, lambda_star);
  s.warnings.push_back("real-data mode: design need not be i/n with n/K_n integral; Gram matrix computed from X directly");
  return s;
}

/// Copy of a design with a different smoothing parameter λ*.
inline DesignSystem with_lambda_star(DesignSystem s, double lambda_star) {
  detail::apply_penalty(s, lambda_star);
  return s;
}

}  // namespace cvxspline
