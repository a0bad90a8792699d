#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvxspline/design.hpp"
#include "cvxspline/error.hpp"
#include "cvxspline/piecewise.hpp"
#include "cvxspline/qp.hpp"

namespace cvxspline {

struct FitConfig {
  double r = 2.0;                            ///< assumed Hölder order
  std::optional<std::size_t> K_n;            ///< overrides the tuning rule
  std::optional<double> lambda_star;         ///< overrides λ* = β_n / K_n
  std::optional<double> sigma_known;         ///< recorded only

  void validate() const {
    if (!(r > 1.0 && r <= 2.0)) fail(ErrorCode::invalid_argument, "r must lie in (1,2]");
    if (K_n && *K_n < 2) fail(ErrorCode::invalid_argument, "K_n override must be at least 2");
    if (lambda_star && !(*lambda_star >= 0.0 && std::isfinite(*lambda_star)))
      fail(ErrorCode::invalid_argument, "lambda_star override must be finite and nonnegative");
    if (sigma_known && !(*sigma_known > 0.0)) fail(ErrorCode::invalid_argument, "sigma must be positive");
  }
};

/// K_n from the rate-optimal rule; λ* is materialized once β_n is known.
struct Tuning {
  std::size_t K_n = 0;
  double exponent = 0.0;  ///< 1/(2r+1)

  double lambda_star(double beta_n) const { return beta_n / static_cast<double>(K_n); }
};

/// K_n = ⌈(n / log n)^{1/(2r+1)}⌉ with natural log, floored at 2.
inline Tuning choose_tuning(std::size_t n, double r) {
  if (n < 16) fail(ErrorCode::sample_too_small, "tuning rule needs n >= 16");
  if (!(r > 1.0 && r <= 2.0)) fail(ErrorCode::invalid_argument, "r must lie in (1,2]");
  const double nn = static_cast<double>(n);
  Tuning t;
  t.exponent = 1.0 / (2.0 * r + 1.0);
  t.K_n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(std::pow(nn / std::log(nn), t.exponent))));
  return t;
}

struct FitDiagnostics {
  KktResiduals kkt;
  double kkt_tolerance = 0.0;
  std::size_t active_set_size = 0;
  std::size_t iterations = 0;
  double lambda = 0.0;
  double lambda_star = 0.0;
  bool tuned_K_n = true;
  bool tuned_lambda = true;
  bool convex = false;
};

struct FitResult {
  Eigen::VectorXd coefficients;
  DesignSystem system;
  QPSolution solution;
  PiecewisePolyFn fitted_fn;
  FitDiagnostics diagnostics;
};

namespace detail {

inline PiecewisePolyFn spline_function(const KnotGrid& grid, const Eigen::VectorXd& b) {
  std::vector<double> nodes(grid.num_basis()), values(grid.num_basis());
  for (std::size_t k = 0; k < grid.num_basis(); ++k) {
    nodes[k] = grid.knot(static_cast<long>(k));
    values[k] = b[static_cast<Eigen::Index>(k)];
  }
  nodes.back() = 1.0;
  return PiecewisePolyFn::linear_interpolant(nodes, values);
}

inline bool is_uniform_design(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != static_cast<double>(i + 1) / n) return false;
  return true;
}

}  // namespace detail

/// Solves the convex P-spline QP on a prepared design with response y.
inline FitResult fit_system(DesignSystem system, std::span<const double> y) {
  const QPProblem problem = make_problem(system, system.weighted_response(y));
  QPSolution sol = solve(problem);
  FitResult res;
  res.coefficients = sol.b_hat;
  res.fitted_fn = detail::spline_function(system.grid, sol.b_hat);
  res.diagnostics.kkt = sol.residuals;
  res.diagnostics.kkt_tolerance = kkt_tolerance(problem);
  res.diagnostics.active_set_size = sol.active_set.size();
  res.diagnostics.iterations = sol.iterations;
  res.diagnostics.lambda = system.lambda;
  res.diagnostics.lambda_star = system.lambda_star;
  res.diagnostics.convex = convexity_check(res.fitted_fn);
  res.solution = std::move(sol);
  res.system = std::move(system);
  return res;
}

/// Fits a convex linear spline to (x, y). Points exactly at i/n with n/K_n
/// integral use the simulation design; anything else uses the real-data design.
inline FitResult fit(std::span<const double> x, std::span<const double> y, const FitConfig& config) {
  config.validate();
  if (x.size() != y.size()) fail(ErrorCode::invalid_argument, "x and y must have the same length");
  if (x.empty()) fail(ErrorCode::invalid_argument, "no data");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && x[i] <= 1.0)) fail(ErrorCode::invalid_argument, "x values must lie in (0,1]");
    if (!std::isfinite(y[i])) fail(ErrorCode::invalid_argument, "y values must be finite");
  }
  const std::size_t n = x.size();
  const std::size_t kn = config.K_n ? *config.K_n : choose_tuning(n, config.r).K_n;
  if (n < kn + 2) fail(ErrorCode::sample_too_small, "need at least K_n + 2 observations");
  const KnotGrid grid = build_knots(kn);
  DesignSystem system = (n % kn == 0 && n >= 2 * kn && detail::is_uniform_design(x))
                            ? build_design(grid, n, 0.0)
                            : build_design(grid, x, 0.0);
  const double lambda_star = config.lambda_star ? *config.lambda_star : system.beta_n / static_cast<double>(kn);
  detail::apply_penalty(system, lambda_star);
  FitResult res = fit_system(std::move(system), y);
  res.diagnostics.tuned_K_n = !config.K_n.has_value();
  res.diagnostics.tuned_lambda = !config.lambda_star.has_value();
  return res;
}

/// f̂(x) by linear interpolation of the coefficients.
inline double predict(const FitResult& result, double x) {
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::invalid_argument, "prediction point outside [0,1]");
  const DesignRow row = design_row(result.system.intervals(), x);
  return row.w0 * result.coefficients[static_cast<Eigen::Index>(row.first)] +
         row.w1 * result.coefficients[static_cast<Eigen::Index>(row.first + 1)];
}

/// Fit against noise-free responses f(i/n); the reference f̄ for bias and
/// stochastic error decomposition. Without λ* the rule β_n / K_n applies.
inline FitResult noise_free_fit(const std::function<double(double)>& truth, std::size_t n, std::size_t intervals,
                                std::optional<double> lambda_star = std::nullopt) {
  DesignSystem system = build_design(build_knots(intervals), n, 0.0);
  detail::apply_penalty(system, lambda_star ? *lambda_star : system.beta_n / static_cast<double>(intervals));
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = truth(system.x[i]);
  return fit_system(std::move(system), y);
}

}  // namespace cvxspline
