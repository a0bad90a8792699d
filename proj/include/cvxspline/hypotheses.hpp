#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cvxspline/error.hpp"
#include "cvxspline/piecewise.hpp"

namespace cvxspline {

/// Parameters of the lower-bound hypothesis family.
struct FamilyParams {
  double r = 2.0;
  double gamma = 1.0;      ///< r − 1
  double L = 1.0;
  double c0 = 0.0625;
  double p_star = 0.5;
  double K_n = 0.0;        ///< real scale, not necessarily an integer
  std::size_t M_n = 0;     ///< number of perturbed members
  double L_bar = 0.0;
  double s_n = 0.0;        ///< half the pairwise separation
  double period = 0.0;     ///< width of one repetition of g_0
  double unit = 0.0;       ///< 1/K_n
  double slope = 0.0;      ///< slope of the rising pieces of g

  bool unit_holder_case() const noexcept { return gamma == 1.0; }
};

/// K_n = (n / log n)^{1/(2r+1)}.
inline double family_scale(double n, double r) { return std::pow(n / std::log(n), 1.0 / (2.0 * r + 1.0)); }

/// Resolves L̄, M_n and the block geometry.
///
/// For γ ∈ (0,1) the blocks have width K_n^{−γ} and M_n = ⌊K_n^γ⌋. For γ = 1
/// the blocks have width 4/K_n, so only ⌊K_n/4⌋ of them lie inside [0,1];
/// M_n is capped there so every member differs from f_0 by a full block.
inline FamilyParams make_family_params(double r, double L, double c0, double p_star, double K_n) {
  if (!(r > 1.0 && r <= 2.0)) fail(ErrorCode::invalid_argument, "r must lie in (1,2]");
  if (!(L > 0.0)) fail(ErrorCode::invalid_argument, "L must be positive");
  if (!(c0 > 0.0 && c0 < 0.125)) fail(ErrorCode::invalid_argument, "c0 must lie in (0, 1/8)");
  if (!(p_star > 0.0)) fail(ErrorCode::invalid_argument, "p_star must be positive");
  if (!(K_n > 0.0) || !std::isfinite(K_n)) fail(ErrorCode::invalid_argument, "K_n must be positive");
  FamilyParams p;
  p.r = r;
  p.gamma = r - 1.0;
  p.L = L;
  p.c0 = c0;
  p.p_star = p_star;
  p.K_n = K_n;
  p.unit = 1.0 / K_n;
  if (p.unit_holder_case()) {
    p.L_bar = std::min(L, std::sqrt(c0 / (12.0 * p_star)));
    p.period = 4.0 / K_n;
    p.slope = p.L_bar;
    p.M_n = static_cast<std::size_t>(std::floor(K_n / 4.0));
  } else {
    p.L_bar = std::min(L / 4.0, std::sqrt(c0 * p.gamma / (12.0 * p_star)));
    p.period = std::pow(K_n, -p.gamma);
    p.slope = p.L_bar * std::pow(K_n, 1.0 - p.gamma);
    p.M_n = static_cast<std::size_t>(std::floor(std::pow(K_n, p.gamma)));
  }
  p.s_n = 0.5 * p.L_bar * std::pow(K_n, -r);
  return p;
}

struct HypothesisFamily {
  FamilyParams params;
  std::vector<PiecewisePolyFn> derivatives;  ///< g_0, ..., g_{M_n}
  std::vector<PiecewisePolyFn> members;      ///< f_0, ..., f_{M_n}
};

namespace detail {

struct Segment {
  double x0, x1, v0, slope;
};

/// ḡ_j restricted to [0,1] as a chain of linear segments.
///
/// Segment ends are computed from integers where possible so consecutive
/// segments share their endpoint exactly.
inline std::vector<Segment> derivative_segments(const FamilyParams& p, std::size_t j) {
  const double step = p.slope * p.unit;  // rise of each ramp
  const bool unit_case = p.unit_holder_case();
  auto point = [&](std::size_t i, double m) {
    return unit_case ? (4.0 * static_cast<double>(i) + m) / p.K_n : static_cast<double>(i) * p.period + m / p.K_n;
  };
  auto block_end = [&](std::size_t i) {
    return unit_case ? 4.0 * static_cast<double>(i + 1) / p.K_n : static_cast<double>(i + 1) * p.period;
  };
  std::vector<Segment> out;
  double cursor = 0.0;
  auto push = [&](double x1, double v0, double slope) {
    x1 = std::min(x1, 1.0);
    if (x1 <= cursor) return;
    out.push_back({cursor, x1, v0, slope});
    cursor = x1;
  };
  for (std::size_t i = 0; cursor < 1.0; ++i) {
    const double lvl = 2.0 * static_cast<double>(i) * step;
    if (j >= 1 && i == j - 1) {
      push(point(i, 1.0), lvl, 0.0);
      push(point(i, 3.0), lvl, p.slope);
      push(block_end(i), lvl + 2.0 * step, 0.0);
    } else {
      push(point(i, 1.0), lvl, p.slope);
      push(point(i, 3.0), lvl + step, 0.0);
      push(point(i, 4.0), lvl + step, p.slope);
      push(block_end(i), lvl + 2.0 * step, 0.0);
    }
  }
  return out;
}

inline PiecewisePolyFn segments_to_fn(const std::vector<Segment>& segs) {
  std::vector<double> br;
  std::vector<PiecewisePolyFn::Coef> cf;
  br.push_back(segs.front().x0);
  for (const auto& s : segs) {
    br.push_back(s.x1);
    cf.push_back({0.0, s.slope, s.v0});
  }
  br.back() = 1.0;
  return PiecewisePolyFn(std::move(br), std::move(cf));
}

}  // namespace detail

inline HypothesisFamily build_family(const FamilyParams& params) {
  if (params.M_n < 2) fail(ErrorCode::family_too_small, "M_n < 2: K_n too small for a family");
  if (4.0 * params.unit > params.period * (1.0 + 1e-12))
    fail(ErrorCode::invalid_argument, "K_n^{1-γ} < 4: perturbation blocks would overlap; increase n");
  HypothesisFamily fam;
  fam.params = params;
  for (std::size_t j = 0; j <= params.M_n; ++j) {
    PiecewisePolyFn g = detail::segments_to_fn(detail::derivative_segments(params, j));
    fam.members.push_back(g.antiderivative(0.0));
    fam.derivatives.push_back(std::move(g));
  }
  return fam;
}

struct Separation {
  double value = 0.0;
  double location = 0.0;
};

/// Exact ‖f_j − f_k‖∞ by vertex analysis of the piecewise-quadratic difference.
inline Separation separation(const HypothesisFamily& fam, std::size_t j, std::size_t k) {
  if (j >= fam.members.size() || k >= fam.members.size()) fail(ErrorCode::invalid_argument, "member index out of range");
  if (j == k) return {0.0, 0.0};
  const SupNorm s = sup_abs(difference(fam.members[j], fam.members[k]));
  return {s.value, s.location};
}

/// Gaussian KL divergence K(P_j, P_0) = Σ_i (f_j(i/n) − f_0(i/n))² / (2σ²).
inline double kl_divergence(const HypothesisFamily& fam, std::size_t j, std::size_t n, double sigma) {
  if (j < 1 || j >= fam.members.size()) fail(ErrorCode::invalid_argument, "member index must be in 1..M_n");
  if (!(sigma > 0.0)) fail(ErrorCode::invalid_argument, "sigma must be positive");
  const PiecewisePolyFn d = difference(fam.members[j], fam.members[0]);
  const auto& br = d.breakpoints();
  double sum = 0.0;
  std::size_t piece = 0;
  const double nn = static_cast<double>(n);
  for (std::size_t i = 1; i <= n; ++i) {
    const double x = static_cast<double>(i) / nn;
    while (piece + 1 < d.num_pieces() && x >= br[piece + 1]) ++piece;
    const auto& c = d.coefficients()[piece];
    if (c.a == 0.0 && c.b == 0.0 && c.c == 0.0) continue;
    const double v = d.eval_piece(piece, x);
    sum += v * v;
  }
  return sum / (2.0 * sigma * sigma);
}

/// 2 L̄² K_n^{−(2γ+3)} (1/20 + 43/60), the closed form of ∫(f_1 − f_0)².
inline double closed_form_l2_gap(const FamilyParams& p) {
  return 2.0 * p.L_bar * p.L_bar * std::pow(p.K_n, -(2.0 * p.gamma + 3.0)) * (1.0 / 20.0 + 43.0 / 60.0);
}

struct FamilyVerification {
  FamilyParams params;
  std::size_t n = 0;
  double sigma = 1.0;
  // (C1)
  bool convex_all = false;
  double max_holder_ratio = 0.0;
  bool holder_all = false;
  bool c1 = false;
  // (C2)
  double expected_separation = 0.0;     ///< L̄ K_n^{−r}
  double min_separation = 0.0;
  double max_separation = 0.0;
  double max_separation_rel_error = 0.0;
  bool c2 = false;
  // (C3)
  std::vector<double> kl;               ///< K(P_j, P_0), j = 1..M_n
  double mean_kl = 0.0;
  double kl_bound = 0.0;                ///< c0 log M_n
  bool c3 = false;
  // closed-form integral
  double integral_quadrature = 0.0;
  double integral_closed_form = 0.0;
  double integral_rel_error = 0.0;
  bool integral_ok = false;
  // f_j(0) = 0 and a common value at 1
  bool endpoints_agree = false;

  bool all_pass() const { return c1 && c2 && c3 && integral_ok; }
};

/// Checks (C1)–(C3) and the closed-form integral with K_n = (n/log n)^{1/(2r+1)}.
inline FamilyVerification verify_family(double r, double L, double c0, double p_star, std::size_t n, double sigma,
                                        std::size_t holder_grid = 2048) {
  if (n < 3) fail(ErrorCode::invalid_argument, "n must be at least 3");
  FamilyVerification v;
  v.params = make_family_params(r, L, c0, p_star, family_scale(static_cast<double>(n), r));
  v.n = n;
  v.sigma = sigma;
  const HypothesisFamily fam = build_family(v.params);
  const auto& p = fam.params;

  v.convex_all = true;
  v.holder_all = true;
  for (const auto& f : fam.members) {
    v.convex_all = v.convex_all && convexity_check(f);
    const HolderReport h = verify_holder(f, r, L, holder_grid);
    v.max_holder_ratio = std::max(v.max_holder_ratio, h.max_ratio);
    v.holder_all = v.holder_all && h.pass;
  }
  v.c1 = v.convex_all && v.holder_all;

  v.expected_separation = p.L_bar * std::pow(p.K_n, -r);
  v.min_separation = INFINITY;
  for (std::size_t j = 0; j < fam.members.size(); ++j)
    for (std::size_t k = j + 1; k < fam.members.size(); ++k) {
      const double s = separation(fam, j, k).value;
      v.min_separation = std::min(v.min_separation, s);
      v.max_separation = std::max(v.max_separation, s);
      v.max_separation_rel_error =
          std::max(v.max_separation_rel_error, std::abs(s - v.expected_separation) / v.expected_separation);
    }
  v.c2 = v.max_separation_rel_error <= 1e-10;

  double total = 0.0;
  for (std::size_t j = 1; j < fam.members.size(); ++j) {
    v.kl.push_back(kl_divergence(fam, j, n, sigma));
    total += v.kl.back();
  }
  v.mean_kl = total / static_cast<double>(p.M_n);
  v.kl_bound = c0 * std::log(static_cast<double>(p.M_n));
  v.c3 = v.mean_kl <= v.kl_bound;

  v.integral_quadrature = integrate_square(difference(fam.members[1], fam.members[0]));
  v.integral_closed_form = closed_form_l2_gap(p);
  v.integral_rel_error = std::abs(v.integral_quadrature - v.integral_closed_form) / v.integral_closed_form;
  v.integral_ok = v.integral_rel_error <= 1e-8;

  v.endpoints_agree = true;
  const double f1 = fam.members[0](1.0);
  for (const auto& f : fam.members)
    v.endpoints_agree = v.endpoints_agree && f(0.0) == 0.0 && std::abs(f(1.0) - f1) <= 1e-13 * std::max(1.0, std::abs(f1));
  return v;
}

struct C3Threshold {
  double n_c3 = 0.0;          ///< smallest grid n where the closed-form KL bound is below c0 log M_n
  double n_log_ratio = 0.0;   ///< smallest grid n with log M_n ≥ (γ/6) log n
};

/// Report-only search over n = 10^{k/20}, k up to 20·max_log10, using
/// K(P_j,P_0) ≤ p*(n ∫(f_1−f_0)² + 2L̄²/K_n^{1+2γ}). Zero means not reached.
inline C3Threshold c3_threshold(double r, double L, double c0, double p_star, double max_log10 = 40.0) {
  C3Threshold t;
  for (int k = 40; k <= static_cast<int>(20.0 * max_log10); ++k) {
    const double n = std::pow(10.0, k / 20.0);
    FamilyParams p;
    try {
      p = make_family_params(r, L, c0, p_star, family_scale(n, r));
    } catch (const Error&) {
      continue;
    }
    if (p.M_n < 2 || 4.0 * p.unit > p.period) continue;
    const double logm = std::log(static_cast<double>(p.M_n));
    const double bound =
        p.p_star * (n * closed_form_l2_gap(p) + 2.0 * p.L_bar * p.L_bar * std::pow(p.K_n, -(1.0 + 2.0 * p.gamma)));
    if (t.n_c3 == 0.0 && bound <= c0 * logm) t.n_c3 = n;
    if (t.n_log_ratio == 0.0 && logm >= p.gamma / 6.0 * std::log(n)) t.n_log_ratio = n;
    if (t.n_c3 != 0.0 && t.n_log_ratio != 0.0) break;
  }
  return t;
}

}  // namespace cvxspline
