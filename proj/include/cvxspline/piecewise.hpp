#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cvxspline/error.hpp"

namespace cvxspline {

/// Continuous piecewise polynomial of degree ≤ 2. On piece i the function is
/// a u² + b u + c with u = x − t_i (local coordinates at the left breakpoint).
class PiecewisePolyFn {
 public:
  struct Coef {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
  };

  PiecewisePolyFn() = default;

  PiecewisePolyFn(std::vector<double> breaks, std::vector<Coef> coefs)
      : breaks_(std::move(breaks)), coefs_(std::move(coefs)) {
    if (breaks_.size() < 2 || coefs_.size() + 1 != breaks_.size())
      fail(ErrorCode::invalid_argument, "piecewise function needs n+1 breakpoints for n pieces");
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      if (!(breaks_[i] > breaks_[i - 1])) fail(ErrorCode::invalid_argument, "breakpoints must be strictly increasing");
    double scale = 1.0;
    for (const auto& c : coefs_) scale = std::max(scale, std::abs(c.c));
    for (std::size_t i = 0; i + 1 < coefs_.size(); ++i) {
      const double left = eval_piece(i, breaks_[i + 1]);
      if (std::abs(left - coefs_[i + 1].c) > 1e-12 * scale)
        fail(ErrorCode::invalid_argument, "piecewise function is discontinuous at a breakpoint");
    }
  }

  /// Piecewise-linear interpolant of (nodes, values).
  static PiecewisePolyFn linear_interpolant(std::span<const double> nodes, std::span<const double> values) {
    if (nodes.size() != values.size() || nodes.size() < 2)
      fail(ErrorCode::invalid_argument, "interpolant needs matching nodes and values");
    std::vector<double> br(nodes.begin(), nodes.end());
    std::vector<Coef> cf;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
      cf.push_back({0.0, (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i]), values[i]});
    return PiecewisePolyFn(std::move(br), std::move(cf));
  }

  /// Exact antiderivative F(x) = F(t_0) + ∫ f of a piecewise-linear f.
  PiecewisePolyFn antiderivative(double initial = 0.0) const {
    if (degree() > 1) fail(ErrorCode::invalid_argument, "antiderivative implemented for piecewise-linear functions");
    std::vector<Coef> cf;
    double acc = initial;
    for (std::size_t i = 0; i < coefs_.size(); ++i) {
      const double h = breaks_[i + 1] - breaks_[i];
      const Coef& g = coefs_[i];
      cf.push_back({0.5 * g.b, g.c, acc});
      acc += g.c * h + 0.5 * g.b * h * h;
    }
    return PiecewisePolyFn(breaks_, std::move(cf));
  }

  std::size_t num_pieces() const noexcept { return coefs_.size(); }
  const std::vector<double>& breakpoints() const noexcept { return breaks_; }
  const std::vector<Coef>& coefficients() const noexcept { return coefs_; }
  double lower() const { return breaks_.front(); }
  double upper() const { return breaks_.back(); }

  int degree() const {
    int d = 0;
    for (const auto& c : coefs_) {
      if (c.a != 0.0) return 2;
      if (c.b != 0.0) d = 1;
    }
    return d;
  }

  /// Piece containing x; right-continuous convention, the last piece is closed.
  std::size_t piece_index(double x) const {
    if (x <= breaks_.front()) return 0;
    if (x >= breaks_.back()) return coefs_.size() - 1;
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), x);
    return static_cast<std::size_t>(it - breaks_.begin()) - 1;
  }

  double operator()(double x) const { return eval_piece(piece_index(x), x); }

  /// Right derivative (left derivative at the upper end).
  double derivative(double x) const { return deriv_piece(piece_index(x), x); }

  double derivative_left(double x) const {
    std::size_t i = piece_index(x);
    if (i > 0 && x <= breaks_[i]) --i;
    return deriv_piece(i, x);
  }

  double eval_piece(std::size_t i, double x) const {
    const double u = x - breaks_[i];
    const Coef& c = coefs_[i];
    return (c.a * u + c.b) * u + c.c;
  }

  double deriv_piece(std::size_t i, double x) const {
    const double u = x - breaks_[i];
    return 2.0 * coefs_[i].a * u + coefs_[i].b;
  }

 private:
  std::vector<double> breaks_;
  std::vector<Coef> coefs_;
};

/// f − g on the merged breakpoint set; both must share the same domain.
inline PiecewisePolyFn difference(const PiecewisePolyFn& f, const PiecewisePolyFn& g) {
  if (std::abs(f.lower() - g.lower()) > 1e-15 || std::abs(f.upper() - g.upper()) > 1e-15)
    fail(ErrorCode::invalid_argument, "difference of functions with different domains");
  std::vector<double> merged;
  merged.reserve(f.breakpoints().size() + g.breakpoints().size());
  std::merge(f.breakpoints().begin(), f.breakpoints().end(), g.breakpoints().begin(), g.breakpoints().end(),
             std::back_inserter(merged));
  std::vector<double> br;
  for (double t : merged)
    if (br.empty() || t - br.back() > 1e-14) br.push_back(t);
  if (br.size() < 2) fail(ErrorCode::invalid_argument, "degenerate domain");
  br.back() = f.upper();

  auto shifted = [](const PiecewisePolyFn& h, double lo, double hi) {
    const std::size_t i = h.piece_index(0.5 * (lo + hi));
    const auto& c = h.coefficients()[i];
    const double d = lo - h.breakpoints()[i];
    return PiecewisePolyFn::Coef{c.a, 2.0 * c.a * d + c.b, (c.a * d + c.b) * d + c.c};
  };
  std::vector<PiecewisePolyFn::Coef> cf;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    const auto cfi = shifted(f, br[i], br[i + 1]);
    const auto cgi = shifted(g, br[i], br[i + 1]);
    cf.push_back({cfi.a - cgi.a, cfi.b - cgi.b, cfi.c - cgi.c});
  }
  return PiecewisePolyFn(std::move(br), std::move(cf));
}

struct SupNorm {
  double value = 0.0;
  double location = 0.0;
};

/// Exact sup |f| from piece endpoints and interior vertices.
inline SupNorm sup_abs(const PiecewisePolyFn& f) {
  SupNorm best{-1.0, f.lower()};
  auto consider = [&best](double v, double x) {
    if (std::abs(v) > best.value) best = {std::abs(v), x};
  };
  const auto& br = f.breakpoints();
  for (std::size_t i = 0; i < f.num_pieces(); ++i) {
    const auto& c = f.coefficients()[i];
    const double h = br[i + 1] - br[i];
    consider(c.c, br[i]);
    consider(f.eval_piece(i, br[i + 1]), br[i + 1]);
    if (c.a != 0.0) {
      const double u = -c.b / (2.0 * c.a);
      if (u > 0.0 && u < h) consider(f.eval_piece(i, br[i] + u), br[i] + u);
    }
  }
  return best;
}

/// ∫ f² by 5-point Gauss–Legendre on each piece.
inline double integrate_square(const PiecewisePolyFn& f) {
  static constexpr std::array<double, 5> nodes = {0.0, -0.5384693101056831, 0.5384693101056831,
                                                  -0.9061798459386640, 0.9061798459386640};
  static constexpr std::array<double, 5> weights = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                                    0.2369268850561891, 0.2369268850561891};
  double total = 0.0;
  const auto& br = f.breakpoints();
  for (std::size_t i = 0; i < f.num_pieces(); ++i) {
    const double mid = 0.5 * (br[i] + br[i + 1]);
    const double half = 0.5 * (br[i + 1] - br[i]);
    double s = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double v = f.eval_piece(i, mid + half * nodes[q]);
      s += weights[q] * v * v;
    }
    total += half * s;
  }
  return total;
}

/// True iff f′ is nondecreasing within and across pieces (and f is continuous).
inline bool convexity_check(const PiecewisePolyFn& f) {
  double scale = 1.0;
  for (const auto& c : f.coefficients()) scale = std::max({scale, std::abs(c.b), std::abs(c.c)});
  const double tol = 1e-12 * scale;
  const auto& br = f.breakpoints();
  for (std::size_t i = 0; i < f.num_pieces(); ++i) {
    if (f.coefficients()[i].a < -tol) return false;
    if (i + 1 < f.num_pieces()) {
      if (std::abs(f.eval_piece(i, br[i + 1]) - f.coefficients()[i + 1].c) > tol) return false;
      if (f.deriv_piece(i + 1, br[i + 1]) < f.deriv_piece(i, br[i + 1]) - tol) return false;
    }
  }
  return true;
}

struct HolderReport {
  double max_ratio = 0.0;
  double x = 0.0;
  double y = 0.0;
  bool pass = false;
};

/// max |f′(x) − f′(y)| / |x − y|^{r−1} over a uniform grid plus all breakpoints.
inline HolderReport verify_holder(const PiecewisePolyFn& f, double r, double holder_constant,
                                  std::size_t grid_size = 2048) {
  if (!(r > 1.0 && r <= 2.0)) fail(ErrorCode::invalid_argument, "Hölder order r must lie in (1,2]");
  if (grid_size < 2) fail(ErrorCode::invalid_argument, "grid_size must be at least 2");
  const double gamma = r - 1.0;
  std::vector<double> pts;
  const double lo = f.lower(), hi = f.upper();
  for (std::size_t i = 0; i < grid_size; ++i)
    pts.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_size - 1));
  pts.insert(pts.end(), f.breakpoints().begin(), f.breakpoints().end());
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end(), [](double a, double b) { return std::abs(a - b) < 1e-15; }),
            pts.end());
  std::vector<double> d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d[i] = f.derivative(pts[i]);
  HolderReport rep;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double ratio = std::abs(d[j] - d[i]) / std::pow(pts[j] - pts[i], gamma);
      if (ratio > rep.max_ratio) rep = {ratio, pts[i], pts[j], false};
    }
  rep.pass = rep.max_ratio <= holder_constant * (1.0 + 1e-9);
  return rep;
}

}  // namespace cvxspline
