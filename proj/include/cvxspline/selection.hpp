#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "cvxspline/design.hpp"
#include "cvxspline/error.hpp"
#include "cvxspline/parallel.hpp"
#include "cvxspline/rng.hpp"

namespace cvxspline {

// Index conventions: constraint i (0-based) is row i of D₂ and involves
// coefficients i, i+1, i+2; an active constraint makes node i+1 a basic variable.

/// Maximal run of nodes between consecutive unit gaps of the free-node sequence.
struct SelectionBlock {
  std::size_t first = 0;           ///< first node (0-based)
  std::size_t last = 0;            ///< last node, inclusive
  std::vector<std::size_t> gaps;   ///< h_{k,j} between successive free nodes; empty for a singleton

  std::size_t size() const noexcept { return last - first + 1; }
  std::size_t width() const noexcept { return gaps.size(); }  ///< w_k
};

struct SelectionStructure {
  std::size_t intervals = 0;
  std::vector<std::size_t> alpha;         ///< sorted active constraint indices
  std::vector<std::size_t> free_nodes;    ///< i_1 < ... < i_ℓ (0-based)
  std::vector<SelectionBlock> blocks;
  Eigen::MatrixXd f;                      ///< F_α, ℓ × (K_n+1)

  std::size_t num_free() const noexcept { return free_nodes.size(); }
};

inline std::uint64_t alpha_hash(const std::vector<std::size_t>& alpha) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (v >> (8 * byte)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(alpha.size());
  for (auto a : alpha) mix(a);
  return h;
}

inline std::string alpha_hash_hex(const std::vector<std::size_t>& alpha) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(alpha_hash(alpha)));
  return buf;
}

inline SelectionStructure build_selection(std::vector<std::size_t> alpha, std::size_t intervals) {
  if (intervals < 2) fail(ErrorCode::invalid_argument, "K_n must be at least 2");
  const std::size_t m = intervals - 1;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] >= m) fail(ErrorCode::invalid_argument, "alpha index out of range");
    if (i > 0 && alpha[i] <= alpha[i - 1]) fail(ErrorCode::invalid_argument, "alpha must be strictly increasing");
  }
  SelectionStructure sel;
  sel.intervals = intervals;
  sel.alpha = std::move(alpha);
  const std::size_t p = intervals + 1;
  std::vector<bool> basic(p, false);
  for (auto i : sel.alpha) basic[i + 1] = true;
  for (std::size_t a = 0; a < p; ++a)
    if (!basic[a]) sel.free_nodes.push_back(a);

  const auto& nodes = sel.free_nodes;
  const std::size_t l = nodes.size();
  sel.f = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p));
  for (std::size_t s = 0; s < l; ++s) {
    const auto row = static_cast<Eigen::Index>(s);
    sel.f(row, static_cast<Eigen::Index>(nodes[s])) = 1.0;
    if (s > 0) {
      const double h = static_cast<double>(nodes[s] - nodes[s - 1]);
      for (std::size_t a = nodes[s - 1] + 1; a < nodes[s]; ++a)
        sel.f(row, static_cast<Eigen::Index>(a)) = static_cast<double>(a - nodes[s - 1]) / h;
    }
    if (s + 1 < l) {
      const double h = static_cast<double>(nodes[s + 1] - nodes[s]);
      for (std::size_t a = nodes[s] + 1; a < nodes[s + 1]; ++a)
        sel.f(row, static_cast<Eigen::Index>(a)) = static_cast<double>(nodes[s + 1] - a) / h;
    }
  }

  // Blocks split the node line at every unit gap between free nodes.
  SelectionBlock cur;
  cur.first = nodes.front();
  for (std::size_t s = 1; s < l; ++s) {
    const std::size_t gap = nodes[s] - nodes[s - 1];
    if (gap == 1) {
      cur.last = nodes[s - 1];
      sel.blocks.push_back(cur);
      cur = SelectionBlock{};
      cur.first = nodes[s];
    } else {
      cur.gaps.push_back(gap);
    }
  }
  cur.last = nodes.back();
  sel.blocks.push_back(cur);
  return sel;
}

struct StructureReport {
  Eigen::MatrixXd g;             ///< F_α Γ F_αᵀ
  Eigen::MatrixXd h;             ///< (F_α D₂ᵀ)(F_α D₂ᵀ)ᵀ
  Eigen::VectorXd xi;            ///< dominance margins of G
  Eigen::VectorXd xi_tilde;      ///< dominance margins of G + λH
  double lipschitz_norm = 0.0;   ///< ‖F_αᵀ (F_α Λ F_αᵀ)⁻¹ F_α‖∞
  double ft_norm = 0.0;          ///< ‖F_αᵀ‖∞
  double scaled_f_norm = 0.0;    ///< ‖Ξ F_α‖∞ (meaningful when dominance_ok)
  double e_inverse_norm = 0.0;   ///< ‖(Ξ F_α Λ F_αᵀ)⁻¹‖∞
  double e_unit_margin_error = 0.0;  ///< max |E_ii − Σ|E_ij| − 1|
  bool dominance_ok = false;     ///< all ξ̃_i > 0
  bool g_dominance_ok = false;   ///< all ξ_i > 0
  bool g_tridiagonal = false;
  bool h_bounds_ok = false;      ///< bandwidth 2 and entry bounds 6 / 4 / 1
  double min_xi = 0.0;
  double min_xi_tilde = 0.0;
};

namespace detail {

inline Eigen::VectorXd dominance_margins(const Eigen::MatrixXd& a) {
  Eigen::VectorXd xi(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (j != i) off += std::abs(a(i, j));
    xi[i] = std::abs(a(i, i)) - off;
  }
  return xi;
}

inline double inf_norm(const Eigen::MatrixXd& a) {
  return a.rows() ? a.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
}

}  // namespace detail

inline StructureReport structure_report(const SelectionStructure& sel, const DesignSystem& system) {
  if (sel.intervals != system.intervals())
    fail(ErrorCode::invalid_argument, "selection structure and design have different K_n");
  StructureReport rep;
  const Eigen::MatrixXd& f = sel.f;
  const Eigen::MatrixXd gamma = system.gram.dense();
  const Eigen::MatrixXd lam = system.system.dense();
  const Eigen::MatrixXd fd = f * system.d2.transpose();
  rep.g = f * gamma * f.transpose();
  rep.h = fd * fd.transpose();
  const Eigen::MatrixXd reduced = f * lam * f.transpose();

  rep.xi = detail::dominance_margins(rep.g);
  rep.xi_tilde = detail::dominance_margins(reduced);
  rep.min_xi = rep.xi.minCoeff();
  rep.min_xi_tilde = rep.xi_tilde.minCoeff();
  rep.g_dominance_ok = rep.min_xi > 0.0;
  rep.dominance_ok = rep.min_xi_tilde > 0.0;

  const Eigen::Index l = rep.g.rows();
  const double exact_zero_tol = 1e-14;
  rep.g_tridiagonal = true;
  rep.h_bounds_ok = true;
  const double slack = 1e-12;
  for (Eigen::Index i = 0; i < l; ++i)
    for (Eigen::Index j = 0; j < l; ++j) {
      const Eigen::Index d = i > j ? i - j : j - i;
      if (d >= 2 && std::abs(rep.g(i, j)) > exact_zero_tol) rep.g_tridiagonal = false;
      const double hij = rep.h(i, j);
      if (d == 0 && (hij < -slack || hij > 6.0 + slack)) rep.h_bounds_ok = false;
      if (d == 1 && std::abs(hij) > 4.0 + slack) rep.h_bounds_ok = false;
      if (d == 2 && std::abs(hij) > 1.0 + slack) rep.h_bounds_ok = false;
      if (d >= 3 && std::abs(hij) > exact_zero_tol) rep.h_bounds_ok = false;
    }

  const Eigen::MatrixXd inv = reduced.ldlt().solve(Eigen::MatrixXd::Identity(l, l));
  rep.lipschitz_norm = detail::inf_norm(f.transpose() * inv * f);
  rep.ft_norm = detail::inf_norm(f.transpose());

  if (rep.dominance_ok) {
    const Eigen::VectorXd xi_inv = rep.xi_tilde.cwiseInverse();
    const Eigen::MatrixXd e = xi_inv.asDiagonal() * reduced;
    const Eigen::VectorXd unit = detail::dominance_margins(e);
    rep.e_unit_margin_error = (unit.array() - 1.0).abs().maxCoeff();
    rep.e_inverse_norm = detail::inf_norm(e.partialPivLu().inverse());
    rep.scaled_f_norm = detail::inf_norm(xi_inv.asDiagonal() * f);
  } else {
    rep.e_unit_margin_error = std::numeric_limits<double>::quiet_NaN();
    rep.e_inverse_norm = std::numeric_limits<double>::infinity();
    rep.scaled_f_norm = std::numeric_limits<double>::infinity();
  }
  return rep;
}

/// Linear selection piece b̂^α(ȳ) = F_αᵀ (F_α Λ F_αᵀ)⁻¹ F_α ȳ.
inline Eigen::VectorXd selection_function(const SelectionStructure& sel, const DesignSystem& system,
                                          const Eigen::VectorXd& ybar) {
  const Eigen::MatrixXd reduced = sel.f * system.system.dense() * sel.f.transpose();
  return sel.f.transpose() * reduced.ldlt().solve(sel.f * ybar);
}

/// λ given either as a number or as the estimator's own choice 1/K_n.
struct LambdaChoice {
  double value = 0.0;
  bool inverse_k = false;

  double resolve(std::size_t intervals) const { return inverse_k ? 1.0 / static_cast<double>(intervals) : value; }
  std::string label() const { return inverse_k ? std::string("1/K") : std::to_string(value); }
};

/// Exhaustive enumeration for K_n ≤ exhaustive_max, otherwise the structured
/// extremes (∅, full, both alternations) plus `samples` Bernoulli(1/2) draws.
inline std::vector<std::vector<std::size_t>> sample_alphas(std::size_t intervals, std::size_t samples,
                                                           std::uint64_t seed, std::size_t exhaustive_max = 10) {
  const std::size_t m = intervals - 1;
  std::vector<std::vector<std::size_t>> out;
  if (intervals <= exhaustive_max) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
      std::vector<std::size_t> a;
      for (std::size_t i = 0; i < m; ++i)
        if (mask & (std::uint64_t{1} << i)) a.push_back(i);
      out.push_back(std::move(a));
    }
    return out;
  }
  std::vector<std::size_t> full, even, odd;
  for (std::size_t i = 0; i < m; ++i) {
    full.push_back(i);
    (i % 2 == 0 ? even : odd).push_back(i);
  }
  out.push_back({});
  out.push_back(full);
  out.push_back(even);
  out.push_back(odd);
  const CounterStream rng = CounterStream::keyed(seed, intervals, 0xa1fa);
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<std::size_t> a;
    for (std::size_t i = 0; i < m; ++i)
      if (rng.bernoulli_half(s * m + i)) a.push_back(i);
    out.push_back(std::move(a));
  }
  return out;
}

struct ScanRecord {
  std::size_t intervals = 0;
  std::size_t points_per_interval = 0;
  double lambda = 0.0;
  std::vector<std::size_t> alpha;
  double lipschitz_norm = 0.0;
  double min_xi = 0.0;
  double min_xi_tilde = 0.0;
  bool dominance_ok = false;
  bool g_dominance_ok = false;
  bool g_tridiagonal = false;
  bool h_bounds_ok = false;
  double scaled_f_norm = 0.0;
  double e_inverse_norm = 0.0;
};

struct ScanCell {
  std::size_t intervals = 0;
  std::size_t points_per_interval = 0;
  double lambda = 0.0;
  std::size_t num_alpha = 0;
  double max_lipschitz = 0.0;
  std::vector<std::size_t> argmax_alpha;
  double min_xi = std::numeric_limits<double>::infinity();
  double min_xi_tilde = std::numeric_limits<double>::infinity();
  std::size_t dominance_violations = 0;
  std::size_t g_violations = 0;         ///< G not tridiagonal or some ξ_i ≤ 0
  std::size_t h_violations = 0;
  double max_scaled_f_norm = 0.0;
  double max_e_inverse_norm = 0.0;
};

struct ScanConfig {
  std::vector<std::size_t> intervals;
  std::vector<std::size_t> points_per_interval;
  std::vector<LambdaChoice> lambdas;
  std::size_t samples = 200;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::size_t exhaustive_max = 10;
  std::size_t min_points_per_interval = 8;
  double lambda_bar = 0.5;  ///< largest admissible λ
};

struct ScanResult {
  std::vector<ScanCell> cells;
  std::vector<ScanRecord> records;  ///< ordered by cell, then by α enumeration order
};

/// Structural and Lipschitz scan over (K_n, M_n, λ) cells and their α sets.
inline ScanResult lipschitz_scan(const ScanConfig& cfg) {
  struct Job {
    std::size_t cell;
    const std::vector<std::size_t>* alpha;
  };
  for (auto mn : cfg.points_per_interval)
    if (mn < cfg.min_points_per_interval)
      fail(ErrorCode::invalid_argument, "scan needs M_n >= " + std::to_string(cfg.min_points_per_interval));
  for (auto k : cfg.intervals)
    for (const auto& lc : cfg.lambdas)
      if (lc.resolve(k) > cfg.lambda_bar)
        fail(ErrorCode::invalid_argument, "scan lambda exceeds the admissible bound " + std::to_string(cfg.lambda_bar));
  ScanResult result;
  std::vector<DesignSystem> designs;
  std::vector<std::vector<std::vector<std::size_t>>> alpha_sets;
  for (auto k : cfg.intervals) {
    const KnotGrid grid = build_knots(k);
    alpha_sets.push_back(sample_alphas(k, cfg.samples, cfg.seed, cfg.exhaustive_max));
    for (auto mn : cfg.points_per_interval)
      for (const auto& lc : cfg.lambdas) {
        DesignSystem probe = build_design(grid, mn * k, 0.0);
        const double lambda = lc.resolve(k);
        designs.push_back(build_design(grid, mn * k, lambda * probe.beta_n));
        ScanCell c;
        c.intervals = k;
        c.points_per_interval = mn;
        c.lambda = lambda;
        result.cells.push_back(c);
      }
  }
  std::vector<Job> jobs;
  {
    std::size_t cell = 0;
    for (std::size_t ki = 0; ki < cfg.intervals.size(); ++ki)
      for (std::size_t r = 0; r < cfg.points_per_interval.size() * cfg.lambdas.size(); ++r, ++cell)
        for (const auto& a : alpha_sets[ki]) jobs.push_back({cell, &a});
  }
  result.records.resize(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    const DesignSystem& sys = designs[job.cell];
    const SelectionStructure sel = build_selection(*job.alpha, sys.intervals());
    const StructureReport rep = structure_report(sel, sys);
    ScanRecord& rec = result.records[j];
    rec.intervals = sys.intervals();
    rec.points_per_interval = sys.n() / sys.intervals();
    rec.lambda = sys.lambda;
    rec.alpha = *job.alpha;
    rec.lipschitz_norm = rep.lipschitz_norm;
    rec.min_xi = rep.min_xi;
    rec.min_xi_tilde = rep.min_xi_tilde;
    rec.dominance_ok = rep.dominance_ok;
    rec.g_dominance_ok = rep.g_dominance_ok;
    rec.g_tridiagonal = rep.g_tridiagonal;
    rec.h_bounds_ok = rep.h_bounds_ok;
    rec.scaled_f_norm = rep.scaled_f_norm;
    rec.e_inverse_norm = rep.e_inverse_norm;
  });
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const ScanRecord& rec = result.records[j];
    ScanCell& c = result.cells[jobs[j].cell];
    ++c.num_alpha;
    if (rec.lipschitz_norm > c.max_lipschitz) {
      c.max_lipschitz = rec.lipschitz_norm;
      c.argmax_alpha = rec.alpha;
    }
    c.min_xi = std::min(c.min_xi, rec.min_xi);
    c.min_xi_tilde = std::min(c.min_xi_tilde, rec.min_xi_tilde);
    if (!rec.dominance_ok) ++c.dominance_violations;
    if (!rec.g_dominance_ok || !rec.g_tridiagonal) ++c.g_violations;
    if (!rec.h_bounds_ok) ++c.h_violations;
    if (rec.dominance_ok) {
      c.max_scaled_f_norm = std::max(c.max_scaled_f_norm, rec.scaled_f_norm);
      c.max_e_inverse_norm = std::max(c.max_e_inverse_norm, rec.e_inverse_norm);
    }
  }
  return result;
}

/// Smallest M_n in [lo, hi] for which G is strictly dominant for every α in the
/// given list, found by bisection (assumes the property is monotone in M_n).
/// Returns hi + 1 when even hi fails.
inline std::size_t probe_min_points_per_interval(std::size_t intervals,
                                                 const std::vector<std::vector<std::size_t>>& alphas,
                                                 std::size_t lo = 2, std::size_t hi = 64) {
  const KnotGrid grid = build_knots(intervals);
  auto ok = [&](std::size_t mn) {
    const DesignSystem sys = build_design(grid, mn * intervals, 0.0);
    for (const auto& a : alphas) {
      const StructureReport rep = structure_report(build_selection(a, intervals), sys);
      if (!rep.g_dominance_ok) return false;
    }
    return true;
  };
  if (!ok(hi)) return hi + 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (ok(mid))
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

}  // namespace cvxspline
