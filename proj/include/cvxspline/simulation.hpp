#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cvxspline/design.hpp"
#include "cvxspline/error.hpp"
#include "cvxspline/estimator.hpp"
#include "cvxspline/hypotheses.hpp"
#include "cvxspline/parallel.hpp"
#include "cvxspline/rng.hpp"

namespace cvxspline {

/// A regression function on [0,1] with the points where it is not smooth.
struct Truth {
  std::string name;
  std::function<double(double)> f;
  std::vector<double> breakpoints;

  double operator()(double x) const { return f(x); }
};

/// Named truths: "x2", "exp", "x1.5", "affine", "family" or "family:j".
///
/// "x1.5" is (L/1.5)·x^{1.5}, whose derivative has Hölder-(1/2) constant L.
/// "family:j" is member j (default 1) of the lower-bound family built with
/// c0 = 1/16, p* = 1/2 and K_n taken from n = 10⁶.
inline Truth make_truth(const std::string& name, double r = 2.0, double L = 1.0) {
  Truth t;
  t.name = name;
  if (name == "x2") {
    t.f = [](double x) { return x * x; };
  } else if (name == "exp") {
    t.f = [](double x) { return std::exp(x); };
  } else if (name == "x1.5") {
    const double c = L / 1.5;
    t.f = [c](double x) { return c * x * std::sqrt(x); };
  } else if (name == "affine") {
    t.f = [](double x) { return 0.5 + x; };
  } else if (name.rfind("family", 0) == 0) {
    std::size_t j = 1;
    if (name.size() > 6) {
      if (name[6] != ':') fail(ErrorCode::invalid_argument, "unknown truth '" + name + "'");
      try {
        j = static_cast<std::size_t>(std::stoul(name.substr(7)));
      } catch (const std::exception&) {
        fail(ErrorCode::invalid_argument, "bad family member index in '" + name + "'");
      }
    }
    const auto fam = std::make_shared<HypothesisFamily>(
        build_family(make_family_params(r, L, 1.0 / 16.0, 0.5, family_scale(1e6, r))));
    if (j >= fam->members.size()) fail(ErrorCode::invalid_argument, "family member index out of range");
    t.breakpoints = fam->members[j].breakpoints();
    t.f = [fam, j](double x) { return fam->members[j](x); };
  } else {
    fail(ErrorCode::invalid_argument, "unknown truth '" + name + "'");
  }
  return t;
}

struct SimulatedData {
  std::vector<double> x;
  std::vector<double> y;
};

/// x_i = i/n, y_i = f(x_i) + σ z_i with z from the stream keyed by (seed, n, replicate).
inline SimulatedData generate_data(const Truth& truth, std::size_t n, double sigma, std::uint64_t seed,
                                   std::uint64_t replicate = 0) {
  if (n < 2) fail(ErrorCode::invalid_argument, "n must be at least 2");
  if (!(sigma >= 0.0)) fail(ErrorCode::invalid_argument, "sigma must be nonnegative");
  const CounterStream stream = CounterStream::keyed(seed, n, replicate);
  SimulatedData d;
  d.x.resize(n);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.x[i] = static_cast<double>(i + 1) / static_cast<double>(n);
    d.y[i] = truth(d.x[i]);
    if (sigma > 0.0) d.y[i] += sigma * stream.normal(i);
  }
  return d;
}

/// max |f̂ − f| over a uniform grid of grid_size points on [0,1], the knots,
/// the endpoints and the truth's breakpoints.
inline double sup_norm_error(const FitResult& fitted, const Truth& truth, std::size_t grid_size) {
  if (grid_size < 2) fail(ErrorCode::invalid_argument, "eval grid needs at least 2 points");
  double worst = 0.0;
  auto consider = [&](double x) { worst = std::max(worst, std::abs(predict(fitted, x) - truth(x))); };
  const double step = 1.0 / static_cast<double>(grid_size - 1);
  for (std::size_t i = 0; i < grid_size; ++i) consider(std::min(1.0, static_cast<double>(i) * step));
  const KnotGrid& g = fitted.system.grid;
  for (std::size_t k = 0; k <= g.intervals; ++k) consider(std::min(1.0, g.knot(static_cast<long>(k))));
  consider(0.0);
  consider(1.0);
  for (double b : truth.breakpoints) consider(b);
  return worst;
}

struct RiskStudyConfig {
  std::string truth = "x2";
  double r = 2.0;
  double L = 2.0;
  double sigma = 0.1;
  std::vector<std::size_t> n_grid;
  std::size_t replicates = 100;
  std::uint64_t base_seed = 1;
  std::size_t eval_grid_size = 0;  ///< 0 selects 10·max n
  std::size_t threads = 1;

  void validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail(ErrorCode::invalid_argument, "sigma must be nonnegative");
    if (!(r > 1.0 && r <= 2.0)) fail(ErrorCode::invalid_argument, "r must lie in (1,2]");
    if (!(L > 0.0)) fail(ErrorCode::invalid_argument, "L must be positive");
    if (n_grid.empty()) fail(ErrorCode::invalid_argument, "n_grid must not be empty");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
      if (n_grid[i] <= n_grid[i - 1]) fail(ErrorCode::invalid_argument, "n_grid must be strictly increasing");
    if (replicates < 30) fail(ErrorCode::invalid_argument, "replicates must be at least 30");
    if (eval_grid_size == 1) fail(ErrorCode::invalid_argument, "eval_grid_size must be 0 or at least 2");
  }

  std::size_t resolved_eval_grid() const {
    return eval_grid_size ? eval_grid_size : 10 * *std::max_element(n_grid.begin(), n_grid.end());
  }
};

struct RiskRow {
  std::size_t n_requested = 0;
  std::size_t n = 0;                  ///< rounded up to a multiple of K_n
  std::size_t K_n = 0;
  double lambda_star = 0.0;
  double lambda = 0.0;
  double mean_sup_error = 0.0;
  double std_error = 0.0;             ///< standard error of the mean
  double median_sup_error = 0.0;
  double bias_part = 0.0;             ///< ‖f̄ − f‖∞
  double mean_stochastic_part = 0.0;  ///< mean of ‖f̂ − f̄‖∞
  double median_stochastic_part = 0.0;
  std::size_t replicates_used = 0;
  std::size_t failures = 0;
};

struct RateFit {
  double exponent = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

struct RiskStudyResult {
  RiskStudyConfig config;
  std::size_t eval_grid_size = 0;
  std::vector<RiskRow> rows;
  RateFit rate;
  bool monotone_within_2se = true;  ///< mean error non-increasing up to 2 standard errors
  bool strictly_decreasing = true;
  std::vector<std::string> failure_messages;
};

/// OLS slope of log risk against log(log n / n).
inline RateFit rate_fit(const std::vector<double>& n, const std::vector<double>& risk) {
  if (n.size() != risk.size()) fail(ErrorCode::invalid_argument, "rate fit needs matching n and risk");
  if (n.size() < 4) fail(ErrorCode::insufficient_data, "rate fit needs at least 4 rows");
  const std::size_t m = n.size();
  std::vector<double> u(m), v(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(n[i] > 1.0) || !(risk[i] > 0.0)) fail(ErrorCode::invalid_argument, "rate fit needs n > 1 and risk > 0");
    u[i] = std::log(std::log(n[i]) / n[i]);
    v[i] = std::log(risk[i]);
  }
  double mu = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= static_cast<double>(m);
  mv /= static_cast<double>(m);
  double suu = 0.0, suv = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suv += (u[i] - mu) * (v[i] - mv);
    svv += (v[i] - mv) * (v[i] - mv);
  }
  if (!(suu > 0.0)) fail(ErrorCode::insufficient_data, "rate fit needs distinct n values");
  RateFit fit;
  fit.exponent = suv / suu;
  fit.intercept = mv - fit.exponent * mu;
  double sse = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = v[i] - fit.intercept - fit.exponent * u[i];
    sse += e * e;
  }
  fit.stderr_ = std::sqrt(sse / static_cast<double>(m - 2) / suu);
  fit.r_squared = svv > 0.0 ? 1.0 - sse / svv : 1.0;
  return fit;
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace detail

/// Monte Carlo sup-norm risk across the n grid with the tuning rule at each n.
/// Replicates whose fit throws are recorded and excluded.
inline RiskStudyResult risk_study(const RiskStudyConfig& config, const Truth& truth) {
  config.validate();
  RiskStudyResult out;
  out.config = config;
  out.eval_grid_size = config.resolved_eval_grid();

  for (std::size_t n_req : config.n_grid) {
    RiskRow row;
    row.n_requested = n_req;
    row.K_n = choose_tuning(n_req, config.r).K_n;
    row.n = ((n_req + row.K_n - 1) / row.K_n) * row.K_n;
    if (row.n < 2 * row.K_n) row.n = 2 * row.K_n;

    DesignSystem system = build_design(build_knots(row.K_n), row.n, 0.0);
    detail::apply_penalty(system, system.beta_n / static_cast<double>(row.K_n));
    row.lambda_star = system.lambda_star;
    row.lambda = system.lambda;

    std::vector<double> clean(row.n);
    for (std::size_t i = 0; i < row.n; ++i) clean[i] = truth(system.x[i]);
    const FitResult reference = fit_system(system, clean);
    row.bias_part = sup_norm_error(reference, truth, out.eval_grid_size);

    struct Slot {
      double error = 0.0;
      double stochastic = 0.0;
      bool ok = false;
      std::string message;
    };
    std::vector<Slot> slots(config.replicates);
    parallel_for(config.replicates, config.threads, [&](std::size_t rep) {
      Slot& s = slots[rep];
      try {
        const SimulatedData d = generate_data(truth, row.n, config.sigma, config.base_seed, rep);
        const FitResult f = fit_system(system, d.y);
        s.error = sup_norm_error(f, truth, out.eval_grid_size);
        s.stochastic = (f.coefficients - reference.coefficients).cwiseAbs().maxCoeff();
        s.ok = true;
      } catch (const Error& e) {
        s.message = e.what();
      }
    });

    std::vector<double> errs, stoch;
    for (std::size_t rep = 0; rep < slots.size(); ++rep) {
      if (slots[rep].ok) {
        errs.push_back(slots[rep].error);
        stoch.push_back(slots[rep].stochastic);
      } else {
        ++row.failures;
        out.failure_messages.push_back("n=" + std::to_string(row.n) + " replicate " + std::to_string(rep) + ": " +
                                       slots[rep].message);
      }
    }
    if (static_cast<double>(row.failures) > 0.05 * static_cast<double>(config.replicates))
      fail(ErrorCode::study_invalid, "more than 5% of replicates failed at n=" + std::to_string(row.n));
    row.replicates_used = errs.size();
    double sum = 0.0, ssum = 0.0;
    for (std::size_t i = 0; i < errs.size(); ++i) {
      sum += errs[i];
      ssum += stoch[i];
    }
    const double m = static_cast<double>(errs.size());
    row.mean_sup_error = sum / m;
    row.mean_stochastic_part = ssum / m;
    double var = 0.0;
    for (double e : errs) var += (e - row.mean_sup_error) * (e - row.mean_sup_error);
    row.std_error = errs.size() > 1 ? std::sqrt(var / (m - 1.0) / m) : 0.0;
    row.median_sup_error = detail::median(errs);
    row.median_stochastic_part = detail::median(stoch);
    out.rows.push_back(row);
  }

  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    const RiskRow& a = out.rows[i - 1];
    const RiskRow& b = out.rows[i];
    if (!(b.mean_sup_error < a.mean_sup_error)) out.strictly_decreasing = false;
    if (b.mean_sup_error > a.mean_sup_error + 2.0 * std::hypot(a.std_error, b.std_error))
      out.monotone_within_2se = false;
  }
  if (out.rows.size() >= 4) {
    std::vector<double> ns, risks;
    for (const auto& r : out.rows) {
      ns.push_back(static_cast<double>(r.n));
      risks.push_back(r.mean_sup_error);
    }
    if (std::all_of(risks.begin(), risks.end(), [](double v) { return v > 0.0; })) out.rate = rate_fit(ns, risks);
  }
  return out;
}

/// Risk study for the named truth in the config.
inline RiskStudyResult risk_study(const RiskStudyConfig& config) {
  config.validate();
  return risk_study(config, make_truth(config.truth, config.r, config.L));
}

}  // namespace cvxspline
