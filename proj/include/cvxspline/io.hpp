#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "cvxspline/error.hpp"
#include "cvxspline/estimator.hpp"
#include "cvxspline/hypotheses.hpp"
#include "cvxspline/selection.hpp"
#include "cvxspline/simulation.hpp"

namespace cvxspline::io {

using Json = nlohmann::ordered_json;

/// Shortest round-trip decimal representation, independent of locale.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

struct XYData {
  std::vector<double> x;
  std::vector<double> y;
};

/// Two-column comma-separated (x, y) data; a first row that is not numeric is
/// treated as a header. Errors name the offending line.
inline XYData parse_xy_csv(std::istream& in, const std::string& source = "input") {
  XYData d;
  std::string line;
  std::size_t lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    double x = 0.0, y = 0.0;
    const bool numeric = fields.size() == 2 && parse_double(fields[0], x) && parse_double(fields[1], y);
    if (first_content) {
      first_content = false;
      if (!numeric) {
        if (fields.size() != 2)
          fail(ErrorCode::invalid_argument, source + ":" + std::to_string(lineno) + ": expected 2 columns");
        continue;
      }
    }
    if (!numeric)
      fail(ErrorCode::invalid_argument,
           source + ":" + std::to_string(lineno) + ": expected two numeric fields 'x,y', got '" + trim(line) + "'");
    d.x.push_back(x);
    d.y.push_back(y);
  }
  if (d.x.empty()) fail(ErrorCode::invalid_argument, source + ": no data rows");
  return d;
}

inline XYData read_xy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::invalid_argument, "cannot open " + path);
  return parse_xy_csv(in, path);
}

/// `key = value` lines; '#' starts a comment.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "config") {
    KeyValueConfig c;
    c.source_ = source;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        fail(ErrorCode::invalid_argument, source + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) fail(ErrorCode::invalid_argument, source + ":" + std::to_string(lineno) + ": empty key");
      if (c.values_.count(key))
        fail(ErrorCode::invalid_argument, source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static KeyValueConfig read(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::invalid_argument, "cannot open " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorCode::invalid_argument, source_ + ": missing required key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const {
    double v = 0.0;
    if (!parse_double(require(key), v)) fail(ErrorCode::invalid_argument, source_ + ": key '" + key + "' is not a number");
    return v;
  }

  std::uint64_t integer(const std::string& key) const {
    const std::string& s = require(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      fail(ErrorCode::invalid_argument, source_ + ": key '" + key + "' is not a nonnegative integer");
    return v;
  }

  std::vector<std::uint64_t> integer_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& part : split(require(key), ',')) {
      const std::string s = trim(part);
      std::uint64_t v = 0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorCode::invalid_argument, source_ + ": key '" + key + "' must be a comma-separated integer list");
      out.push_back(v);
    }
    return out;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& [key, v] : values_) k.push_back(key);
    return k;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

/// Documented risk-study keys. Required: truth, r, L, sigma, n_grid,
/// replicates, base_seed. Optional: eval_grid_size (0 = 10·max n).
inline const std::vector<std::string>& risk_study_required_keys() {
  static const std::vector<std::string> keys = {"truth", "r", "L", "sigma", "n_grid", "replicates", "base_seed"};
  return keys;
}

inline RiskStudyConfig risk_study_config(const KeyValueConfig& kv) {
  std::set<std::string> known(risk_study_required_keys().begin(), risk_study_required_keys().end());
  known.insert("eval_grid_size");
  for (const auto& k : kv.keys())
    if (!known.count(k)) fail(ErrorCode::invalid_argument, kv.source() + ": unknown key '" + k + "'");
  RiskStudyConfig c;
  c.truth = kv.require("truth");
  c.r = kv.number("r");
  c.L = kv.number("L");
  c.sigma = kv.number("sigma");
  for (auto v : kv.integer_list("n_grid")) c.n_grid.push_back(static_cast<std::size_t>(v));
  c.replicates = static_cast<std::size_t>(kv.integer("replicates"));
  c.base_seed = kv.integer("base_seed");
  if (kv.has("eval_grid_size")) c.eval_grid_size = static_cast<std::size_t>(kv.integer("eval_grid_size"));
  c.validate();
  return c;
}

inline Json to_json(const KktResiduals& k) {
  return Json{{"stationarity", k.stationarity},
              {"min_slack", k.min_slack},
              {"min_multiplier", k.min_multiplier},
              {"complementarity", k.complementarity}};
}

inline Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json to_json(const FitResult& r) {
  Json knots = Json::array();
  for (std::size_t k = 0; k <= r.system.intervals(); ++k) knots.push_back(r.system.grid.knot(static_cast<long>(k)));
  Json active = Json::array();
  for (auto a : r.solution.active_set) active.push_back(a);
  Json warnings = Json::array();
  for (const auto& w : r.system.warnings) warnings.push_back(w);
  return Json{{"n", r.system.n()},
              {"K_n", r.system.intervals()},
              {"K_n_source", r.diagnostics.tuned_K_n ? "tuning-rule" : "override"},
              {"lambda_star", r.diagnostics.lambda_star},
              {"lambda_star_source", r.diagnostics.tuned_lambda ? "beta_n/K_n" : "override"},
              {"lambda", r.diagnostics.lambda},
              {"beta_n", r.system.beta_n},
              {"design_mode", r.system.mode == DesignMode::simulation ? "simulation" : "real-data"},
              {"knots", knots},
              {"coefficients", vector_json(r.coefficients)},
              {"diagnostics",
               Json{{"kkt", to_json(r.diagnostics.kkt)},
                    {"kkt_tolerance", r.diagnostics.kkt_tolerance},
                    {"active_set", active},
                    {"active_set_size", r.diagnostics.active_set_size},
                    {"iterations", r.diagnostics.iterations},
                    {"convex", r.diagnostics.convex},
                    {"warnings", warnings}}}};
}

inline Json to_json(const FamilyParams& p) {
  return Json{{"r", p.r},         {"gamma", p.gamma},   {"L", p.L},           {"c0", p.c0},
              {"p_star", p.p_star}, {"K_n", p.K_n},     {"M_n", p.M_n},       {"L_bar", p.L_bar},
              {"s_n", p.s_n},     {"period", p.period}, {"unit", p.unit},     {"slope", p.slope}};
}

inline Json to_json(const FamilyVerification& v) {
  Json kl = Json::array();
  for (double k : v.kl) kl.push_back(k);
  return Json{{"parameters", to_json(v.params)},
              {"n", v.n},
              {"sigma", v.sigma},
              {"C1", Json{{"pass", v.c1}, {"convex_all", v.convex_all}, {"max_holder_ratio", v.max_holder_ratio},
                          {"holder_all", v.holder_all}}},
              {"C2", Json{{"pass", v.c2}, {"expected_separation", v.expected_separation},
                          {"min_separation", v.min_separation}, {"max_separation", v.max_separation},
                          {"max_relative_error", v.max_separation_rel_error}}},
              {"C3", Json{{"pass", v.c3}, {"mean_kl", v.mean_kl}, {"bound_c0_log_M", v.kl_bound}, {"kl", kl}}},
              {"integral", Json{{"pass", v.integral_ok}, {"quadrature", v.integral_quadrature},
                                {"closed_form", v.integral_closed_form}, {"relative_error", v.integral_rel_error}}},
              {"endpoints_agree", v.endpoints_agree},
              {"all_pass", v.all_pass()}};
}

/// Rows (j, breakpoint, a, b, c): piece of member j starting at `breakpoint`
/// with value a u² + b u + c, u = x − breakpoint.
inline void write_family_csv(std::ostream& out, const HypothesisFamily& fam) {
  out << "j,breakpoint,quad_coef_a,lin_coef_b,const_c\n";
  for (std::size_t j = 0; j < fam.members.size(); ++j) {
    const auto& f = fam.members[j];
    for (std::size_t i = 0; i < f.num_pieces(); ++i) {
      const auto& c = f.coefficients()[i];
      out << j << ',' << format_number(f.breakpoints()[i]) << ',' << format_number(c.a) << ','
          << format_number(c.b) << ',' << format_number(c.c) << '\n';
    }
    out << j << ',' << format_number(f.upper()) << ",,," << format_number(f(f.upper())) << '\n';
  }
}

inline void write_scan_csv(std::ostream& out, const ScanResult& scan) {
  out << "K_n,M_n,lambda,alpha_hash,lipschitz_norm,min_xi_tilde,dominance_ok\n";
  for (const auto& r : scan.records)
    out << r.intervals << ',' << r.points_per_interval << ',' << format_number(r.lambda) << ','
        << alpha_hash_hex(r.alpha) << ',' << format_number(r.lipschitz_norm) << ',' << format_number(r.min_xi_tilde)
        << ',' << (r.dominance_ok ? 1 : 0) << '\n';
}

inline Json to_json(const ScanCell& c) {
  Json arg = Json::array();
  for (auto a : c.argmax_alpha) arg.push_back(a);
  return Json{{"K_n", c.intervals},
              {"M_n", c.points_per_interval},
              {"lambda", c.lambda},
              {"num_alpha", c.num_alpha},
              {"max_lipschitz", c.max_lipschitz},
              {"argmax_alpha", arg},
              {"min_xi", c.min_xi},
              {"min_xi_tilde", c.min_xi_tilde},
              {"dominance_violations", c.dominance_violations},
              {"g_violations", c.g_violations},
              {"h_violations", c.h_violations},
              {"max_scaled_f_norm", c.max_scaled_f_norm},
              {"max_e_inverse_norm", c.max_e_inverse_norm}};
}

inline Json to_json(const RiskStudyConfig& c) {
  Json grid = Json::array();
  for (auto n : c.n_grid) grid.push_back(n);
  return Json{{"truth", c.truth},     {"r", c.r},
              {"L", c.L},             {"sigma", c.sigma},
              {"n_grid", grid},       {"replicates", c.replicates},
              {"base_seed", c.base_seed}, {"eval_grid_size", c.resolved_eval_grid()}};
}

inline void write_risk_csv(std::ostream& out, const RiskStudyResult& r) {
  out << "n_requested,n,K_n,lambda_star,lambda,mean_sup_error,std_error,median_sup_error,bias_part,"
         "mean_stochastic_part,median_stochastic_part,replicates_used,failures\n";
  for (const auto& row : r.rows)
    out << row.n_requested << ',' << row.n << ',' << row.K_n << ',' << format_number(row.lambda_star) << ','
        << format_number(row.lambda) << ',' << format_number(row.mean_sup_error) << ','
        << format_number(row.std_error) << ',' << format_number(row.median_sup_error) << ','
        << format_number(row.bias_part) << ',' << format_number(row.mean_stochastic_part) << ','
        << format_number(row.median_stochastic_part) << ',' << row.replicates_used << ',' << row.failures << '\n';
}

inline Json to_json(const RiskStudyResult& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back(Json{{"n_requested", row.n_requested},
                        {"n", row.n},
                        {"K_n", row.K_n},
                        {"lambda_star", row.lambda_star},
                        {"lambda", row.lambda},
                        {"mean_sup_error", row.mean_sup_error},
                        {"std_error", row.std_error},
                        {"median_sup_error", row.median_sup_error},
                        {"bias_part", row.bias_part},
                        {"mean_stochastic_part", row.mean_stochastic_part},
                        {"median_stochastic_part", row.median_stochastic_part},
                        {"replicates_used", row.replicates_used},
                        {"failures", row.failures}});
  Json failures = Json::array();
  for (const auto& m : r.failure_messages) failures.push_back(m);
  Json out{{"parameters", to_json(r.config)},
           {"rows", rows},
           {"target_exponent", r.config.r / (2.0 * r.config.r + 1.0)},
           {"monotone_within_2se", r.monotone_within_2se},
           {"strictly_decreasing", r.strictly_decreasing},
           {"failures", failures}};
  if (r.rows.size() >= 4) {
    out["rate_exponent"] = r.rate.exponent;
    out["rate_stderr"] = r.rate.stderr_;
    out["rate_intercept"] = r.rate.intercept;
    out["rate_r_squared"] = r.rate.r_squared;
  } else {
    out["rate_exponent"] = nullptr;
  }
  return out;
}

}  // namespace cvxspline::io
