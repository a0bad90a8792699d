#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cvxspline.hpp"

namespace fs = std::filesystem;
using namespace cvxspline;
using io::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;
constexpr int kExitStudy = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::solver_stalled:
    case ErrorCode::numerical_breakdown:
    case ErrorCode::oracle_inconsistency:
      return kExitSolver;
    case ErrorCode::study_invalid:
      return kExitStudy;
    default:
      return kExitInput;
  }
}

void log(const std::string& msg) { std::cerr << "[cvxspline] " << msg << '\n'; }

void require_input_file(const std::string& path) {
  if (!fs::is_regular_file(path)) fail(ErrorCode::invalid_argument, "input file not found: " + path);
}

void require_output_path(const std::string& path) {
  if (path.empty() || path == "-") return;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    fail(ErrorCode::invalid_argument, "output directory does not exist: " + parent.string());
}

/// Writes text to a file, or to standard output for "-" or an empty path.
void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::invalid_argument, "cannot open output file " + path);
  out << text;
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<LambdaChoice> parse_lambdas(const std::vector<std::string>& specs) {
  std::vector<LambdaChoice> out;
  for (const auto& s : specs) {
    LambdaChoice c;
    if (s == "1/K" || s == "1/k") {
      c.inverse_k = true;
    } else if (!io::parse_double(s, c.value) || !(c.value >= 0.0)) {
      fail(ErrorCode::invalid_argument, "lambda must be a nonnegative number or '1/K', got '" + s + "'");
    }
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string input;
  double r = 2.0;
  std::optional<std::size_t> kn;
  std::optional<double> lambda_star;
  std::string out_json = "-";
  std::optional<std::size_t> predict_grid;
  std::string predict_csv;
  std::string coef_csv;
};

int run_fit(const FitArgs& a) {
  require_input_file(a.input);
  require_output_path(a.out_json);
  require_output_path(a.predict_csv);
  require_output_path(a.coef_csv);
  if (a.predict_grid && a.predict_csv.empty())
    fail(ErrorCode::invalid_argument, "--predict-grid needs --predict-csv");
  if (a.predict_grid && *a.predict_grid < 2) fail(ErrorCode::invalid_argument, "--predict-grid must be at least 2");
  const io::XYData data = io::read_xy_csv(a.input);
  FitConfig cfg;
  cfg.r = a.r;
  cfg.K_n = a.kn;
  cfg.lambda_star = a.lambda_star;
  log("fitting " + std::to_string(data.x.size()) + " observations");
  const FitResult res = fit(data.x, data.y, cfg);
  Json out{{"command", "fit"},
           {"parameters", Json{{"input", a.input},
                               {"r", a.r},
                               {"K_n", res.system.intervals()},
                               {"lambda_star", res.diagnostics.lambda_star}}},
           {"result", io::to_json(res)}};
  write_json(a.out_json, out);
  if (a.predict_grid) {
    std::ostringstream s;
    s << "x,fitted\n";
    const std::size_t m = *a.predict_grid;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = static_cast<double>(i) / static_cast<double>(m - 1);
      s << io::format_number(x) << ',' << io::format_number(predict(res, x)) << '\n';
    }
    write_text(a.predict_csv, s.str());
  }
  if (!a.coef_csv.empty()) {
    std::ostringstream s;
    s << "knot,coefficient\n";
    for (std::size_t k = 0; k <= res.system.intervals(); ++k)
      s << io::format_number(res.system.grid.knot(static_cast<long>(k))) << ','
        << io::format_number(res.coefficients[static_cast<Eigen::Index>(k)]) << '\n';
    write_text(a.coef_csv, s.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------- family

struct FamilyArgs {
  double r = 2.0;
  double L = 1.0;
  double c0 = 0.0625;
  std::optional<double> p_star;
  double sigma = 1.0;
  std::size_t n = 1000000;
  std::optional<double> kn;
  std::string out_csv = "-";
  std::string out_json;
  std::string out_json_verify = "-";
  std::size_t holder_grid = 2048;
};

double resolved_p_star(const FamilyArgs& a) {
  if (!(a.sigma > 0.0)) fail(ErrorCode::invalid_argument, "sigma must be positive");
  return a.p_star ? *a.p_star : 1.0 / (2.0 * a.sigma * a.sigma);
}

int run_family(const FamilyArgs& a) {
  require_output_path(a.out_csv);
  require_output_path(a.out_json);
  if (a.n < 3 && !a.kn) fail(ErrorCode::invalid_argument, "n must be at least 3");
  const double kn = a.kn ? *a.kn : family_scale(static_cast<double>(a.n), a.r);
  const FamilyParams p = make_family_params(a.r, a.L, a.c0, resolved_p_star(a), kn);
  const HypothesisFamily fam = build_family(p);
  log("family with " + std::to_string(fam.members.size()) + " members, K_n = " + io::format_number(kn));
  std::ostringstream s;
  io::write_family_csv(s, fam);
  write_text(a.out_csv, s.str());
  if (!a.out_json.empty())
    write_json(a.out_json, Json{{"command", "family"},
                                {"parameters", io::to_json(p)},
                                {"n", a.kn ? Json(nullptr) : Json(a.n)},
                                {"sigma", a.sigma}});
  return kExitOk;
}

int run_verify_family(const FamilyArgs& a) {
  require_output_path(a.out_json_verify);
  const double p_star = resolved_p_star(a);
  log("verifying family at n = " + std::to_string(a.n));
  const FamilyVerification v = verify_family(a.r, a.L, a.c0, p_star, a.n, a.sigma, a.holder_grid);
  const C3Threshold t = c3_threshold(a.r, a.L, a.c0, p_star);
  Json out{{"command", "verify-family"}, {"holder_grid", a.holder_grid}, {"report", io::to_json(v)}};
  out["c3_threshold"] = Json{{"closed_form_n", t.n_c3 > 0 ? Json(t.n_c3) : Json(nullptr)},
                             {"log_ratio_n", t.n_log_ratio > 0 ? Json(t.n_log_ratio) : Json(nullptr)}};
  write_json(a.out_json_verify, out);
  return kExitOk;
}

// ---------------------------------------------------------------- scans

struct ScanArgs {
  std::vector<std::size_t> kn{8, 16, 32, 64};
  std::vector<std::size_t> mn{32};
  std::vector<std::string> lambdas{"1/K"};
  std::size_t samples = 200;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::size_t exhaustive_max = 10;
  std::string out_json = "-";
  std::string out_csv;
  bool probe = true;
};

ScanConfig scan_config(const ScanArgs& a) {
  ScanConfig c;
  for (auto k : a.kn)
    if (k < 2) fail(ErrorCode::invalid_argument, "--kn values must be at least 2");
  for (auto m : a.mn)
    if (m < 2) fail(ErrorCode::invalid_argument, "--mn values must be at least 2");
  c.intervals = a.kn;
  c.points_per_interval = a.mn;
  c.lambdas = parse_lambdas(a.lambdas);
  c.samples = a.samples;
  c.seed = a.seed;
  c.threads = a.threads;
  c.exhaustive_max = a.exhaustive_max;
  return c;
}

Json scan_parameters(const ScanArgs& a) {
  return Json{{"kn", a.kn},   {"mn", a.mn},         {"lambda", a.lambdas},
              {"samples", a.samples}, {"seed", a.seed}, {"exhaustive_max", a.exhaustive_max}};
}

int run_scan(const ScanArgs& a, bool structure) {
  require_output_path(a.out_json);
  require_output_path(a.out_csv);
  const ScanConfig cfg = scan_config(a);
  log(std::string(structure ? "structure" : "Lipschitz") + " scan over " + std::to_string(a.kn.size()) +
      " K_n values");
  const ScanResult scan = lipschitz_scan(cfg);
  Json cells = Json::array();
  std::size_t violations = 0;
  for (const auto& c : scan.cells) {
    cells.push_back(io::to_json(c));
    violations += structure ? c.g_violations + c.h_violations : c.dominance_violations;
  }
  Json out{{"command", structure ? "scan-structure" : "scan-lipschitz"},
           {"parameters", scan_parameters(a)},
           {"cells", cells}};
  if (structure) {
    out["total_violations"] = violations;
    if (a.probe) {
      Json probes = Json::array();
      for (auto k : a.kn) {
        const auto alphas = sample_alphas(k, a.samples, a.seed, a.exhaustive_max);
        probes.push_back(Json{{"K_n", k}, {"min_M_n_for_G_dominance", probe_min_points_per_interval(k, alphas)}});
      }
      out["dominance_probe"] = probes;
    }
  } else {
    double lo = 0.0, hi = 0.0;
    for (const auto& c : scan.cells) {
      lo = lo == 0.0 ? c.max_lipschitz : std::min(lo, c.max_lipschitz);
      hi = std::max(hi, c.max_lipschitz);
    }
    out["max_over_cells"] = hi;
    out["max_to_min_ratio"] = lo > 0.0 ? hi / lo : 0.0;
  }
  write_json(a.out_json, out);
  if (!a.out_csv.empty()) {
    std::ostringstream s;
    io::write_scan_csv(s, scan);
    write_text(a.out_csv, s.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------- risk study

struct RiskArgs {
  std::string config;
  std::string out_dir;
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed;
};

int run_risk_study(const RiskArgs& a) {
  require_input_file(a.config);
  if (a.out_dir.empty()) fail(ErrorCode::invalid_argument, "--out-dir is required");
  RiskStudyConfig cfg = io::risk_study_config(io::KeyValueConfig::read(a.config));
  if (a.seed) cfg.base_seed = *a.seed;
  cfg.threads = a.threads;
  fs::create_directories(a.out_dir);
  log("risk study: truth " + cfg.truth + ", " + std::to_string(cfg.n_grid.size()) + " sample sizes, " +
      std::to_string(cfg.replicates) + " replicates");
  const RiskStudyResult res = risk_study(cfg);
  for (const auto& row : res.rows)
    log("n = " + std::to_string(row.n) + "  K_n = " + std::to_string(row.K_n) +
        "  mean sup error = " + io::format_number(row.mean_sup_error));
  std::ostringstream csv;
  io::write_risk_csv(csv, res);
  write_text((fs::path(a.out_dir) / "risk_study.csv").string(), csv.str());
  Json out = io::to_json(res);
  out["command"] = "risk-study";
  write_json((fs::path(a.out_dir) / "risk_study.json").string(), out);
  return kExitOk;
}

// ---------------------------------------------------------------- rate fit

struct RateArgs {
  std::string input;
  std::string out_json = "-";
};

int run_rate_fit(const RateArgs& a) {
  require_input_file(a.input);
  require_output_path(a.out_json);
  const io::XYData d = io::read_xy_csv(a.input);
  const RateFit f = rate_fit(d.x, d.y);
  write_json(a.out_json, Json{{"command", "rate-fit"},
                              {"parameters", Json{{"input", a.input}, {"rows", d.x.size()}}},
                              {"exponent", f.exponent},
                              {"stderr", f.stderr_},
                              {"intercept", f.intercept},
                              {"r_squared", f.r_squared}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex penalized linear-spline regression, lower-bound families and risk studies"};
  app.require_subcommand(1, 1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a convex spline to two-column (x,y) CSV data");
  fit_cmd->add_option("input", fit_args.input, "Input CSV with columns x,y (header optional)")->required();
  fit_cmd->add_option("--r", fit_args.r, "Assumed Hölder order in (1,2]");
  fit_cmd->add_option("--kn", fit_args.kn, "Override number of knot intervals K_n");
  fit_cmd->add_option("--lambda-star", fit_args.lambda_star, "Override lambda* (default beta_n/K_n)");
  fit_cmd->add_option("--out-json", fit_args.out_json, "Output JSON path ('-' for stdout)");
  fit_cmd->add_option("--predict-grid", fit_args.predict_grid, "Number of uniform grid points for a fitted curve");
  fit_cmd->add_option("--predict-csv", fit_args.predict_csv, "Path for the (x, fitted) grid CSV");
  fit_cmd->add_option("--coef-csv", fit_args.coef_csv, "Path for the (knot, coefficient) CSV");

  FamilyArgs fam_args;
  auto add_family_opts = [&](CLI::App* cmd) {
    cmd->add_option("--r", fam_args.r, "Hölder order in (1,2]");
    cmd->add_option("--L", fam_args.L, "Hölder constant");
    cmd->add_option("--c0", fam_args.c0, "KL budget constant in (0,1/8)");
    cmd->add_option("--p-star", fam_args.p_star, "KL coefficient (default 1/(2 sigma^2))");
    cmd->add_option("--sigma", fam_args.sigma, "Noise level");
    cmd->add_option("--n", fam_args.n, "Sample size; sets K_n = (n/log n)^{1/(2r+1)}");
  };
  auto* fam_cmd = app.add_subcommand("family", "Export the lower-bound hypothesis family as piecewise quadratics");
  add_family_opts(fam_cmd);
  fam_cmd->add_option("--kn", fam_args.kn, "Use this real K_n instead of the n-based rule");
  fam_cmd->add_option("--out-csv", fam_args.out_csv, "Output CSV path ('-' for stdout)");
  fam_cmd->add_option("--out-json", fam_args.out_json, "Optional JSON with resolved parameters");
  auto* ver_cmd = app.add_subcommand("verify-family", "Check convexity, Hölder, separation and KL conditions");
  add_family_opts(ver_cmd);
  ver_cmd->add_option("--holder-grid", fam_args.holder_grid, "Uniform grid size for the Hölder check");
  ver_cmd->add_option("--out-json", fam_args.out_json_verify, "Output JSON path ('-' for stdout)");

  ScanArgs scan_args;
  auto add_scan_opts = [&](CLI::App* cmd) {
    cmd->add_option("--kn", scan_args.kn, "K_n values")->delimiter(',');
    cmd->add_option("--mn", scan_args.mn, "Points per interval M_n = n/K_n")->delimiter(',');
    cmd->add_option("--lambda", scan_args.lambdas, "lambda values, numbers or '1/K'")->delimiter(',');
    cmd->add_option("--samples", scan_args.samples, "Sampled active sets per K_n above the exhaustive limit");
    cmd->add_option("--exhaustive-max", scan_args.exhaustive_max, "Largest K_n enumerated exhaustively");
    cmd->add_option("--seed", scan_args.seed, "Seed for active-set sampling");
    cmd->add_option("--threads", scan_args.threads, "Worker threads");
    cmd->add_option("--out-json", scan_args.out_json, "Summary JSON path ('-' for stdout)");
    cmd->add_option("--out-csv", scan_args.out_csv, "Per-active-set CSV path");
  };
  auto* ss_cmd = app.add_subcommand("scan-structure", "Scan G/H structure and dominance over active sets");
  add_scan_opts(ss_cmd);
  ss_cmd->add_flag("!--no-probe", scan_args.probe, "Skip the minimum-M_n dominance probe");
  auto* sl_cmd = app.add_subcommand("scan-lipschitz", "Scan selection-function Lipschitz norms over active sets");
  add_scan_opts(sl_cmd);

  RiskArgs risk_args;
  auto* risk_cmd = app.add_subcommand("risk-study", "Monte Carlo sup-norm risk across sample sizes");
  risk_cmd->add_option("--config", risk_args.config,
                       "Key-value config. Keys: truth (x2|exp|x1.5|affine|family[:j]), r, L, sigma, "
                       "n_grid (comma list), replicates, base_seed, [eval_grid_size]")
      ->required();
  risk_cmd->add_option("--out-dir", risk_args.out_dir, "Directory for risk_study.csv and risk_study.json")
      ->required();
  risk_cmd->add_option("--threads", risk_args.threads, "Worker threads (results do not depend on this)");
  risk_cmd->add_option("--seed", risk_args.seed, "Override base_seed from the config");

  RateArgs rate_args;
  auto* rate_cmd = app.add_subcommand("rate-fit", "Fit log risk against log(log n / n)");
  rate_cmd->add_option("input", rate_args.input, "CSV with columns n,risk (header optional)")->required();
  rate_cmd->add_option("--out-json", rate_args.out_json, "Output JSON path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit_args);
    if (fam_cmd->parsed()) return run_family(fam_args);
    if (ver_cmd->parsed()) return run_verify_family(fam_args);
    if (ss_cmd->parsed()) return run_scan(scan_args, true);
    if (sl_cmd->parsed()) return run_scan(scan_args, false);
    if (risk_cmd->parsed()) return run_risk_study(risk_args);
    if (rate_cmd->parsed()) return run_rate_fit(rate_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
