#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spancca/errors.hpp"
#include "spancca/matrix_io.hpp"
#include "spancca/oracles.hpp"
#include "spancca/projections.hpp"
#include "spancca/solver.hpp"

namespace spancca::cli {

using json = nlohmann::ordered_json;

struct CliConfig {
  std::string x_path, y_path, sigma_path;
  std::string x_format = "auto", y_format = "auto", sigma_format = "auto";
  std::string header = "auto";
  std::int64_t rank = 5;
  std::int64_t samples = 100000;
  bool samples_set = false;
  double epsilon = 0.0, delta = 0.0;
  bool epsilon_set = false, delta_set = false;
  std::string constraint_u, constraint_v;
  std::uint64_t seed = 0;
  int workers = 1;
  bool rescore_full = true;
  bool select_on_full = false;
  std::string verify = "none";
  std::uint64_t verify_limit = 10'000'000;
  std::string out = "-";
  std::string csv_vectors;
  bool no_timings = false;
  int svd_power_iters = 4;
  int svd_oversample = 8;
};

/// Thrown when --help was requested; carries the rendered help text.
struct HelpRequested {
  std::string text;
};

namespace cli_detail {

inline MatrixFormat resolve_format(const std::string& requested, const std::string& path) {
  if (requested == "csv") return MatrixFormat::csv;
  if (requested == "mtx" || requested == "matrixmarket" || requested == "mm") {
    return MatrixFormat::matrix_market;
  }
  // auto: decide by extension
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".mtx" || ext == ".mm") return MatrixFormat::matrix_market;
  return MatrixFormat::csv;
}

inline HeaderMode resolve_header(const std::string& mode) {
  if (mode == "yes") return HeaderMode::with_header;
  if (mode == "no") return HeaderMode::without_header;
  return HeaderMode::autodetect;
}

}  // namespace cli_detail

/// Constraint grammar: sparse:<s> | sparse:<pct>% | unit | groups:<file>:<g>.
/// Percentages resolve to ceil(pct * dim / 100), never below 1.
inline ConstraintSpec resolve_constraint(const std::string& raw, Eigen::Index dim,
                                         const std::string& flag) {
  const auto fail = [&](const std::string& why) -> ConstraintSpec {
    throw UsageError("bad constraint for " + flag + ": '" + raw + "' (" + why + ")");
  };
  if (raw == "unit") return ConstraintSpec::unit();
  if (raw.rfind("sparse:", 0) == 0) {
    std::string body = raw.substr(7);
    if (body.empty()) return fail("missing budget");
    if (body.back() == '%') {
      body.pop_back();
      double pct = 0.0;
      try {
        std::size_t pos = 0;
        pct = std::stod(body, &pos);
        if (pos != body.size()) return fail("malformed percentage");
      } catch (const std::exception&) {
        return fail("malformed percentage");
      }
      if (!(pct > 0.0 && pct <= 100.0)) return fail("percentage outside (0, 100]");
      const auto s = static_cast<Eigen::Index>(
          std::ceil(pct * static_cast<double>(dim) / 100.0));
      return ConstraintSpec::sparse(std::max<Eigen::Index>(1, s));
    }
    long long s = 0;
    try {
      std::size_t pos = 0;
      s = std::stoll(body, &pos);
      if (pos != body.size()) return fail("malformed budget");
    } catch (const std::exception&) {
      return fail("malformed budget");
    }
    if (s < 1 || s > dim) return fail("budget outside [1, " + std::to_string(dim) + "]");
    return ConstraintSpec::sparse(static_cast<Eigen::Index>(s));
  }
  if (raw.rfind("groups:", 0) == 0) {
    const std::string body = raw.substr(7);
    const auto colon = body.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == body.size()) {
      return fail("expected groups:<file>:<g>");
    }
    const std::string file = body.substr(0, colon);
    long long g = 0;
    try {
      std::size_t pos = 0;
      g = std::stoll(body.substr(colon + 1), &pos);
      if (pos != body.size() - colon - 1) return fail("malformed group budget");
    } catch (const std::exception&) {
      return fail("malformed group budget");
    }
    if (g < 1) return fail("group budget must be positive");
    auto groups = load_groups(file);
    return ConstraintSpec::group_sparse(std::move(groups), static_cast<Eigen::Index>(g));
  }
  return fail("unknown constraint kind");
}

inline CliConfig parse_config(const std::vector<std::string>& args) {
  CliConfig cfg;
  CLI::App app{"SpanCCA: sparse diagonal CCA by sphere sampling on a low-rank surrogate"};

  auto* x_opt = app.add_option("--x", cfg.x_path, "CSV/MatrixMarket file with the X view");
  auto* y_opt = app.add_option("--y", cfg.y_path, "CSV/MatrixMarket file with the Y view");
  auto* sigma_opt =
      app.add_option("--sigma", cfg.sigma_path, "precomputed cross-covariance matrix");
  app.add_option("--x-format", cfg.x_format, "x file format")
      ->check(CLI::IsMember({"auto", "csv", "mtx"}));
  app.add_option("--y-format", cfg.y_format, "y file format")
      ->check(CLI::IsMember({"auto", "csv", "mtx"}));
  app.add_option("--sigma-format", cfg.sigma_format, "sigma file format")
      ->check(CLI::IsMember({"auto", "csv", "mtx"}));
  app.add_option("--header", cfg.header, "CSV header handling")
      ->check(CLI::IsMember({"auto", "yes", "no"}));
  app.add_option("--rank,-r", cfg.rank, "rank of the low-rank surrogate")
      ->check(CLI::PositiveNumber);
  auto* samples_opt =
      app.add_option("--samples,-T", cfg.samples, "number of sampling rounds")
          ->check(CLI::PositiveNumber);
  auto* eps_opt = app.add_option("--epsilon", cfg.epsilon,
                                 "net accuracy in (0,1); with --delta, sets the round count");
  auto* delta_opt =
      app.add_option("--delta", cfg.delta, "net failure probability in (0,1)");
  app.add_option("--su", cfg.constraint_u,
                 "constraint on u: sparse:<s> | sparse:<pct>% | unit | groups:<file>:<g>")
      ->required();
  app.add_option("--sv", cfg.constraint_v, "constraint on v (same grammar)")->required();
  app.add_option("--seed", cfg.seed, "RNG seed");
  auto* workers_opt = app.add_option("--workers", cfg.workers, "round-phase worker threads")
                          ->check(CLI::PositiveNumber);
  app.add_flag("--no-rescore-full", "skip re-scoring the winner on the full matrix");
  app.add_flag("--select-on-full", cfg.select_on_full,
               "select the winner by the full-matrix objective");
  app.add_option("--verify", cfg.verify, "cross-check against an oracle")
      ->check(CLI::IsMember({"none", "threshold", "exhaustive"}));
  app.add_option("--verify-limit", cfg.verify_limit,
                 "support-pair budget for exhaustive verification");
  app.add_option("--out,-o", cfg.out, "report path, '-' for stdout");
  app.add_option("--csv-vectors", cfg.csv_vectors,
                 "also dump u and v as <prefix>_u.csv / <prefix>_v.csv");
  app.add_flag("--no-timings", cfg.no_timings, "omit timings from the report");
  app.add_option("--svd-power-iters", cfg.svd_power_iters, "subspace iteration count")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--svd-oversample", cfg.svd_oversample, "sketch oversampling")
      ->check(CLI::NonNegativeNumber);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("spancca");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  cfg.samples_set = samples_opt->count() > 0;
  cfg.epsilon_set = eps_opt->count() > 0;
  cfg.delta_set = delta_opt->count() > 0;
  cfg.rescore_full = app.count("--no-rescore-full") == 0;

  const bool xy_mode = x_opt->count() > 0 || y_opt->count() > 0;
  const bool sigma_mode = sigma_opt->count() > 0;
  if (xy_mode && sigma_mode) {
    throw UsageError("--sigma conflicts with --x/--y: pick one input mode");
  }
  if (!xy_mode && !sigma_mode) {
    throw UsageError("no input: pass --x with --y, or --sigma");
  }
  if (xy_mode && (x_opt->count() == 0 || y_opt->count() == 0)) {
    throw UsageError("--x and --y must be given together");
  }
  if (cfg.epsilon_set != cfg.delta_set) {
    throw UsageError("--epsilon and --delta must be given together");
  }
  if (cfg.epsilon_set && !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) {
    throw UsageError("--epsilon must lie strictly inside (0, 1)");
  }
  if (cfg.delta_set && !(cfg.delta > 0.0 && cfg.delta < 1.0)) {
    throw UsageError("--delta must lie strictly inside (0, 1)");
  }
  if (workers_opt->count() == 0) {
    if (const char* env = std::getenv("SPANCCA_WORKERS")) {
      try {
        std::size_t pos = 0;
        const long w = std::stol(env, &pos);
        if (pos != std::string(env).size() || w < 1) throw std::invalid_argument("range");
        cfg.workers = static_cast<int>(w);
      } catch (const std::exception&) {
        throw UsageError(std::string("SPANCCA_WORKERS is not a positive integer: '") +
                         env + "'");
      }
    } else {
      cfg.workers = std::max(1u, std::thread::hardware_concurrency());
    }
  }
  return cfg;
}

namespace cli_detail {

inline json vector_json(const SparseVector& v) {
  json out;
  json idx = json::array();
  json val = json::array();
  for (const auto& [i, x] : v.entries) {
    idx.push_back(i);
    val.push_back(x);
  }
  out["indices"] = std::move(idx);
  out["values"] = std::move(val);
  return out;
}

inline void write_vector_csv(const std::filesystem::path& path, const SparseVector& v,
                             const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path.string(), 0);
  const bool named = !names.empty();
  out << (named ? "index,name,value\n" : "index,value\n");
  char buf[32];
  for (const auto& [i, x] : v.entries) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    if (named) {
      out << i << ',' << names[static_cast<std::size_t>(i)] << ',' << buf << '\n';
    } else {
      out << i << ',' << buf << '\n';
    }
  }
}

inline Eigen::Index oracle_budget(const ConstraintSpec& spec, Eigen::Index dim,
                                  const std::string& side) {
  switch (spec.kind) {
    case ConstraintSpec::Kind::sparse:
      return spec.s;
    case ConstraintSpec::Kind::unit:
      return dim;
    case ConstraintSpec::Kind::group_sparse:
      throw UsageError("--verify does not support group-sparse constraints (" + side + ")");
  }
  throw UsageError("unknown constraint kind");
}

}  // namespace cli_detail

/// Loads inputs, runs the solver, and assembles the machine-readable report.
/// Throws spancca::Error subtypes; the caller maps them to exit codes.
inline json run_to_json(const CliConfig& cfg) {
  const HeaderMode header = cli_detail::resolve_header(cfg.header);
  CrossCov sigma;
  std::vector<std::string> u_names, v_names;
  const bool sigma_mode = !cfg.sigma_path.empty();
  if (sigma_mode) {
    const auto fmt = cli_detail::resolve_format(cfg.sigma_format, cfg.sigma_path);
    DataMatrix s = load_matrix(cfg.sigma_path, fmt, header);
    v_names = s.col_names;
    sigma = std::move(s.values);
  } else {
    const auto xfmt = cli_detail::resolve_format(cfg.x_format, cfg.x_path);
    const auto yfmt = cli_detail::resolve_format(cfg.y_format, cfg.y_path);
    const DataMatrix x = standardize(load_matrix(cfg.x_path, xfmt, header));
    const DataMatrix y = standardize(load_matrix(cfg.y_path, yfmt, header));
    u_names = x.col_names;
    v_names = y.col_names;
    sigma = cross_covariance(x, y);
  }

  SolverConfig solver;
  solver.r = cfg.rank;
  solver.constraint_u = resolve_constraint(cfg.constraint_u, sigma.rows(), "--su");
  solver.constraint_v = resolve_constraint(cfg.constraint_v, sigma.cols(), "--sv");
  solver.seed = cfg.seed;
  solver.workers = cfg.workers;
  solver.rescore_full = cfg.rescore_full;
  solver.select_on_full = cfg.select_on_full;
  solver.svd_power_iters = cfg.svd_power_iters;
  solver.svd_oversample = cfg.svd_oversample;
  if (cfg.epsilon_set && !cfg.samples_set) {
    solver.samples = 0;
    solver.epsilon = cfg.epsilon;
    solver.delta = cfg.delta;
  } else {
    if (cfg.epsilon_set && cfg.samples_set) {
      std::cerr << "warning: both --samples and --epsilon/--delta given; "
                   "explicit --samples wins\n";
    }
    solver.samples = cfg.samples;
  }

  const SolveReport report = solve(sigma, solver);

  double obj_full = report.obj_full;
  if (!std::isfinite(obj_full) && cfg.verify != "none") {
    obj_full = bilinear(sigma, report.best.u, report.best.v);
  }

  json verify = nullptr;
  if (cfg.verify != "none") {
    const Eigen::Index bu =
        cli_detail::oracle_budget(solver.constraint_u, sigma.rows(), "--su");
    const Eigen::Index bv =
        cli_detail::oracle_budget(solver.constraint_v, sigma.cols(), "--sv");
    OracleResult oracle;
    if (cfg.verify == "threshold") {
      oracle = threshold_cca(sigma, bu, bv);
    } else {
      const std::uint64_t ci = oracle_detail::binomial_capped(sigma.rows(), bu);
      const std::uint64_t cj = oracle_detail::binomial_capped(sigma.cols(), bv);
      if (static_cast<unsigned __int128>(ci) * cj > cfg.verify_limit) {
        throw CapacityError(
            "exhaustive verification needs more support pairs than --verify-limit "
            "allows; try --verify threshold");
      }
      oracle = exhaustive_cca(sigma, bu, bv, cfg.verify_limit, cfg.workers);
    }
    verify = json{{"mode", cfg.verify},
                  {"objective", oracle.objective},
                  {"gap", oracle.objective - obj_full},
                  {"supports_examined", oracle.supports_examined}};
  }

  json j;
  json config;
  config["input"] = json{{"mode", sigma_mode ? "sigma" : "xy"},
                         {"x", cfg.x_path.empty() ? json(nullptr) : json(cfg.x_path)},
                         {"y", cfg.y_path.empty() ? json(nullptr) : json(cfg.y_path)},
                         {"sigma", sigma_mode ? json(cfg.sigma_path) : json(nullptr)},
                         {"header", cfg.header}};
  config["m"] = sigma.rows();
  config["n"] = sigma.cols();
  config["rank"] = cfg.rank;
  config["samples"] = report.samples;
  config["epsilon"] = std::isfinite(report.epsilon) ? json(report.epsilon) : json(nullptr);
  config["delta"] = cfg.epsilon_set && !cfg.samples_set ? json(cfg.delta) : json(nullptr);
  config["constraint_u"] = cfg.constraint_u;
  config["constraint_v"] = cfg.constraint_v;
  config["seed"] = cfg.seed;
  config["workers"] = cfg.workers;
  config["rescore_full"] = cfg.rescore_full;
  config["select_on_full"] = cfg.select_on_full;
  config["verify"] = cfg.verify;
  j["config"] = std::move(config);
  j["u"] = cli_detail::vector_json(report.best.u);
  j["v"] = cli_detail::vector_json(report.best.v);
  j["obj_lowrank"] = report.best.obj_lowrank;
  j["obj_full"] = std::isfinite(obj_full) ? json(obj_full) : json(nullptr);
  j["sigma1"] = report.sigma1;
  j["sigma_r_plus_1_estimate"] = report.sigma_r_plus_1;
  j["theorem1_slack"] =
      std::isfinite(report.theorem1_slack) ? json(report.theorem1_slack) : json(nullptr);
  j["verify"] = std::move(verify);
  if (!cfg.no_timings) {
    j["timings"] = json{{"svd_ms", report.svd_ms},
                        {"rounds_ms", report.rounds_ms},
                        {"total_ms", report.total_ms}};
  }
  j["rounds_discarded"] = report.rounds_discarded;

  if (!cfg.csv_vectors.empty()) {
    cli_detail::write_vector_csv(cfg.csv_vectors + "_u.csv", report.best.u, u_names);
    cli_detail::write_vector_csv(cfg.csv_vectors + "_v.csv", report.best.v, v_names);
  }
  return j;
}

/// Runs a parsed config end to end, writing the report to the configured
/// output. Returns the process exit code.
inline int run(const CliConfig& cfg) {
  try {
    const json j = run_to_json(cfg);
    const std::string text = j.dump(2) + "\n";
    if (cfg.out == "-") {
      std::cout << text;
    } else {
      std::ofstream out(cfg.out);
      if (!out) {
        std::cerr << "error: cannot write report to " << cfg.out << "\n";
        return static_cast<int>(ErrorCategory::data);
      }
      out << text;
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  }
}

inline int main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  try {
    return run(parse_config(args));
  } catch (const HelpRequested& h) {
    std::cout << h.text;
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  }
}

}  // namespace spancca::cli
