#pragma once

// Command dispatch for the vheston tool: one function per subcommand, each
// writing its artifacts into the output directory and returning an exit code.
//   0 success, 2 invalid config, 3 infeasible parameters (unless forced),
//   4 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vheston/config.hpp"
#include "vheston/curves.hpp"
#include "vheston/kernels.hpp"
#include "vheston/riccati.hpp"
#include "vheston/simulate.hpp"
#include "vheston/skew.hpp"

namespace vheston {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitNumerical = 4;

struct RunOptions {
  std::filesystem::path out_dir = ".";
  bool force = false;
  unsigned threads = 1;
};

// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Header row plus one row per index; every line ends in '\n'.
inline std::string csv_text(const std::vector<std::string>& header, const std::vector<std::vector<double>>& columns) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  out += '\n';
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ',';
      out += format_double(columns[c][r]);
    }
    out += '\n';
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("--out: cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("--out: failed writing " + path.string());
}

inline nlohmann::ordered_json optional_json(const std::optional<double>& x) {
  return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json report_json(const AssumptionReport& r, const UtilitySpec& u) {
  nlohmann::ordered_json j;
  j["utility"] = u.is_power() ? "power" : "exponential";
  j["lambda"] = r.lambda;
  j["c"] = optional_json(r.c);
  j["eta"] = optional_json(r.eta);
  j["p_used"] = optional_json(r.p_used);
  j["q_used"] = optional_json(r.q_used);
  j["conditions"] = nlohmann::ordered_json::array();
  for (const auto& c : r.conditions) {
    j["conditions"].push_back({{"name", c.name}, {"margin", optional_json(c.margin)}, {"pass", c.pass}});
  }
  j["pass"] = r.pass;
  return j;
}

// {estimate, stderr, reference, z_score, pass}; z is null when the
// standard error vanishes and the two sides differ.
inline nlohmann::ordered_json summary_json(const McEstimate& e, double reference, bool pass) {
  nlohmann::ordered_json j;
  j["estimate"] = e.mean;
  j["stderr"] = e.std_error;
  j["reference"] = reference;
  const double diff = e.mean - reference;
  if (e.std_error > 0.0) {
    j["z_score"] = diff / e.std_error;
  } else {
    j["z_score"] = diff == 0.0 ? nlohmann::ordered_json(0.0) : nlohmann::ordered_json(nullptr);
  }
  j["pass"] = pass;
  return j;
}

inline double z_score(const McEstimate& e, double reference) {
  const double diff = e.mean - reference;
  if (e.std_error > 0.0) return diff / e.std_error;
  return diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
}

namespace detail {

struct Prepared {
  SampledKernel kernel;
  std::optional<RiccatiSolution<double>> psi;
  std::optional<StrategyCurve> strategy;
  AssumptionReport report;
};

// Solves for psi and A* and runs the feasibility checks. A Riccati blow-up
// on the horizon is itself a feasibility failure, reported without eta.
inline Prepared prepare(const RunConfig& c) {
  Prepared p{SampledKernel(*c.kernel, TimeGrid(c.grid->T, c.grid->N)), std::nullopt, std::nullopt, {}};
  try {
    p.psi = solve_psi(*c.model, *c.utility, p.kernel);
    p.strategy = optimal_strategy(*c.model, *c.utility, *p.psi);
    p.report = check_feasibility(*c.model, *c.utility, *p.strategy);
  } catch (const NumericalFailure&) {
    p.psi.reset();
    p.strategy.reset();
    p.report = feasibility_without_strategy(*c.model, *c.utility);
  }
  return p;
}

inline std::string failed_conditions(const AssumptionReport& r) {
  std::string out;
  for (const auto& c : r.conditions) {
    if (c.pass) continue;
    out += (out.empty() ? "" : "; ") + c.name;
    out += c.margin ? " (margin " + format_double(*c.margin) + ")" : " (not evaluable)";
  }
  return out;
}

// Shared gate for the commands that need a feasible parameter set.
inline std::optional<int> gate(const Prepared& p, const RunOptions& opts, std::ostream& err) {
  if (p.report.pass) return std::nullopt;
  if (!opts.force) {
    err << "infeasible parameters: " << failed_conditions(p.report) << " (rerun with --force to proceed)\n";
    return kExitInfeasible;
  }
  err << "warning: infeasible parameters, continuing because of --force: " << failed_conditions(p.report) << '\n';
  if (!p.psi) throw NumericalFailure("Riccati-Volterra solution blew up on the horizon", 0);
  return std::nullopt;
}

inline std::vector<std::size_t> checkpoint_nodes(const SimulationConfig& s, std::size_t steps) {
  const std::vector<double> fractions = s.checkpoints.empty() ? std::vector<double>{0.25, 0.5, 1.0} : s.checkpoints;
  std::vector<std::size_t> nodes;
  for (double f : fractions) {
    const auto node = static_cast<std::size_t>(std::lround(f * static_cast<double>(steps)));
    if (node == 0 || (!nodes.empty() && node <= nodes.back())) {
      throw ConfigError("simulation.checkpoints: fractions collapse onto the same grid node at N = " +
                        std::to_string(steps));
    }
    nodes.push_back(node);
  }
  return nodes;
}

}  // namespace detail

inline int run_riccati(const RunConfig& c, const RunOptions& opts, std::ostream& out) {
  const SampledKernel k(*c.kernel, TimeGrid(c.grid->T, c.grid->N));
  const auto psi = solve_psi(*c.model, *c.utility, k);
  std::vector<double> t, re, im;
  for (std::size_t i = 0; i < k.grid().size(); ++i) {
    t.push_back(k.grid().node(i));
    re.push_back(psi.psi[i]);
    im.push_back(0.0);
  }
  write_file(opts.out_dir / "riccati.csv", csv_text({"t", "psi_re", "psi_im"}, {t, re, im}));
  out << "riccati: " << t.size() << " nodes, psi(T) = " << format_double(re.back()) << ", lambda = "
      << format_double(psi.metadata.lambda) << '\n';
  return kExitOk;
}

inline int run_strategy(const RunConfig& c, const RunOptions& opts, std::ostream& out, std::ostream& err) {
  const auto p = detail::prepare(c);
  if (auto code = detail::gate(p, opts, err)) return *code;
  const auto& a = *p.strategy;
  std::vector<double> t;
  for (std::size_t i = 0; i < a.grid().size(); ++i) t.push_back(a.grid().node(i));
  write_file(opts.out_dir / "strategy.csv", csv_text({"t", "A"}, {t, a.values.values()}));
  out << "strategy: A(0) = " << format_double(a.values[0]) << ", A(T) = " << format_double(a.values.values().back())
      << '\n';
  return kExitOk;
}

inline int run_check(const RunConfig& c, const RunOptions& opts, std::ostream& out, std::ostream& err) {
  const auto p = detail::prepare(c);
  write_file(opts.out_dir / "check.json", report_json(p.report, *c.utility).dump(2) + "\n");
  out << "check: " << (p.report.pass ? "pass" : "fail") << '\n';
  if (!p.report.pass) {
    err << "infeasible parameters: " << detail::failed_conditions(p.report) << '\n';
    if (!opts.force) return kExitInfeasible;
  }
  return kExitOk;
}

inline int run_simulate(const RunConfig& c, const RunOptions& opts, std::ostream& out, std::ostream& err) {
  const auto p = detail::prepare(c);
  if (auto code = detail::gate(p, opts, err)) return *code;
  const auto& s = *c.simulation;
  const auto nodes = detail::checkpoint_nodes(s, c.grid->N);
  const auto stats =
      process_statistics(*c.model, *c.utility, p.kernel, s.scale, nodes, s.n_paths, *s.seed, s.x0, opts.threads);

  // Under A* E[U(X_T)] equals the value J_0; any other strategy can only do
  // worse, so a scaled run passes when it does not beat J_0 significantly.
  const double z = z_score(stats.utility, stats.j0);
  const bool pass = s.scale == 1.0 ? std::abs(z) <= 3.0 : z <= 3.0;
  auto summary = summary_json(stats.utility, stats.j0, pass);
  summary["n_paths"] = s.n_paths;
  summary["seed"] = *s.seed;
  summary["scale"] = s.scale;
  summary["m0"] = stats.m0;
  auto& checks = summary["checkpoints"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    checks.push_back({{"t", stats.grid.node(nodes[i])},
                      {"mean_J", stats.J[nodes[i]].mean},
                      {"increment", stats.increments[i].mean},
                      {"increment_stderr", stats.increments[i].std_error}});
  }

  std::vector<double> t, v, st, x, j;
  for (std::size_t i = 0; i < stats.grid.size(); ++i) {
    t.push_back(stats.grid.node(i));
    v.push_back(stats.V[i].mean);
    st.push_back(stats.S[i].mean);
    x.push_back(stats.X[i].mean);
    j.push_back(stats.J[i].mean);
  }
  write_file(opts.out_dir / "moments.csv", csv_text({"t", "mean_V", "mean_S", "mean_X", "mean_J"}, {t, v, st, x, j}));

  if (!s.scales.empty()) {
    const auto cmp = compare_strategies(*c.model, *c.utility, p.kernel, s.scales, s.n_paths, *s.seed, s.x0,
                                        opts.threads);
    std::vector<double> value, value_err, gap, gap_err;
    for (std::size_t i = 0; i < s.scales.size(); ++i) {
      value.push_back(cmp.values[i].mean);
      value_err.push_back(cmp.values[i].std_error);
      gap.push_back(cmp.gaps[i].mean);
      gap_err.push_back(cmp.gaps[i].std_error);
    }
    write_file(opts.out_dir / "comparison.csv",
               csv_text({"scale", "utility", "utility_stderr", "gap", "gap_stderr"},
                        {s.scales, value, value_err, gap, gap_err}));
  }
  write_file(opts.out_dir / "simulate.json", summary.dump(2) + "\n");
  out << "simulate: E[U] = " << format_double(stats.utility.mean) << " +- " << format_double(stats.utility.std_error)
      << ", J_0 = " << format_double(stats.j0) << ", " << (pass ? "pass" : "fail") << '\n';
  return kExitOk;
}

inline int run_verify(const RunConfig& c, const RunOptions& opts, std::ostream& out, std::ostream& err) {
  const auto p = detail::prepare(c);
  if (auto code = detail::gate(p, opts, err)) return *code;
  const auto& s = *c.simulation;
  const auto r = verify_m_identity(*c.model, *c.utility, p.kernel, s.n_paths, *s.seed, opts.threads);
  const bool pass = r.degenerate || std::abs(z_score(r.estimate, r.reference)) <= 3.0;
  auto summary = summary_json(r.estimate, r.reference, pass);
  summary["n_paths"] = s.n_paths;
  summary["seed"] = *s.seed;
  summary["m0"] = r.m0;
  summary["exponent"] = r.exponent;
  summary["degenerate"] = r.degenerate;
  write_file(opts.out_dir / "verify.json", summary.dump(2) + "\n");
  out << "verify: estimate = " << format_double(r.estimate.mean) << " +- " << format_double(r.estimate.std_error)
      << ", reference = " << format_double(r.reference) << ", " << (pass ? "pass" : "fail") << '\n';
  return kExitOk;
}

inline int run_skew(const RunConfig& c, const RunOptions& opts, std::ostream& out) {
  ModelParams m = *c.model;
  m.theta = 0.0;
  m.rate = RateCurve(0.0);
  FourierOptions fourier;
  fourier.steps = c.skew->steps;
  const auto curve = atm_skew_curve(m, *c.kernel, c.skew->maturities, fourier, opts.threads);
  std::vector<double> t, vol, skew;
  for (const auto& pt : curve) {
    t.push_back(pt.maturity);
    vol.push_back(pt.atm_vol);
    skew.push_back(pt.atm_skew);
  }
  write_file(opts.out_dir / "skew.csv", csv_text({"maturity", "atm_vol", "atm_skew"}, {t, vol, skew}));
  out << "skew: " << curve.size() << " maturities, skew ratio first/last = "
      << format_double(std::abs(skew.front() / skew.back())) << '\n';
  return kExitOk;
}

// Validates, dispatches and maps failures onto exit codes.
inline int run(Command cmd, const RunConfig& c, const RunOptions& opts, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  try {
    if (opts.threads < 1) throw ConfigError("--threads: must be at least 1");
    require_sections(c, cmd);
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) throw ConfigError("--out: cannot create " + opts.out_dir.string() + ": " + ec.message());
    switch (cmd) {
      case Command::riccati: return run_riccati(c, opts, out);
      case Command::strategy: return run_strategy(c, opts, out, err);
      case Command::check: return run_check(c, opts, out, err);
      case Command::simulate: return run_simulate(c, opts, out, err);
      case Command::verify: return run_verify(c, opts, out, err);
      case Command::skew: return run_skew(c, opts, out);
    }
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const InvariantViolation& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

// Loads the config file first so a missing or malformed file is exit 2.
inline int run(Command cmd, const std::string& config_path, const RunOptions& opts, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  RunConfig c;
  try {
    c = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitConfig;
  }
  return run(cmd, c, opts, out, err);
}

}  // namespace vheston
