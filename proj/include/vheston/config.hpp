#pragma once

// JSON run configuration. Every object is read through a field tracker, so a
// misspelled or unsupported key is an error rather than silently ignored.
// Error messages name the offending field as a dotted path.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vheston/errors.hpp"
#include "vheston/kernels.hpp"
#include "vheston/model.hpp"

namespace vheston {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  double T = 1.0;
  std::size_t N = 0;
};

struct SimulationConfig {
  std::uint64_t n_paths = 0;
  std::optional<std::uint64_t> seed;
  double x0 = 1.0;
  double scale = 1.0;                // strategy actually run: scale * A*
  std::vector<double> scales;        // optional comparison against s * A*
  std::vector<double> checkpoints;   // fractions of T for the J increments
};

struct SkewConfig {
  std::vector<double> maturities;
  std::size_t steps = 200;
};

struct RunConfig {
  std::optional<ModelParams> model;
  std::optional<KernelSpec> kernel;
  std::optional<UtilitySpec> utility;
  std::optional<GridConfig> grid;
  std::optional<SimulationConfig> simulation;
  std::optional<SkewConfig> skew;
};

namespace detail {

using json = nlohmann::json;

class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    if (!j_.contains(key)) fail(where(key), "required field missing");
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) { return as_number(raw(key), where(key)); }

  std::optional<double> maybe_number(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return number(key);
  }

  std::uint64_t count(const std::string& key) {
    const json& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(where(key), "expected a non-negative integer");
  }

  std::string text(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) fail(where(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) fail(where(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], where(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  Fields object(const std::string& key) { return Fields(raw(key), where(key)); }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  // Rejects keys nobody asked for.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(where(key), "unknown field");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw ConfigError((path.empty() ? std::string("config") : path) + ": " + msg);
  }

 private:
  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "must be finite");
    return x;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Re-raises a domain error from a constructor as a config error on `path`.
template <class F>
auto checked(const std::string& path, F&& make) {
  try {
    return make();
  } catch (const DomainError& e) {
    Fields::fail(path, e.what());
  }
}

inline RateCurve parse_rate(const json& v, const std::string& path) {
  if (v.is_number()) return checked(path, [&] { return RateCurve(v.get<double>()); });
  Fields f(v, path);
  auto times = f.numbers("times");
  auto values = f.numbers("values");
  f.finish();
  return checked(path, [&] { return RateCurve(std::move(times), std::move(values)); });
}

inline ModelParams parse_model(Fields f) {
  ModelParams m;
  m.V0 = f.number("V0");
  m.kappa = f.number("kappa");
  m.phi = f.number("phi");
  m.sigma = f.number("sigma");
  m.rho = f.number("rho");
  m.theta = f.maybe_number("theta").value_or(0.0);
  if (f.has("rate")) m.rate = parse_rate(f.raw("rate"), f.where("rate"));
  f.finish();
  return m;
}

inline KernelSpec parse_kernel(Fields f) {
  const std::string kind = f.text("kind");
  if (kind == "fractional") {
    const double H = f.number("H");
    f.finish();
    return checked(f.where("H"), [&] { return KernelSpec::fractional(H); });
  }
  if (kind == "exponential") {
    const double c = f.number("c");
    const double rate = f.number("rate");
    f.finish();
    return checked(f.where("kind"), [&] { return KernelSpec::exponential(c, rate); });
  }
  if (kind == "constant") {
    const double c = f.number("c");
    f.finish();
    return checked(f.where("c"), [&] { return KernelSpec::constant(c); });
  }
  Fields::fail(f.where("kind"), "unknown kernel kind '" + kind + "' (fractional, exponential, constant)");
}

inline UtilitySpec parse_utility(Fields f) {
  const std::string kind = f.text("kind");
  if (kind != "power" && kind != "exponential") {
    Fields::fail(f.where("kind"), "unknown utility kind '" + kind + "' (power, exponential)");
  }
  const double gamma = f.number("gamma");
  f.finish();
  return checked(f.where("gamma"), [&] {
    return kind == "power" ? UtilitySpec::power(gamma) : UtilitySpec::exponential(gamma);
  });
}

inline GridConfig parse_grid(Fields f) {
  GridConfig g;
  g.T = f.number("T");
  g.N = f.count("N");
  f.finish();
  if (!(g.T > 0.0)) Fields::fail(f.where("T"), "must be positive");
  if (g.N < 2) Fields::fail(f.where("N"), "must be at least 2");
  return g;
}

inline SimulationConfig parse_simulation(Fields f) {
  SimulationConfig s;
  s.n_paths = f.count("n_paths");
  if (f.has("seed")) s.seed = f.count("seed");
  if (f.has("x0")) s.x0 = f.number("x0");
  if (f.has("scale")) s.scale = f.number("scale");
  if (f.has("scales")) s.scales = f.numbers("scales");
  if (f.has("checkpoints")) s.checkpoints = f.numbers("checkpoints");
  f.finish();
  if (s.n_paths < 2) Fields::fail(f.where("n_paths"), "need at least 2 paths for a standard error");
  if (!(s.x0 > 0.0)) Fields::fail(f.where("x0"), "must be positive");
  for (std::size_t i = 0; i < s.checkpoints.size(); ++i) {
    const double c = s.checkpoints[i];
    if (!(c > 0.0 && c <= 1.0) || (i > 0 && !(c > s.checkpoints[i - 1]))) {
      Fields::fail(f.where("checkpoints"), "must be increasing fractions of T in (0, 1]");
    }
  }
  return s;
}

inline SkewConfig parse_skew(Fields f) {
  SkewConfig s;
  s.maturities = f.numbers("maturities");
  if (f.has("steps")) s.steps = f.count("steps");
  f.finish();
  if (s.maturities.empty()) Fields::fail(f.where("maturities"), "needs at least one maturity");
  for (std::size_t i = 0; i < s.maturities.size(); ++i) {
    if (!(s.maturities[i] > 0.0) || (i > 0 && !(s.maturities[i] > s.maturities[i - 1]))) {
      Fields::fail(f.where("maturities"), "must be positive and ascending");
    }
  }
  if (s.steps < 2) Fields::fail(f.where("steps"), "must be at least 2");
  return s;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  detail::Fields f(j, "");
  RunConfig c;
  if (f.has("model")) c.model = detail::parse_model(f.object("model"));
  if (f.has("kernel")) c.kernel = detail::parse_kernel(f.object("kernel"));
  if (f.has("utility")) c.utility = detail::parse_utility(f.object("utility"));
  if (f.has("grid")) c.grid = detail::parse_grid(f.object("grid"));
  if (f.has("simulation")) c.simulation = detail::parse_simulation(f.object("simulation"));
  if (f.has("skew")) c.skew = detail::parse_skew(f.object("skew"));
  f.finish();
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

enum class Command { riccati, strategy, check, simulate, verify, skew };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::riccati: return "riccati";
    case Command::strategy: return "strategy";
    case Command::check: return "check";
    case Command::simulate: return "simulate";
    case Command::verify: return "verify";
    case Command::skew: return "skew";
  }
  return "?";
}

// Sections a command needs, checked before any numerics run. The model is
// validated here with the rules of the command: pricing ignores theta and
// the rate curve, the portfolio commands need theta != 0.
inline void require_sections(const RunConfig& c, Command cmd) {
  const std::string who = command_name(cmd);
  auto need = [&](bool present, const char* section) {
    if (!present) throw ConfigError(std::string(section) + ": required field missing (needed by " + who + ")");
  };
  need(c.model.has_value(), "model");
  need(c.kernel.has_value(), "kernel");
  if (cmd == Command::skew) {
    need(c.skew.has_value(), "skew");
    ModelParams m = *c.model;
    m.theta = 1.0;
    detail::checked("model", [&] { m.validate(); return 0; });
    return;
  }
  detail::checked("model", [&] { c.model->validate(); return 0; });
  need(c.utility.has_value(), "utility");
  need(c.grid.has_value(), "grid");
  if (cmd == Command::simulate || cmd == Command::verify) {
    need(c.simulation.has_value(), "simulation");
    if (!c.simulation->seed) throw ConfigError("simulation.seed: required field missing (randomized commands need an explicit seed)");
  }
}

}  // namespace vheston
