#pragma once

// Deterministic curves built on top of psi: forward variance, optimal
// strategy multipliers, feasibility reports and the auxiliary process at t=0.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vheston/errors.hpp"
#include "vheston/kernels.hpp"
#include "vheston/model.hpp"
#include "vheston/riccati.hpp"

namespace vheston {

// xi_0(t_i) = E~[V_{t_i}] under the measure whose variance drift is
// kappa phi - lambda V.
struct ForwardVarianceCurve {
  SampledFunction<double> values;
  double lambda;

  const TimeGrid& grid() const noexcept { return values.grid(); }
};

inline ForwardVarianceCurve forward_variance(const ModelParams& m, const ResolventSolution& resolvent) {
  const double lambda = resolvent.lambda;
  if (lambda == 0.0) throw DomainError("forward variance needs lambda != 0");
  const auto& rho = resolvent.integral;
  std::vector<double> xi(rho.size());
  const double level = m.kappa * m.phi / lambda;
  for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = (1.0 - rho[i]) * m.V0 + level * rho[i];
  return {SampledFunction<double>(rho.grid(), std::move(xi)), lambda};
}

inline ForwardVarianceCurve forward_variance(const ModelParams& m, double lambda, const SampledKernel& k) {
  if (lambda == 0.0) throw DomainError("forward variance needs lambda != 0");
  return forward_variance(m, resolvent_second_kind(k, lambda));
}

struct StrategyCurve {
  SampledFunction<double> values;  // A(t_i)
  UtilitySpec utility;
  double lambda;
  double c;
  double hurst;

  const TimeGrid& grid() const noexcept { return values.grid(); }
  double sup_abs() const {
    double s = 0.0;
    for (double a : values.values()) s = std::max(s, std::abs(a));
    return s;
  }
};

namespace detail {

inline void require_kind(const RiccatiSolution<double>& psi, RiccatiKind kind, const char* who) {
  if (psi.metadata.kind != kind) throw UsageError(std::string(who) + ": psi was solved for another utility");
}

inline const PowerUtility& as_power(const UtilitySpec& u, const char* who) {
  const auto* p = std::get_if<PowerUtility>(&u.variant());
  if (p == nullptr) throw UsageError(std::string(who) + " needs a power utility");
  return *p;
}

inline const ExponentialUtility& as_exponential(const UtilitySpec& u, const char* who) {
  const auto* e = std::get_if<ExponentialUtility>(&u.variant());
  if (e == nullptr) throw UsageError(std::string(who) + " needs an exponential utility");
  return *e;
}

inline void require_matching(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi,
                             const char* who) {
  const bool power = u.is_power();
  require_kind(psi, power ? RiccatiKind::power : RiccatiKind::exponential, who);
  const double lambda = power ? power_lambda(m, std::get<PowerUtility>(u.variant())) : exponential_lambda(m);
  if (psi.metadata.gamma != u.gamma() || std::abs(psi.metadata.lambda - lambda) > 1e-14 * (1.0 + std::abs(lambda))) {
    throw UsageError(std::string(who) + ": psi metadata does not match the model and utility");
  }
}

}  // namespace detail

// A_t = (theta + rho c sigma psi(T-t)) / (1-gamma)
inline StrategyCurve strategy_power(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi) {
  const auto& pw = detail::as_power(u, "strategy_power");
  detail::require_matching(m, u, psi, "strategy_power");
  const std::size_t n = psi.grid.steps();
  const double c = psi.metadata.c;
  std::vector<double> a(n + 1);
  for (std::size_t i = 0; i <= n; ++i) a[i] = (m.theta + m.rho * c * m.sigma * psi.psi[n - i]) / (1.0 - pw.gamma);
  return {SampledFunction<double>(psi.grid, std::move(a)), u, psi.metadata.lambda, c, psi.kernel.hurst()};
}

// A_t = exp(-int_t^T r) (theta + rho sigma psi(T-t)) / gamma
inline StrategyCurve strategy_exponential(const ModelParams& m, const UtilitySpec& u,
                                          const RiccatiSolution<double>& psi) {
  const auto& ex = detail::as_exponential(u, "strategy_exponential");
  detail::require_matching(m, u, psi, "strategy_exponential");
  const TimeGrid& grid = psi.grid;
  const std::size_t n = grid.steps();
  std::vector<double> a(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double discount = std::exp(-m.rate.integral(grid.node(i), grid.horizon()));
    a[i] = discount * (m.theta + m.rho * m.sigma * psi.psi[n - i]) / ex.gamma;
  }
  return {SampledFunction<double>(grid, std::move(a)), u, psi.metadata.lambda, 1.0, psi.kernel.hurst()};
}

inline StrategyCurve optimal_strategy(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi) {
  return u.is_power() ? strategy_power(m, u, psi) : strategy_exponential(m, u, psi);
}

struct ConditionResult {
  std::string name;
  std::optional<double> margin;  // empty when the condition could not be evaluated
  bool pass;
};

struct AssumptionReport {
  double lambda;
  std::optional<double> c;
  std::optional<double> eta;
  std::optional<double> p_used;
  std::optional<double> q_used;
  std::vector<ConditionResult> conditions;
  bool pass;
};

// Geometric scan over (lower, upper] with `points` nodes; the conditions
// only need one admissible exponent, so the scan keeps the best margin.
struct ExponentScan {
  double lower;
  double upper = 64.0;
  int points = 64;

  double node(int k) const {
    const double hi = std::max(upper, 2.0 * lower);
    return lower * std::pow(hi / lower, static_cast<double>(k) / points);
  }

  template <class Margin>
  std::pair<double, double> best(Margin&& margin) const {
    double best_p = node(1);
    double best_m = margin(best_p);
    for (int k = 2; k <= points; ++k) {
      const double p = node(k);
      const double v = margin(p);
      if (v > best_m) {
        best_m = v;
        best_p = p;
      }
    }
    return {best_p, best_m};
  }
};

namespace detail {

inline AssumptionReport finish(AssumptionReport r) {
  r.pass = std::all_of(r.conditions.begin(), r.conditions.end(), [](const ConditionResult& c) { return c.pass; });
  return r;
}

inline ConditionResult condition(std::string name, double margin) {
  return {std::move(name), margin, margin > 0.0};
}

inline AssumptionReport power_conditions(const ModelParams& m, const PowerUtility& u) {
  const double g = u.gamma / (1.0 - u.gamma);
  const double lambda = power_lambda(m, u);
  const double c = power_c(u, m.rho);
  const double th2s2 = m.theta * m.theta * m.sigma * m.sigma;

  AssumptionReport r{};
  r.lambda = lambda;
  r.c = c;
  r.conditions.push_back(condition("kappa^2 - 6 (gamma/(1-gamma))^2 theta^2 sigma^2", m.kappa * m.kappa - 6.0 * g * g * th2s2));
  r.conditions.push_back(condition("lambda", lambda));
  const ExponentScan scan{1.0 / (2.0 * c)};
  const auto [p, margin] = scan.best([&](double p) { return lambda * lambda - 2.0 * p * g * th2s2; });
  r.p_used = p;
  r.conditions.push_back(condition("lambda^2 - 2 p gamma/(1-gamma) theta^2 sigma^2", margin));
  return r;
}

}  // namespace detail

inline AssumptionReport check_power_feasibility(const ModelParams& m, const UtilitySpec& u,
                                                const StrategyCurve& strategy) {
  const auto& pw = detail::as_power(u, "check_power_feasibility");
  if (!(strategy.utility == u)) throw UsageError("check_power_feasibility: strategy belongs to another utility");
  AssumptionReport r = detail::power_conditions(m, pw);

  const double sup_a = strategy.sup_abs();
  auto eta = [&](double q) {
    return std::max(2.0 * q * std::abs(m.theta) * sup_a, (8.0 * q * q - 2.0 * q) * sup_a * sup_a);
  };
  const ExponentScan scan{1.0};
  const auto [q, margin] = scan.best([&](double q) { return m.kappa * m.kappa - 2.0 * eta(q) * m.sigma * m.sigma; });
  r.q_used = q;
  r.eta = eta(q);
  r.conditions.push_back(detail::condition("kappa^2 - 2 eta sigma^2", margin));
  return detail::finish(std::move(r));
}

inline AssumptionReport check_exponential_feasibility(const ModelParams& m, const UtilitySpec& u,
                                                      const StrategyCurve& strategy) {
  const auto& ex = detail::as_exponential(u, "check_exponential_feasibility");
  if (!(strategy.utility == u)) throw UsageError("check_exponential_feasibility: strategy belongs to another utility");
  const TimeGrid& grid = strategy.grid();

  AssumptionReport r{};
  r.lambda = exponential_lambda(m);
  r.conditions.push_back(detail::condition("lambda", r.lambda));

  std::vector<double> growth(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) growth[i] = std::exp(m.rate.integral(grid.node(i), grid.horizon()));
  auto eta = [&](double p) {
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double a = strategy.values[i];
      const double v = 2.0 * p * p * ex.gamma * ex.gamma * growth[i] * growth[i] * a * a +
                       2.0 * p * ex.gamma * growth[i] * std::abs(m.theta * a);
      sup = std::max(sup, v);
    }
    return sup;
  };
  const ExponentScan scan{1.0};
  const auto [p, margin] = scan.best([&](double p) { return m.kappa * m.kappa - 2.0 * eta(p) * m.sigma * m.sigma; });
  r.p_used = p;
  r.eta = eta(p);
  r.conditions.push_back(detail::condition("kappa^2 - 2 eta sigma^2", margin));
  return detail::finish(std::move(r));
}

inline AssumptionReport check_feasibility(const ModelParams& m, const UtilitySpec& u, const StrategyCurve& strategy) {
  return u.is_power() ? check_power_feasibility(m, u, strategy) : check_exponential_feasibility(m, u, strategy);
}

// Report for a parameter set whose Riccati-Volterra equation could not be
// solved on the horizon: every strategy-free condition is evaluated and the
// eta condition is recorded as failed without a margin.
inline AssumptionReport feasibility_without_strategy(const ModelParams& m, const UtilitySpec& u) {
  AssumptionReport r{};
  if (const auto* pw = std::get_if<PowerUtility>(&u.variant())) {
    r = detail::power_conditions(m, *pw);
  } else {
    r.lambda = exponential_lambda(m);
    r.conditions.push_back(detail::condition("lambda", r.lambda));
  }
  r.conditions.push_back({"kappa^2 - 2 eta sigma^2", std::nullopt, false});
  return detail::finish(std::move(r));
}

namespace detail {

// int_0^T integrand(s_i) ds, trapezoid on the grid nodes.
template <class F>
double trapezoid(const TimeGrid& grid, F&& integrand) {
  const std::size_t n = grid.steps();
  double sum = 0.5 * (integrand(0) + integrand(n));
  for (std::size_t i = 1; i < n; ++i) sum += integrand(i);
  return sum * grid.step();
}

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* who) {
  if (!(a == b)) throw UsageError(std::string(who) + ": inputs live on different grids");
}

}  // namespace detail

// M_0 = exp( int_0^T gamma r_s + (gamma theta^2/(2(1-gamma)) + c sigma^2 psi^2(T-s)/2) xi_0(s) ds )
inline double m_initial_power(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi,
                              const ForwardVarianceCurve& xi0) {
  const auto& pw = detail::as_power(u, "m_initial_power");
  detail::require_kind(psi, RiccatiKind::power, "m_initial_power");
  detail::require_same_grid(psi.grid, xi0.grid(), "m_initial_power");
  const TimeGrid& grid = psi.grid;
  const std::size_t n = grid.steps();
  const double c = psi.metadata.c;
  const double premium = pw.gamma * m.theta * m.theta / (2.0 * (1.0 - pw.gamma));
  const double variance_part = detail::trapezoid(grid, [&](std::size_t i) {
    const double p = psi.psi[n - i];
    return (premium + 0.5 * c * m.sigma * m.sigma * p * p) * xi0.values[i];
  });
  return std::exp(pw.gamma * m.rate.integral(0.0, grid.horizon()) + variance_part);
}

// M_0 = exp( int_0^T (-theta^2/2 + sigma^2 (1-rho^2) psi^2(T-s)/2) xi_0(s) ds ), in (0, 1].
inline double m_initial_exponential(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi,
                                    const ForwardVarianceCurve& xi0) {
  detail::as_exponential(u, "m_initial_exponential");
  detail::require_kind(psi, RiccatiKind::exponential, "m_initial_exponential");
  detail::require_same_grid(psi.grid, xi0.grid(), "m_initial_exponential");
  const TimeGrid& grid = psi.grid;
  const std::size_t n = grid.steps();
  const double q = 0.5 * m.sigma * m.sigma * (1.0 - m.rho * m.rho);
  const double exponent = detail::trapezoid(grid, [&](std::size_t i) {
    const double p = psi.psi[n - i];
    return (-0.5 * m.theta * m.theta + q * p * p) * xi0.values[i];
  });
  const double m0 = std::exp(exponent);
  if (m0 > 1.0 + 1e-12) throw InvariantViolation("exponential-utility M_0 exceeds 1: " + std::to_string(m0));
  return m0;
}

inline double m_initial(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi,
                        const ForwardVarianceCurve& xi0) {
  return u.is_power() ? m_initial_power(m, u, psi, xi0) : m_initial_exponential(m, u, psi, xi0);
}

// sup_j | int_{t_j}^T g(s) R(s - t_j)/lambda ds - c psi(T - t_j) |,
// g(s) = c sigma^2 psi^2(T-s)/2 + gamma theta^2/(2(1-gamma)).
// The resolvent enters through its cell masses, so the singular first cell
// is integrated exactly.
inline double identity_residual(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi,
                                const ResolventSolution& resolvent) {
  const auto& pw = detail::as_power(u, "identity_residual");
  detail::require_kind(psi, RiccatiKind::power, "identity_residual");
  detail::require_same_grid(psi.grid, resolvent.integral.grid(), "identity_residual");
  const double lambda = resolvent.lambda;
  if (lambda == 0.0) throw DomainError("identity_residual needs lambda != 0");

  const std::size_t n = psi.grid.steps();
  const double c = psi.metadata.c;
  const double premium = pw.gamma * m.theta * m.theta / (2.0 * (1.0 - pw.gamma));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double p = psi.psi[n - i];
    g[i] = 0.5 * c * m.sigma * m.sigma * p * p + premium;
  }
  const auto& rho = resolvent.integral;
  double worst = 0.0;
  for (std::size_t j = 0; j <= n; ++j) {
    double lhs = 0.0;
    for (std::size_t k = 0; j + k < n; ++k) lhs += (rho[k + 1] - rho[k]) * 0.5 * (g[j + k] + g[j + k + 1]);
    lhs /= lambda;
    worst = std::max(worst, std::abs(lhs - c * psi.psi[n - j]));
  }
  return worst;
}

inline double identity_residual(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi,
                                const SampledKernel& k, double lambda) {
  return identity_residual(m, u, psi, resolvent_second_kind(k, lambda));
}

}  // namespace vheston
