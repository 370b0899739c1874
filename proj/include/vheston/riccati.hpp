#pragma once

// Fractional Adams predictor-corrector for Riccati-Volterra equations
//   psi(t) = int_0^t K(t-s) F(psi(s)) ds,  F(x) = a x^2 + b x + d.

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

#include "vheston/errors.hpp"
#include "vheston/kernels.hpp"
#include "vheston/model.hpp"

namespace vheston {

template <class T>
struct RiccatiCoefficients {
  T a{};
  T b{};
  T d{};

  T operator()(const T& x) const { return (a * x + b) * x + d; }
  T derivative(const T& x) const { return 2.0 * a * x + b; }
};

struct AdamsOptions {
  double tolerance = 1e-12;
  int max_iterations = 20;
  double blowup_bound = 1e8;
};

enum class RiccatiKind { generic, power, exponential };

// Constants the utility-specific equations are assembled from. For the
// exponential case c is reported as 1 (the strategy has no c factor).
struct RiccatiMetadata {
  RiccatiKind kind = RiccatiKind::generic;
  double lambda = 0.0;
  double c = 1.0;
  double gamma = 0.0;
};

template <class T>
struct RiccatiSolution {
  TimeGrid grid;
  SampledFunction<T> psi;
  RiccatiCoefficients<T> coefficients;
  KernelSpec kernel;
  // Largest final corrector update over all nodes.
  double corrector_residual;
  RiccatiMetadata metadata;
};

template <class T>
RiccatiSolution<T> solve_riccati(const RiccatiCoefficients<T>& coeffs, const SampledKernel& k,
                                 const AdamsOptions& opts = {}) {
  const TimeGrid& grid = k.grid();
  const std::size_t size = grid.size();
  const auto& w = k.weights();
  const auto& older = k.older();
  const auto& newer = k.newer();

  // corrector weight on F(psi_j), j >= 1, at distance n - j
  std::vector<double> interior(grid.steps(), 0.0);
  for (std::size_t dist = 1; dist < grid.steps(); ++dist) interior[dist] = older[dist - 1] + newer[dist];

  std::vector<T> psi(size, T{});
  std::vector<T> f(size, T{});
  f[0] = coeffs(psi[0]);
  double worst_update = 0.0;

  for (std::size_t n = 1; n < size; ++n) {
    T predictor{};
    T history = older[n - 1] * f[0];
    predictor += w[n - 1] * f[0];
    for (std::size_t j = 1; j < n; ++j) {
      predictor += w[n - 1 - j] * f[j];
      history += interior[n - j] * f[j];
    }

    T x = predictor;
    double update = 0.0;
    bool converged = false;
    // Newton on x = history + newer(0) F(x); plain fixed-point iteration
    // stops contracting once newer(0) |F'| approaches 1 (large Fourier
    // arguments on rough kernels).
    for (int it = 0; it < opts.max_iterations; ++it) {
      const T residual = x - history - newer[0] * coeffs(x);
      const T slope = 1.0 - newer[0] * coeffs.derivative(x);
      const T next = x - residual / slope;
      update = std::abs(next - x);
      x = next;
      if (!detail::finite_value(x) || std::abs(x) > opts.blowup_bound) {
        throw NumericalFailure("Riccati-Volterra solution exceeded blow-up bound", n);
      }
      if (update <= opts.tolerance * std::max(1.0, std::abs(x))) {
        converged = true;
        break;
      }
    }
    if (!converged) throw NumericalFailure("Adams corrector did not converge", n);
    worst_update = std::max(worst_update, update);
    psi[n] = x;
    f[n] = coeffs(x);
  }

  return RiccatiSolution<T>{grid, SampledFunction<T>(grid, std::move(psi)), coeffs, k.spec(), worst_update, {}};
}

// lambda = kappa - gamma/(1-gamma) rho theta sigma
inline double power_lambda(const ModelParams& m, const PowerUtility& u) {
  return m.kappa - u.gamma / (1.0 - u.gamma) * m.rho * m.theta * m.sigma;
}

// c = (1-gamma) / (1 - gamma + gamma rho^2)
inline double power_c(const PowerUtility& u, double rho) {
  return (1.0 - u.gamma) / (1.0 - u.gamma + u.gamma * rho * rho);
}

// lambda = kappa + rho sigma theta
inline double exponential_lambda(const ModelParams& m) { return m.kappa + m.rho * m.sigma * m.theta; }

inline RiccatiCoefficients<double> power_coefficients(const ModelParams& m, const PowerUtility& u) {
  const double c = power_c(u, m.rho);
  return {0.5 * m.sigma * m.sigma, -power_lambda(m, u),
          u.gamma * m.theta * m.theta / (2.0 * c * (1.0 - u.gamma))};
}

inline RiccatiCoefficients<double> exponential_coefficients(const ModelParams& m) {
  return {0.5 * m.sigma * m.sigma * (1.0 - m.rho * m.rho), -exponential_lambda(m), -0.5 * m.theta * m.theta};
}

inline RiccatiSolution<double> solve_power_psi(const ModelParams& m, const UtilitySpec& u, const SampledKernel& k,
                                               const AdamsOptions& opts = {}) {
  const auto* power = std::get_if<PowerUtility>(&u.variant());
  if (power == nullptr) throw UsageError("solve_power_psi needs a power utility");
  auto sol = solve_riccati(power_coefficients(m, *power), k, opts);
  sol.metadata = {RiccatiKind::power, power_lambda(m, *power), power_c(*power, m.rho), power->gamma};
  return sol;
}

inline RiccatiSolution<double> solve_exponential_psi(const ModelParams& m, const UtilitySpec& u,
                                                     const SampledKernel& k, const AdamsOptions& opts = {}) {
  const auto* expo = std::get_if<ExponentialUtility>(&u.variant());
  if (expo == nullptr) throw UsageError("solve_exponential_psi needs an exponential utility");
  auto sol = solve_riccati(exponential_coefficients(m), k, opts);
  sol.metadata = {RiccatiKind::exponential, exponential_lambda(m), 1.0, expo->gamma};
  return sol;
}

// Dispatches on the utility.
inline RiccatiSolution<double> solve_psi(const ModelParams& m, const UtilitySpec& u, const SampledKernel& k,
                                         const AdamsOptions& opts = {}) {
  return u.is_power() ? solve_power_psi(m, u, k, opts) : solve_exponential_psi(m, u, k, opts);
}

}  // namespace vheston
