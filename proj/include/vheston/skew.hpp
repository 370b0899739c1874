#pragma once

// Volterra Heston characteristic function, Fourier pricing of European
// options on a unit forward, Black implied volatility and the ATM skew term
// structure. Pricing uses the martingale dynamics dS = S sqrt(V) dW1 (no
// risk premium, zero rates); V mean-reverts with speed kappa to phi.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <exception>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include "vheston/errors.hpp"
#include "vheston/kernels.hpp"
#include "vheston/model.hpp"
#include "vheston/riccati.hpp"

namespace vheston {

using cplx = std::complex<double>;

struct CharFnRequest {
  cplx u;
  double maturity;
  ModelParams model;
  KernelSpec kernel;
  std::size_t steps = 200;
};

// psi = K * F(u, psi) with F(u, x) = -(u^2 + iu)/2 + (iu rho sigma - kappa) x + sigma^2 x^2 / 2.
inline RiccatiCoefficients<cplx> char_fn_coefficients(const ModelParams& m, cplx u) {
  const cplx i(0.0, 1.0);
  return {cplx(0.5 * m.sigma * m.sigma), i * u * m.rho * m.sigma - m.kappa, -0.5 * (u * u + i * u)};
}

// log E[exp(iu log(S_T/S_0))] = V0 int_0^T F(u, psi) + kappa phi int_0^T psi,
// both integrals by the trapezoid rule on the Adams grid.
inline cplx log_char_fn(cplx u, const ModelParams& m, const SampledKernel& k) {
  if (u == cplx(0.0)) return cplx(0.0);
  const auto coeffs = char_fn_coefficients(m, u);
  RiccatiSolution<cplx> sol = [&] {
    try {
      return solve_riccati(coeffs, k);
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("moment explosion before maturity " + std::to_string(k.grid().horizon()) + " at u = (" +
                                 std::to_string(u.real()) + ", " + std::to_string(u.imag()) + "): " + e.what(),
                             e.node());
    }
  }();
  const std::size_t n = k.grid().steps();
  cplx f_sum = 0.5 * (coeffs(sol.psi[0]) + coeffs(sol.psi[n]));
  cplx psi_sum = 0.5 * (sol.psi[0] + sol.psi[n]);
  for (std::size_t j = 1; j < n; ++j) {
    f_sum += coeffs(sol.psi[j]);
    psi_sum += sol.psi[j];
  }
  const double dt = k.grid().step();
  return m.V0 * f_sum * dt + m.kappa * m.phi * psi_sum * dt;
}

inline cplx characteristic_fn(const CharFnRequest& req) {
  if (!(req.maturity > 0.0)) throw DomainError("characteristic function needs a positive maturity");
  const SampledKernel k(req.kernel, TimeGrid(req.maturity, req.steps));
  return std::exp(log_char_fn(req.u, req.model, k));
}

struct FourierOptions {
  std::size_t steps = 200;     // Adams grid per maturity
  double panel_width = 4.0;    // Gauss-Legendre panel in the Fourier variable
  double cutoff = 1e-12;       // stop once a whole panel is below this
  double max_frequency = 1e5;  // give up beyond this
};

// Damped Fourier integral on a fixed maturity (Carr-Madan):
//   e^{alpha k} C(k) = (1/pi) int_0^inf Re[e^{-ivk} phi(v - (alpha+1)i) / (alpha^2 + alpha - v^2 + i(2 alpha+1) v)] dv
// alpha > 0 prices calls; alpha < -1 prices puts. The transform values are
// computed once and reused for every strike.
class FourierPricer {
 public:
  FourierPricer(const ModelParams& m, const KernelSpec& kernel, double maturity, double alpha,
                const FourierOptions& opts = {})
      : alpha_(alpha), maturity_(maturity) {
    if (!(maturity > 0.0)) throw DomainError("maturity must be positive");
    if (!(alpha > 0.0 || alpha < -1.0)) throw DomainError("damping must be > 0 (calls) or < -1 (puts)");
    const SampledKernel k(kernel, TimeGrid(maturity, opts.steps));
    using rule = boost::math::quadrature::gauss<double, 16>;
    const auto& abscissa = rule::abscissa();
    const auto& weight = rule::weights();
    const cplx i(0.0, 1.0);
    auto transform = [&](double v) {
      const cplx shifted = v - (alpha + 1.0) * i;
      const cplx denom = alpha * alpha + alpha - v * v + i * (2.0 * alpha + 1.0) * v;
      return std::exp(log_char_fn(shifted, m, k)) / denom;
    };
    const double half = 0.5 * opts.panel_width;
    for (double lo = 0.0;; lo += opts.panel_width) {
      if (lo >= opts.max_frequency) throw NumericalFailure("Fourier integrand did not decay", nodes_.size());
      const double mid = lo + half;
      double largest = 0.0;
      // gauss<>::abscissa holds the non-negative half of a symmetric rule
      for (std::size_t j = 0; j < abscissa.size(); ++j) {
        for (int sign : {-1, 1}) {
          if (abscissa[j] == 0.0 && sign < 0) continue;
          const double v = mid + sign * half * abscissa[j];
          const cplx value = transform(v);
          nodes_.push_back(v);
          values_.push_back(value * (half * weight[j]));
          largest = std::max(largest, std::abs(value));
        }
      }
      if (largest < opts.cutoff) break;
    }
  }

  double alpha() const noexcept { return alpha_; }
  double maturity() const noexcept { return maturity_; }
  std::size_t evaluations() const noexcept { return nodes_.size(); }

  // Undiscounted price at log-strike k on a unit forward.
  double price(double log_strike) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      const cplx phase(std::cos(nodes_[j] * log_strike), -std::sin(nodes_[j] * log_strike));
      sum += (phase * values_[j]).real();
    }
    return std::exp(-alpha_ * log_strike) * sum / std::numbers::pi;
  }

 private:
  double alpha_;
  double maturity_;
  std::vector<double> nodes_;
  std::vector<cplx> values_;
};

inline constexpr double kCallDamping = 0.75;
inline constexpr double kPutDamping = -1.75;

inline double price_call(double strike, double maturity, const ModelParams& m, const KernelSpec& kernel,
                         const FourierOptions& opts = {}) {
  if (!(strike > 0.0)) throw DomainError("strike must be positive");
  return FourierPricer(m, kernel, maturity, kCallDamping, opts).price(std::log(strike));
}

inline double price_put(double strike, double maturity, const ModelParams& m, const KernelSpec& kernel,
                        const FourierOptions& opts = {}) {
  if (!(strike > 0.0)) throw DomainError("strike must be positive");
  return FourierPricer(m, kernel, maturity, kPutDamping, opts).price(std::log(strike));
}

inline double black_call(double forward, double strike, double vol, double maturity) {
  const double s = vol * std::sqrt(maturity);
  const double d1 = (std::log(forward / strike) + 0.5 * s * s) / s;
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
  return forward * cdf(d1) - strike * cdf(d1 - s);
}

// Black implied volatility of an undiscounted call, by Newton steps
// safeguarded with bisection on [1e-8, 20].
inline double implied_vol(double price, double forward, double strike, double maturity) {
  if (!(forward > 0.0 && strike > 0.0 && maturity > 0.0)) throw DomainError("implied_vol: bad contract");
  const double intrinsic = std::max(forward - strike, 0.0);
  if (!(price > intrinsic && price < forward)) {
    throw DomainError("implied_vol: price " + std::to_string(price) + " outside (" + std::to_string(intrinsic) +
                      ", " + std::to_string(forward) + ")");
  }
  const double sqrt_t = std::sqrt(maturity);
  auto f = [&](double vol) {
    const double s = vol * sqrt_t;
    const double d1 = (std::log(forward / strike) + 0.5 * s * s) / s;
    const double vega = forward * std::exp(-0.5 * d1 * d1) / std::sqrt(2.0 * std::numbers::pi) * sqrt_t;
    return std::make_pair(black_call(forward, strike, vol, maturity) - price, vega);
  };
  // start from the ATM approximation, clamped into the bracket
  const double guess = std::clamp(std::sqrt(2.0 * std::numbers::pi / maturity) * price / forward, 0.01, 5.0);
  std::uintmax_t iterations = 200;
  const double vol = boost::math::tools::newton_raphson_iterate(f, guess, 1e-8, 20.0, 50, iterations);
  if (iterations >= 200) throw NumericalFailure("implied_vol did not converge", 0);
  return vol;
}

struct SkewPoint {
  double maturity;
  double atm_vol;
  double atm_skew;  // d sigma_imp / d log-moneyness at 0
};

inline constexpr double kSkewHalfWidth = 1e-3;

inline SkewPoint atm_skew_point(const ModelParams& m, const KernelSpec& kernel, double maturity,
                                const FourierOptions& opts = {}) {
  const FourierPricer pricer(m, kernel, maturity, kCallDamping, opts);
  const double h = kSkewHalfWidth;
  auto vol_at = [&](double k) { return implied_vol(pricer.price(k), 1.0, std::exp(k), maturity); };
  const double up = vol_at(h);
  const double down = vol_at(-h);
  return {maturity, vol_at(0.0), (up - down) / (2.0 * h)};
}

// One point per maturity (ascending, positive), computed on up to `threads`
// workers; each maturity is independent, so the result does not depend on
// the worker count.
inline std::vector<SkewPoint> atm_skew_curve(const ModelParams& m, const KernelSpec& kernel,
                                             const std::vector<double>& maturities, const FourierOptions& opts = {},
                                             unsigned threads = 1) {
  if (maturities.empty()) throw UsageError("atm_skew_curve needs at least one maturity");
  for (std::size_t i = 0; i < maturities.size(); ++i) {
    if (!(maturities[i] > 0.0) || (i > 0 && !(maturities[i] > maturities[i - 1]))) {
      throw DomainError("maturities must be positive and ascending");
    }
  }
  if (threads < 1) throw UsageError("thread count must be at least 1");
  std::vector<SkewPoint> out(maturities.size());
  std::vector<std::exception_ptr> errors(maturities.size());
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < maturities.size(); i += threads) {
      try {
        out[i] = atm_skew_point(m, kernel, maturities[i], opts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace vheston
