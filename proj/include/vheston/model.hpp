#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vheston/errors.hpp"

namespace vheston {

// Deterministic short rate r_t, piecewise constant: value k applies on
// [times[k], times[k+1]), the last value extends to infinity.
class RateCurve {
 public:
  RateCurve() : RateCurve(0.0) {}

  // Constant shorthand.
  explicit RateCurve(double r) : times_{0.0}, values_{r} { validate(); }

  RateCurve(std::vector<double> times, std::vector<double> values)
      : times_(std::move(times)), values_(std::move(values)) {
    validate();
  }

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool is_constant() const noexcept { return values_.size() == 1; }

  double operator()(double t) const {
    std::size_t k = 0;
    while (k + 1 < times_.size() && times_[k + 1] <= t) ++k;
    return values_[k];
  }

  // Exact int_a^b r(v) dv.
  double integral(double a, double b) const {
    if (b < a) return -integral(b, a);
    double total = 0.0;
    for (std::size_t k = 0; k < values_.size(); ++k) {
      const double lo = std::max(a, times_[k]);
      const double hi = (k + 1 < times_.size()) ? std::min(b, times_[k + 1]) : b;
      if (hi > lo) total += values_[k] * (hi - lo);
    }
    return total;
  }

  RateCurve scaled(double factor) const {
    std::vector<double> v = values_;
    for (double& x : v) x *= factor;
    return RateCurve(times_, std::move(v));
  }

 private:
  void validate() const {
    if (times_.empty() || times_.size() != values_.size()) {
      throw DomainError("rate curve needs matching, non-empty times and values");
    }
    if (times_.front() != 0.0) throw DomainError("rate curve must start at t = 0");
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!(values_[k] >= 0.0) || !std::isfinite(values_[k])) {
        throw DomainError("rate curve values must be finite and non-negative");
      }
      if (k > 0 && !(times_[k] > times_[k - 1])) throw DomainError("rate curve times must increase");
    }
  }

  std::vector<double> times_;
  std::vector<double> values_;
};

// Volterra Heston coefficients:
//   V_t = V0 + int K(t-s) kappa (phi - V_s) ds + int K(t-s) sigma sqrt(V_s) dB_s
//   dS_t = S_t (r_t + theta V_t) dt + S_t sqrt(V_t) dW1_t
struct ModelParams {
  double V0 = 0.0;
  double kappa = 0.0;
  double phi = 0.0;
  double sigma = 0.0;
  double rho = 0.0;
  double theta = 0.0;
  RateCurve rate{};

  // Throws DomainError naming the first offending field. The numerical
  // routines accept theta = 0 as a degenerate test input; a model handed to
  // the portfolio machinery must pass this check.
  void validate() const {
    auto positive = [](double x, const char* name) {
      if (!(x > 0.0) || !std::isfinite(x)) throw DomainError(std::string(name) + " must be positive");
    };
    positive(V0, "V0");
    positive(kappa, "kappa");
    positive(phi, "phi");
    positive(sigma, "sigma");
    if (!(std::abs(rho) <= 1.0)) throw DomainError("rho must lie in [-1, 1]");
    if (!(theta != 0.0) || !std::isfinite(theta)) throw DomainError("theta must be finite and non-zero");
  }
};

// U(x) = x^gamma / gamma, 0 < gamma < 1.
struct PowerUtility {
  double gamma;
};

// U(x) = -exp(-gamma x) / gamma, gamma > 0.
struct ExponentialUtility {
  double gamma;
};

class UtilitySpec {
 public:
  using Variant = std::variant<PowerUtility, ExponentialUtility>;

  static UtilitySpec power(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("power utility requires 0 < gamma < 1");
    return UtilitySpec(PowerUtility{gamma});
  }

  static UtilitySpec exponential(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("exponential utility requires gamma > 0");
    return UtilitySpec(ExponentialUtility{gamma});
  }

  const Variant& variant() const noexcept { return utility_; }
  bool is_power() const noexcept { return std::holds_alternative<PowerUtility>(utility_); }
  double gamma() const noexcept {
    return std::visit([](const auto& u) { return u.gamma; }, utility_);
  }

  double operator()(double wealth) const {
    if (const auto* p = std::get_if<PowerUtility>(&utility_)) return std::pow(wealth, p->gamma) / p->gamma;
    const double g = std::get<ExponentialUtility>(utility_).gamma;
    return -std::exp(-g * wealth) / g;
  }

  friend bool operator==(const UtilitySpec& a, const UtilitySpec& b) {
    return a.is_power() == b.is_power() && a.gamma() == b.gamma();
  }

 private:
  explicit UtilitySpec(Variant u) : utility_(u) {}

  Variant utility_;
};

}  // namespace vheston
