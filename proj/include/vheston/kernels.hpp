#pragma once

// Volterra kernels on a uniform grid: closed-form product-integration
// weights, discrete convolution and the resolvent of the second kind.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "vheston/errors.hpp"

namespace vheston {

// K(t) = t^{H-1/2} / Gamma(H+1/2), 0 < H <= 1/2.
struct FractionalKernel {
  double H;
};

// K(t) = c exp(-rate t).
struct ExponentialKernel {
  double c;
  double rate;
};

// K(t) = c.
struct ConstantKernel {
  double c;
};

// A strictly positive, completely monotone kernel from one of the three
// supported families. Construction validates the family parameters, so every
// KernelSpec in circulation is admissible.
class KernelSpec {
 public:
  using Variant = std::variant<FractionalKernel, ExponentialKernel, ConstantKernel>;

  static KernelSpec fractional(double H) {
    if (!(H > 0.0 && H <= 0.5)) {
      throw DomainError("fractional kernel requires 0 < H <= 1/2, got H = " + std::to_string(H));
    }
    return KernelSpec(FractionalKernel{H});
  }

  static KernelSpec exponential(double c, double rate) {
    if (!(c > 0.0 && std::isfinite(c)) || !(rate > 0.0 && std::isfinite(rate))) {
      throw DomainError("exponential kernel requires c > 0 and rate > 0");
    }
    return KernelSpec(ExponentialKernel{c, rate});
  }

  static KernelSpec constant(double c) {
    if (!(c > 0.0 && std::isfinite(c))) {
      throw DomainError("constant kernel requires c > 0");
    }
    return KernelSpec(ConstantKernel{c});
  }

  const Variant& variant() const noexcept { return kernel_; }

  bool is_fractional() const noexcept { return std::holds_alternative<FractionalKernel>(kernel_); }

  // Hurst parameter for fractional kernels, 1/2 (the Markovian case) otherwise.
  double hurst() const noexcept {
    if (const auto* f = std::get_if<FractionalKernel>(&kernel_)) return f->H;
    return 0.5;
  }

  // K is unbounded at the origin.
  bool singular_at_zero() const noexcept { return is_fractional() && hurst() < 0.5; }

  // K(t).
  double operator()(double t) const {
    if (t < 0.0) throw DomainError("kernel evaluated at negative time");
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, FractionalKernel>) {
            const double p = k.H - 0.5;
            if (t == 0.0) {
              if (p < 0.0) throw DomainError("fractional kernel is singular at t = 0");
              return 1.0 / std::tgamma(k.H + 0.5);
            }
            return std::pow(t, p) / std::tgamma(k.H + 0.5);
          } else if constexpr (std::is_same_v<K, ExponentialKernel>) {
            return k.c * std::exp(-k.rate * t);
          } else {
            return k.c;
          }
        },
        kernel_);
  }

  // int_0^t K(s) ds.
  double integral(double t) const {
    if (t <= 0.0) return 0.0;
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, FractionalKernel>) {
            return std::pow(t, k.H + 0.5) / std::tgamma(k.H + 1.5);
          } else if constexpr (std::is_same_v<K, ExponentialKernel>) {
            return -k.c * std::expm1(-k.rate * t) / k.rate;
          } else {
            return k.c * t;
          }
        },
        kernel_);
  }

  // (K*K)(t) = int_0^t K(t-s) K(s) ds.
  double self_convolution(double t) const {
    if (t <= 0.0) return 0.0;
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, FractionalKernel>) {
            const double a = 2.0 * k.H;  // 2(H + 1/2) - 1
            return std::pow(t, a) / std::tgamma(a + 1.0);
          } else if constexpr (std::is_same_v<K, ExponentialKernel>) {
            return k.c * k.c * t * std::exp(-k.rate * t);
          } else {
            return k.c * k.c * t;
          }
        },
        kernel_);
  }

 private:
  explicit KernelSpec(Variant k) : kernel_(k) {}

  Variant kernel_;
};

inline double kernel_value(const KernelSpec& spec, double t) { return spec(t); }

// Uniform grid t_i = i T / N on [0, T].
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0 && std::isfinite(horizon))) throw DomainError("grid horizon must be positive");
    if (steps < 2) throw DomainError("grid needs at least 2 steps");
  }

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_ + 1; }
  double step() const noexcept { return horizon_ / static_cast<double>(steps_); }
  double node(std::size_t i) const noexcept {
    return horizon_ * static_cast<double>(i) / static_cast<double>(steps_);
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_;
  std::size_t steps_;
};

namespace detail {

inline bool finite_value(double x) { return std::isfinite(x); }
inline bool finite_value(const std::complex<double>& z) {
  return std::isfinite(z.real()) && std::isfinite(z.imag());
}

}  // namespace detail

// Values of a real or complex function at the nodes of a grid.
template <class T>
class SampledFunction {
 public:
  using value_type = T;

  SampledFunction(TimeGrid grid, std::vector<T> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw UsageError("sampled function length " + std::to_string(values_.size()) +
                       " does not match grid size " + std::to_string(grid_.size()));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!detail::finite_value(values_[i])) throw NumericalFailure("non-finite sample", i);
    }
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<T>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  const T& operator[](std::size_t i) const { return values_[i]; }

 private:
  TimeGrid grid_;
  std::vector<T> values_;
};

// Product-integration weights of a kernel on a grid. All tables are indexed by
// the cell offset m and are translation invariant:
//   weight(m) = int_{m D}^{(m+1) D} K(u) du
//   older(m)  = int_{m D}^{(m+1) D} (u/D - m) K(u) du
//   newer(m)  = int_{m D}^{(m+1) D} ((m+1) - u/D) K(u) du
// For (K*f)(t_n), cell [t_j, t_{j+1}] has m = n-1-j; older/newer split its
// mass between f(t_j) and f(t_{j+1}) when f is linear on the cell (the
// trapezoidal product rule). newer(0) carries the mass near a singularity.
class SampledKernel {
 public:
  SampledKernel(KernelSpec spec, TimeGrid grid) : spec_(spec), grid_(grid) {
    const std::size_t n = grid_.steps();
    const double dt = grid_.step();
    weights_.resize(n);
    older_.resize(n);
    newer_.resize(n);
    for (std::size_t m = 0; m < n; ++m) {
      const double a = dt * static_cast<double>(m);
      weights_[m] = spec_.integral(a + dt) - spec_.integral(a);
      older_[m] = (m == 0) ? first_cell_moment(dt) : cell_moment(a, dt);
      newer_[m] = weights_[m] - older_[m];
      if (!(weights_[m] > 0.0)) throw NumericalFailure("non-positive kernel weight", m);
    }
  }

  const KernelSpec& spec() const noexcept { return spec_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& older() const noexcept { return older_; }
  const std::vector<double>& newer() const noexcept { return newer_; }

 private:
  // int_0^D (u/D) K(u) du, closed form (absorbs the singularity at 0).
  double first_cell_moment(double dt) const {
    return std::visit(
        [dt](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, FractionalKernel>) {
            const double a = k.H + 0.5;
            return std::pow(dt, a) / ((a + 1.0) * std::tgamma(a));
          } else if constexpr (std::is_same_v<K, ExponentialKernel>) {
            const double x = k.rate * dt;
            // (1 - e^{-x}(1+x)) / x^2, series below the cancellation threshold
            const double g = (x < 1e-3) ? 0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0
                                        : (-std::expm1(-x) - x * std::exp(-x)) / (x * x);
            return k.c * dt * g;
          } else {
            return 0.5 * k.c * dt;
          }
        },
        spec_.variant());
  }

  // int_a^{a+D} ((u-a)/D) K(u) du for a >= D; K is smooth there.
  double cell_moment(double a, double dt) const {
    using Rule = boost::math::quadrature::gauss<double, 16>;
    return Rule::integrate([&](double u) { return ((u - a) / dt) * spec_(u); }, a, a + dt);
  }

  KernelSpec spec_;
  TimeGrid grid_;
  std::vector<double> weights_;
  std::vector<double> older_;
  std::vector<double> newer_;
};

inline SampledKernel discretize_kernel(const KernelSpec& spec, const TimeGrid& grid) {
  return SampledKernel(spec, grid);
}

// (K*f)(t_i) with f held left-constant on every cell.
template <class T>
SampledFunction<T> convolve(const SampledKernel& k, const SampledFunction<T>& f) {
  if (!(k.grid() == f.grid())) throw UsageError("convolve: kernel and function live on different grids");
  const auto& w = k.weights();
  const auto& v = f.values();
  std::vector<T> out(v.size(), T{});
  for (std::size_t i = 1; i < v.size(); ++i) {
    T acc{};
    for (std::size_t j = 0; j < i; ++j) acc += w[i - 1 - j] * v[j];
    out[i] = acc;
  }
  return SampledFunction<T>(f.grid(), std::move(out));
}

namespace detail {

// Solves x(t) = f(t) - lambda (K*x)(t) with the trapezoidal product rule,
// x(0) = f(0). Lower-triangular: each node needs one division by
// 1 + lambda * newer(0).
inline std::vector<double> solve_linear_volterra(const SampledKernel& k, const std::vector<double>& forcing,
                                                 double lambda) {
  const std::size_t size = k.grid().size();
  const auto& older = k.older();
  const auto& newer = k.newer();
  const double pivot = 1.0 + lambda * newer[0];
  if (std::abs(pivot) < 1e-12) throw NumericalFailure("singular step in linear Volterra solve", 1);

  std::vector<double> x(size, 0.0);
  x[0] = forcing[0];
  for (std::size_t n = 1; n < size; ++n) {
    double hist = older[n - 1] * x[0];
    for (std::size_t j = 1; j < n; ++j) hist += (older[n - 1 - j] + newer[n - j]) * x[j];
    x[n] = (forcing[n] - lambda * hist) / pivot;
    if (!std::isfinite(x[n])) throw NumericalFailure("linear Volterra solve overflowed", n);
  }
  return x;
}

}  // namespace detail

// Resolvent R of lambda*K: lambda K * R = R * lambda K = lambda K - R.
struct ResolventSolution {
  double lambda;
  // R(t_i). For kernels singular at 0 the node-0 entry holds the first-cell
  // average int_0^D R / D, since R(0) itself is infinite.
  SampledFunction<double> values;
  // int_0^{t_i} R(u) du.
  SampledFunction<double> integral;
  // sup_i | int_0^{t_i} R + lambda (K * int R)(t_i) - lambda int_0^{t_i} K |,
  // the defining identity integrated once, with the convolution evaluated by
  // the left-constant rule (independent of the solver's trapezoidal rule).
  double residual;
};

inline ResolventSolution resolvent_second_kind(const SampledKernel& k, double lambda) {
  if (!std::isfinite(lambda)) throw DomainError("resolvent: lambda must be finite");
  const TimeGrid& grid = k.grid();
  const std::size_t size = grid.size();
  const KernelSpec& spec = k.spec();

  // int R solves rho = lambda G - lambda K*rho, with G = int K.
  // h = K*R solves h = lambda (K*K) - lambda K*h, and then R = lambda (K - h).
  std::vector<double> g_forcing(size), kk_forcing(size);
  for (std::size_t i = 0; i < size; ++i) {
    g_forcing[i] = lambda * spec.integral(grid.node(i));
    kk_forcing[i] = lambda * spec.self_convolution(grid.node(i));
  }
  std::vector<double> rho = detail::solve_linear_volterra(k, g_forcing, lambda);
  std::vector<double> h = detail::solve_linear_volterra(k, kk_forcing, lambda);

  std::vector<double> r(size);
  for (std::size_t i = 1; i < size; ++i) r[i] = lambda * (spec(grid.node(i)) - h[i]);
  r[0] = spec.singular_at_zero() ? rho[1] / grid.step() : lambda * spec(0.0);

  SampledFunction<double> integral(grid, rho);
  const auto conv = convolve(k, integral);
  double residual = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    residual = std::max(residual, std::abs(rho[i] + lambda * conv[i] - g_forcing[i]));
  }
  return ResolventSolution{lambda, SampledFunction<double>(grid, std::move(r)), std::move(integral), residual};
}

}  // namespace vheston
