#pragma once

// Monte Carlo for the Volterra Heston model: path generation under the
// original or a tilted measure, wealth under a strategy curve, the auxiliary
// process M along paths, and streaming diagnostics built on them.
//
// Increments of W1 are always stored as increments of the original Brownian
// motion. Under a tilted measure they carry the drift w1_shift sqrt(V) dt,
// so wealth dynamics read the same under either measure.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vheston/curves.hpp"
#include "vheston/errors.hpp"
#include "vheston/kernels.hpp"
#include "vheston/model.hpp"
#include "vheston/random.hpp"
#include "vheston/riccati.hpp"

namespace vheston {

// Original measure, or one under which dW1 = dW1~ + w1_shift sqrt(V) dt for
// a Brownian motion W1~. The variance drift is then kappa phi - lambda V
// with lambda = kappa - rho sigma w1_shift.
struct Measure {
  enum class Kind { original, tilted };

  Kind kind = Kind::original;
  double lambda = 0.0;
  double w1_shift = 0.0;

  static Measure original() { return {}; }
  static Measure tilted(double lambda, double w1_shift) { return {Kind::tilted, lambda, w1_shift}; }
  bool is_tilted() const noexcept { return kind == Kind::tilted; }
};

// Drift of W1 under the utility's pricing measure: gamma theta/(1-gamma)
// for power, -theta for exponential.
inline double tilt_shift(const ModelParams& m, const UtilitySpec& u) {
  const double g = u.gamma();
  return u.is_power() ? g * m.theta / (1.0 - g) : -m.theta;
}

inline Measure tilted_measure(const ModelParams& m, const UtilitySpec& u) {
  const double shift = tilt_shift(m, u);
  return Measure::tilted(m.kappa - m.rho * m.sigma * shift, shift);
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t n_paths = 0;
};

// Running mean and sum of squared deviations (Welford), mergeable in a fixed
// order so that chunked parallel reduction is reproducible.
class Accumulator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  void merge(const Accumulator& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }

  McEstimate estimate() const {
    McEstimate e;
    e.mean = mean_;
    e.n_paths = n_;
    if (n_ > 1) {
      const double variance = std::max(m2_, 0.0) / static_cast<double>(n_ - 1);
      e.std_error = std::sqrt(variance / static_cast<double>(n_));
    }
    return e;
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// One simulated path. `forcing` is scratch for the Volterra sum.
struct SinglePath {
  std::vector<double> dW1, dW2;  // N increments
  std::vector<double> V, S;      // N+1 nodes, V already truncated at 0
  std::vector<double> forcing;
};

class PathSimulator {
 public:
  PathSimulator(const ModelParams& m, const SampledKernel& k, std::uint64_t seed, Measure measure)
      : m_(m), k_(k), seed_(seed), measure_(measure) {
    if (measure.is_tilted()) {
      const double expected = m.kappa - m.rho * m.sigma * measure.w1_shift;
      if (!(std::abs(measure.lambda - expected) <= 1e-12 * std::max(1.0, std::abs(expected)))) {
        throw UsageError("tilted measure: lambda " + std::to_string(measure.lambda) +
                         " disagrees with kappa - rho sigma shift = " + std::to_string(expected));
      }
    }
    reversion_ = measure.is_tilted() ? measure.lambda : m.kappa;
    const TimeGrid& g = k.grid();
    const double dt = g.step();
    scaled_weights_.resize(g.steps());
    for (std::size_t i = 0; i < g.steps(); ++i) scaled_weights_[i] = k.weights()[i] / dt;
    rate_steps_.resize(g.steps());
    for (std::size_t i = 0; i < g.steps(); ++i) rate_steps_[i] = m.rate.integral(g.node(i), g.node(i + 1));
  }

  const TimeGrid& grid() const noexcept { return k_.grid(); }
  const ModelParams& model() const noexcept { return m_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const Measure& measure() const noexcept { return measure_; }

  // Euler with product integration of the convolution and full truncation:
  //   V_{i+1} = V0 + sum_{j<=i} w_{i-j} (drift_j + sigma sqrt(V_j+) dB_j / D)
  // and log-Euler for S with S_0 = 1.
  void generate(std::uint64_t path, SinglePath& out) const {
    const std::size_t n = grid().steps();
    const double dt = grid().step();
    const double sq = std::sqrt(dt);
    const double rho = m_.rho;
    const double rho_bar = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const double level = m_.kappa * m_.phi;

    out.dW1.resize(n);
    out.dW2.resize(n);
    out.V.resize(n + 1);
    out.S.resize(n + 1);
    out.forcing.resize(n);
    out.V[0] = m_.V0;
    out.S[0] = 1.0;
    double log_s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = out.V[i];
      const double sv = std::sqrt(v);
      const NormalPair z = normal_pair(seed_, path, i);
      const double dw1_measure = sq * z.z1;
      const double dw2 = sq * z.z2;
      out.dW1[i] = dw1_measure + measure_.w1_shift * sv * dt;
      out.dW2[i] = dw2;
      out.forcing[i] = (level - reversion_ * v) * dt + m_.sigma * sv * (rho * dw1_measure + rho_bar * dw2);

      double acc = m_.V0;
      for (std::size_t j = 0; j <= i; ++j) acc += scaled_weights_[i - j] * out.forcing[j];
      out.V[i + 1] = std::max(acc, 0.0);

      log_s += rate_steps_[i] + (m_.theta - 0.5) * v * dt + sv * out.dW1[i];
      out.S[i + 1] = std::exp(log_s);
    }
  }

 private:
  ModelParams m_;
  SampledKernel k_;
  std::uint64_t seed_;
  Measure measure_;
  double reversion_;
  std::vector<double> scaled_weights_;
  std::vector<double> rate_steps_;
};

class PathEnsemble {
 public:
  PathEnsemble(TimeGrid grid, std::uint64_t n_paths, std::uint64_t seed, Measure measure, double rho)
      : grid_(grid), n_paths_(n_paths), seed_(seed), measure_(measure), rho_(rho) {
    const std::size_t n = grid.steps();
    dW1_.resize(n_paths * n);
    dW2_.resize(n_paths * n);
    V_.resize(n_paths * (n + 1));
    S_.resize(n_paths * (n + 1));
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::uint64_t n_paths() const noexcept { return n_paths_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const Measure& measure() const noexcept { return measure_; }

  std::span<const double> dW1(std::uint64_t p) const { return row(dW1_, p, grid_.steps()); }
  std::span<const double> dW2(std::uint64_t p) const { return row(dW2_, p, grid_.steps()); }
  std::span<const double> V(std::uint64_t p) const { return row(V_, p, grid_.size()); }
  std::span<const double> S(std::uint64_t p) const { return row(S_, p, grid_.size()); }

  // dB = rho dW1 + sqrt(1-rho^2) dW2, in terms of the stored (original) W1.
  double dB(std::uint64_t p, std::size_t i) const {
    return rho_ * dW1(p)[i] + std::sqrt(std::max(0.0, 1.0 - rho_ * rho_)) * dW2(p)[i];
  }

  void store(std::uint64_t p, const SinglePath& path) {
    std::copy(path.dW1.begin(), path.dW1.end(), dW1_.begin() + p * grid_.steps());
    std::copy(path.dW2.begin(), path.dW2.end(), dW2_.begin() + p * grid_.steps());
    std::copy(path.V.begin(), path.V.end(), V_.begin() + p * grid_.size());
    std::copy(path.S.begin(), path.S.end(), S_.begin() + p * grid_.size());
  }

 private:
  static std::span<const double> row(const std::vector<double>& v, std::uint64_t p, std::size_t width) {
    return {v.data() + p * width, width};
  }

  TimeGrid grid_;
  std::uint64_t n_paths_;
  std::uint64_t seed_;
  Measure measure_;
  double rho_;
  std::vector<double> dW1_, dW2_, V_, S_;
};

inline PathEnsemble simulate_paths(const ModelParams& m, const SampledKernel& k, std::uint64_t n_paths,
                                   std::uint64_t seed, Measure measure) {
  if (n_paths < 1) throw UsageError("simulate_paths needs at least one path");
  const PathSimulator sim(m, k, seed, measure);
  PathEnsemble out(k.grid(), n_paths, seed, measure, m.rho);
  SinglePath path;
  for (std::uint64_t p = 0; p < n_paths; ++p) {
    sim.generate(p, path);
    out.store(p, path);
  }
  return out;
}

inline StrategyCurve scale_strategy(const StrategyCurve& a, double factor) {
  std::vector<double> v = a.values.values();
  for (double& x : v) x *= factor;
  StrategyCurve out = a;
  out.values = SampledFunction<double>(a.grid(), std::move(v));
  return out;
}

// Wealth along a path for a fixed strategy curve A, position A_t sqrt(V_t).
//   power:       dX = (r + theta sqrt(V) a) X dt + a X dW1, log-Euler
//   exponential: dX = (r X + theta sqrt(V) u) dt + u dW1, Euler on e^{-int r} X
// The bond part is applied exactly, so A = 0 reproduces x0 exp(int_0^t r).
class WealthEvolver {
 public:
  WealthEvolver(const ModelParams& m, const UtilitySpec& u, const StrategyCurve& a, double x0)
      : theta_(m.theta), utility_(u), a_(a.values.values()), x0_(x0) {
    if (!(u == a.utility)) throw UsageError("evolve_wealth: strategy was built for another utility");
    if (!(x0 > 0.0) || !std::isfinite(x0)) throw DomainError("initial wealth must be positive");
    const TimeGrid& g = a.grid();
    growth_.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) growth_[i] = m.rate.integral(0.0, g.node(i));
    dt_ = g.step();
  }

  std::size_t size() const noexcept { return growth_.size(); }

  // Remaining bond growth int_{t_i}^T r.
  double growth_to_horizon(std::size_t i) const { return growth_.back() - growth_[i]; }

  void run(std::span<const double> V, std::span<const double> dW1, std::vector<double>& X,
           std::uint64_t path) const {
    const std::size_t n = growth_.size() - 1;
    if (V.size() != n + 1 || dW1.size() != n) throw UsageError("evolve_wealth: path and strategy grids differ");
    X.resize(n + 1);
    X[0] = x0_;
    if (utility_.is_power()) {
      double risky = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double alpha = a_[i] * std::sqrt(V[i]);
        risky += theta_ * alpha * std::sqrt(V[i]) * dt_ - 0.5 * alpha * alpha * dt_ + alpha * dW1[i];
        X[i + 1] = x0_ * std::exp(growth_[i + 1] + risky);
        if (!std::isfinite(X[i + 1]) || !(X[i + 1] > 0.0)) throw NumericalFailure("wealth overflow", path);
      }
    } else {
      double discounted = x0_;
      for (std::size_t i = 0; i < n; ++i) {
        const double pos = a_[i] * std::sqrt(V[i]);
        discounted += std::exp(-growth_[i]) * pos * (theta_ * std::sqrt(V[i]) * dt_ + dW1[i]);
        X[i + 1] = std::exp(growth_[i + 1]) * discounted;
        if (!std::isfinite(X[i + 1])) throw NumericalFailure("wealth overflow", path);
      }
    }
  }

 private:
  double theta_;
  UtilitySpec utility_;
  std::vector<double> a_;
  double x0_;
  std::vector<double> growth_;
  double dt_ = 0.0;
};

struct WealthEnsemble {
  TimeGrid grid;
  std::uint64_t n_paths;
  std::vector<double> X;          // n_paths x (N+1)
  std::vector<double> utilities;  // U(X_T) per path
  StrategyCurve strategy;

  std::span<const double> wealth(std::uint64_t p) const { return {X.data() + p * grid.size(), grid.size()}; }
};

inline WealthEnsemble evolve_wealth(const PathEnsemble& paths, const ModelParams& m, const StrategyCurve& a,
                                    const UtilitySpec& u, double x0) {
  if (!(paths.grid() == a.grid())) throw UsageError("evolve_wealth: path and strategy grids differ");
  const WealthEvolver evolver(m, u, a, x0);
  WealthEnsemble out{paths.grid(), paths.n_paths(), std::vector<double>(paths.n_paths() * paths.grid().size()),
                     std::vector<double>(paths.n_paths()), a};
  std::vector<double> x;
  for (std::uint64_t p = 0; p < paths.n_paths(); ++p) {
    evolver.run(paths.V(p), paths.dW1(p), x, p);
    std::copy(x.begin(), x.end(), out.X.begin() + p * paths.grid().size());
    out.utilities[p] = u(x.back());
    if (!std::isfinite(out.utilities[p])) throw NumericalFailure("non-finite utility", p);
  }
  return out;
}

inline McEstimate estimate_utility(const WealthEnsemble& w) {
  if (w.n_paths == 0) throw UsageError("estimate_utility needs a non-empty ensemble");
  Accumulator acc;
  for (double v : w.utilities) acc.add(v);
  return acc.estimate();
}

// Pathwise auxiliary process
//   M_t = exp( int_t^T (rate part + g(s) xi_t(s)) ds ),
//   xi_t(s) = xi_0(s) + int_0^t R(s-u)/lambda sigma sqrt(V_u) dB~_u,
// with g = gamma theta^2/(2(1-gamma)) + c sigma^2 psi^2(T-s)/2 (power) or
// -theta^2/2 + sigma^2 (1-rho^2) psi^2(T-s)/2 (exponential), and
//   J_t = X_t^gamma M_t / gamma                        (power)
//   J_t = -exp(-gamma e^{int_t^T r} X_t) M_t / gamma   (exponential).
// The stochastic integral uses left points; its weight against g over
// [t_m, T] is tabulated once per grid from the resolvent's cell masses.
class AuxiliaryPlan {
 public:
  AuxiliaryPlan(const ModelParams& m, const UtilitySpec& u, const RiccatiSolution<double>& psi,
                const ResolventSolution& resolvent)
      : m_(m), utility_(u), grid_(psi.grid), shift_(tilt_shift(m, u)) {
    detail::require_matching(m, u, psi, "auxiliary process");
    detail::require_same_grid(psi.grid, resolvent.integral.grid(), "auxiliary process");
    const double lambda = resolvent.lambda;
    if (std::abs(lambda - psi.metadata.lambda) > 1e-14 * (1.0 + std::abs(lambda))) {
      throw UsageError("auxiliary process: resolvent lambda does not match psi");
    }
    const std::size_t n = grid_.steps();
    const double dt = grid_.step();
    const auto xi0 = forward_variance(m, resolvent);

    std::vector<double> g(n + 1);
    const double gamma = u.gamma();
    for (std::size_t i = 0; i <= n; ++i) {
      const double p = psi.psi[n - i];
      g[i] = u.is_power()
                 ? gamma * m.theta * m.theta / (2.0 * (1.0 - gamma)) + 0.5 * psi.metadata.c * m.sigma * m.sigma * p * p
                 : -0.5 * m.theta * m.theta + 0.5 * m.sigma * m.sigma * (1.0 - m.rho * m.rho) * p * p;
    }

    // deterministic part, summed in the same order as m_initial so that
    // M_0 agrees exactly
    base_.assign(n + 1, 0.0);
    for (std::size_t start = 0; start < n; ++start) {
      double sum = 0.5 * (g[start] * xi0.values[start] + g[n] * xi0.values[n]);
      for (std::size_t i = start + 1; i < n; ++i) sum += g[i] * xi0.values[i];
      sum *= dt;
      base_[start] = u.is_power() ? gamma * m.rate.integral(grid_.node(start), grid_.horizon()) + sum : sum;
    }

    // weight(m, k) = (1/lambda) sum_{i>=m} gbar_i (rho_{i+1-k} - rho_{i-k}), k < m
    const auto& rho = resolvent.integral;
    weights_.assign((n + 1) * n, 0.0);
    for (std::size_t start = 1; start < n; ++start) {
      for (std::size_t k = 0; k < start; ++k) {
        double w = 0.0;
        for (std::size_t i = start; i < n; ++i) w += 0.5 * (g[i] + g[i + 1]) * (rho[i + 1 - k] - rho[i - k]);
        weights_[start * n + k] = w / lambda;
      }
    }

    // constants for J
    growth_.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) growth_[i] = m.rate.integral(grid_.node(i), grid_.horizon());
  }

  const TimeGrid& grid() const noexcept { return grid_; }

  double m_initial() const { return std::exp(base_[0]); }

  double j_initial(double x0) const { return j_value(0, x0, m_initial()); }

  double j_value(std::size_t i, double x, double m_value) const {
    const double gamma = utility_.gamma();
    if (utility_.is_power()) return std::pow(x, gamma) * m_value / gamma;
    return -std::exp(-gamma * std::exp(growth_[i]) * x) * m_value / gamma;
  }

  // M and J on every node of one path. X may be empty, in which case J is
  // left untouched.
  void run(std::span<const double> V, std::span<const double> dW1, std::span<const double> dW2,
           std::span<const double> X, std::vector<double>& M, std::vector<double>& J,
           std::vector<double>& scratch) const {
    const std::size_t n = grid_.steps();
    const double dt = grid_.step();
    const double rho = m_.rho;
    const double rho_bar = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    scratch.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double sv = std::sqrt(V[k]);
      const double dw1_tilde = dW1[k] - shift_ * sv * dt;
      scratch[k] = m_.sigma * sv * (rho * dw1_tilde + rho_bar * dW2[k]);
    }
    M.resize(n + 1);
    for (std::size_t start = 0; start <= n; ++start) {
      double exponent = base_[start];
      const double* w = weights_.data() + start * n;
      if (start < n) {
        for (std::size_t k = 0; k < start; ++k) exponent += w[k] * scratch[k];
      }
      M[start] = std::exp(exponent);
      if (!utility_.is_power() && M[start] > 1.0 + 5e-12) {
        throw InvariantViolation("exponential-utility M_t exceeds 1 at node " + std::to_string(start));
      }
    }
    if (X.empty()) return;
    J.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) J[i] = j_value(i, X[i], M[i]);
  }

 private:
  ModelParams m_;
  UtilitySpec utility_;
  TimeGrid grid_;
  double shift_;
  std::vector<double> base_;
  std::vector<double> weights_;
  std::vector<double> growth_;
};

struct AuxiliaryPath {
  std::vector<double> M;  // n_paths x (N+1)
  std::vector<double> J;
};

// Paths may come from either measure: the increments are converted to the
// utility's tilted Brownian motion before entering the forward variance.
inline AuxiliaryPath auxiliary_along_paths(const PathEnsemble& paths, const WealthEnsemble& wealth,
                                           const ModelParams& m, const UtilitySpec& u,
                                           const RiccatiSolution<double>& psi, const SampledKernel& k) {
  detail::require_same_grid(paths.grid(), k.grid(), "auxiliary_along_paths");
  detail::require_same_grid(paths.grid(), wealth.grid, "auxiliary_along_paths");
  const AuxiliaryPlan plan(m, u, psi, resolvent_second_kind(k, psi.metadata.lambda));
  const std::size_t width = paths.grid().size();
  AuxiliaryPath out{std::vector<double>(paths.n_paths() * width), std::vector<double>(paths.n_paths() * width)};
  std::vector<double> M, J, scratch;
  for (std::uint64_t p = 0; p < paths.n_paths(); ++p) {
    plan.run(paths.V(p), paths.dW1(p), paths.dW2(p), wealth.wealth(p), M, J, scratch);
    std::copy(M.begin(), M.end(), out.M.begin() + p * width);
    std::copy(J.begin(), J.end(), out.J.begin() + p * width);
  }
  return out;
}

namespace detail {

inline constexpr std::uint64_t kPathChunk = 256;

// Runs chunk(begin, end, state) over fixed chunks of paths on `threads`
// workers and merges the chunk states in chunk order. The result does not
// depend on the number of workers. The first failure in chunk order is
// rethrown.
template <class State, class ChunkFn>
State reduce_paths(std::uint64_t n_paths, unsigned threads, const State& zero, ChunkFn chunk) {
  if (n_paths < 1) throw UsageError("Monte Carlo run needs at least one path");
  if (threads < 1) throw UsageError("thread count must be at least 1");
  const std::uint64_t n_chunks = (n_paths + kPathChunk - 1) / kPathChunk;
  std::vector<State> states(n_chunks, zero);
  std::vector<std::exception_ptr> errors(n_chunks);
  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (std::uint64_t c = next++; c < n_chunks; c = next++) {
      try {
        chunk(c * kPathChunk, std::min(n_paths, (c + 1) * kPathChunk), states[c]);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(threads, n_chunks));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  State total = zero;
  for (const auto& s : states) total.merge(s);
  return total;
}

template <class T>
struct AccumulatorVector {
  std::vector<T> items;
  void merge(const AccumulatorVector& o) {
    for (std::size_t i = 0; i < items.size(); ++i) items[i].merge(o.items[i]);
  }
};

}  // namespace detail

// Monte Carlo side of the value identity at t = 0 under the tilted measure:
//   power:       E~[exp(int (gamma/c) r + gamma theta^2 V/(2c(1-gamma)))]  vs  M_0^{1/c}
//   exponential: E~[exp(-theta^2 (1-rho^2)/2 int V)]                       vs  M_0^{1-rho^2}
// int V uses the trapezoid rule on the simulated nodes.
struct MIdentityReport {
  McEstimate estimate;
  double reference = 0.0;
  double m0 = 0.0;
  double exponent = 1.0;    // 1/c or 1 - rho^2
  bool degenerate = false;  // exponential with rho^2 = 1: both sides are 1
};

inline MIdentityReport verify_m_identity(const ModelParams& m, const UtilitySpec& u, const SampledKernel& k,
                                         std::uint64_t n_paths, std::uint64_t seed, unsigned threads = 1) {
  const auto psi = solve_psi(m, u, k);
  const auto resolvent = resolvent_second_kind(k, psi.metadata.lambda);
  const auto xi0 = forward_variance(m, resolvent);
  MIdentityReport report;
  report.m0 = m_initial(m, u, psi, xi0);

  const double gamma = u.gamma();
  double deterministic = 0.0;
  double variance_weight;
  if (u.is_power()) {
    const double c = psi.metadata.c;
    report.exponent = 1.0 / c;
    deterministic = gamma / c * m.rate.integral(0.0, k.grid().horizon());
    variance_weight = gamma * m.theta * m.theta / (2.0 * c * (1.0 - gamma));
  } else {
    report.exponent = 1.0 - m.rho * m.rho;
    report.degenerate = report.exponent == 0.0;
    variance_weight = -0.5 * m.theta * m.theta * report.exponent;
  }
  report.reference = std::pow(report.m0, report.exponent);

  const PathSimulator sim(m, k, seed, tilted_measure(m, u));
  const std::size_t n = k.grid().steps();
  const double dt = k.grid().step();
  struct State {
    Accumulator acc;
    void merge(const State& o) { acc.merge(o.acc); }
  };
  const State total = detail::reduce_paths(n_paths, threads, State{}, [&](std::uint64_t begin, std::uint64_t end, State& s) {
    SinglePath path;
    for (std::uint64_t p = begin; p < end; ++p) {
      sim.generate(p, path);
      double integral = 0.5 * (path.V[0] + path.V[n]);
      for (std::size_t i = 1; i < n; ++i) integral += path.V[i];
      integral *= dt;
      s.acc.add(std::exp(deterministic + variance_weight * integral));
    }
  });
  report.estimate = total.acc.estimate();
  return report;
}

// Expected utility under A* and under scaled copies s A*, on common random
// numbers (original measure). gaps[i] estimates E[U*] - E[U_{s_i}] from the
// paired differences.
struct StrategyComparison {
  McEstimate optimal;
  std::vector<double> scales;
  std::vector<McEstimate> values;
  std::vector<McEstimate> gaps;
};

inline StrategyComparison compare_strategies(const ModelParams& m, const UtilitySpec& u, const SampledKernel& k,
                                             const std::vector<double>& scales, std::uint64_t n_paths,
                                             std::uint64_t seed, double x0, unsigned threads = 1) {
  const auto psi = solve_psi(m, u, k);
  const auto a = optimal_strategy(m, u, psi);
  std::vector<WealthEvolver> evolvers{WealthEvolver(m, u, a, x0)};
  for (double s : scales) evolvers.emplace_back(m, u, scale_strategy(a, s), x0);
  const PathSimulator sim(m, k, seed, Measure::original());

  const std::size_t slots = 1 + 2 * scales.size();
  detail::AccumulatorVector<Accumulator> zero{std::vector<Accumulator>(slots)};
  const auto total = detail::reduce_paths(n_paths, threads, zero, [&](std::uint64_t begin, std::uint64_t end, auto& s) {
    SinglePath path;
    std::vector<double> x;
    for (std::uint64_t p = begin; p < end; ++p) {
      sim.generate(p, path);
      evolvers[0].run(path.V, path.dW1, x, p);
      const double best = u(x.back());
      s.items[0].add(best);
      for (std::size_t j = 0; j < scales.size(); ++j) {
        evolvers[j + 1].run(path.V, path.dW1, x, p);
        const double value = u(x.back());
        s.items[1 + j].add(value);
        s.items[1 + scales.size() + j].add(best - value);
      }
    }
  });
  StrategyComparison out;
  out.optimal = total.items[0].estimate();
  out.scales = scales;
  for (std::size_t j = 0; j < scales.size(); ++j) {
    out.values.push_back(total.items[1 + j].estimate());
    out.gaps.push_back(total.items[1 + scales.size() + j].estimate());
  }
  return out;
}

// Node-wise sample means along simulated paths under the original measure
// for the strategy scale * A*, with J_t from the auxiliary process.
// increments[j] estimates E[J_{c_j} - J_{c_{j-1}}] (paired), with J at the
// first checkpoint compared against the deterministic J_0.
struct ProcessStatistics {
  TimeGrid grid;
  double j0 = 0.0;
  double m0 = 0.0;
  std::vector<McEstimate> V, S, X, J;
  McEstimate utility;
  std::vector<std::size_t> checkpoints;
  std::vector<McEstimate> increments;
};

inline ProcessStatistics process_statistics(const ModelParams& m, const UtilitySpec& u, const SampledKernel& k,
                                            double scale, const std::vector<std::size_t>& checkpoints,
                                            std::uint64_t n_paths, std::uint64_t seed, double x0,
                                            unsigned threads = 1) {
  const TimeGrid& grid = k.grid();
  const std::size_t size = grid.size();
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] >= size || (i > 0 && checkpoints[i] <= checkpoints[i - 1])) {
      throw UsageError("checkpoints must be increasing grid indices");
    }
  }
  const auto psi = solve_psi(m, u, k);
  const auto a = optimal_strategy(m, u, psi);
  const WealthEvolver evolver(m, u, scale_strategy(a, scale), x0);
  const AuxiliaryPlan plan(m, u, psi, resolvent_second_kind(k, psi.metadata.lambda));
  const PathSimulator sim(m, k, seed, Measure::original());
  const double j0 = plan.j_initial(x0);

  const std::size_t n_checks = checkpoints.size();
  detail::AccumulatorVector<Accumulator> zero{std::vector<Accumulator>(4 * size + 1 + n_checks)};
  const auto total = detail::reduce_paths(n_paths, threads, zero, [&](std::uint64_t begin, std::uint64_t end, auto& s) {
    SinglePath path;
    std::vector<double> x, M, J, scratch;
    for (std::uint64_t p = begin; p < end; ++p) {
      sim.generate(p, path);
      evolver.run(path.V, path.dW1, x, p);
      plan.run(path.V, path.dW1, path.dW2, x, M, J, scratch);
      for (std::size_t i = 0; i < size; ++i) {
        s.items[i].add(path.V[i]);
        s.items[size + i].add(path.S[i]);
        s.items[2 * size + i].add(x[i]);
        s.items[3 * size + i].add(J[i]);
      }
      s.items[4 * size].add(u(x.back()));
      double previous = j0;
      for (std::size_t c = 0; c < n_checks; ++c) {
        const double now = J[checkpoints[c]];
        s.items[4 * size + 1 + c].add(now - previous);
        previous = now;
      }
    }
  });

  ProcessStatistics out{grid, j0, plan.m_initial(), {}, {}, {}, {}, {}, {}, {}};
  for (std::size_t i = 0; i < size; ++i) {
    out.V.push_back(total.items[i].estimate());
    out.S.push_back(total.items[size + i].estimate());
    out.X.push_back(total.items[2 * size + i].estimate());
    out.J.push_back(total.items[3 * size + i].estimate());
  }
  out.utility = total.items[4 * size].estimate();
  out.checkpoints = checkpoints;
  for (std::size_t c = 0; c < n_checks; ++c) out.increments.push_back(total.items[4 * size + 1 + c].estimate());
  return out;
}

// Node-wise sample mean of V under a measure, streamed.
inline std::vector<McEstimate> mean_variance_path(const ModelParams& m, const SampledKernel& k, Measure measure,
                                                  std::uint64_t n_paths, std::uint64_t seed, unsigned threads = 1) {
  const PathSimulator sim(m, k, seed, measure);
  const std::size_t size = k.grid().size();
  detail::AccumulatorVector<Accumulator> zero{std::vector<Accumulator>(size)};
  const auto total = detail::reduce_paths(n_paths, threads, zero, [&](std::uint64_t begin, std::uint64_t end, auto& s) {
    SinglePath path;
    for (std::uint64_t p = begin; p < end; ++p) {
      sim.generate(p, path);
      for (std::size_t i = 0; i < size; ++i) s.items[i].add(path.V[i]);
    }
  });
  std::vector<McEstimate> out;
  for (const auto& acc : total.items) out.push_back(acc.estimate());
  return out;
}

}  // namespace vheston
