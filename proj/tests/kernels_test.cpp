#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vheston/kernels.hpp"

namespace vheston {
namespace {

TEST(KernelValue, FractionalHalfIsOne) { EXPECT_DOUBLE_EQ(kernel_value(KernelSpec::fractional(0.5), 1.0), 1.0); }

TEST(KernelValue, ConstantKernel) { EXPECT_DOUBLE_EQ(kernel_value(KernelSpec::constant(1.0), 0.37), 1.0); }

TEST(KernelValue, RoughKernelAtOne) {
  EXPECT_NEAR(kernel_value(KernelSpec::fractional(0.12), 1.0), 1.0 / std::tgamma(0.62), 1e-15);
}

TEST(KernelValue, SingularAtZero) {
  EXPECT_THROW(kernel_value(KernelSpec::fractional(0.12), 0.0), DomainError);
  EXPECT_GT(kernel_value(KernelSpec::fractional(0.5), 0.0), 0.0);
  EXPECT_DOUBLE_EQ(kernel_value(KernelSpec::exponential(2.0, 3.0), 0.0), 2.0);
}

TEST(KernelSpecTest, RejectsInadmissibleParameters) {
  EXPECT_THROW(KernelSpec::fractional(0.0), DomainError);
  EXPECT_THROW(KernelSpec::fractional(0.7), DomainError);
  EXPECT_THROW(KernelSpec::exponential(1.0, 0.0), DomainError);
  EXPECT_THROW(KernelSpec::exponential(-1.0, 1.0), DomainError);
  EXPECT_THROW(KernelSpec::constant(0.0), DomainError);
}

TEST(TimeGridTest, Invariants) {
  EXPECT_THROW(TimeGrid(0.0, 10), DomainError);
  EXPECT_THROW(TimeGrid(1.0, 1), DomainError);
  TimeGrid g(2.0, 8);
  EXPECT_EQ(g.size(), 9u);
  EXPECT_DOUBLE_EQ(g.step(), 0.25);
  EXPECT_DOUBLE_EQ(g.node(8), 2.0);
}

TEST(SampledFunctionTest, RejectsBadSamples) {
  TimeGrid g(1.0, 4);
  EXPECT_THROW(SampledFunction<double>(g, std::vector<double>(4, 0.0)), UsageError);
  EXPECT_THROW(SampledFunction<double>(g, {0.0, 1.0, NAN, 0.0, 0.0}), NumericalFailure);
}

TEST(Discretize, ConstantKernelUniformWeights) {
  const auto k = discretize_kernel(KernelSpec::constant(1.0), TimeGrid(1.0, 4));
  for (double w : k.weights()) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(Discretize, FractionalHalfMatchesConstantNodeForNode) {
  const TimeGrid grid(1.0, 10);
  const auto frac = discretize_kernel(KernelSpec::fractional(0.5), grid);
  const auto cons = discretize_kernel(KernelSpec::constant(1.0), grid);
  for (std::size_t m = 0; m < 10; ++m) {
    EXPECT_NEAR(frac.weights()[m], 0.1, 1e-15);
    EXPECT_EQ(frac.weights()[m], cons.weights()[m]);
  }
}

TEST(Discretize, RoughWeightsSumToClosedFormIntegral) {
  const auto k = discretize_kernel(KernelSpec::fractional(0.12), TimeGrid(1.0, 100));
  const double total = std::accumulate(k.weights().begin(), k.weights().end(), 0.0);
  EXPECT_NEAR(total, 1.0 / std::tgamma(1.62), 1e-13);
  for (double w : k.weights()) EXPECT_GT(w, 0.0);
}

// older/newer split against brute-force quadrature of the defining integrals.
class LinearWeights : public ::testing::TestWithParam<KernelSpec> {};

TEST_P(LinearWeights, MatchDirectQuadrature) {
  const KernelSpec spec = GetParam();
  const TimeGrid grid(1.3, 40);
  const auto k = discretize_kernel(spec, grid);
  const double dt = grid.step();
  for (std::size_t m : {0u, 1u, 2u, 7u, 39u}) {
    const double a = dt * m;
    const double older = oracle::integrate([&](double u) { return (u / dt - m) * spec(u); }, a, a + dt);
    const double newer = oracle::integrate([&](double u) { return (m + 1.0 - u / dt) * spec(u); }, a, a + dt);
    EXPECT_NEAR(k.older()[m], older, 1e-12 * std::max(1.0, older)) << "m=" << m;
    EXPECT_NEAR(k.newer()[m], newer, 1e-12 * std::max(1.0, newer)) << "m=" << m;
  }
}

INSTANTIATE_TEST_SUITE_P(Families, LinearWeights,
                         ::testing::Values(KernelSpec::fractional(0.12), KernelSpec::fractional(0.3),
                                           KernelSpec::fractional(0.5), KernelSpec::exponential(0.8, 2.5),
                                           KernelSpec::constant(1.7)));

TEST(Convolve, ZeroFunction) {
  const TimeGrid grid(1.0, 20);
  const auto k = discretize_kernel(KernelSpec::fractional(0.2), grid);
  const auto out = convolve(k, SampledFunction<double>(grid, std::vector<double>(21, 0.0)));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Convolve, ConstantKernelIntegratesOne) {
  const TimeGrid grid(1.0, 50);
  const auto k = discretize_kernel(KernelSpec::constant(1.0), grid);
  const auto out = convolve(k, SampledFunction<double>(grid, std::vector<double>(51, 1.0)));
  for (std::size_t i = 0; i < 51; ++i) EXPECT_NEAR(out[i], grid.node(i), 1e-14);
}

TEST(Convolve, RoughKernelAgainstClosedForm) {
  const TimeGrid grid(1.0, 200);
  const auto k = discretize_kernel(KernelSpec::fractional(0.12), grid);
  const auto out = convolve(k, SampledFunction<double>(grid, std::vector<double>(201, 1.0)));
  for (std::size_t i = 0; i <= 200; ++i) {
    EXPECT_NEAR(out[i], std::pow(grid.node(i), 0.62) / std::tgamma(1.62), 1e-10);
  }
}

TEST(Convolve, GridMismatchIsUsageError) {
  const auto k = discretize_kernel(KernelSpec::constant(1.0), TimeGrid(1.0, 10));
  EXPECT_THROW(convolve(k, SampledFunction<double>(TimeGrid(1.0, 11), std::vector<double>(12, 1.0))),
               UsageError);
}

TEST(Convolve, LinearProperty) {
  const TimeGrid grid(2.0, 64);
  const auto k = discretize_kernel(KernelSpec::fractional(0.17), grid);
  std::vector<double> f(65), g(65), h(65);
  for (std::size_t i = 0; i <= 64; ++i) {
    const double t = grid.node(i);
    f[i] = std::sin(3.0 * t);
    g[i] = t * t - 1.0;
    h[i] = 2.5 * f[i] - 0.75 * g[i];
  }
  const auto cf = convolve(k, SampledFunction<double>(grid, f));
  const auto cg = convolve(k, SampledFunction<double>(grid, g));
  const auto ch = convolve(k, SampledFunction<double>(grid, h));
  for (std::size_t i = 0; i <= 64; ++i) EXPECT_NEAR(ch[i], 2.5 * cf[i] - 0.75 * cg[i], 1e-13);
}

TEST(Resolvent, ConstantKernelClosedForm) {
  const TimeGrid grid(1.0, 1000);
  const auto k = discretize_kernel(KernelSpec::constant(1.0), grid);
  const auto r = resolvent_second_kind(k, 0.107);
  double err = 0.0;
  for (std::size_t i = 0; i <= 1000; ++i) {
    err = std::max(err, std::abs(r.values[i] - 0.107 * std::exp(-0.107 * grid.node(i))));
  }
  EXPECT_LE(err, 1e-4);
}

TEST(Resolvent, ExponentialKernelClosedForm) {
  // resolvent of lambda c e^{-r t} is lambda c e^{-(r + lambda c) t}
  const TimeGrid grid(2.0, 400);
  const double c = 0.8, rate = 1.5, lambda = 0.6;
  const auto r = resolvent_second_kind(discretize_kernel(KernelSpec::exponential(c, rate), grid), lambda);
  for (std::size_t i = 0; i <= 400; ++i) {
    const double t = grid.node(i);
    EXPECT_NEAR(r.values[i], lambda * c * std::exp(-(rate + lambda * c) * t), 1e-5);
    EXPECT_NEAR(r.integral[i], lambda * c / (rate + lambda * c) * (1.0 - std::exp(-(rate + lambda * c) * t)),
                1e-6);
  }
}

TEST(Resolvent, ZeroLambdaGivesZero) {
  const TimeGrid grid(1.0, 100);
  for (const auto& spec : {KernelSpec::fractional(0.1), KernelSpec::exponential(1.0, 1.0), KernelSpec::constant(2.0)}) {
    const auto r = resolvent_second_kind(discretize_kernel(spec, grid), 0.0);
    for (double v : r.values.values()) EXPECT_EQ(v, 0.0);
    for (double v : r.integral.values()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(r.residual, 0.0);
  }
}

TEST(Resolvent, RoughSelfConsistency) {
  const auto k = discretize_kernel(KernelSpec::fractional(0.12), TimeGrid(1.0, 500));
  const auto r = resolvent_second_kind(k, 0.1);
  EXPECT_LE(r.residual, 1e-3);
}

TEST(Resolvent, RoughAgainstMittagLeffler) {
  const TimeGrid grid(1.0, 1000);
  for (double H : {0.12, 0.3}) {
    const auto r = resolvent_second_kind(discretize_kernel(KernelSpec::fractional(H), grid), 0.107);
    for (std::size_t i = 1; i <= 1000; i += 37) {
      const double t = grid.node(i);
      EXPECT_NEAR(r.values[i], oracle::fractional_resolvent(H, 0.107, t), 1e-4 * std::max(1.0, r.values[i]))
          << "H=" << H << " t=" << t;
      EXPECT_NEAR(r.integral[i], oracle::fractional_resolvent_integral(H, 0.107, t), 1e-6);
    }
  }
}

TEST(Resolvent, NegativeLambdaAdmitted) {
  const TimeGrid grid(1.0, 400);
  const auto r = resolvent_second_kind(discretize_kernel(KernelSpec::constant(1.0), grid), -0.5);
  // lambda c e^{-lambda c t} with lambda c = -0.5
  for (std::size_t i = 0; i <= 400; i += 20) EXPECT_NEAR(r.values[i], -0.5 * std::exp(0.5 * grid.node(i)), 1e-5);
}

TEST(Resolvent, SingularStepIsReported) {
  // 1 + lambda * newer(0) = 0 for the constant kernel when lambda = -2/D
  const TimeGrid grid(1.0, 10);
  const auto k = discretize_kernel(KernelSpec::constant(1.0), grid);
  EXPECT_THROW(resolvent_second_kind(k, -1.0 / k.newer()[0]), NumericalFailure);
}

TEST(Resolvent, ResidualShrinksUnderRefinement) {
  for (const auto& spec : {KernelSpec::fractional(0.12), KernelSpec::fractional(0.3), KernelSpec::exponential(1.0, 2.0)}) {
    double previous = INFINITY;
    for (std::size_t n : {125u, 250u, 500u, 1000u}) {
      const auto r = resolvent_second_kind(discretize_kernel(spec, TimeGrid(1.0, n)), 0.107);
      EXPECT_LE(r.residual, previous) << "N=" << n;
      previous = r.residual;
    }
  }
}

}  // namespace
}  // namespace vheston
