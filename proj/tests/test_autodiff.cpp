#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hdl/autodiff.hpp"

using namespace hdl;
using ad::Dual;
using ad::Var;

namespace {

template <class S>
S sample_fn(std::span<const S> x) {
  using std::exp;
  using std::sqrt;
  using ad::exp;
  using ad::sqrt;
  using ad::squareplus;
  S r = x[0] * x[1] + exp(x[2] / S(3.0)) - sqrt(x[0] * x[0] + S(1.0));
  r = r + ad::pow(x[1] - S(0.5), 3) + squareplus(x[2] - x[0]);
  return r;
}

double sample_fn_d(std::span<const double> x) {
  return x[0] * x[1] + std::exp(x[2] / 3.0) - std::sqrt(x[0] * x[0] + 1.0) + std::pow(x[1] - 0.5, 3) +
         ad::squareplus(x[2] - x[0]);
}

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST(Autodiff, ReverseModeMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x = {u(rng), u(rng), u(rng)};
    const auto vg = ad::value_and_grad([](std::span<const Var> v) { return sample_fn<Var>(v); }, x);
    EXPECT_NEAR(vg.value, sample_fn_d(x), 1e-14);
    const auto fd = central_difference(sample_fn_d, x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(vg.grad[i], fd[i], 1e-7);
  }
}

TEST(Autodiff, ForwardModeAgreesWithReverseMode) {
  const std::vector<double> x = {0.3, -0.7, 1.1};
  const auto rev = ad::value_and_grad([](std::span<const Var> v) { return sample_fn<Var>(v); }, x);
  const auto fwd = ad::value_and_grad_forward<2>([](auto v) { return sample_fn(v); }, std::span<const double>(x));
  EXPECT_DOUBLE_EQ(fwd.value, rev.value);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fwd.grad[i], rev.grad[i], 1e-14);
}

TEST(Autodiff, ReverseOverForwardGivesMixedSecondDerivatives) {
  // f(a, x) = a^2 x^3; d/da (df/dx) = 6 a x^2.
  const std::vector<double> a = {1.3};
  const double x = 0.7;
  const auto vg = ad::grad_params(
      [&](std::span<const Var> p) {
        const std::vector<Var> z = {Var(x)};
        const auto g = ad::grad_state<1>(
            [&](std::span<const Dual<Var, 1>> zz) { return Dual<Var, 1>(p[0]) * p[0] * ad::pow(zz[0], 3); },
            std::span<const Var>(z));
        return g[0];
      },
      a);
  EXPECT_NEAR(vg.value, 3.0 * 1.3 * 1.3 * x * x, 1e-14);
  EXPECT_NEAR(vg.grad[0], 6.0 * 1.3 * x * x, 1e-13);
}

TEST(Autodiff, ConstantsAreNotRecorded) {
  ad::TapeScope scope;
  const auto before = ad::tape().size();
  Var c(2.0);
  Var d = c * Var(3.0) + Var(1.0);
  EXPECT_EQ(d.value(), 7.0);
  EXPECT_TRUE(d.is_constant());
  EXPECT_EQ(ad::tape().size(), before);
}

TEST(Autodiff, TapeScopeRewinds) {
  const auto before = ad::tape().size();
  {
    ad::TapeScope scope;
    Var a = Var::leaf(1.0);
    Var b = a * a + a;
    EXPECT_GT(ad::tape().size(), before);
    (void)b;
  }
  EXPECT_EQ(ad::tape().size(), before);
}

TEST(Autodiff, NestedValueAndGradIsIndependent) {
  const std::vector<double> outer = {0.4, 0.9};
  const auto vg = ad::value_and_grad(
      [](std::span<const Var> p) {
        const std::vector<double> inner = {p[0].value()};
        const auto ig = ad::value_and_grad([](std::span<const Var> q) { return q[0] * q[0]; }, inner);
        return p[0] * p[1] + Var(ig.grad[0]);
      },
      outer);
  EXPECT_NEAR(vg.value, 0.4 * 0.9 + 0.8, 1e-15);
  EXPECT_NEAR(vg.grad[0], 0.9, 1e-15);
  EXPECT_NEAR(vg.grad[1], 0.4, 1e-15);
}

TEST(Autodiff, SquareplusSlopeMatchesFiniteDifference) {
  for (double x : {-3.0, -0.5, 0.0, 0.8, 4.0}) {
    const double fd = (ad::squareplus(x + 1e-6) - ad::squareplus(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(ad::squareplus_slope(x), fd, 1e-9);
  }
  EXPECT_DOUBLE_EQ(ad::squareplus(0.0), 1.0);
}

TEST(Autodiff, NonFiniteGradientRaises) {
  const std::vector<double> x = {0.0};
  EXPECT_THROW(ad::value_and_grad([](std::span<const Var> v) { return ad::sqrt(v[0]); }, x), NumericalError);
}
