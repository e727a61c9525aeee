#include <gtest/gtest.h>

#include <cmath>

#include "wormhole/grid.hpp"

using namespace wormhole;

TEST(Grid, SmallGridNodesMatchSinh) {
  const RadialGrid g = make_grid(10.0, 5);
  const double xs[] = {-10.0, -5.0, 0.0, 5.0, 10.0};
  for (int i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(g.x[i], xs[i]);
    EXPECT_DOUBLE_EQ(g.r[i], std::sinh(xs[i]));
    EXPECT_DOUBLE_EQ(g.jacobian[i], std::cosh(xs[i]));
  }
  EXPECT_EQ(g.throat(), 2u);
  EXPECT_EQ(g.r[2], 0.0);
  EXPECT_DOUBLE_EQ(g.spacing, 5.0);
}

TEST(Grid, ExactMirrorSymmetry) {
  const RadialGrid g = make_grid(std::asinh(60.0), 1025);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(g.r[i], -g.r[g.size() - 1 - i]);
    EXPECT_EQ(g.x[i], -g.x[g.size() - 1 - i]);
  }
  EXPECT_NEAR(g.r_max(), 60.0, 1e-12);
}

TEST(Grid, RejectsBadSizes) {
  EXPECT_THROW(make_grid(5.0, 4096), Error);
  EXPECT_THROW(make_grid(5.0, 3), Error);
  EXPECT_THROW(make_grid(-1.0, 33), Error);
  try {
    make_grid(5.0, 64);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    EXPECT_TRUE(e.is_validation());
  }
}

TEST(Stencils, ExactOnQuartics) {
  const RadialGrid g = make_grid(2.0, 41);
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.x[i];
    f[i] = 1.0 - 2.0 * x + 0.5 * x * x - x * x * x / 3.0 + 0.25 * x * x * x * x;
  }
  const auto d1 = d_dx(g, f);
  const auto d2 = d2_dx2(g, f);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.x[i];
    EXPECT_NEAR(d1[i], -2.0 + x - x * x + x * x * x, 1e-11) << i;
    // One-sided second derivative closures are exact to degree 5.
    EXPECT_NEAR(d2[i], 1.0 - 2.0 * x + 3.0 * x * x, 1e-9) << i;
  }
}

TEST(Stencils, FourthOrderOnSmoothFunction) {
  double err[2];
  int k = 0;
  for (std::size_t n : {101u, 201u}) {
    const RadialGrid g = make_grid(3.0, n);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = std::sin(2.0 * g.x[i]);
    const auto d2 = d2_dx2(g, f);
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(d2[i] + 4.0 * f[i]));
    err[k++] = e;
  }
  const double order = std::log2(err[0] / err[1]);
  EXPECT_GT(order, 3.5);
  EXPECT_LT(order, 4.6);
}

TEST(Quadrature, ExactForCubicsInX) {
  const RadialGrid g = make_grid(4.0, 65);
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.x[i];
    f[i] = 1.0 + x - 3.0 * x * x + 0.7 * x * x * x;
  }
  auto prim = [](double x) { return x + x * x / 2.0 - x * x * x + 0.7 * x * x * x * x / 4.0; };
  EXPECT_NEAR(integrate_x(g, f), prim(4.0) - prim(-4.0), 1e-11);
  // Windows cutting cells, even and odd node counts.
  for (auto [a, b] : {std::pair{-3.93, 2.71}, std::pair{0.01, 0.02}, std::pair{-1.0, 1.125},
                      std::pair{0.3, 3.3}}) {
    EXPECT_NEAR(integrate_x(g, f, a, b), prim(b) - prim(a), 1e-11) << a << " " << b;
  }
}

TEST(Quadrature, FourthOrderRefinement) {
  auto integral = [](std::size_t n) {
    const RadialGrid g = make_grid(3.0, n);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = std::exp(g.x[i]);
    return integrate_x(g, f, -1.7, 2.3);
  };
  const double exact = std::exp(2.3) - std::exp(-1.7);
  const double e1 = std::abs(integral(81) - exact), e2 = std::abs(integral(161) - exact);
  EXPECT_LT(e1, 5e-6);
  EXPECT_GT(std::log2(e1 / e2), 3.5);
}

TEST(Interpolation, ReproducesQuintics) {
  const RadialGrid g = make_grid(2.0, 33);
  std::vector<double> f(g.size());
  auto p = [](double x) { return 0.3 - x + 2.0 * x * x * x - 0.5 * std::pow(x, 5); };
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = p(g.x[i]);
  for (double x : {-1.99, -0.333, 0.0, 0.77, 1.96}) EXPECT_NEAR(interpolate(g, f, x), p(x), 1e-12);
}

TEST(Quadrature, FineRuleExactForSepticsAndCutCells) {
  const RadialGrid g = make_grid(3.0, 121);
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = std::pow(g.x[i], 7) - 2.0 * std::pow(g.x[i], 4) + 1.0;
  auto prim = [](double x) { return std::pow(x, 8) / 8.0 - 0.4 * std::pow(x, 5) + x; };
  for (double xa : {-3.0, -1.234, 0.0, 0.77}) {
    EXPECT_NEAR(integrate_x_fine(g, f, xa), prim(3.0) - prim(xa), 1e-11 * 820.0) << xa;
  }
}

TEST(Stencils, FineDerivativeEighthOrder) {
  double err[2];
  int k = 0;
  for (std::size_t n : {201, 401}) {
    const RadialGrid g = make_grid(2.0, n);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = std::sin(2.0 * g.r[i]);
    const auto fr = d_dr_fine(g, f);
    double e = 0.0;
    for (std::size_t i = 4; i + 4 < n; ++i) e = std::max(e, std::abs(fr[i] - 2.0 * std::cos(2.0 * g.r[i])));
    err[k++] = e;
  }
  EXPECT_GT(err[0] / err[1], 200.0);
}
