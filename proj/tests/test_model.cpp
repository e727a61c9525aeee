#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "wormhole/datasets.hpp"
#include "wormhole/harmonic.hpp"
#include "wormhole/model.hpp"

using namespace wormhole;

namespace {
const HarmonicMap& q11(std::size_t n = 1025) {
  static std::map<std::size_t, HarmonicMap> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, solve_Q(ModelParams::make(1, 1), grid_for_radius(60.0, n))).first;
  }
  return it->second;
}
}  // namespace

TEST(Energy, ZeroDataHasZeroEnergy) {
  auto g = grid_for_radius(20.0, 257);
  const auto p = ModelParams::make(1, 0);
  EXPECT_EQ(energy_psi(make_state(g, Form::Psi, p)).total, 0.0);
  const FieldState u = make_state(g, Form::U, p);
  EXPECT_EQ(energy_u(u, std::vector<double>(g->size(), 1.0)).total, 0.0);
}

TEST(Energy, HarmonicMapIsStaticWithFiniteEnergy) {
  const HarmonicMap& q = q11();
  FieldState s = make_state(q.grid, Form::Psi, q.params);
  s.f = q.Q;
  const EnergyReport e = energy_psi(s);
  EXPECT_EQ(e.kinetic, 0.0);
  EXPECT_GT(e.total, 0.0);
  EXPECT_TRUE(std::isfinite(e.total));
  EXPECT_GE(e.gradient, 0.0);
  EXPECT_GE(e.potential_part, 0.0);

  const HarmonicMap& q2 = q11(2049);
  FieldState s2 = make_state(q2.grid, Form::Psi, q2.params);
  s2.f = q2.Q;
  EXPECT_NEAR(energy_psi(s2).total / e.total, 1.0, 1e-6);
}

TEST(Energy, FreeUEnergyMatchesDefinition) {
  auto g = grid_for_radius(20.0, 513);
  const auto p = ModelParams::make(2, 0);
  FieldState u = make_state(g, Form::U, p);
  for (std::size_t i = 0; i < g->size(); ++i) {
    u.f[i] = data::bump(g->r[i], 0.5, 2.0);
    u.g[i] = 0.3 * data::bump(g->r[i], -1.0, 1.5);
  }
  const EnergyReport e = energy_u(u, std::vector<double>(g->size(), 0.0));
  const double a = norm_H(u, p.dim - 1).value;
  EXPECT_NEAR(e.total, 0.5 * a * a, 1e-12 * e.total);
  EXPECT_EQ(e.potential_part, 0.0);
}

TEST(Energy, FormMismatchIsReported) {
  auto g = grid_for_radius(20.0, 65);
  FieldState u = make_state(g, Form::U, ModelParams::make(1, 0));
  try {
    energy_psi(u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormMismatch);
  }
  EXPECT_THROW(energy_u(u, std::vector<double>(10, 0.0)), Error);
}

TEST(Energy, SymmetriesOfThePsiEnergy) {
  const HarmonicMap& q = q11();
  const RadialGrid& g = *q.grid;
  std::mt19937_64 rng(7);
  for (int k = 0; k < 5; ++k) {
    FieldState s = data::random_state(q.grid, Form::Psi, q.params, rng, {}, &q.Q);
    FieldState m = s;  // psi -> n pi - psi(-r)
    for (std::size_t i = 0; i < g.size(); ++i) {
      m.f[i] = M_PI - s.f[g.size() - 1 - i];
      m.g[i] = -s.g[g.size() - 1 - i];
    }
    EXPECT_NEAR(energy_psi(m).total, energy_psi(s).total, 1e-12 * energy_psi(s).total);
  }
  const auto p0 = ModelParams::make(2, 0);
  for (int k = 0; k < 5; ++k) {
    FieldState s = data::random_state(q.grid, Form::Psi, p0, rng);
    FieldState m = s;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m.f[i] = -s.f[i];
      m.g[i] = -s.g[i];
    }
    EXPECT_DOUBLE_EQ(energy_psi(m).total, energy_psi(s).total);
  }
}

TEST(Energy, RefinementIsFourthOrder) {
  auto energy_at = [](std::size_t n) {
    auto g = grid_for_radius(20.0, n);
    FieldState s = make_state(g, Form::Psi, ModelParams::make(1, 0));
    for (std::size_t i = 0; i < n; ++i) s.f[i] = 0.4 * data::gaussian(g->r[i], 1.0, 1.5);
    return energy_psi(s).total;
  };
  const double a = energy_at(129), b = energy_at(257), c = energy_at(513);
  const double order = std::log2(std::abs(a - b) / std::abs(b - c));
  EXPECT_GT(order, 3.5);
  EXPECT_LT(order, 4.6);
}

TEST(Transform, RoundTripIsIdentity) {
  const HarmonicMap& q = q11();
  std::mt19937_64 rng(11);
  for (int k = 0; k < 10; ++k) {
    const FieldState psi = data::random_state(q.grid, Form::Psi, q.params, rng, {}, &q.Q);
    const FieldState back = u_to_psi(psi_to_u(psi, q), q);
    for (std::size_t i = 0; i < psi.size(); ++i) {
      EXPECT_NEAR(back.f[i], psi.f[i], 1e-14 * (1.0 + std::abs(psi.f[i])));
      EXPECT_NEAR(back.g[i], psi.g[i], 1e-14 * (1.0 + std::abs(psi.g[i])));
    }
  }
  FieldState psi = make_state(q.grid, Form::Psi, q.params);
  psi.f = q.Q;
  const FieldState u = psi_to_u(psi, q);
  for (double v : u.f) EXPECT_EQ(v, 0.0);
}

TEST(Transform, NormEquivalenceBand) {
  // ||u||_{H,d-1} / ||psi - Q||_{H,2} in [1/(1 + sqrt(l/2)), 1 + 2l], derived
  // from u_r <r>^l = phi_r - l r <r>^{-2} phi and the weighted Hardy bound.
  std::mt19937_64 rng(3);
  for (int l : {1, 2}) {
    const HarmonicMap q = solve_Q(ModelParams::make(l, 1), grid_for_radius(60.0, 1025));
    const double lo = 1.0 / (1.0 + std::sqrt(l / 2.0)), hi = 1.0 + 2.0 * l;
    for (int k = 0; k < 20; ++k) {
      const FieldState psi = data::random_state(q.grid, Form::Psi, q.params, rng, {}, &q.Q);
      FieldState phi = psi;
      for (std::size_t i = 0; i < psi.size(); ++i) phi.f[i] -= q.Q[i];
      const double ratio = norm_H(psi_to_u(psi, q), q.params.dim - 1).value / norm_H(phi, 2).value;
      EXPECT_GT(ratio, lo);
      EXPECT_LT(ratio, hi);
    }
  }
}

TEST(Norms, FlagsAndWindows) {
  auto g = grid_for_radius(20.0, 129);
  FieldState s = make_state(g, Form::U, ModelParams::make(1, 0));
  for (std::size_t i = 0; i < g->size(); ++i) s.f[i] = 1.0;
  EXPECT_TRUE(norm_H(s, 2).not_decaying);
  EXPECT_TRUE(norm_H(s, 4, 25.0).empty_window);
  EXPECT_THROW(norm_H(s, 3), Error);
}

TEST(Validation, BoundaryClasses) {
  const HarmonicMap& q = q11();
  FieldState s = make_state(q.grid, Form::Psi, q.params);
  s.f = q.Q;
  EXPECT_NO_THROW(validate_state(s));
  s.f.back() += 0.1;
  EXPECT_THROW(validate_state(s), Error);
  FieldState u = make_state(q.grid, Form::U, q.params);
  u.f.front() = 1e-6;
  EXPECT_THROW(validate_state(u), Error);
  u.f.front() = 0.0;
  u.g[5] = std::nan("");
  EXPECT_THROW(validate_state(u), Error);
}

TEST(StraussHardy, ZeroProfile) {
  auto g = grid_for_radius(30.0, 257);
  const auto r = strauss_hardy_report(*g, std::vector<double>(g->size(), 0.0), ModelParams::make(1, 0));
  EXPECT_EQ(r.strauss_2, 0.0);
  EXPECT_EQ(r.strauss_d, 0.0);
  EXPECT_EQ(r.hardy_0, 0.0);
  EXPECT_EQ(r.hardy_d, 0.0);
}

TEST(StraussHardy, ConstantsAgainstIndependentQuadrature) {
  // int_0^inf (1+s^2)^{(1-d)/2} ds by a plain midpoint sum with a tail correction.
  for (int d : {5, 7, 9}) {
    double sum = 0.0;
    const double h = 1e-3, L = 400.0;
    for (double s = 0.5 * h; s < L; s += h) sum += h * std::pow(1.0 + s * s, 0.5 * (1 - d));
    sum += std::pow(L, 2 - d) / (d - 2.0);
    EXPECT_NEAR(strauss_integral(d), sum, 1e-7) << d;
  }
  EXPECT_NEAR(strauss_integral(5), M_PI / 4.0, 1e-15);
  EXPECT_NEAR(strauss_integral(7), 3.0 * M_PI / 16.0, 1e-15);
}

TEST(StraussHardy, RandomBumpsStayBelowBounds) {
  std::mt19937_64 rng(19);
  for (int l : {1, 2, 3}) {
    const auto p = ModelParams::make(l, 0);
    auto g = grid_for_radius(80.0, 2049);
    for (int k = 0; k < 20; ++k) {
      data::RandomBumps opt;
      opt.r_lo = -10.0;
      opt.r_hi = 10.0;
      opt.width_lo = 0.5;
      opt.width_hi = 6.0;
      const auto bs = data::random_bumps(rng, opt);
      std::vector<double> f(g->size());
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = data::eval(bs, g->r[i]);
      const auto rep = strauss_hardy_report(*g, f, p);
      EXPECT_LE(rep.strauss_2, rep.bound_strauss_2);
      EXPECT_LE(rep.strauss_d, rep.bound_strauss_d);
      EXPECT_LE(rep.hardy_0, rep.bound_hardy_0);
      EXPECT_LE(rep.hardy_d, rep.bound_hardy_d);
      EXPECT_GT(rep.hardy_d, 0.0);
    }
  }
}

TEST(StraussHardy, TailBumpGivesFiniteStraussRatio) {
  const auto p = ModelParams::make(1, 0);
  auto g = grid_for_radius(200.0, 4097);
  std::vector<double> f(g->size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = std::pow(g->jacobian[i], -2.0);
  }
  const auto rep = strauss_hardy_report(*g, f, p);
  EXPECT_TRUE(std::isfinite(rep.strauss_d));
  EXPECT_GT(rep.strauss_d, 0.0);
  EXPECT_LE(rep.strauss_d, rep.bound_strauss_d);
}
