#include <gtest/gtest.h>

#include <boost/numeric/odeint.hpp>

#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

#include "wormhole/harmonic.hpp"

using namespace wormhole;
namespace odeint = boost::numeric::odeint;

namespace {

using OdeState = std::array<double, 2>;

// Independent shooting oracle: adaptive Dormand-Prince on
// Q_xx + tanh(x) Q_x - l(l+1)/2 sin(2Q) = 0, Q(0) = n pi / 2, Q_x(0) = b.
// Returns +1 for overshoot (Q passes n pi), -1 for undershoot (Q_x < 0 first).
int oracle_shot(int l, int n, double b) {
  const double c = 0.5 * l * (l + 1.0);
  auto rhs = [c](const OdeState& y, OdeState& dy, double x) {
    dy[0] = y[1];
    dy[1] = -std::tanh(x) * y[1] + c * std::sin(2.0 * y[0]);
  };
  auto stepper = odeint::make_dense_output(1e-13, 1e-13, odeint::runge_kutta_dopri5<OdeState>());
  OdeState y{0.5 * n * M_PI, b};
  stepper.initialize(y, 0.0, 1e-3);
  while (stepper.current_time() < 40.0) {
    stepper.do_step(rhs);
    const OdeState& s = stepper.current_state();
    if (s[0] > n * M_PI) return 1;
    if (s[1] < 0.0) return -1;
  }
  return 0;
}

double oracle_b_star(int l, int n) {
  double lo = 1e-3, hi = 50.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (oracle_shot(l, n, mid) > 0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

const HarmonicMap& cached(int l, int n) {
  static std::map<std::pair<int, int>, HarmonicMap> cache;
  auto key = std::make_pair(l, n);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, solve_Q(ModelParams::make(l, n), grid_for_radius(60.0, 2049))).first;
  }
  return it->second;
}

nlohmann::json golden(int l, int n) {
  std::ifstream is(std::string(WORMHOLE_SOURCE_DIR) + "/tests/golden/harmonic_l" +
                   std::to_string(l) + "_n" + std::to_string(n) + ".json");
  EXPECT_TRUE(is.good());
  return nlohmann::json::parse(is);
}

}  // namespace

class HarmonicPairs : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(HarmonicPairs, SlopeMatchesAdaptiveOracle) {
  const auto [l, n] = GetParam();
  EXPECT_NEAR(cached(l, n).b_star, oracle_b_star(l, n), 1e-8);
}

TEST_P(HarmonicPairs, MatchesGoldenManifest) {
  const auto [l, n] = GetParam();
  const auto j = golden(l, n);
  const HarmonicMap& q = cached(l, n);
  EXPECT_NEAR(q.b_star, j["b_star"].get<double>(), 1e-10);
  EXPECT_NEAR(q.alpha / j["alpha"].get<double>(), 1.0, 1e-8);
}

TEST_P(HarmonicPairs, StructuralProperties) {
  const auto [l, n] = GetParam();
  const HarmonicMap& q = cached(l, n);
  const RadialGrid& g = *q.grid;
  double anti = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    anti = std::max(anti, std::abs(q.Q[i] + q.Q[g.size() - 1 - i] - n * M_PI));
  }
  EXPECT_LT(anti, 1e-8);
  const auto qx = d_dx(g, q.Q);
  for (std::size_t i = 1; i + 1 < g.size(); ++i) {
    ASSERT_GT(q.Qx[i], 0.0) << i;
    ASSERT_GT(qx[i], 0.0) << i;
  }
  EXPECT_GT(q.alpha, 0.0);
  EXPECT_LT(q.alpha_drift, 1e-4);
  EXPECT_NEAR(q.Q[g.throat()], 0.5 * n * M_PI, 1e-15);
}

TEST_P(HarmonicPairs, StaticResidualIsFourthOrder) {
  const auto [l, n] = GetParam();
  const HarmonicMap& base = cached(l, n);
  auto residual = [&](std::size_t N) {
    const HarmonicMap q = resample(base, grid_for_radius(10.0, N));
    const RadialGrid& g = *q.grid;
    const auto qx = d_dx(g, q.Q);
    const auto qxx = d2_dx2(g, q.Q);
    double r = 0.0;
    for (std::size_t i = 2; i + 2 < g.size(); ++i) {
      const double res = qxx[i] + std::tanh(g.x[i]) * qx[i] - 0.5 * l * (l + 1.0) * q.sin2Q[i];
      r = std::max(r, std::abs(res));
    }
    return r;
  };
  const double a = residual(257), b = residual(513);
  EXPECT_GT(std::log2(a / b), 3.5);
  EXPECT_LT(b, 2e-5);
}

INSTANTIATE_TEST_SUITE_P(All, HarmonicPairs,
                         ::testing::Values(std::pair{1, 1}, std::pair{1, 2}, std::pair{2, 1},
                                           std::pair{2, 2}, std::pair{3, 1}, std::pair{3, 2}));

TEST(Harmonic, DegreeZeroIsTrivial) {
  const HarmonicMap q = solve_Q(ModelParams::make(2, 0), grid_for_radius(30.0, 129));
  for (double v : q.Q) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(q.alpha, 0.0);
  EXPECT_EQ(extract_alpha(q), 0.0);
}

TEST(Harmonic, KnownSlopeForUnitClass) {
  // Frozen from the adaptive oracle above.
  EXPECT_NEAR(cached(1, 1).b_star, 1.79714929312374, 1e-10);
}

TEST(Harmonic, AlphaStableUnderOdeRefinement) {
  SolveOptions fine;
  fine.dx_ode = 5e-4;
  const HarmonicMap q = solve_Q(ModelParams::make(1, 1), grid_for_radius(60.0, 257), fine);
  EXPECT_NEAR(q.alpha / cached(1, 1).alpha, 1.0, 1e-7);
  EXPECT_NEAR(q.b_star, cached(1, 1).b_star, 1e-10);
}

TEST(Harmonic, TailCorrectionDecaysLikeRMinusTwo) {
  for (auto [l, n] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{3, 2}}) {
    const HarmonicMap& q = cached(l, n);
    std::vector<double> rs, ds;
    for (double r = 20.0; r <= 200.0; r *= 1.25) {
      const double gap = q.profile->gap_at(std::asinh(r))[0];
      rs.push_back(r);
      ds.push_back(std::abs(std::pow(r, l + 1) * gap - q.alpha));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const double x = std::log(rs[i]), y = std::log(ds[i]);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double m = rs.size();
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    EXPECT_NEAR(slope, -2.0, 0.2) << l << "," << n;
  }
}

TEST(Harmonic, PrescribedRoundTrip) {
  for (auto [l, n] : {std::pair{1, 1}, std::pair{2, 1}}) {
    const HarmonicMap& q = cached(l, n);
    const Trajectory plus = solve_prescribed(-q.alpha, Side::Plus, q.params, 12.0);
    EXPECT_NEAR(plus.v.front(), 0.5 * n * M_PI, 1e-6);
    // The minus side mirrors: Q^-(0) = n pi/2 with the same |alpha|.
    const Trajectory minus = solve_prescribed(q.alpha, Side::Minus, q.params, 12.0);
    EXPECT_NEAR(minus.v.back(), 0.5 * n * M_PI, 1e-6);
  }
}

TEST(Harmonic, ShotClassification) {
  const ModelParams p = ModelParams::make(1, 1);
  const double b = cached(1, 1).b_star;
  EXPECT_EQ(classify_shot(integrate_static(1.2 * b, p, 12.0, 1e-3), p).tag, ShotTag::Overshoot);
  EXPECT_EQ(classify_shot(integrate_static(0.8 * b, p, 12.0, 1e-3), p).tag, ShotTag::Undershoot);
  EXPECT_EQ(oracle_shot(1, 1, 1.2 * b), 1);
  EXPECT_EQ(oracle_shot(1, 1, 0.8 * b), -1);
}

TEST(Harmonic, TrajectoryAgreesWithAdaptiveIntegration) {
  const ModelParams p = ModelParams::make(2, 1);
  const double b = 2.0;
  const Trajectory t = integrate_static(b, p, 3.0, 1e-3);
  auto rhs = [](const OdeState& y, OdeState& dy, double x) {
    dy[0] = y[1];
    dy[1] = -std::tanh(x) * y[1] + 3.0 * std::sin(2.0 * y[0]);
  };
  OdeState y{0.5 * M_PI, b};
  odeint::integrate_adaptive(odeint::make_controlled(1e-13, 1e-13, odeint::runge_kutta_dopri5<OdeState>()),
                             rhs, y, 0.0, 3.0, 1e-3);
  EXPECT_NEAR(t.v.back(), y[0], 1e-9);
  EXPECT_NEAR(t.vx.back(), y[1], 1e-8);
}

TEST(Harmonic, ExtractAlphaRejectsShortTail) {
  SolveOptions opt;
  opt.x_end = 8.0;
  const HarmonicMap q = solve_Q(ModelParams::make(1, 1), grid_for_radius(10.0, 129), opt);
  try {
    extract_alpha(q, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TailTooShort);
  }
}

TEST(Potentials, MatchDefiningFormulas) {
  const HarmonicMap& q = cached(2, 1);
  const RadialGrid& g = *q.grid;
  const auto V = potential_V(q);
  const auto P = linearized_potential(q);
  const double l = 2.0;
  for (std::size_t i = 0; i < g.size(); i += 37) {
    const double c2 = g.jacobian[i] * g.jacobian[i];
    const double direct = l * l / (c2 * c2) + l * (l + 1) * (std::cos(2.0 * q.Q[i]) - 1.0) / c2;
    EXPECT_NEAR(V[i], direct, 1e-12);
    EXPECT_NEAR(P[i], l * (l + 1) * std::cos(2.0 * q.Q[i]) / c2, 1e-12);
  }
  // V is even.
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(V[i], V[g.size() - 1 - i]);
}

TEST(Potentials, NonlinearityIsTheConjugatedSineRemainder) {
  // N = l(l+1) cos2Q / <r>^2 u - l(l+1) / (2 <r>^{l+2}) (sin 2(Q + <r>^l u) - sin 2Q)
  const HarmonicMap& q = cached(1, 1);
  const RadialGrid& g = *q.grid;
  const Nonlinearity nl{1};
  for (std::size_t i = 0; i < g.size(); i += 101) {
    const double c = g.jacobian[i];
    for (double u : {-0.3, 0.05, 0.2}) {
      const double y = c * u;
      const double oracle = 2.0 * q.cos2Q[i] / (c * c) * u -
                            1.0 / std::pow(c, 3) * (std::sin(2.0 * (q.Q[i] + y)) - std::sin(2.0 * q.Q[i]));
      EXPECT_NEAR(nl.N(c, q.sin2Q[i], q.cos2Q[i], u), oracle, 1e-12);
    }
  }
}

TEST(Potentials, SeriesBranchesAreContinuous) {
  const Nonlinearity nl{2};
  const double jr = 1.7, s2q = 0.4, c2q = -0.3;
  for (double y : {0.499, 0.501}) {
    const double u = y / (2.0 * jr * jr);
    const double z = 2.0 * jr * jr * u;
    const long double zl = z;
    const double exact = static_cast<double>(0.5L * 6.0L * std::pow(jr, -4) * (zl - std::sin(zl)) * c2q);
    EXPECT_NEAR(nl.G(jr, c2q, u), exact, 1e-14 * std::abs(exact));
  }
  // W' = -N by central differences.
  for (double u : {1e-4, 3e-3, 0.2}) {
    const double h = 1e-6 * std::max(u, 1e-3);
    const double dW = (nl.W(jr, s2q, c2q, u + h) - nl.W(jr, s2q, c2q, u - h)) / (2.0 * h);
    EXPECT_NEAR(dW, -nl.N(jr, s2q, c2q, u), 1e-7 * std::abs(nl.N(jr, s2q, c2q, u)) + 1e-14);
  }
}

TEST(StaticFamily, SolvesTheStaticUEquation) {
  const HarmonicMap q = solve_Q(ModelParams::make(1, 1), grid_for_radius(60.0, 4097));
  const StaticFamily fam = static_u_family(0.9 * q.alpha, q);
  EXPECT_LT(fam.residual, 1e-5);
  double umax = 0.0;
  for (double v : fam.U) umax = std::max(umax, std::abs(v));
  EXPECT_GT(umax, 1e-3);
  const StaticFamily zero = static_u_family(0.0, q);
  for (double v : zero.U) EXPECT_EQ(v, 0.0);
}
