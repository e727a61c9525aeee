#pragma once

// Smooth test data: compact bumps and seeded random perturbations.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "wormhole/grid.hpp"
#include "wormhole/model.hpp"

namespace wormhole::data {

/// C-infinity bump exp(1 - 1/(1 - s^2)), s = (r - center)/half_width, peak 1.
inline double bump(double r, double center, double half_width) {
  const double s = (r - center) / half_width;
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

inline double gaussian(double r, double center, double width) {
  const double s = (r - center) / width;
  return std::exp(-s * s);
}

inline std::vector<double> sample(const RadialGrid& g, auto&& fn, std::size_t lo = 0) {
  std::vector<double> v(g.size(), 0.0);
  for (std::size_t i = lo; i < g.size(); ++i) v[i] = fn(g.r[i]);
  return v;
}

struct BumpSpec {
  double amp = 0.0;
  double center = 0.0;
  double half_width = 1.0;
};

inline double eval(const std::vector<BumpSpec>& bs, double r) {
  double s = 0.0;
  for (const auto& b : bs) s += b.amp * bump(r, b.center, b.half_width);
  return s;
}

struct RandomBumps {
  int max_bumps = 3;
  double amp = 0.1;       // amplitudes uniform in [-amp, amp]
  double r_lo = -6.0;     // centers uniform in [r_lo, r_hi]
  double r_hi = 6.0;
  double width_lo = 1.0;  // half widths uniform in [width_lo, width_hi]
  double width_hi = 3.0;
};

inline std::vector<BumpSpec> random_bumps(std::mt19937_64& rng, const RandomBumps& o) {
  std::uniform_int_distribution<int> count(1, o.max_bumps);
  std::uniform_real_distribution<double> amp(-o.amp, o.amp), ctr(o.r_lo, o.r_hi),
      wid(o.width_lo, o.width_hi);
  std::vector<BumpSpec> out(static_cast<std::size_t>(count(rng)));
  for (auto& b : out) {
    b.amp = amp(rng);
    b.center = ctr(rng);
    b.half_width = wid(rng);
  }
  return out;
}

/// Random (f, g) built from bumps. For Form::Psi the bumps are added to `base`.
inline FieldState random_state(GridPtr grid, Form form, const ModelParams& params,
                               std::mt19937_64& rng, const RandomBumps& o = {},
                               const std::vector<double>* base = nullptr, std::size_t lo = 0) {
  FieldState s = make_state(grid, form, params, lo);
  const auto fb = random_bumps(rng, o);
  const auto gb = random_bumps(rng, o);
  for (std::size_t i = lo; i < grid->size(); ++i) {
    const double r = grid->r[i];
    s.f[i] = eval(fb, r) + (base ? (*base)[i] : 0.0);
    s.g[i] = eval(gb, r);
  }
  return s;
}

/// Random free flat data supported in [R, R + span] on the r >= 0 half.
inline FieldState random_flat_data(GridPtr grid, int d, double R, double span,
                                   std::mt19937_64& rng, double amp = 1.0) {
  FieldState s = make_state(grid, Form::FlatFree, ModelParams::from_dim(d), 0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 3);
  auto draw = [&] {
    std::vector<BumpSpec> bs(static_cast<std::size_t>(count(rng)));
    for (auto& b : bs) {
      b.half_width = span * (0.15 + 0.35 * u01(rng));
      b.center = R + b.half_width + (span - 2.0 * b.half_width) * u01(rng);
      b.amp = amp * (2.0 * u01(rng) - 1.0);
    }
    return bs;
  };
  const auto fb = draw();
  const auto gb = draw();
  for (std::size_t i = grid->throat(); i < grid->size(); ++i) {
    const double r = grid->r[i];
    s.f[i] = eval(fb, r);
    s.g[i] = eval(gb, r);
  }
  return s;
}

}  // namespace wormhole::data
