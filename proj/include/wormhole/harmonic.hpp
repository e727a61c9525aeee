#pragma once

// Harmonic maps Q_{l,n} by shooting in x = asinh r, the prescribed-asymptotics
// family Q^{+-}_alpha, and the coefficients of the u-equation built from Q.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "wormhole/error.hpp"
#include "wormhole/grid.hpp"
#include "wormhole/model.hpp"

namespace wormhole {

// ---------------------------------------------------------------------------
// The static equation v'' + tanh(x) v' - c sin(2v) = 0, c = l(l+1)/2. It is
// invariant under v -> k pi - v and v -> v + k pi, so Q, the gap n pi - Q and
// the reflected profile all obey it.

struct StaticOde {
  double c = 1.0;

  double accel(double x, double v, double vx) const {
    return -std::tanh(x) * vx + c * std::sin(2.0 * v);
  }

  void rk4(double x, double h, double& v, double& vx) const {
    const double k1v = vx, k1a = accel(x, v, vx);
    const double k2v = vx + 0.5 * h * k1a, k2a = accel(x + 0.5 * h, v + 0.5 * h * k1v, k2v);
    const double k3v = vx + 0.5 * h * k2a, k3a = accel(x + 0.5 * h, v + 0.5 * h * k2v, k3v);
    const double k4v = vx + h * k3a, k4a = accel(x + h, v + h * k3v, k4v);
    v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    vx += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
  }
};

inline StaticOde static_ode(const ModelParams& p) { return StaticOde{0.5 * p.potential_coupling()}; }

/// Samples of (v, v_x) at x_j = x0 + j h, j = 0..size-1. h may be negative.
struct Trajectory {
  double x0 = 0.0;
  double h = 0.0;
  std::vector<double> v;
  std::vector<double> vx;
  double exit_x = 0.0;  // last x reached

  std::size_t size() const { return v.size(); }
  double x_at(std::size_t j) const { return x0 + static_cast<double>(j) * h; }
};

/// Fixed-step RK4 from (x0, v0, vx0) over `steps` steps of size h.
inline Trajectory integrate_ode(const StaticOde& ode, double x0, double v0, double vx0, double h,
                                std::size_t steps) {
  Trajectory t;
  t.x0 = x0;
  t.h = h;
  t.v.reserve(steps + 1);
  t.vx.reserve(steps + 1);
  double v = v0, vx = vx0;
  t.v.push_back(v);
  t.vx.push_back(vx);
  for (std::size_t j = 0; j < steps; ++j) {
    ode.rk4(x0 + static_cast<double>(j) * h, h, v, vx);
    if (!std::isfinite(v) || !std::isfinite(vx)) {
      t.exit_x = x0 + static_cast<double>(j) * h;
      fail(ErrorCode::IntegrationFailure,
           "static integration lost finiteness at x = " + std::to_string(t.exit_x));
    }
    t.v.push_back(v);
    t.vx.push_back(vx);
  }
  t.exit_x = x0 + static_cast<double>(steps) * h;
  return t;
}

inline std::size_t step_count(double length, double h) {
  require(h > 0.0 && length >= 0.0, ErrorCode::InvalidArgument, "bad integration step");
  return static_cast<std::size_t>(std::ceil(length / h - 1e-9));
}

/// Q(0) = n pi / 2, dQ/dx(0) = b, integrated on [0, x_end].
inline Trajectory integrate_static(double b, const ModelParams& params, double x_end,
                                   double dx_ode) {
  require(x_end > 0.0, ErrorCode::InvalidArgument, "x_end must be positive");
  require(std::isfinite(b), ErrorCode::InvalidArgument, "shooting slope must be finite");
  const std::size_t steps = step_count(x_end, dx_ode);
  return integrate_ode(static_ode(params), 0.0, 0.5 * params.far_value(), b, x_end / steps, steps);
}

// ---------------------------------------------------------------------------
// Shot classification.

enum class ShotTag { Undershoot, Overshoot, Converged, Inconclusive };

inline const char* to_string(ShotTag t) {
  switch (t) {
    case ShotTag::Undershoot: return "undershoot";
    case ShotTag::Overshoot: return "overshoot";
    case ShotTag::Converged: return "converged";
    case ShotTag::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct ShotOutcome {
  ShotTag tag = ShotTag::Inconclusive;
  double exit_x = 0.0;
};

struct ShotRules {
  double margin = 0.1;
  double conv_tol = 1e-6;
};

inline ShotOutcome classify_shot(const Trajectory& t, const ModelParams& params,
                                 const ShotRules& rules = {}) {
  require(params.degree >= 1, ErrorCode::InvalidArgument, "shots are classified for n >= 1");
  const double top = params.far_value();
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (t.v[j] > top + rules.margin) return {ShotTag::Overshoot, t.x_at(j)};
    if (t.vx[j] <= 0.0 && t.v[j] < top - rules.margin) return {ShotTag::Undershoot, t.x_at(j)};
  }
  const double end_gap = std::abs(t.v.back() - top);
  return {end_gap < rules.conv_tol ? ShotTag::Converged : ShotTag::Inconclusive, t.exit_x};
}

namespace detail {
// Forward shot that stops as soon as the classification is decided.
inline ShotOutcome quick_shot(double b, const ModelParams& params, double x_end, double h,
                              const ShotRules& rules) {
  const StaticOde ode = static_ode(params);
  const double top = params.far_value();
  double v = 0.5 * top, vx = b;
  const std::size_t steps = step_count(x_end, h);
  const double hh = x_end / steps;
  for (std::size_t j = 0; j < steps; ++j) {
    ode.rk4(j * hh, hh, v, vx);
    if (!std::isfinite(v)) return {ShotTag::Inconclusive, j * hh};
    if (v > top + rules.margin) return {ShotTag::Overshoot, (j + 1) * hh};
    if (vx <= 0.0 && v < top - rules.margin) return {ShotTag::Undershoot, (j + 1) * hh};
  }
  return {std::abs(v - top) < rules.conv_tol ? ShotTag::Converged : ShotTag::Inconclusive, x_end};
}

// Quintic Hermite interpolation of a trajectory using v'' from the ODE.
inline std::array<double, 2> hermite(const StaticOde& ode, const Trajectory& t, double x) {
  const double s = (x - t.x0) / t.h;
  auto j = static_cast<long>(std::floor(s));
  j = std::clamp(j, 0L, static_cast<long>(t.size()) - 2);
  const auto a = static_cast<std::size_t>(j);
  const double h = t.h;
  const double xa = t.x_at(a), xb = t.x_at(a + 1);
  const double u = (x - xa) / h;
  const double p0 = t.v[a], p1 = t.v[a + 1];
  const double m0 = t.vx[a] * h, m1 = t.vx[a + 1] * h;
  const double a0 = ode.accel(xa, t.v[a], t.vx[a]) * h * h;
  const double a1 = ode.accel(xb, t.v[a + 1], t.vx[a + 1]) * h * h;
  const double u2 = u * u, u3 = u2 * u, u4 = u3 * u, u5 = u4 * u;
  const double h0 = 1 - 10 * u3 + 15 * u4 - 6 * u5;
  const double h1 = u - 6 * u3 + 8 * u4 - 3 * u5;
  const double h2 = 0.5 * (u2 - 3 * u3 + 3 * u4 - u5);
  const double h3 = 0.5 * (u3 - 2 * u4 + u5);
  const double h4 = -4 * u3 + 7 * u4 - 3 * u5;
  const double h5 = 10 * u3 - 15 * u4 + 6 * u5;
  const double d0 = -30 * u2 + 60 * u3 - 30 * u4;
  const double d1 = 1 - 18 * u2 + 32 * u3 - 15 * u4;
  const double d2 = 0.5 * (2 * u - 9 * u2 + 12 * u3 - 5 * u4);
  const double d3 = 0.5 * (3 * u2 - 8 * u3 + 5 * u4);
  const double d4 = -12 * u2 + 28 * u3 - 15 * u4;
  const double d5 = 30 * u2 - 60 * u3 + 30 * u4;
  const double val = h0 * p0 + h1 * m0 + h2 * a0 + h3 * a1 + h4 * m1 + h5 * p1;
  const double der = (d0 * p0 + d1 * m0 + d2 * a0 + d3 * a1 + d4 * m1 + d5 * p1) / h;
  return {val, der};
}

// Backward integration of the decaying branch v ~ coef r^{-l-1} from x_far
// down to x_stop, returned in increasing-x order.
inline Trajectory decaying_branch(const ModelParams& params, double coef, double x_far,
                                  double x_stop, double h) {
  const int l = params.ell;
  const double r = std::sinh(x_far);
  const double v = coef * std::pow(r, -l - 1);
  const double vx = -(l + 1.0) * coef * std::pow(r, -l - 2) * std::cosh(x_far);
  const std::size_t steps = step_count(x_far - x_stop, h);
  Trajectory back = integrate_ode(static_ode(params), x_far, v, vx, -(x_far - x_stop) / steps,
                                  steps);
  std::reverse(back.v.begin(), back.v.end());
  std::reverse(back.vx.begin(), back.vx.end());
  back.x0 = x_stop;
  back.h = -back.h;
  back.exit_x = x_stop;
  return back;
}
}  // namespace detail

/// Right-half profile of Q_{l,n}, stored as the gap n pi - Q on [0, x_far].
/// Beyond x_far the leading asymptotic alpha r^{-l-1} is used.
struct StaticProfile {
  ModelParams params;
  Trajectory gap;
  double alpha_seed = 0.0;
  double x_match = 0.0;
  double x_end = 0.0;

  std::array<double, 2> gap_at(double x) const {
    const double ax = std::abs(x);
    if (params.degree == 0) return {0.0, 0.0};
    const double x_far = gap.x_at(gap.size() - 1);
    if (ax > x_far) {
      const int l = params.ell;
      const double r = std::sinh(ax);
      return {alpha_seed * std::pow(r, -l - 1),
              -(l + 1.0) * alpha_seed * std::pow(r, -l - 2) * std::cosh(ax)};
    }
    return detail::hermite(static_ode(params), gap, ax);
  }
};

struct SolveOptions {
  double tol_b = 1e-12;
  double x_end = 12.0;
  double dx_ode = 1e-3;
  ShotRules rules{};
  double b_min = 1e-6;
  double b_max = 1e3;
};

struct ShootingResult {
  double b_star = 0.0;
  double b_lo = 0.0;
  double b_hi = 0.0;
  int iterations = 0;
  double x_shoot = 0.0;
};

/// Bisection on b between a certified undershoot and overshoot. The bracket is
/// narrowed until the two ends are adjacent doubles, which is at least as tight
/// as tol_b.
inline ShootingResult bisect_slope(const ModelParams& params, const SolveOptions& opt) {
  require(params.degree >= 1, ErrorCode::InvalidArgument, "shooting needs n >= 1");
  ShootingResult res;
  res.x_shoot = std::max(opt.x_end, 45.0 / params.ell);
  const double h = opt.dx_ode;
  double lo = opt.b_min, hi = opt.b_max;
  if (detail::quick_shot(lo, params, res.x_shoot, h, opt.rules).tag != ShotTag::Undershoot ||
      detail::quick_shot(hi, params, res.x_shoot, h, opt.rules).tag != ShotTag::Overshoot) {
    fail(ErrorCode::BracketFailure, "no undershoot/overshoot bracket in [1e-6, 1e3]");
  }
  res.b_star = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    res.iterations = it + 1;
    if (mid <= lo || mid >= hi) break;
    const ShotOutcome s = detail::quick_shot(mid, params, res.x_shoot, h, opt.rules);
    if (s.tag == ShotTag::Undershoot) {
      lo = mid;
    } else if (s.tag == ShotTag::Overshoot) {
      hi = mid;
    } else if (s.tag == ShotTag::Converged) {
      lo = hi = mid;
      break;
    } else {
      fail(ErrorCode::IntegrationFailure, "inconclusive shot; increase x_end");
    }
  }
  require(hi - lo < opt.tol_b, ErrorCode::BracketFailure, "bisection did not reach tol_b");
  res.b_lo = lo;
  res.b_hi = hi;
  res.b_star = 0.5 * (lo + hi);
  return res;
}

/// Profile of Q_{l,n} on x >= 0. The forward shot is trusted up to the point
/// where shots from the two final bracket ends stay within 1e-13 of each other;
/// from there on the gap is the decaying branch matched in value.
inline StaticProfile build_profile(const ModelParams& params, const ShootingResult& shot,
                                   const SolveOptions& opt, double x_far) {
  StaticProfile prof;
  prof.params = params;
  prof.x_end = opt.x_end;
  const double h = opt.dx_ode;
  const double top = params.far_value();
  const StaticOde ode = static_ode(params);
  const std::size_t n_far = step_count(x_far, h);
  const double hh = x_far / n_far;

  // Separation point of the bracket ends.
  const Trajectory t_lo = integrate_ode(ode, 0.0, 0.5 * top, shot.b_lo, hh, n_far);
  const Trajectory t_hi = integrate_ode(ode, 0.0, 0.5 * top, shot.b_hi, hh, n_far);
  const Trajectory t_mid = integrate_ode(ode, 0.0, 0.5 * top, shot.b_star, hh, n_far);
  std::size_t j_sep = n_far;
  for (std::size_t j = 0; j <= n_far; ++j) {
    if (std::abs(t_lo.v[j] - t_hi.v[j]) > 1e-10) {
      j_sep = j;
      break;
    }
  }
  const double back_off = std::log(1e3) / params.ell;
  double x_m = std::max(t_mid.x_at(j_sep) - back_off, 0.5);
  x_m = std::min(x_m, std::min(opt.x_end, x_far - 1.0));
  const auto j_m = static_cast<std::size_t>(std::floor(x_m / hh));
  x_m = j_m * hh;
  prof.x_match = x_m;
  const double target = top - t_mid.v[j_m];
  require(target > 0.0, ErrorCode::IntegrationFailure, "forward shot left the basin before matching");

  // Secant on the asymptotic coefficient so that the decaying branch hits the
  // forward gap at x_m.
  auto miss = [&](double coef) {
    Trajectory b = detail::decaying_branch(params, coef, x_far, x_m, hh);
    return b.v.front() - target;
  };
  double a0 = target * std::pow(std::sinh(x_m), params.ell + 1);
  double a1 = 1.01 * a0;
  double f0 = miss(a0), f1 = miss(a1);
  for (int it = 0; it < 60 && std::abs(f1) > 1e-15 * target && f1 != f0; ++it) {
    const double a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
    a0 = a1;
    f0 = f1;
    a1 = a2;
    f1 = miss(a1);
  }
  prof.alpha_seed = a1;
  const Trajectory tail = detail::decaying_branch(params, a1, x_far, x_m, hh);

  prof.gap.x0 = 0.0;
  prof.gap.h = hh;
  prof.gap.v.resize(n_far + 1);
  prof.gap.vx.resize(n_far + 1);
  for (std::size_t j = 0; j <= n_far; ++j) {
    if (j < j_m) {
      prof.gap.v[j] = top - t_mid.v[j];
      prof.gap.vx[j] = -t_mid.vx[j];
    } else {
      prof.gap.v[j] = tail.v[j - j_m];
      prof.gap.vx[j] = tail.vx[j - j_m];
    }
  }
  prof.gap.exit_x = x_far;
  return prof;
}

struct AlphaPlateau {
  double alpha = 0.0;
  double drift = 0.0;
};

/// A(r) = r^{l+1} (n pi - Q) on the last decade [r_end/10, r_end] of the profile.
inline AlphaPlateau alpha_plateau(const StaticProfile& prof, double x_end) {
  if (prof.params.degree == 0) return {};
  const int l = prof.params.ell;
  const double r_end = std::sinh(x_end);
  const double x_lo = std::asinh(r_end / 10.0);
  double amin = std::numeric_limits<double>::infinity();
  double amax = -amin;
  double last = 0.0;
  const int samples = 201;
  for (int k = 0; k < samples; ++k) {
    const double x = x_lo + (x_end - x_lo) * k / (samples - 1);
    last = std::pow(std::sinh(x), l + 1) * prof.gap_at(x)[0];
    amin = std::min(amin, last);
    amax = std::max(amax, last);
  }
  return {last, (amax - amin) / std::abs(last)};
}

/// Samples Q on a grid from the right-half profile by antisymmetry.
inline HarmonicMap sample_harmonic(std::shared_ptr<const StaticProfile> prof, GridPtr grid,
                                   double b_star, const AlphaPlateau& plateau) {
  const ModelParams& p = prof->params;
  const RadialGrid& g = *grid;
  const std::size_t n = g.size();
  HarmonicMap m;
  m.params = p;
  m.grid = grid;
  m.b_star = b_star;
  m.alpha = plateau.alpha;
  m.alpha_drift = plateau.drift;
  m.profile = prof;
  m.Q.resize(n);
  m.Qx.resize(n);
  m.gap.resize(n);
  m.sin2Q.resize(n);
  m.cos2Q.resize(n);
  const double top = p.far_value();
  const std::size_t c = g.throat();
  for (std::size_t k = 0; k <= c; ++k) {
    const auto [gv, gx] = prof->gap_at(g.x[c + k]);
    const std::size_t ip = c + k, im = c - k;
    m.gap[ip] = m.gap[im] = gv;
    m.Qx[ip] = m.Qx[im] = -gx;
    m.Q[ip] = top - gv;
    m.Q[im] = gv;
    m.cos2Q[ip] = m.cos2Q[im] = std::cos(2.0 * gv);
    m.sin2Q[ip] = -std::sin(2.0 * gv);
    m.sin2Q[im] = std::sin(2.0 * gv);
  }
  if (p.degree > 0) {
    m.Q[c] = 0.5 * top;
    m.sin2Q[c] = 0.0;  // sin(n pi)
  }
  return m;
}

inline HarmonicMap zero_map(const ModelParams& params, GridPtr grid) {
  auto prof = std::make_shared<StaticProfile>();
  prof->params = params;
  return sample_harmonic(prof, grid, 0.0, {});
}

/// Q_{l,n} sampled on `grid`.
inline HarmonicMap solve_Q(const ModelParams& params, GridPtr grid, const SolveOptions& opt = {}) {
  require(grid != nullptr, ErrorCode::InvalidArgument, "solve_Q needs a grid");
  require(opt.x_end > 0.0 && opt.dx_ode > 0.0 && opt.tol_b > 0.0, ErrorCode::InvalidArgument,
          "shooting options must be positive");
  if (params.degree == 0) return zero_map(params, grid);
  const ShootingResult shot = bisect_slope(params, opt);
  const double x_far = std::max(opt.x_end, grid->half_width) + 2.0;
  auto prof = std::make_shared<StaticProfile>(build_profile(params, shot, opt, x_far));
  const double end_gap = prof->gap_at(opt.x_end)[0];
  require(std::abs(end_gap) < opt.rules.conv_tol, ErrorCode::IntegrationFailure,
          "profile does not converge to n pi by x_end");
  return sample_harmonic(prof, grid, shot.b_star, alpha_plateau(*prof, opt.x_end));
}

/// Same map on another grid (no new shooting).
inline HarmonicMap resample(const HarmonicMap& q, GridPtr grid) {
  require(q.profile != nullptr, ErrorCode::InvalidArgument, "harmonic map has no profile");
  const double x_far = q.profile->gap.size() ? q.profile->gap.x_at(q.profile->gap.size() - 1) : 0.0;
  require(q.params.degree == 0 || grid->half_width <= x_far, ErrorCode::InvalidArgument,
          "grid extends beyond the computed profile");
  return sample_harmonic(q.profile, grid, q.b_star, {q.alpha, q.alpha_drift});
}

/// Plateau of r^{l+1}(n pi - Q) over the last decade of r; tail-too-short if
/// the relative drift exceeds max_drift.
inline double extract_alpha(const HarmonicMap& q, double max_drift = 1e-3) {
  if (q.params.degree == 0) return 0.0;
  require(q.profile != nullptr, ErrorCode::InvalidArgument, "harmonic map has no profile");
  const AlphaPlateau p = alpha_plateau(*q.profile, q.profile->x_end);
  require(p.drift <= max_drift, ErrorCode::TailTooShort,
          "alpha plateau drifts by " + std::to_string(p.drift) + "; increase x_end");
  return p.alpha;
}

// ---------------------------------------------------------------------------
// Prescribed asymptotics.

enum class Side { Plus, Minus };

/// Q^+_alpha ~ n pi + alpha r^{-l-1} at +inf, or Q^-_alpha ~ alpha |r|^{-l-1}
/// at -inf, integrated from |x| = x_end to the throat. The returned trajectory
/// holds Q on [0, x_end] (Plus) or [-x_end, 0] (Minus), increasing x.
inline Trajectory solve_prescribed(double alpha_target, Side side, const ModelParams& params,
                                   double x_end, double dx_ode = 1e-3) {
  require(x_end > 0.0, ErrorCode::InvalidArgument, "x_end must be positive");
  const double top = params.far_value();
  const double coef = side == Side::Plus ? -alpha_target : alpha_target;
  Trajectory p = detail::decaying_branch(params, coef, x_end, 0.0, dx_ode);
  if (side == Side::Plus) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      p.v[j] = top - p.v[j];
      p.vx[j] = -p.vx[j];
    }
    return p;
  }
  std::reverse(p.v.begin(), p.v.end());
  std::reverse(p.vx.begin(), p.vx.end());
  for (double& d : p.vx) d = -d;
  p.x0 = -x_end;
  p.exit_x = 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// Coefficients of the u-equation.

/// V = l^2/<r>^4 + l(l+1)(cos 2Q - 1)/<r>^2.
inline std::vector<double> potential_V(const HarmonicMap& q) {
  const RadialGrid& g = *q.grid;
  const double l = q.params.ell;
  std::vector<double> V(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double c2 = g.jacobian[i] * g.jacobian[i];
    const double s = std::sin(q.gap[i]);
    V[i] = l * l / (c2 * c2) - 2.0 * l * (l + 1.0) * s * s / c2;
  }
  return V;
}

/// l(l+1) cos 2Q / <r>^2, the potential of the linearization in psi.
inline std::vector<double> linearized_potential(const HarmonicMap& q) {
  const RadialGrid& g = *q.grid;
  std::vector<double> P(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    P[i] = q.params.potential_coupling() * q.cos2Q[i] / (g.jacobian[i] * g.jacobian[i]);
  }
  return P;
}

/// Pointwise nonlinearity pieces at one radius: jr = <r>, sin2Q, cos2Q.
struct Nonlinearity {
  int ell = 1;

  double F(double jr, double s2q, double u) const {
    const double a = std::pow(jr, ell);
    const double s = std::sin(a * u);
    return ell * (ell + 1.0) * std::pow(jr, -ell - 2) * s * s * s2q;
  }

  double G(double jr, double c2q, double u) const {
    const double a = std::pow(jr, ell);
    const double z = 2.0 * a * u;
    // 2au - sin(2au) loses digits for small arguments; use the series there.
    double w;
    if (std::abs(z) < 0.5) {
      const double z2 = z * z;
      w = 0.0;
      for (int k = 15; k >= 3; k -= 2) w = 1.0 / std::tgamma(k + 1.0) - z2 * w;
      w *= z2 * z;
    } else {
      w = z - std::sin(z);
    }
    return 0.5 * ell * (ell + 1.0) * std::pow(jr, -ell - 2) * w * c2q;
  }

  double N(double jr, double s2q, double c2q, double u) const {
    return F(jr, s2q, u) + G(jr, c2q, u);
  }

  /// W(u) = -int_0^u N ds, the nonlinear potential density.
  double W(double jr, double s2q, double c2q, double u) const {
    const double a = std::pow(jr, ell);
    const double k = ell * (ell + 1.0) * std::pow(jr, -ell - 2);
    const double y = a * u;
    double fs, gs;  // (2y - sin 2y)/(4a) and (y^2 - sin^2 y)/(2a)
    if (std::abs(y) < 1e-2) {
      const double y2 = y * y, y3 = y2 * y, y4 = y2 * y2;
      fs = (4.0 * y3 / 3.0 - 4.0 * y3 * y2 / 15.0 + 8.0 * y4 * y3 / 315.0) / (4.0 * a);
      gs = (y4 / 3.0 - 2.0 * y4 * y2 / 45.0 + y4 * y4 / 315.0) / (2.0 * a);
    } else {
      const double sy = std::sin(y);
      fs = (2.0 * y - std::sin(2.0 * y)) / (4.0 * a);
      gs = (y * y - sy * sy) / (2.0 * a);
    }
    return -k * (fs * s2q + gs * c2q);
  }
};

inline std::vector<double> nonlinearity_N(const HarmonicMap& q, const std::vector<double>& u) {
  require(u.size() == q.Q.size(), ErrorCode::GridMismatch, "u sampled on another grid");
  const RadialGrid& g = *q.grid;
  const Nonlinearity nl{q.params.ell};
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    out[i] = nl.N(g.jacobian[i], q.sin2Q[i], q.cos2Q[i], u[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Static family U_+ = <r>^{-l} (Q^+_{alpha - alpha_{l,n}} - Q) on r > 0.

struct StaticFamily {
  std::vector<double> U;  // zero at nodes with r <= 0
  std::size_t lo = 0;     // first node with r > 0
  double residual = 0.0;  // sup of |-Lap_g U + V U - N(U)| on interior nodes
};

inline StaticFamily static_u_family(double alpha, const HarmonicMap& q, double dx_ode = 1e-3) {
  require(q.profile != nullptr, ErrorCode::InvalidArgument, "harmonic map has no profile");
  const RadialGrid& g = *q.grid;
  const ModelParams& p = q.params;
  const StaticOde ode = static_ode(p);
  const double x_far = std::max(q.profile->x_end, g.half_width) + 2.0;
  // Gap of Q^+_{alpha - alpha_{l,n}}: n pi - Q^+ ~ (alpha_{l,n} - alpha) r^{-l-1}.
  const double seed = q.profile->alpha_seed - alpha;
  const Trajectory tail = detail::decaying_branch(p, seed, x_far, 0.0, dx_ode);
  StaticFamily out;
  out.U.assign(g.size(), 0.0);
  out.lo = g.throat() + 1;
  for (std::size_t i = out.lo; i < g.size(); ++i) {
    const double gap_alpha = detail::hermite(ode, tail, g.x[i])[0];
    out.U[i] = (q.gap[i] - gap_alpha) / std::pow(g.jacobian[i], p.ell);
  }
  if (alpha == 0.0) std::fill(out.U.begin(), out.U.end(), 0.0);

  // Static residual with stencils restricted to r > 0.
  std::vector<double> ux(g.size(), 0.0), uxx(g.size(), 0.0);
  first_derivative(out.U, g.spacing, ux, out.lo, g.size() - 1);
  second_derivative(out.U, g.spacing, uxx, out.lo, g.size() - 1);
  const auto V = potential_V(q);
  const Nonlinearity nl{p.ell};
  for (std::size_t i = out.lo + 2; i + 2 < g.size(); ++i) {
    const double c = g.jacobian[i];
    const double lap = (uxx[i] + (p.dim - 2) * std::tanh(g.x[i]) * ux[i]) / (c * c);
    const double res = -lap + V[i] * out.U[i] - nl.N(c, q.sin2Q[i], q.cos2Q[i], out.U[i]);
    out.residual = std::max(out.residual, std::abs(res));
  }
  return out;
}

}  // namespace wormhole
