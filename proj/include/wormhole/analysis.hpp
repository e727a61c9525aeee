#pragma once

// Exterior-energy machinery for radial waves: the u_e conjugation, the plane
// P(R) of static power tails and the orthogonal projection onto it, the
// exterior-energy certification for free flat waves, and the radiation
// extraction used to watch solutions settle onto Q.

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <boost/rational.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wormhole/error.hpp"
#include "wormhole/evolve.hpp"
#include "wormhole/grid.hpp"
#include "wormhole/harmonic.hpp"
#include "wormhole/model.hpp"

namespace wormhole {

// ---------------------------------------------------------------------------
// u_e = (<r>/r)^{(d-1)/2} u on r > 0.

inline double ue_factor(double r, int d) {
  require(r > 0.0, ErrorCode::DomainError, "u_e is defined for r > 0 only");
  return std::pow(japanese(r) / r, 0.5 * (d - 1));
}

inline FieldState u_to_ue(const FieldState& u) {
  require_form(u, Form::U);
  const RadialGrid& g = u.mesh();
  FieldState e = u;
  e.form = Form::UE;
  e.lo = std::max(u.lo, g.throat() + 1);
  for (std::size_t i = 0; i < e.lo; ++i) e.f[i] = e.g[i] = 0.0;
  for (std::size_t i = e.lo; i < g.size(); ++i) {
    const double m = ue_factor(g.r[i], u.params.dim);
    e.f[i] = m * u.f[i];
    e.g[i] = m * u.g[i];
  }
  return e;
}

/// V_e and the pointwise F_e, G_e of the flat-space conjugate equation.
struct ExteriorCoefficients {
  ModelParams params;
  GridPtr grid;
  std::size_t lo = 0;
  std::vector<double> Ve;  // zero below lo
  std::vector<double> sin2Q, cos2Q;

  double factor(std::size_t i) const { return ue_factor(grid->r[i], params.dim); }

  double Fe(std::size_t i, double ue) const {
    const double m = factor(i);
    return m * Nonlinearity{params.ell}.F(grid->jacobian[i], sin2Q[i], ue / m);
  }
  double Ge(std::size_t i, double ue) const {
    const double m = factor(i);
    return m * Nonlinearity{params.ell}.G(grid->jacobian[i], cos2Q[i], ue / m);
  }
};

inline ExteriorCoefficients exterior_coefficients(const HarmonicMap& q) {
  const RadialGrid& g = *q.grid;
  const int d = q.params.dim;
  ExteriorCoefficients ex;
  ex.params = q.params;
  ex.grid = q.grid;
  ex.lo = g.throat() + 1;
  ex.sin2Q = q.sin2Q;
  ex.cos2Q = q.cos2Q;
  const auto V = potential_V(q);
  ex.Ve.assign(g.size(), 0.0);
  for (std::size_t i = ex.lo; i < g.size(); ++i) {
    const double r2 = g.r[i] * g.r[i];
    const double c2 = g.jacobian[i] * g.jacobian[i];
    ex.Ve[i] = V[i] - 0.5 * (d - 1.0) * (d - 4.0) / (r2 * c2) +
               0.25 * (d - 1.0) * (d - 5.0) / (r2 * c2 * c2);
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Bound envelopes and their log-log slopes on the tail.

struct Envelope {
  std::vector<double> r;
  std::vector<double> value;
};

struct EnvelopeSet {
  Envelope V;   // |V - l^2/<r>^4|
  Envelope F0;  // sup_u |F - l(l+1)<r>^{l-2} sin2Q u^2| / u^4
  Envelope G;   // sup_u |G| / |u|^3
  Envelope Ve;  // |V_e|
  Envelope Fe;  // sup |F_e| / u_e^2
  Envelope Ge;  // sup |G_e| / |u_e|^3
};

/// Envelopes on the grid nodes with r in [r_lo, r_hi]; the sup over the
/// amplitude runs over u = s <r>^{-l}, s in [1e-3, 1e-1] (log spaced).
inline EnvelopeSet bound_envelopes(const HarmonicMap& q, double r_lo, double r_hi) {
  const RadialGrid& g = *q.grid;
  const int l = q.params.ell;
  const Nonlinearity nl{l};
  const ExteriorCoefficients ex = exterior_coefficients(q);
  EnvelopeSet out;
  const int n_amp = 9;
  for (std::size_t i = ex.lo; i < g.size(); ++i) {
    const double r = g.r[i];
    if (r < r_lo || r > r_hi) continue;
    const double c = g.jacobian[i];
    const double a = std::pow(c, l);
    const double m = ex.factor(i);
    double f0 = 0.0, gg = 0.0, fe = 0.0, ge = 0.0;
    for (int k = 0; k < n_amp; ++k) {
      const double s = std::pow(10.0, -3.0 + 2.0 * k / (n_amp - 1));
      const double u = s / a;
      const double lead = l * (l + 1.0) * std::pow(c, l - 2) * q.sin2Q[i] * u * u;
      f0 = std::max(f0, std::abs(nl.F(c, q.sin2Q[i], u) - lead) / std::pow(u, 4));
      gg = std::max(gg, std::abs(nl.G(c, q.cos2Q[i], u)) / std::pow(u, 3));
      const double ue = m * u;
      fe = std::max(fe, std::abs(ex.Fe(i, ue)) / (ue * ue));
      ge = std::max(ge, std::abs(ex.Ge(i, ue)) / std::pow(ue, 3));
    }
    for (Envelope* e : {&out.V, &out.F0, &out.G, &out.Ve, &out.Fe, &out.Ge}) e->r.push_back(r);
    // V - l^2/<r>^4 in closed form; the subtraction cancels below round-off for l = 3.
    const double sg = std::sin(q.gap[i]);
    out.V.value.push_back(2.0 * l * (l + 1.0) * sg * sg / (c * c));
    out.F0.value.push_back(f0);
    out.G.value.push_back(gg);
    out.Ve.value.push_back(std::abs(ex.Ve[i]));
    out.Fe.value.push_back(fe);
    out.Ge.value.push_back(ge);
  }
  return out;
}

struct PowerFit {
  double slope = 0.0;
  double log_coef = 0.0;
};

/// Least-squares fit of log y = log C + p log x.
inline PowerFit fit_power(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::InvalidArgument,
          "power fit needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, ErrorCode::InvalidArgument, "power fit needs positive data");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  PowerFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.log_coef = (sy - f.slope * sx) / n;
  return f;
}

/// Slope against <r> instead of r.
inline PowerFit fit_power_japanese(const Envelope& e) {
  std::vector<double> jr(e.r.size());
  for (std::size_t i = 0; i < jr.size(); ++i) jr[i] = japanese(e.r[i]);
  return fit_power(jr, e.value);
}

/// max over the envelope of value * r^{-exponent}: the fitted bound constant.
inline double bound_constant(const Envelope& e, double exponent) {
  double c = 0.0;
  for (std::size_t i = 0; i < e.r.size(); ++i) c = std::max(c, e.value[i] * std::pow(e.r[i], -exponent));
  return c;
}

// ---------------------------------------------------------------------------
// The plane P(R) and its projection constants.

struct ProjectionBasisInfo {
  int d = 5;
  int k_tilde = 1;
  int k = 1;
  std::vector<double> c;       // c_1..c_k
  std::vector<double> d_coef;  // d_1..d_{k_tilde}
  std::vector<boost::rational<long long>> c_exact;
  std::vector<boost::rational<long long>> d_exact;
};

inline ProjectionBasisInfo projection_constants(int d) {
  require(d >= 5 && d % 2 == 1, ErrorCode::InvalidArgument, "dimension must be odd and >= 5");
  using Rat = boost::rational<long long>;
  ProjectionBasisInfo info;
  info.d = d;
  info.k_tilde = (d + 2) / 4;
  info.k = d / 4;
  for (int j = 1; j <= info.k; ++j) {
    Rat v(1);
    for (int l = 1; l <= info.k; ++l) {
      v *= Rat(d - 2 * j - 2 * l);
      if (l != j) v /= Rat(2 * l - 2 * j);
    }
    info.c_exact.push_back(v);
    info.c.push_back(boost::rational_cast<double>(v));
  }
  for (int j = 1; j <= info.k_tilde; ++j) {
    Rat v(1);
    for (int l = 1; l <= info.k_tilde; ++l) {
      v *= Rat(d + 2 - 2 * j - 2 * l);
      if (l != j) v /= Rat(2 * l - 2 * j);
    }
    info.d_exact.push_back(v);
    info.d_coef.push_back(boost::rational_cast<double>(v));
  }
  return info;
}

// ---------------------------------------------------------------------------
// Integrals on [R, inf) of grid samples, with a power-law tail past r_max.

struct TailIntegral {
  double value = 0.0;
  bool tail_flag = false;  // tail not representable by a decaying power law
};

namespace detail {
// Radial tails here are sums of powers two apart, so the fit is
// sum_m c_m r^{p-2m}, m < kTailTerms, with p chosen by a 1-D search.
inline constexpr int kTailTerms = 4;

struct TailFit {
  double p = 0.0;
  Eigen::VectorXd c;
  double residual = 0.0;
  double slope = 0.0;  // d(residual^2)/dp at fixed weights
};

// Least squares of ys against t^{p-2m}, rows weighted by t^{-pw}, t = r/r_max.
inline TailFit fit_tail(const std::vector<double>& xs, const std::vector<double>& ys, double r_max,
                        double p, double pw) {
  Eigen::MatrixXd M(xs.size(), kTailTerms), dM(xs.size(), kTailTerms);
  Eigen::VectorXd y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double t = xs[i] / r_max;
    const double rel = std::pow(t, p - pw);
    for (int m = 0; m < kTailTerms; ++m) {
      M(i, m) = rel * std::pow(t, -2.0 * m);
      dM(i, m) = std::log(t) * M(i, m);
    }
    y(i) = ys[i] / std::pow(t, pw);
  }
  TailFit f;
  f.p = p;
  f.c = M.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd res = M * f.c - y;
  f.residual = res.norm();
  f.slope = 2.0 * res.dot(dM * f.c);
  return f;
}

inline TailFit fit_tail(const std::vector<double>& xs, const std::vector<double>& ys, double r_max,
                        double p) {
  return fit_tail(xs, ys, r_max, p, p);
}

inline std::optional<double> power_tail(const RadialGrid& g, const std::vector<double>& h,
                                        std::size_t lo, double R, double scale) {
  const double r_max = g.r_max();
  std::vector<double> xs, ys;
  double hmax = scale;
  for (std::size_t i = lo; i < g.size(); ++i) {
    if (g.r[i] >= R) hmax = std::max(hmax, std::abs(h[i]));
  }
  for (std::size_t i = lo; i < g.size(); ++i) {
    if (g.r[i] >= r_max / 4.0) {
      xs.push_back(g.r[i]);
      ys.push_back(h[i]);
    }
  }
  if (xs.size() < 8) return std::nullopt;
  // Compactly supported (or numerically vanished) tails contribute nothing.
  double tail_max = 0.0;
  for (double y : ys) tail_max = std::max(tail_max, std::abs(y));
  if (tail_max <= 1e-14 * hmax || tail_max == 0.0) return 0.0;
  const double sign = ys.back() > 0 ? 1.0 : -1.0;
  for (double y : ys) {
    if (y * sign <= 0.0) return std::nullopt;
  }
  // Local slope at the edge seeds the search.
  const std::size_t m = xs.size() - 1, k = m - std::min<std::size_t>(m, 16);
  const double p0 = std::log(ys[m] / ys[k]) / std::log(xs[m] / xs[k]);
  // The residual has shallow local minima beside the true exponent and an exact
  // fit sits in a very narrow valley: scan, try the half-integers, then refine.
  const double step = 0.02;
  double p_scan = p0, r_scan = std::numeric_limits<double>::infinity();
  auto consider = [&](double p) {
    const double res = fit_tail(xs, ys, r_max, p).residual;
    if (res < r_scan) {
      r_scan = res;
      p_scan = p;
    }
  };
  for (int k = -100; k <= 100; ++k) consider(p0 + k * step);
  for (double p = std::ceil(2.0 * (p0 - 2.0)) / 2.0; p <= p0 + 2.0; p += 0.5) consider(p);
  const auto best = boost::math::tools::brent_find_minima(
      [&](double p) { return fit_tail(xs, ys, r_max, p).residual; }, p_scan - step, p_scan + step, 40);
  // The minimiser only pins p to ~sqrt(eps); finish on the gradient with secant steps.
  const double pw = best.first;
  TailFit f = fit_tail(xs, ys, r_max, pw, pw);
  TailFit prev = fit_tail(xs, ys, r_max, pw + 1e-6, pw);
  for (int it = 0; it < 20 && f.slope != prev.slope; ++it) {
    const double step = -f.slope * (f.p - prev.p) / (f.slope - prev.slope);
    if (!std::isfinite(step) || std::abs(step) > 1e-3) break;
    const TailFit next = fit_tail(xs, ys, r_max, f.p + step, pw);
    if (next.residual > f.residual * (1.0 + 1e-12) + 1e-300) break;
    prev = f;
    f = next;
    if (std::abs(step) < 1e-15 * std::abs(f.p)) break;
  }
  if (f.p >= -1.0 - 1e-6) return std::nullopt;
  double tail = 0.0;
  for (int j = 0; j < kTailTerms; ++j) tail += f.c(j) * r_max / (-(f.p - 2.0 * j) - 1.0);
  return tail;
}
}  // namespace detail

/// int_R^inf h(r) dr for samples h on nodes >= lo. Tails below 1e-14 of
/// max(scale, max |h| on r >= R) count as zero.
inline TailIntegral integrate_from(const RadialGrid& g, const std::vector<double>& h, double R,
                                   std::size_t lo, double scale = 0.0) {
  std::vector<double> w(g.size(), 0.0);
  for (std::size_t i = lo; i < g.size(); ++i) w[i] = h[i] * g.jacobian[i];
  TailIntegral out;
  out.value = integrate_x_fine(g, w, std::asinh(R), lo);
  const auto tail = detail::power_tail(g, h, lo, R, scale);
  if (tail) {
    out.value += *tail;
  } else {
    out.tail_flag = true;
  }
  return out;
}

struct ProjectionReport {
  double R = 0.0;
  double t = 0.0;
  int d = 5;
  std::vector<double> lambda;  // integral formulas
  std::vector<double> mu;
  std::vector<double> lambda_gram;  // Gram-matrix oracle
  std::vector<double> mu_gram;
  double max_coefficient_gap = 0.0;  // formula/oracle disagreement in the energy norm
  double norm_pi = 0.0;
  double norm_pi_perp = 0.0;
  double norm_total = 0.0;
  double gram_condition = 0.0;
  bool conditioning_warning = false;
  bool tail_flag = false;
};

inline constexpr double kConditionWarning = 1e10;

namespace detail {
inline double rel_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 0.0, gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    gap = std::max(gap, std::abs(a[i] - b[i]));
  }
  return scale > 0.0 ? gap / scale : gap;
}

inline double scaled_condition(Eigen::MatrixXd M) {
  if (M.rows() == 0) return 1.0;
  Eigen::VectorXd s = M.diagonal().cwiseAbs().cwiseSqrt().cwiseInverse();
  M = s.asDiagonal() * M * s.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& sv = svd.singularValues();
  return sv(0) / sv(sv.size() - 1);
}
}  // namespace detail

/// Orthogonal projection of exterior data (UE or FlatFree form, r > 0) onto
/// P(R) in H(r >= R; r^{d-1} dr).
inline ProjectionReport project_exterior(const FieldState& s, double R) {
  require(s.form == Form::UE || s.form == Form::FlatFree, ErrorCode::FormMismatch,
          "projection needs an exterior (ue or flat) state");
  const RadialGrid& g = s.mesh();
  const int d = s.params.dim;
  const std::size_t lo = std::max(s.lo, g.throat() + 1);
  require(R >= g.r[lo] && R < g.r_max(), ErrorCode::DomainError,
          "R must lie inside the exterior grid");
  const ProjectionBasisInfo info = projection_constants(d);
  const int kt = info.k_tilde, k = info.k;
  ProjectionReport rep;
  rep.R = R;
  rep.t = s.time;
  rep.d = d;

  auto moment = [&](const std::vector<double>& v, int power) {
    std::vector<double> h(g.size(), 0.0);
    for (std::size_t i = lo; i < g.size(); ++i) h[i] = v[i] * std::pow(g.r[i], power);
    const TailIntegral ti = integrate_from(g, h, R, lo);
    rep.tail_flag = rep.tail_flag || ti.tail_flag;
    return ti.value;
  };

  // Integral formulas.
  const double fR = interpolate(g, s.f, std::asinh(R), 6, lo);
  std::vector<double> If(kt + 1, 0.0), Jg(k + 1, 0.0);
  for (int i = 1; i < kt; ++i) If[i] = moment(s.f, 2 * i - 1);
  for (int i = 1; i <= k; ++i) Jg[i] = moment(s.g, 2 * i - 1);
  for (int j = 1; j <= kt; ++j) {
    double acc = fR * std::pow(R, d - 2 * j);
    for (int i = 1; i <= kt - 1; ++i) {
      acc += 2.0 * i * info.d_coef[i] * std::pow(R, d - 2 * i - 2 * j) / (d - 2 * i - 2 * j) * If[i];
    }
    rep.lambda.push_back(info.d_coef[j - 1] / (d - 2 * j) * acc);
  }
  for (int j = 1; j <= k; ++j) {
    double acc = 0.0;
    for (int i = 1; i <= k; ++i) {
      acc += std::pow(R, d - 2 * i - 2 * j) * info.c[i - 1] * info.c[j - 1] / (d - 2 * i - 2 * j) * Jg[i];
    }
    rep.mu.push_back(acc);
  }

  // Gram oracle: brute-force inner products with the basis.
  const auto fr = d_dr_fine(g, s.f, lo);
  Eigen::MatrixXd A(kt, kt), B(k, k);
  Eigen::VectorXd bf(kt), bg(k);
  for (int i = 1; i <= kt; ++i) {
    for (int j = 1; j <= kt; ++j) {
      A(i - 1, j - 1) = (2.0 * i - d) * (2.0 * j - d) * std::pow(R, 2 * i + 2 * j - d - 2) /
                        (d + 2.0 - 2 * i - 2 * j);
    }
    bf(i - 1) = (2.0 * i - d) * moment(fr, 2 * i - 2);
  }
  for (int i = 1; i <= k; ++i) {
    for (int j = 1; j <= k; ++j) B(i - 1, j - 1) = std::pow(R, 2 * i + 2 * j - d) / (d - 2.0 * i - 2 * j);
    bg(i - 1) = moment(s.g, 2 * i - 1);
  }
  const Eigen::VectorXd lam = A.colPivHouseholderQr().solve(bf);
  const Eigen::VectorXd mu = B.colPivHouseholderQr().solve(bg);
  rep.lambda_gram.assign(lam.data(), lam.data() + kt);
  rep.mu_gram.assign(mu.data(), mu.data() + k);
  rep.gram_condition = std::max(detail::scaled_condition(A), detail::scaled_condition(B));
  rep.conditioning_warning = rep.gram_condition > kConditionWarning;

  // Orthogonal split.
  Eigen::VectorXd l1 = Eigen::Map<const Eigen::VectorXd>(rep.lambda.data(), kt);
  Eigen::VectorXd m1 = Eigen::Map<const Eigen::VectorXd>(rep.mu.data(), k);
  const double pi2 = l1.dot(A * l1) + m1.dot(B * m1);
  std::vector<double> rf(g.size(), 0.0), tot(g.size(), 0.0);
  for (std::size_t i = lo; i < g.size(); ++i) {
    const double r = g.r[i];
    double pf = 0.0, pg = 0.0;
    for (int j = 1; j <= kt; ++j) pf += rep.lambda[j - 1] * (2.0 * j - d) * std::pow(r, 2 * j - d - 1);
    for (int j = 1; j <= k; ++j) pg += rep.mu[j - 1] * std::pow(r, 2 * j - d);
    const double w = std::pow(r, d - 1);
    const double ef = fr[i] - pf, eg = s.g[i] - pg;
    rf[i] = (ef * ef + eg * eg) * w;
    tot[i] = (fr[i] * fr[i] + s.g[i] * s.g[i]) * w;
  }
  double tot_max = 0.0;
  for (std::size_t i = lo; i < g.size(); ++i) {
    if (g.r[i] >= R) tot_max = std::max(tot_max, tot[i]);
  }
  const TailIntegral perp = integrate_from(g, rf, R, lo, tot_max);
  const TailIntegral total = integrate_from(g, tot, R, lo);
  rep.norm_pi = std::sqrt(std::max(0.0, pi2));
  rep.norm_pi_perp = std::sqrt(std::max(0.0, perp.value));
  rep.norm_total = std::sqrt(std::max(0.0, total.value));
  rep.tail_flag = rep.tail_flag || total.tail_flag;
  // Disagreement measured in the energy norm: |delta c_j| ||basis_j|| / ||data||.
  const double scale = std::max(rep.norm_total, std::numeric_limits<double>::min());
  double gap = 0.0;
  for (int j = 0; j < kt; ++j) {
    gap = std::max(gap, std::abs(rep.lambda[j] - rep.lambda_gram[j]) * std::sqrt(A(j, j)) / scale);
  }
  for (int j = 0; j < k; ++j) {
    gap = std::max(gap, std::abs(rep.mu[j] - rep.mu_gram[j]) * std::sqrt(B(j, j)) / scale);
  }
  rep.max_coefficient_gap = rep.norm_total > 0.0 ? gap : 0.0;
  return rep;
}

/// Data reconstructed from the projection coefficients (the pi_R part).
inline FieldState projected_part(const FieldState& s, const ProjectionReport& rep) {
  FieldState p = s;
  const RadialGrid& g = s.mesh();
  const int d = rep.d;
  for (std::size_t i = 0; i < g.size(); ++i) {
    p.f[i] = p.g[i] = 0.0;
    if (i < s.lo || g.r[i] <= 0.0) continue;
    const double r = g.r[i];
    for (std::size_t j = 0; j < rep.lambda.size(); ++j) p.f[i] += rep.lambda[j] * std::pow(r, 2.0 * (j + 1) - d);
    for (std::size_t j = 0; j < rep.mu.size(); ++j) p.g[i] += rep.mu[j] * std::pow(r, 2.0 * (j + 1) - d);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Exterior energies.

namespace detail {
// Integral of (a^2 + b^2) w over x in [xa, xb]. Cut cells interpolate a, b and w
// separately, so a steep front cannot drive the result negative.
inline double squares_integral(const RadialGrid& g, const std::vector<double>& a,
                               const std::vector<double>& b, const std::vector<double>& w,
                               double xa, double xb, std::size_t lo) {
  xa = std::max(xa, g.x[lo]);
  xb = std::min(xb, g.x.back());
  if (!(xb > xa)) return 0.0;
  auto cell = [&](double u, double v) {
    if (v <= u) return 0.0;
    const double mid = 0.5 * (u + v), half = 0.5 * (v - u), off = half / std::sqrt(3.0);
    double sum = 0.0;
    for (double x : {mid - off, mid + off}) {
      const double fa = interpolate(g, a, x, 4, lo), fb = interpolate(g, b, x, 4, lo);
      sum += (fa * fa + fb * fb) * std::max(0.0, interpolate(g, w, x, 4, lo));
    }
    return half * sum;
  };
  std::size_t ia = g.lower_index(xa);
  if (g.x[ia] < xa) ++ia;
  std::size_t ib = g.lower_index(xb);
  if (ib >= g.size() || g.x[ib] > xb) --ib;
  if (ia > ib) return cell(xa, xb);
  std::vector<double> dens(g.size(), 0.0);
  for (std::size_t i = ia; i <= ib; ++i) dens[i] = (a[i] * a[i] + b[i] * b[i]) * w[i];
  double total = cell(xa, g.x[ia]) + cell(g.x[ib], xb);
  if (ib > ia) total += integrate_x(g, dens, g.x[ia], g.x[ib], lo);
  return total;
}
}  // namespace detail

struct ExteriorEnergy {
  double value = 0.0;
  bool empty_window = false;
};

/// ||state||^2 over {|r| >= R + t_abs} in the form's natural measure. Whole-line
/// forms count both ends; exterior forms only r > 0.
inline ExteriorEnergy exterior_energy(const FieldState& s, double R, double t_abs) {
  const RadialGrid& g = s.mesh();
  const double rho = R + t_abs;
  ExteriorEnergy out;
  if (rho >= g.r_max()) {
    out.empty_window = true;
    return out;
  }
  const int d = s.params.dim;
  Measure m = Measure::DimD;
  if (s.form == Form::Psi || s.form == Form::Linear) m = Measure::Dim3;
  if (s.form == Form::UE || s.form == Form::FlatFree) m = Measure::Flat;
  const bool half_line = m == Measure::Flat;
  const std::size_t lo = half_line ? std::max(s.lo, g.throat()) : s.lo;
  const auto fr = d_dr(g, s.f, lo);
  std::vector<double> w(g.size(), 0.0);
  for (std::size_t i = lo; i < g.size(); ++i) w[i] = measure_weight(g, i, m, d) * g.jacobian[i];
  const double xa = std::asinh(std::max(rho, 0.0));
  out.value = detail::squares_integral(g, fr, s.g, w, xa, g.x.back(), lo);
  if (!half_line) out.value += detail::squares_integral(g, fr, s.g, w, g.x.front(), -xa, lo);
  return out;
}

/// ||state||^2 over {|r| <= A} in the form's natural measure (whole-line forms).
inline double local_energy(const FieldState& s, double A) {
  const RadialGrid& g = s.mesh();
  const int d = s.params.dim;
  const Measure m = (s.form == Form::Psi || s.form == Form::Linear) ? Measure::Dim3 : Measure::DimD;
  const auto fr = d_dr(g, s.f, s.lo);
  std::vector<double> w(g.size(), 0.0);
  for (std::size_t i = s.lo; i < g.size(); ++i) w[i] = measure_weight(g, i, m, d) * g.jacobian[i];
  const double xa = std::asinh(A);
  return detail::squares_integral(g, fr, s.g, w, -xa, xa, s.lo);
}

// ---------------------------------------------------------------------------
// Exterior-energy certification for free flat waves.

struct CertificationRecord {
  int d = 5;
  double R = 0.0;
  double T = 0.0;
  double lhs = 0.0;           // max(inf_{t>=0} e_+, inf_{t<=0} e_-)
  double forward_inf = 0.0;
  double backward_inf = 0.0;
  double rhs = 0.0;           // (1/2) ||pi_R^perp (f, g)||^2
  double data_energy = 0.0;   // ||(f, g)||^2 over r >= R
  double tol = 0.05;
  double margin = 0.0;        // lhs - rhs (1 - tol)
  bool pass = false;
  double r_max = 0.0;
  std::size_t n_points = 0;
  double dt = 0.0;
  ProjectionReport projection;
};

struct CertifyOptions {
  double tol = 0.05;
  double cadence = 0.25;
  double cfl = 0.5;
  std::optional<double> inner_radius;  // default R/2
};

inline CertificationRecord certify_exterior_estimate(const FieldState& data, double R, double T,
                                                     const CertifyOptions& opt = {}) {
  require_form(data, Form::FlatFree);
  const RadialGrid& g = data.mesh();
  require(R > 0.0 && T > 0.0, ErrorCode::InvalidArgument, "R and T must be positive");
  require(R + T < g.r_max(), ErrorCode::DomainTooSmall,
          "light cone r = R + T leaves the grid (r_max = " + std::to_string(g.r_max()) + ")");
  CertificationRecord rec;
  rec.d = data.params.dim;
  rec.R = R;
  rec.T = T;
  rec.tol = opt.tol;
  rec.r_max = g.r_max();
  rec.n_points = g.size();
  rec.projection = project_exterior(data, R);
  rec.rhs = 0.5 * rec.projection.norm_pi_perp * rec.projection.norm_pi_perp;
  rec.data_energy = rec.projection.norm_total * rec.projection.norm_total;

  FlowSpec flow;
  flow.kind = FlowKind::FreeFlatD;
  flow.params = data.params;
  flow.flat_dim = data.params.dim;
  flow.inner_radius = opt.inner_radius.value_or(0.5 * R);
  const FlowOperator op(flow, data.grid);
  FieldState start = op.to_state(data.f, data.g, 0.0);

  auto run = [&](double sign) {
    FieldState s0 = start;
    for (double& v : s0.g) v *= sign;
    double inf = std::numeric_limits<double>::infinity();
    EvolveOptions eo;
    eo.cfl = opt.cfl;
    eo.cadence = opt.cadence;
    eo.record_energy = false;
    eo.monitor = [&](const FieldState& s) {
      inf = std::min(inf, exterior_energy(s, R, std::abs(s.time)).value);
    };
    const EvolutionLog log = evolve(op, s0, T, eo);
    rec.dt = log.dt;
    return inf;
  };
  rec.forward_inf = run(1.0);
  rec.backward_inf = run(-1.0);
  rec.lhs = std::max(rec.forward_inf, rec.backward_inf);
  rec.margin = rec.lhs - rec.rhs * (1.0 - opt.tol);
  rec.pass = rec.margin >= 0.0;
  return rec;
}

// ---------------------------------------------------------------------------
// Radiation extraction.

struct ResolutionSeries {
  double T_m = 0.0;
  std::vector<double> t;
  std::vector<double> delta;

  double sup() const {
    double s = 0.0;
    for (double v : delta) s = std::max(s, v);
    return s;
  }
};

struct ResolutionReport {
  std::vector<double> extraction_times;
  std::vector<ResolutionSeries> delta_series;
  std::vector<double> local_t;
  std::vector<double> local_energy;  // ||psi(t) - Q||_{H(|r| <= A), 2}
  double A = 5.0;
  bool free_wave = false;
};

struct ResolutionOptions {
  double A = 5.0;
  bool free_wave = false;  // extract with the free wave on M^d instead of LinearizedQ
  double cfl = 0.5;
};

/// For each T_m, evolves (psi(T_m) - Q, psi_t(T_m)) linearly and measures the
/// distance to the nonlinear snapshots at later times. Snapshots must be
/// uniformly spaced in time.
inline ResolutionReport resolution_diagnostic(const EvolutionLog& psi_log, const HarmonicMap& q,
                                              const std::vector<double>& extraction_times,
                                              const ResolutionOptions& opt = {}) {
  const auto& snaps = psi_log.snapshots;
  require(snaps.size() >= 2, ErrorCode::InvalidArgument, "resolution diagnostic needs snapshots");
  for (const auto& s : snaps) require_form(s, Form::Psi);
  const double spacing = snaps[1].time - snaps[0].time;
  require(spacing > 0.0, ErrorCode::InvalidArgument, "snapshots must increase in time");
  for (std::size_t i = 1; i < snaps.size(); ++i) {
    require(std::abs(snaps[i].time - snaps[i - 1].time - spacing) < 1e-9 * (1.0 + spacing),
            ErrorCode::InvalidArgument, "snapshots must be uniformly spaced");
  }
  const double t_max = snaps.back().time;
  const RadialGrid& g = *q.grid;
  const int l = q.params.ell;

  ResolutionReport rep;
  rep.extraction_times = extraction_times;
  rep.A = opt.A;
  rep.free_wave = opt.free_wave;

  auto deviation = [&](const FieldState& psi) {
    FieldState phi = psi;
    phi.form = Form::Linear;
    for (std::size_t i = 0; i < g.size(); ++i) phi.f[i] = psi.f[i] - q.Q[i];
    return phi;
  };

  for (const auto& s : snaps) {
    rep.local_t.push_back(s.time);
    rep.local_energy.push_back(std::sqrt(local_energy(deviation(s), opt.A)));
  }

  FlowSpec flow;
  flow.params = q.params;
  flow.q_ref = q;
  flow.kind = opt.free_wave ? FlowKind::FreeWormholeD : FlowKind::LinearizedQ;
  const FlowOperator op(flow, q.grid);

  for (double Tm : extraction_times) {
    const FieldState* at = psi_log.snapshot_at(Tm);
    require(at != nullptr, ErrorCode::InvalidArgument,
            "no snapshot at extraction time " + std::to_string(Tm));
    ResolutionSeries series;
    series.T_m = Tm;
    FieldState start = deviation(*at);
    if (opt.free_wave) {
      start.form = Form::U;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double a = std::pow(g.jacobian[i], l);
        start.f[i] /= a;
        start.g[i] /= a;
      }
    }
    auto compare = [&](const FieldState& lin) {
      const FieldState* nl = psi_log.snapshot_at(lin.time, 1e-6 * spacing);
      if (nl == nullptr) return;
      FieldState diff = deviation(*nl);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double a = opt.free_wave ? std::pow(g.jacobian[i], l) : 1.0;
        diff.f[i] -= a * lin.f[i];
        diff.g[i] -= a * lin.g[i];
      }
      series.t.push_back(lin.time);
      series.delta.push_back(norm_H(diff, 2).value);
    };
    if (t_max - Tm < 0.5 * spacing) {
      series.t.push_back(Tm);
      series.delta.push_back(0.0);
    } else {
      EvolveOptions eo;
      eo.cfl = opt.cfl;
      eo.cadence = spacing;
      eo.record_energy = false;
      eo.monitor = compare;
      const double span = std::round((t_max - Tm) / spacing) * spacing;
      evolve(op, start, span, eo);
    }
    rep.delta_series.push_back(std::move(series));
  }
  return rep;
}

}  // namespace wormhole
