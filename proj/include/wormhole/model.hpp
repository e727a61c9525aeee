#pragma once

// Field states, energies, weighted norms and the psi <-> u conjugation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "wormhole/error.hpp"
#include "wormhole/grid.hpp"

namespace wormhole {

enum class Form { Psi, U, UE, Linear, FlatFree };

inline const char* to_string(Form f) {
  switch (f) {
    case Form::Psi: return "psi";
    case Form::U: return "u";
    case Form::UE: return "ue";
    case Form::Linear: return "linear";
    case Form::FlatFree: return "flat";
  }
  return "?";
}

inline Form form_from_string(const std::string& s) {
  for (Form f : {Form::Psi, Form::U, Form::UE, Form::Linear, Form::FlatFree}) {
    if (s == to_string(f)) return f;
  }
  fail(ErrorCode::InvalidArgument, "unknown form '" + s + "'");
}

inline constexpr double kBoundaryTol = 1e-8;

/// Sampled pair (f, f_t). Nodes below `lo` are outside the active domain
/// (used by half-line forms) and are kept at zero.
struct FieldState {
  GridPtr grid;
  std::vector<double> f;
  std::vector<double> g;
  double time = 0.0;
  Form form = Form::Psi;
  ModelParams params;
  std::size_t lo = 0;

  std::size_t size() const { return f.size(); }
  const RadialGrid& mesh() const { return *grid; }
};

inline FieldState make_state(GridPtr grid, Form form, const ModelParams& params,
                             std::size_t lo = 0) {
  require(grid != nullptr, ErrorCode::InvalidArgument, "state needs a grid");
  const std::size_t n = grid->size();
  return FieldState{grid, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0.0, form,
                    params, lo};
}

/// Checks finiteness and the boundary conditions of the form's class.
inline void validate_state(const FieldState& s, double boundary_tol = kBoundaryTol) {
  require(s.grid != nullptr, ErrorCode::InvalidArgument, "state has no grid");
  require(s.f.size() == s.grid->size() && s.g.size() == s.grid->size(),
          ErrorCode::GridMismatch, "sample count differs from grid size");
  for (std::size_t i = s.lo; i < s.f.size(); ++i) {
    require(std::isfinite(s.f[i]) && std::isfinite(s.g[i]), ErrorCode::InvalidArgument,
            "non-finite sample at node " + std::to_string(i));
  }
  if (s.form == Form::Psi) {
    // Q itself sits n pi - alpha r^{-l-1} away from its limit at a finite edge.
    const double tail = s.params.far_value() * std::pow(japanese(s.grid->r_max()), -s.params.ell - 1);
    const double tol = boundary_tol + tail;
    require(std::abs(s.f.front()) <= tol && std::abs(s.f.back() - s.params.far_value()) <= tol,
            ErrorCode::InvalidArgument, "psi boundary values do not match the degree class");
  } else if (s.form == Form::U || s.form == Form::Linear) {
    require(std::abs(s.f.front()) <= boundary_tol && std::abs(s.f.back()) <= boundary_tol,
            ErrorCode::InvalidArgument, "u boundary values must vanish");
  }
}

inline void require_form(const FieldState& s, Form expected) {
  require(s.form == expected, ErrorCode::FormMismatch,
          std::string("expected ") + to_string(expected) + " state, got " + to_string(s.form));
}

inline void require_same_grid(const RadialGrid& a, const RadialGrid& b) {
  require(same_grid(a, b), ErrorCode::GridMismatch, "samples live on different grids");
}

// ---------------------------------------------------------------------------
// Measures. Dim3 is <r>^2 dr, DimD is <r>^{d-1} dr, Flat is r^{d-1} dr on r > 0.

enum class Measure { Dim3, DimD, Flat };

inline const char* to_string(Measure m) {
  switch (m) {
    case Measure::Dim3: return "dim3";
    case Measure::DimD: return "dimd";
    case Measure::Flat: return "flat";
  }
  return "?";
}

/// Weight w(r) of the measure, at node i.
inline double measure_weight(const RadialGrid& g, std::size_t i, Measure m, int dim) {
  switch (m) {
    case Measure::Dim3: return g.jacobian[i] * g.jacobian[i];
    case Measure::DimD: return std::pow(g.jacobian[i], dim - 1);
    case Measure::Flat: return g.r[i] > 0.0 ? std::pow(g.r[i], dim - 1) : 0.0;
  }
  return 0.0;
}

struct EnergyReport {
  double total = 0.0;
  double kinetic = 0.0;
  double gradient = 0.0;
  double potential_part = 0.0;
  Measure measure = Measure::Dim3;
};

namespace detail {
// (1/2) * integral over r >= r_min of density(i) * w(r) dr, in x.
template <class Density>
double half_integral(const RadialGrid& g, std::size_t lo, double r_min, Density&& density) {
  std::vector<double> w(g.size(), 0.0);
  for (std::size_t i = lo; i < g.size(); ++i) w[i] = density(i) * g.jacobian[i];
  const double xa = std::isfinite(r_min) ? std::asinh(r_min) : -std::numeric_limits<double>::infinity();
  if (lo == 0 && !std::isfinite(r_min)) return 0.5 * integrate_x(g, w);
  return 0.5 * integrate_x(g, w, xa, g.x.back(), lo);
}
}  // namespace detail

/// Generic quadratic energy 1/2 int (g^2 + f_r^2 + P f^2) w dr over r >= r_min.
inline EnergyReport quadratic_energy(const FieldState& s, Measure m, const std::vector<double>* P,
                                     double r_min = -std::numeric_limits<double>::infinity()) {
  const RadialGrid& g = s.mesh();
  const int dim = s.params.dim;
  const auto fr = d_dr(g, s.f, s.lo);
  std::vector<double> wt(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) wt[i] = measure_weight(g, i, m, dim);
  EnergyReport e;
  e.measure = m;
  e.kinetic = detail::half_integral(g, s.lo, r_min, [&](std::size_t i) { return s.g[i] * s.g[i] * wt[i]; });
  e.gradient = detail::half_integral(g, s.lo, r_min, [&](std::size_t i) { return fr[i] * fr[i] * wt[i]; });
  if (P != nullptr) {
    require(P->size() == g.size(), ErrorCode::GridMismatch, "potential sampled on another grid");
    e.potential_part = detail::half_integral(
        g, s.lo, r_min, [&](std::size_t i) { return (*P)[i] * s.f[i] * s.f[i] * wt[i]; });
  }
  e.total = e.kinetic + e.gradient + e.potential_part;
  return e;
}

/// E_ell = 1/2 int [psi_t^2 + psi_r^2 + l(l+1) sin^2(psi)/<r>^2] <r>^2 dr.
inline EnergyReport energy_psi(const FieldState& s) {
  require_form(s, Form::Psi);
  const RadialGrid& g = s.mesh();
  const double c = s.params.potential_coupling();
  EnergyReport e = quadratic_energy(s, Measure::Dim3, nullptr);
  e.potential_part = detail::half_integral(g, 0, -std::numeric_limits<double>::infinity(),
                                           [&](std::size_t i) {
                                             const double sn = std::sin(s.f[i]);
                                             return c * sn * sn;
                                           });
  e.total = e.kinetic + e.gradient + e.potential_part;
  return e;
}

/// E_V = 1/2 int (u_t^2 + u_r^2 + V u^2) <r>^{d-1} dr.
inline EnergyReport energy_u(const FieldState& s, const std::vector<double>& V) {
  require_form(s, Form::U);
  require(V.size() == s.size(), ErrorCode::GridMismatch, "potential sampled on another grid");
  return quadratic_energy(s, Measure::DimD, &V);
}

struct NormResult {
  double value = 0.0;
  bool empty_window = false;  // r_min at or beyond the last node
  bool not_decaying = false;  // |f(+-X)| > 1e-4 max|f|
};

inline NormResult weighted_norm(const FieldState& s, Measure m, int dim, double r_min) {
  const RadialGrid& g = s.mesh();
  NormResult out;
  double fmax = 0.0;
  for (std::size_t i = s.lo; i < s.size(); ++i) fmax = std::max(fmax, std::abs(s.f[i]));
  const double edge = std::max(std::abs(s.f[s.lo]), std::abs(s.f.back()));
  out.not_decaying = fmax > 0.0 && edge > 1e-4 * fmax;
  if (std::isfinite(r_min) && r_min >= g.r_max()) {
    out.empty_window = true;
    return out;
  }
  const auto fr = d_dr(g, s.f, s.lo);
  const double half = detail::half_integral(g, s.lo, r_min, [&](std::size_t i) {
    return (fr[i] * fr[i] + s.g[i] * s.g[i]) * measure_weight(g, i, m, dim);
  });
  out.value = std::sqrt(std::max(0.0, 2.0 * half));
  return out;
}

/// (int_{r >= r_min} [f_r^2 + g^2] <r>^p dr)^{1/2}, p in {2, d-1}.
inline NormResult norm_H(const FieldState& s, int weight_power,
                         double r_min = -std::numeric_limits<double>::infinity()) {
  const int d = s.params.dim;
  require(weight_power == 2 || weight_power == d - 1, ErrorCode::InvalidArgument,
          "weight power must be 2 or d-1");
  return weighted_norm(s, weight_power == 2 ? Measure::Dim3 : Measure::DimD, d, r_min);
}

// ---------------------------------------------------------------------------
// Harmonic map data. Construction lives in harmonic.hpp.

struct StaticProfile;

struct HarmonicMap {
  ModelParams params;
  GridPtr grid;
  std::vector<double> Q;
  std::vector<double> Qx;
  // Distance to the nearer far-field value: Q on x < 0, n pi - Q on x >= 0.
  // Kept separately so trig factors stay accurate where Q is close to n pi.
  std::vector<double> gap;
  std::vector<double> sin2Q;
  std::vector<double> cos2Q;
  double b_star = 0.0;
  double alpha = 0.0;
  double alpha_drift = 0.0;
  std::shared_ptr<const StaticProfile> profile;
};

inline void require_compatible(const FieldState& s, const HarmonicMap& q) {
  require(s.params == q.params, ErrorCode::InvalidArgument, "state and harmonic map params differ");
  require(q.grid != nullptr && same_grid(s.mesh(), *q.grid), ErrorCode::GridMismatch,
          "state and harmonic map grids differ");
}

/// psi = Q + <r>^l u  ->  u = (psi - Q) / <r>^l.
inline FieldState psi_to_u(const FieldState& psi, const HarmonicMap& q) {
  require_form(psi, Form::Psi);
  require_compatible(psi, q);
  FieldState u = psi;
  u.form = Form::U;
  const RadialGrid& g = psi.mesh();
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double a = std::pow(g.jacobian[i], psi.params.ell);
    u.f[i] = (psi.f[i] - q.Q[i]) / a;
    u.g[i] = psi.g[i] / a;
  }
  return u;
}

inline FieldState u_to_psi(const FieldState& u, const HarmonicMap& q) {
  require_form(u, Form::U);
  require_compatible(u, q);
  FieldState psi = u;
  psi.form = Form::Psi;
  const RadialGrid& g = u.mesh();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::pow(g.jacobian[i], u.params.ell);
    psi.f[i] = q.Q[i] + a * u.f[i];
    psi.g[i] = a * u.g[i];
  }
  return psi;
}

// ---------------------------------------------------------------------------
// Strauss and Hardy ratios for a radial profile f on the whole line.
// Each ratio is LHS / RHS and is bounded by the sharp constant alongside it.

struct StraussHardyReport {
  double strauss_2 = 0.0;  // sup |f| <r>^{1/2} / ||f_r||_{<r>^2}
  double strauss_d = 0.0;  // sup |f| <r>^{(d-2)/2} / ||f_r||_{<r>^{d-1}}
  double hardy_0 = 0.0;    // int f^2 / int f_r^2 <r>^2
  double hardy_d = 0.0;    // int f^2 <r>^{d-3} / int f_r^2 <r>^{d-1}
  double bound_strauss_2 = 0.0;
  double bound_strauss_d = 0.0;
  double bound_hardy_0 = 0.0;
  double bound_hardy_d = 0.0;
};

/// int_0^inf (1 + s^2)^{(1-d)/2} ds
inline double strauss_integral(int d) {
  return std::sqrt(M_PI) * std::tgamma((d - 2) / 2.0) / (2.0 * std::tgamma((d - 1) / 2.0));
}

inline StraussHardyReport strauss_hardy_report(const RadialGrid& g, const std::vector<double>& f,
                                               const ModelParams& params) {
  require(f.size() == g.size(), ErrorCode::GridMismatch, "profile sampled on another grid");
  const int d = params.dim;
  StraussHardyReport rep;
  rep.bound_strauss_2 = std::sqrt(M_PI / 2.0);
  rep.bound_strauss_d = std::sqrt(strauss_integral(d));
  rep.bound_hardy_0 = 4.0;
  rep.bound_hardy_d = 1.0 / (d - 3.0);

  const auto fx = d_dx(g, f);
  double sup2 = 0.0, supd = 0.0;
  std::vector<double> grad2(g.size()), gradd(g.size()), mass0(g.size()), massd(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double c = g.jacobian[i];
    const double fr = fx[i] / c;
    sup2 = std::max(sup2, std::abs(f[i]) * std::sqrt(c));
    supd = std::max(supd, std::abs(f[i]) * std::pow(c, (d - 2) / 2.0));
    grad2[i] = fr * fr * c * c * c;
    gradd[i] = fr * fr * std::pow(c, d);
    mass0[i] = f[i] * f[i] * c;
    massd[i] = f[i] * f[i] * std::pow(c, d - 2);
  }
  const double G2 = integrate_x(g, grad2), Gd = integrate_x(g, gradd);
  if (G2 > 0.0) {
    rep.strauss_2 = sup2 / std::sqrt(G2);
    rep.hardy_0 = integrate_x(g, mass0) / G2;
  }
  if (Gd > 0.0) {
    rep.strauss_d = supd / std::sqrt(Gd);
    rep.hardy_d = integrate_x(g, massd) / Gd;
  }
  return rep;
}

}  // namespace wormhole
