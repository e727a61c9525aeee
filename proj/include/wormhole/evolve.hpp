#pragma once

// Method-of-lines evolution: fourth-order stencils in x, classical RK4 in t.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wormhole/error.hpp"
#include "wormhole/grid.hpp"
#include "wormhole/harmonic.hpp"
#include "wormhole/model.hpp"

namespace wormhole {

enum class FlowKind { PsiNonlinear, UNonlinear, LinearizedQ, FreeWormholeD, FreeFlatD };

inline const char* to_string(FlowKind k) {
  switch (k) {
    case FlowKind::PsiNonlinear: return "psi";
    case FlowKind::UNonlinear: return "u";
    case FlowKind::LinearizedQ: return "linear";
    case FlowKind::FreeWormholeD: return "free-wormhole";
    case FlowKind::FreeFlatD: return "free-flat";
  }
  return "?";
}

inline FlowKind flow_from_string(const std::string& s) {
  for (FlowKind k : {FlowKind::PsiNonlinear, FlowKind::UNonlinear, FlowKind::LinearizedQ,
                     FlowKind::FreeWormholeD, FlowKind::FreeFlatD}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown flow kind '" + s + "'");
}

/// Form of the states a flow evolves.
inline Form state_form(FlowKind k) {
  switch (k) {
    case FlowKind::PsiNonlinear: return Form::Psi;
    case FlowKind::UNonlinear: return Form::U;
    case FlowKind::LinearizedQ: return Form::Linear;
    case FlowKind::FreeWormholeD: return Form::U;
    case FlowKind::FreeFlatD: return Form::FlatFree;
  }
  return Form::U;
}

struct Sponge {
  bool enabled = false;
  double fraction = 0.1;  // outer part of the x-domain that damps
  double strength = 2.0;  // peak damping rate
};

struct FlowSpec {
  FlowKind kind = FlowKind::PsiNonlinear;
  ModelParams params;
  std::optional<HarmonicMap> q_ref;
  int flat_dim = 5;
  // FreeFlatD only: Dirichlet wall at this radius, or the whole line (even
  // data through the regular origin) when empty.
  std::optional<double> inner_radius;
  Sponge sponge;
};

inline void validate_flow(const FlowSpec& flow) {
  const bool needs_q = flow.kind == FlowKind::PsiNonlinear || flow.kind == FlowKind::UNonlinear ||
                       flow.kind == FlowKind::LinearizedQ;
  require(!needs_q || flow.q_ref.has_value(), ErrorCode::InvalidArgument,
          std::string("flow '") + to_string(flow.kind) + "' needs a harmonic map");
  if (flow.q_ref) {
    require(flow.q_ref->params == flow.params, ErrorCode::InvalidArgument,
            "harmonic map params differ from flow params");
  }
  if (flow.kind == FlowKind::FreeFlatD) {
    require(flow.flat_dim >= 3 && flow.flat_dim % 2 == 1, ErrorCode::InvalidArgument,
            "flat dimension must be odd and >= 3");
    require(!flow.inner_radius || *flow.inner_radius > 0.0, ErrorCode::InvalidArgument,
            "inner radius must be positive");
  }
  require(flow.sponge.fraction > 0.0 && flow.sponge.fraction < 0.5 && flow.sponge.strength >= 0.0,
          ErrorCode::InvalidArgument, "bad sponge settings");
}

/// Precomputed coefficients of one flow on one grid. The acceleration is
///   A f_xx + B f_x - P f + S + nonlinear(f)
/// on the active nodes lo+1 .. hi-1; nodes lo and hi are held fixed.
class FlowOperator {
 public:
  FlowOperator(const FlowSpec& flow, GridPtr grid) : flow_(flow), grid_(std::move(grid)) {
    validate_flow(flow_);
    const RadialGrid& g = *grid_;
    const std::size_t n = g.size();
    require(n >= 9, ErrorCode::InvalidArgument, "grid too small to evolve");
    if (flow_.q_ref) require_same_grid(*flow_.q_ref->grid, g);
    h_ = g.spacing;
    hi_ = n - 1;
    lo_ = 0;
    A_.assign(n, 0.0);
    B_.assign(n, 0.0);
    P_.assign(n, 0.0);
    S_.assign(n, 0.0);
    damp_.assign(n, 0.0);
    const int d = flow_.params.dim;
    const auto kind = flow_.kind;
    if (kind == FlowKind::FreeFlatD) {
      if (flow_.inner_radius) {
        // Dirichlet wall: the flux form below is unstable with one-sided wall stencils.
        lo_ = g.lower_index(std::asinh(*flow_.inner_radius));
        require(lo_ + 8 < n, ErrorCode::InvalidArgument, "inner radius leaves too few nodes");
      } else {
        // Whole line: evolve v = r^k f, k = (D-1)/2, which obeys
        // v_tt = v_rr - (D-1)(D-3)/(4 r^2) v with v = 0 at the origin.
        v_form_ = true;
        const int D = flow_.flat_dim;
        const int k = (D - 1) / 2;
        rk_.assign(n, 0.0);
        pot_.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const double r = g.r[i];
          double p = 1.0;
          for (int m = 0; m < k; ++m) p *= r;
          rk_[i] = p;
          if (r != 0.0) pot_[i] = 0.25 * (D - 1) * (D - 3) / (r * r);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double c = g.jacobian[i];
      const double s2 = 1.0 / (c * c);
      const double th = std::tanh(g.x[i]);
      A_[i] = s2;
      switch (kind) {
        case FlowKind::PsiNonlinear:
        case FlowKind::LinearizedQ:
          B_[i] = s2 * th;
          break;
        case FlowKind::UNonlinear:
        case FlowKind::FreeWormholeD:
          B_[i] = s2 * (d - 2) * th;
          break;
        case FlowKind::FreeFlatD: {
          const int D = flow_.flat_dim;
          if (v_form_) {
            B_[i] = -s2 * th;
          } else if (g.x[i] == 0.0) {
            A_[i] = D;  // v_rr + (D-1) v_r / r -> D v_rr at the origin
            B_[i] = 0.0;
          } else {
            B_[i] = s2 * ((D - 1) / std::tanh(g.x[i]) - th);
          }
          break;
        }
      }
    }
    if (flow_.q_ref) {
      const HarmonicMap& q = *flow_.q_ref;
      const double l = flow_.params.ell;
      s2q_ = q.sin2Q;
      c2q_ = q.cos2Q;
      sinQ_.resize(n);
      cosQ_.resize(n);
      amp_.resize(n);
      kfac_.resize(n);
      const double sign = (flow_.params.degree % 2 == 0) ? 1.0 : -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = g.jacobian[i];
        if (g.x[i] >= 0.0) {
          sinQ_[i] = -sign * std::sin(q.gap[i]);
          cosQ_[i] = sign * std::cos(q.gap[i]);
        } else {
          sinQ_[i] = std::sin(q.gap[i]);
          cosQ_[i] = std::cos(q.gap[i]);
        }
        amp_[i] = std::pow(c, l);
        kfac_[i] = l * (l + 1.0) * std::pow(c, -l - 2.0);
      }
      if (kind == FlowKind::PsiNonlinear) {
        // Discrete static residual of Q, so psi = Q + phi is differenced as a whole.
        std::vector<double> qx(n), qxx(n);
        first_derivative(q.Q, h_, qx, 0, n - 1);
        second_derivative(q.Q, h_, qxx, 0, n - 1);
        for (std::size_t i = 0; i < n; ++i) {
          const double c = g.jacobian[i];
          P_[i] = 0.5 * l * (l + 1.0) / (c * c);  // coupling of the sin 2psi term
          S_[i] = A_[i] * qxx[i] + B_[i] * qx[i] - P_[i] * s2q_[i];
        }
        qx_exact_ = q.Qx;
      } else if (kind == FlowKind::LinearizedQ) {
        P_ = linearized_potential(q);
      } else if (kind == FlowKind::UNonlinear) {
        P_ = potential_V(q);
      }
    }
    if (flow_.sponge.enabled) {
      const double X = g.half_width;
      const double start = (1.0 - flow_.sponge.fraction) * X;
      for (std::size_t i = 0; i < n; ++i) {
        const double ax = std::abs(g.x[i]);
        const bool outer_side = kind != FlowKind::FreeFlatD || g.x[i] > 0.0;
        if (ax > start && outer_side) {
          const double s = (ax - start) / (X - start);
          damp_[i] = flow_.sponge.strength * s * s * s * s;
        }
      }
    }
    if (v_form_) {
      // The 1/r^2 potential makes the operator stiffer near the centre than the
      // grid spacing suggests; cap RK4 steps by its top frequency.
      std::vector<double> v(n), w(n, 0.0), zero(n, 0.0);
      std::mt19937_64 rng(1);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (std::size_t i = 1; i + 1 < n; ++i) v[i] = u(rng);
      double rho = 0.0;
      for (int it = 0; it < 300; ++it) {
        accel(v, zero, w);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          num += w[i] * w[i];
          den += v[i] * v[i];
        }
        rho = std::sqrt(num / den);
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / std::sqrt(num);
      }
      max_step_ = 2.5 / std::sqrt(1.05 * rho);
    }
  }

  const FlowSpec& flow() const { return flow_; }
  const GridPtr& grid() const { return grid_; }
  std::size_t lo() const { return lo_; }
  std::size_t hi() const { return hi_; }
  bool has_sponge() const { return flow_.sponge.enabled; }
  /// Largest stable RK4 step from the operator spectrum (infinite when the grid CFL governs).
  double max_stable_step() const { return max_step_; }
  const std::vector<double>& damping() const { return damp_; }

  /// Acceleration for the stored variable (deviation phi for the psi flow).
  void accel(const std::vector<double>& f, const std::vector<double>& gdot,
             std::vector<double>& out) const {
    const std::size_t lo = lo_, hi = hi_;
    const double s1 = 1.0 / (12.0 * h_);
    const double s2 = 1.0 / (12.0 * h_ * h_);
    auto point = [&](std::size_t i, double d1, double d2) {
      double a = A_[i] * d2 + B_[i] * d1;
      switch (flow_.kind) {
        case FlowKind::PsiNonlinear: {
          const double sp = std::sin(f[i]);
          const double cos2m1 = -2.0 * sp * sp;
          a += S_[i] - P_[i] * (s2q_[i] * cos2m1 + c2q_[i] * std::sin(2.0 * f[i]));
          break;
        }
        case FlowKind::UNonlinear:
          a += -P_[i] * f[i] + nonlinear_u(i, f[i]);
          break;
        case FlowKind::LinearizedQ:
          a -= P_[i] * f[i];
          break;
        case FlowKind::FreeFlatD:
          if (v_form_) a -= pot_[i] * f[i];
          break;
        default:
          break;
      }
      return a - damp_[i] * gdot[i];
    };
    out[lo] = 0.0;
    out[hi] = 0.0;
    {
      const std::size_t i = lo + 1;
      const double d1 = (-3 * f[lo] - 10 * f[lo + 1] + 18 * f[lo + 2] - 6 * f[lo + 3] + f[lo + 4]) * s1;
      const double d2 = (10 * f[lo] - 15 * f[lo + 1] - 4 * f[lo + 2] + 14 * f[lo + 3] - 6 * f[lo + 4] +
                         f[lo + 5]) * s2;
      out[i] = point(i, d1, d2);
    }
    for (std::size_t i = lo + 2; i + 2 <= hi; ++i) {
      const double fm2 = f[i - 2], fm1 = f[i - 1], f0 = f[i], fp1 = f[i + 1], fp2 = f[i + 2];
      const double d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) * s1;
      const double d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) * s2;
      out[i] = point(i, d1, d2);
    }
    {
      const std::size_t i = hi - 1;
      const double d1 = -(-3 * f[hi] - 10 * f[hi - 1] + 18 * f[hi - 2] - 6 * f[hi - 3] + f[hi - 4]) * s1;
      const double d2 = (10 * f[hi] - 15 * f[hi - 1] - 4 * f[hi - 2] + 14 * f[hi - 3] - 6 * f[hi - 4] +
                         f[hi - 5]) * s2;
      out[i] = point(i, d1, d2);
    }
    if (v_form_) out[grid_->throat()] = 0.0;
  }

  double nonlinear_u(std::size_t i, double u) const {
    const double y = amp_[i] * u;
    const double s = std::sin(y);
    const double z = 2.0 * y;
    double w;
    if (std::abs(z) < 1e-2) {
      const double z3 = z * z * z;
      w = z3 / 6.0 - z3 * z * z / 120.0 + z3 * z3 * z / 5040.0;
    } else {
      w = z - std::sin(z);
    }
    return kfac_[i] * (s * s * s2q_[i] + 0.5 * w * c2q_[i]);
  }

  /// Conserved energy of the flow for the stored variable.
  EnergyReport energy(const std::vector<double>& stored, const std::vector<double>& gstored) const {
    if (v_form_) return energy_of(unscale(stored), unscale(gstored));
    return energy_of(stored, gstored);
  }

  /// Damping power int sigma g^2 w dr (rate at which the sponge removes energy).
  double sponge_power(const std::vector<double>& gstored) const {
    if (!flow_.sponge.enabled) return 0.0;
    const std::vector<double>& gdot = v_form_ ? unscale(gstored) : gstored;
    const RadialGrid& g = *grid_;
    std::vector<double> v(g.size(), 0.0);
    for (std::size_t i = lo_; i < g.size(); ++i) {
      const double c = g.jacobian[i];
      double w;
      switch (flow_.kind) {
        case FlowKind::PsiNonlinear:
        case FlowKind::LinearizedQ: w = c * c * c; break;
        case FlowKind::FreeFlatD: w = std::pow(std::abs(g.r[i]), flow_.flat_dim - 1) * c; break;
        default: w = std::pow(c, flow_.params.dim); break;
      }
      v[i] = damp_[i] * gdot[i] * gdot[i] * w;
    }
    return integrate_x(g, v);
  }

  /// Converts an external state to the stored variable and rate, and back.
  std::vector<double> to_stored(const FieldState& s) const {
    if (v_form_) return scale(s.f);
    if (flow_.kind != FlowKind::PsiNonlinear) return s.f;
    std::vector<double> phi(s.f.size());
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = s.f[i] - flow_.q_ref->Q[i];
    return phi;
  }

  std::vector<double> to_stored_rate(const FieldState& s) const {
    return v_form_ ? scale(s.g) : s.g;
  }

  /// Maps a stored acceleration back to f_tt.
  std::vector<double> from_stored_rate(const std::vector<double>& a) const {
    return v_form_ ? unscale(a) : a;
  }

  FieldState to_state(const std::vector<double>& f, const std::vector<double>& gdot,
                      double t) const {
    FieldState s{grid_, f, gdot, t, state_form(flow_.kind), flow_.params, 0};
    if (flow_.kind == FlowKind::FreeFlatD) s.lo = flow_.inner_radius ? lo_ : 0;
    if (v_form_) {
      s.f = unscale(f);
      s.g = unscale(gdot);
    }
    if (flow_.kind == FlowKind::PsiNonlinear) {
      for (std::size_t i = 0; i < f.size(); ++i) s.f[i] = flow_.q_ref->Q[i] + f[i];
    }
    return s;
  }

 private:
  std::vector<double> scale(const std::vector<double>& f) const {
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) v[i] = rk_[i] * f[i];
    return v;
  }

  // f = v / r^k off the origin; the origin value by even interpolation.
  std::vector<double> unscale(const std::vector<double>& v) const {
    const std::size_t c = grid_->throat();
    std::vector<double> f(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) f[i] = i == c ? 0.0 : v[i] / rk_[i];
    f[c] = (4.0 * (f[c - 1] + f[c + 1]) - (f[c - 2] + f[c + 2])) / 6.0;
    return f;
  }

  EnergyReport energy_of(const std::vector<double>& f, const std::vector<double>& gdot) const {
    const RadialGrid& g = *grid_;
    const std::size_t n = g.size();
    const ModelParams& p = flow_.params;
    std::vector<double> fx(n, 0.0);
    first_derivative(f, h_, fx, lo_, hi_);
    std::vector<double> kin(n, 0.0), grad(n, 0.0), pot(n, 0.0);
    EnergyReport e;
    std::size_t first = lo_;
    for (std::size_t i = lo_; i < n; ++i) {
      const double c = g.jacobian[i];
      double w;  // measure weight times dr/dx
      switch (flow_.kind) {
        case FlowKind::PsiNonlinear:
        case FlowKind::LinearizedQ:
          w = c * c * c;
          e.measure = Measure::Dim3;
          break;
        case FlowKind::FreeFlatD:
          w = std::pow(std::abs(g.r[i]), flow_.flat_dim - 1) * c;
          e.measure = Measure::Flat;
          break;
        default:
          w = std::pow(c, p.dim);
          e.measure = Measure::DimD;
          break;
      }
      double fxi = fx[i];
      if (flow_.kind == FlowKind::PsiNonlinear) fxi += qx_exact_[i];
      const double fr = fxi / c;
      kin[i] = gdot[i] * gdot[i] * w;
      grad[i] = fr * fr * w;
      switch (flow_.kind) {
        case FlowKind::PsiNonlinear: {
          const double sn = sinQ_[i] * std::cos(f[i]) + cosQ_[i] * std::sin(f[i]);
          pot[i] = p.potential_coupling() * sn * sn * c;
          break;
        }
        case FlowKind::LinearizedQ:
          pot[i] = P_[i] * f[i] * f[i] * w;
          break;
        case FlowKind::UNonlinear:
          pot[i] = (P_[i] * f[i] * f[i] + 2.0 * potential_W(i, f[i])) * w;
          break;
        default:
          break;
      }
    }
    if (flow_.kind == FlowKind::FreeFlatD && !flow_.inner_radius) first = g.throat();
    auto integral = [&](const std::vector<double>& v) {
      if (first == 0) return 0.5 * integrate_x(g, v);
      return 0.5 * integrate_x(g, v, g.x[first], g.x.back(), first);
    };
    e.kinetic = integral(kin);
    e.gradient = integral(grad);
    e.potential_part = integral(pot);
    e.total = e.kinetic + e.gradient + e.potential_part;
    return e;
  }

  double potential_W(std::size_t i, double u) const {
    // -int_0^u N ds, split as in Nonlinearity::W with cached powers.
    const double a = amp_[i];
    const double y = a * u;
    double fs, gs;
    if (std::abs(y) < 1e-2) {
      const double y2 = y * y, y3 = y2 * y, y4 = y2 * y2;
      fs = (4.0 * y3 / 3.0 - 4.0 * y3 * y2 / 15.0 + 8.0 * y4 * y3 / 315.0) / (4.0 * a);
      gs = (y4 / 3.0 - 2.0 * y4 * y2 / 45.0 + y4 * y4 / 315.0) / (2.0 * a);
    } else {
      const double sy = std::sin(y);
      fs = (2.0 * y - std::sin(2.0 * y)) / (4.0 * a);
      gs = (y * y - sy * sy) / (2.0 * a);
    }
    return -kfac_[i] * (fs * s2q_[i] + gs * c2q_[i]);
  }

  FlowSpec flow_;
  GridPtr grid_;
  double h_ = 0.0;
  std::size_t lo_ = 0, hi_ = 0;
  std::vector<double> A_, B_, P_, S_, damp_;
  std::vector<double> s2q_, c2q_, sinQ_, cosQ_, amp_, kfac_, qx_exact_;
  bool v_form_ = false;
  double max_step_ = std::numeric_limits<double>::infinity();
  std::vector<double> rk_, pot_;
};

inline void check_state_for(const FlowOperator& op, const FieldState& s) {
  require_form(s, state_form(op.flow().kind));
  require(s.grid != nullptr, ErrorCode::InvalidArgument, "state has no grid");
  require_same_grid(s.mesh(), *op.grid());
  require(s.params == op.flow().params, ErrorCode::InvalidArgument, "state and flow params differ");
}

/// Second time derivative of the state under the flow.
inline std::vector<double> rhs(const FlowSpec& flow, const FieldState& s) {
  const FlowOperator op(flow, s.grid);
  check_state_for(op, s);
  std::vector<double> out(s.size(), 0.0);
  op.accel(op.to_stored(s), op.to_stored_rate(s), out);
  return op.from_stored_rate(out);
}

inline constexpr double kCflMax = 0.8;

namespace detail {
struct Rk4Work {
  std::vector<double> f1, g1, a1, a2, a3, a4, fs, gs;
  explicit Rk4Work(std::size_t n) : f1(n), g1(n), a1(n), a2(n), a3(n), a4(n), fs(n), gs(n) {}
};

// One RK4 step of the first-order system f' = g, g' = accel(f, g).
inline void rk4_step(const FlowOperator& op, std::vector<double>& f, std::vector<double>& g,
                     double dt, Rk4Work& w) {
  const std::size_t n = f.size();
  // Stage 1
  op.accel(f, g, w.a1);
  for (std::size_t i = 0; i < n; ++i) {
    w.fs[i] = f[i] + 0.5 * dt * g[i];
    w.gs[i] = g[i] + 0.5 * dt * w.a1[i];
  }
  w.g1 = w.gs;  // k2 for f
  op.accel(w.fs, w.gs, w.a2);
  for (std::size_t i = 0; i < n; ++i) {
    w.f1[i] = g[i] + 2.0 * w.g1[i];  // accumulate f-increments
    w.fs[i] = f[i] + 0.5 * dt * w.g1[i];
    w.gs[i] = g[i] + 0.5 * dt * w.a2[i];
  }
  op.accel(w.fs, w.gs, w.a3);
  for (std::size_t i = 0; i < n; ++i) {
    w.f1[i] += 2.0 * w.gs[i];
    w.fs[i] = f[i] + dt * w.gs[i];
    w.gs[i] = g[i] + dt * w.a3[i];
  }
  op.accel(w.fs, w.gs, w.a4);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] += dt / 6.0 * (w.f1[i] + w.gs[i]);
    g[i] += dt / 6.0 * (w.a1[i] + 2.0 * w.a2[i] + 2.0 * w.a3[i] + w.a4[i]);
  }
}
}  // namespace detail

/// One explicit step; |dt| must respect the CFL bound.
inline FieldState step(const FlowSpec& flow, const FieldState& s, double dt,
                       double cfl_max = kCflMax) {
  const FlowOperator op(flow, s.grid);
  check_state_for(op, s);
  require(std::abs(dt) <= cfl_max * s.mesh().spacing * (1.0 + 1e-12), ErrorCode::RejectedStep,
          "time step violates the CFL bound");
  std::vector<double> f = op.to_stored(s), g = op.to_stored_rate(s);
  detail::Rk4Work w(f.size());
  detail::rk4_step(op, f, g, dt, w);
  return op.to_state(f, g, s.time + dt);
}

struct EvolveOptions {
  double cfl = 0.5;
  double cadence = 0.1;               // monitor spacing in t
  std::vector<double> snapshot_times;  // rounded to the monitor cadence
  bool record_energy = true;
  std::function<void(const FieldState&)> monitor;  // called at every cadence time
};

struct EvolutionLog {
  std::vector<double> times;
  std::vector<double> energy;
  std::vector<EnergyReport> parts;
  std::vector<double> boundary_flux;  // cumulative energy absorbed by the sponge
  std::vector<FieldState> snapshots;
  double cfl = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;

  const FieldState* snapshot_at(double t, double tol = 1e-9) const {
    for (const auto& s : snapshots) {
      if (std::abs(s.time - t) <= tol) return &s;
    }
    return nullptr;
  }
};

class BlowupError : public Error {
 public:
  BlowupError(const std::string& what, FieldState last_good)
      : Error(ErrorCode::Blowup, what), last_good_(std::move(last_good)) {}
  const FieldState& last_good() const { return last_good_; }

 private:
  FieldState last_good_;
};

/// Evolves from `initial` to initial.time + T.
inline EvolutionLog evolve(const FlowOperator& op, const FieldState& initial, double T,
                           const EvolveOptions& opt = {}) {
  check_state_for(op, initial);
  validate_state(initial, 1e-6);
  require(T > 0.0, ErrorCode::InvalidArgument, "T must be positive");
  require(opt.cadence > 0.0, ErrorCode::InvalidArgument, "cadence must be positive");
  require(opt.cfl > 0.0 && opt.cfl <= kCflMax, ErrorCode::InvalidArgument,
          "cfl must lie in (0, 0.8]");
  const RadialGrid& g = *op.grid();
  const double cadence = std::min(opt.cadence, T);
  const auto n_mon = static_cast<std::size_t>(std::llround(T / cadence));
  require(std::abs(n_mon * cadence - T) <= 1e-9 * T, ErrorCode::InvalidArgument,
          "T must be a multiple of the monitor cadence");
  const double step = std::min(opt.cfl * g.spacing, op.max_stable_step());
  const auto sub = static_cast<std::size_t>(std::ceil(cadence / step - 1e-12));
  const double dt = cadence / sub;

  std::vector<std::size_t> snap_idx;
  for (double ts : opt.snapshot_times) {
    const double rel = (ts - initial.time) / cadence;
    require(rel >= -1e-9 && rel <= n_mon + 1e-9, ErrorCode::InvalidArgument,
            "snapshot time outside the run");
    snap_idx.push_back(static_cast<std::size_t>(std::llround(rel)));
  }

  EvolutionLog log;
  log.cfl = dt / g.spacing;
  log.dt = dt;
  std::vector<double> f = op.to_stored(initial), gd = op.to_stored_rate(initial);
  for (std::size_t i = 0; i < op.lo(); ++i) f[i] = gd[i] = 0.0;
  detail::Rk4Work work(f.size());
  double absorbed = 0.0;

  auto record = [&](std::size_t m) {
    const double t = initial.time + m * cadence;
    FieldState s = op.to_state(f, gd, t);
    if (opt.record_energy) {
      const EnergyReport e = op.energy(f, gd);
      log.times.push_back(t);
      log.energy.push_back(e.total);
      log.parts.push_back(e);
      log.boundary_flux.push_back(absorbed);
    } else {
      log.times.push_back(t);
    }
    if (opt.monitor) opt.monitor(s);
    for (std::size_t k : snap_idx) {
      if (k == m) {
        log.snapshots.push_back(s);
        break;
      }
    }
  };

  record(0);
  std::vector<double> f_good = f, g_good = gd;
  for (std::size_t m = 1; m <= n_mon; ++m) {
    for (std::size_t k = 0; k < sub; ++k) {
      if (op.has_sponge()) absorbed += dt * op.sponge_power(gd);
      detail::rk4_step(op, f, gd, dt, work);
      ++log.steps;
    }
    bool finite = true;
    for (std::size_t i = 0; i < f.size() && finite; ++i) {
      finite = std::isfinite(f[i]) && std::isfinite(gd[i]);
    }
    if (!finite) {
      throw BlowupError("non-finite samples at t = " + std::to_string(initial.time + m * cadence),
                        op.to_state(f_good, g_good, initial.time + (m - 1) * cadence));
    }
    f_good = f;
    g_good = gd;
    record(m);
  }
  return log;
}

inline EvolutionLog evolve(const FlowSpec& flow, const FieldState& initial, double T,
                           const EvolveOptions& opt = {}) {
  const FlowOperator op(flow, initial.grid);
  return evolve(op, initial, T, opt);
}

/// Max relative deviation of the energy series from its first entry.
inline double relative_energy_drift(const EvolutionLog& log) {
  if (log.energy.empty()) return 0.0;
  const double e0 = log.energy.front();
  double worst = 0.0;
  for (double e : log.energy) worst = std::max(worst, std::abs(e - e0));
  return e0 != 0.0 ? worst / std::abs(e0) : worst;
}

}  // namespace wormhole
