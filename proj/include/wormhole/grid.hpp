#pragma once

// Compactified radial grid x = asinh(r), fourth-order stencils and quadrature.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "wormhole/error.hpp"

namespace wormhole {

struct ModelParams {
  int ell = 1;     // equivariance class
  int degree = 0;  // topological degree n
  int dim = 5;     // d = 2 ell + 3

  static ModelParams make(int ell, int degree) {
    require(ell >= 1, ErrorCode::InvalidArgument, "ell must be >= 1");
    require(degree >= 0, ErrorCode::InvalidArgument, "degree must be >= 0");
    return ModelParams{ell, degree, 2 * ell + 3};
  }

  /// Parameters whose derived dimension equals an odd d >= 5.
  static ModelParams from_dim(int d, int degree = 0) {
    require(d >= 5 && d % 2 == 1, ErrorCode::InvalidArgument, "dimension must be odd and >= 5");
    return make((d - 3) / 2, degree);
  }

  double far_value() const { return degree * M_PI; }
  double potential_coupling() const { return ell * (ell + 1.0); }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct RadialGrid {
  std::vector<double> x;
  std::vector<double> r;
  std::vector<double> jacobian;  // dr/dx = cosh x
  double half_width = 0.0;
  double spacing = 0.0;

  std::size_t size() const { return x.size(); }
  std::size_t throat() const { return (x.size() - 1) / 2; }
  double r_max() const { return r.back(); }

  /// Index of the first node with x >= value (size() if none).
  std::size_t lower_index(double xv) const {
    return static_cast<std::size_t>(std::lower_bound(x.begin(), x.end(), xv) - x.begin());
  }
};

using GridPtr = std::shared_ptr<const RadialGrid>;

inline RadialGrid make_grid(double half_width, std::size_t n_points) {
  require(std::isfinite(half_width) && half_width > 0.0, ErrorCode::InvalidArgument,
          "grid half-width must be positive");
  require(n_points % 2 == 1, ErrorCode::InvalidArgument, "grid size must be odd");
  require(n_points >= 5, ErrorCode::InvalidArgument, "grid size must be at least 5");

  RadialGrid g;
  const auto c = static_cast<long>((n_points - 1) / 2);
  g.half_width = half_width;
  g.spacing = half_width / static_cast<double>(c);
  g.x.resize(n_points);
  g.r.resize(n_points);
  g.jacobian.resize(n_points);
  // Build the non-negative half and mirror it so r(-x) = -r(x) holds bit for bit.
  for (long k = 0; k <= c; ++k) {
    const double xv = (k == c) ? half_width : static_cast<double>(k) * g.spacing;
    const double rv = std::sinh(xv);
    const double jv = std::cosh(xv);
    const auto ip = static_cast<std::size_t>(c + k);
    const auto im = static_cast<std::size_t>(c - k);
    g.x[ip] = xv;
    g.x[im] = -xv;
    g.r[ip] = rv;
    g.r[im] = -rv;
    g.jacobian[ip] = jv;
    g.jacobian[im] = jv;
  }
  return g;
}

inline GridPtr make_grid_ptr(double half_width, std::size_t n_points) {
  return std::make_shared<const RadialGrid>(make_grid(half_width, n_points));
}

/// Grid whose outermost node sits at physical radius r_max.
inline GridPtr grid_for_radius(double r_max, std::size_t n_points) {
  require(r_max > 0.0, ErrorCode::InvalidArgument, "r_max must be positive");
  return make_grid_ptr(std::asinh(r_max), n_points);
}

inline bool same_grid(const RadialGrid& a, const RadialGrid& b) {
  return a.size() == b.size() && a.half_width == b.half_width;
}

inline double japanese(double r) { return std::sqrt(1.0 + r * r); }

// ---------------------------------------------------------------------------
// Finite differences in x. Fourth order: centered in the interior, one-sided
// at the two outermost nodes of the active range [lo, hi].

namespace detail {
inline constexpr std::array<double, 5> kD1Edge0{-25.0, 48.0, -36.0, 16.0, -3.0};
inline constexpr std::array<double, 5> kD1Edge1{-3.0, -10.0, 18.0, -6.0, 1.0};
inline constexpr std::array<double, 6> kD2Edge0{45.0, -154.0, 214.0, -156.0, 61.0, -10.0};
inline constexpr std::array<double, 6> kD2Edge1{10.0, -15.0, -4.0, 14.0, -6.0, 1.0};
}  // namespace detail

inline void first_derivative(std::span<const double> f, double h, std::span<double> out,
                             std::size_t lo, std::size_t hi) {
  require(hi >= lo + 5 && hi < f.size(), ErrorCode::InvalidArgument, "stencil range too small");
  const double s = 1.0 / (12.0 * h);
  for (std::size_t i = lo + 2; i + 2 <= hi; ++i) {
    out[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) * s;
  }
  double a0 = 0, a1 = 0, b0 = 0, b1 = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    a0 += detail::kD1Edge0[k] * f[lo + k];
    a1 += detail::kD1Edge1[k] * f[lo + k];
    b0 += detail::kD1Edge0[k] * f[hi - k];
    b1 += detail::kD1Edge1[k] * f[hi - k];
  }
  out[lo] = a0 * s;
  out[lo + 1] = a1 * s;
  out[hi] = -b0 * s;
  out[hi - 1] = -b1 * s;
}

inline void second_derivative(std::span<const double> f, double h, std::span<double> out,
                              std::size_t lo, std::size_t hi) {
  require(hi >= lo + 6 && hi < f.size(), ErrorCode::InvalidArgument, "stencil range too small");
  const double s = 1.0 / (12.0 * h * h);
  for (std::size_t i = lo + 2; i + 2 <= hi; ++i) {
    out[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) * s;
  }
  double a0 = 0, a1 = 0, b0 = 0, b1 = 0;
  for (std::size_t k = 0; k < 6; ++k) {
    a0 += detail::kD2Edge0[k] * f[lo + k];
    a1 += detail::kD2Edge1[k] * f[lo + k];
    b0 += detail::kD2Edge0[k] * f[hi - k];
    b1 += detail::kD2Edge1[k] * f[hi - k];
  }
  out[lo] = a0 * s;
  out[lo + 1] = a1 * s;
  out[hi] = b0 * s;
  out[hi - 1] = b1 * s;
}

inline std::vector<double> d_dx(const RadialGrid& g, std::span<const double> f) {
  std::vector<double> out(f.size(), 0.0);
  first_derivative(f, g.spacing, out, 0, f.size() - 1);
  return out;
}

inline std::vector<double> d2_dx2(const RadialGrid& g, std::span<const double> f) {
  std::vector<double> out(f.size(), 0.0);
  second_derivative(f, g.spacing, out, 0, f.size() - 1);
  return out;
}

/// d/dr = sech(x) d/dx on the active range [lo, N-1]; zero below lo.
inline std::vector<double> d_dr(const RadialGrid& g, std::span<const double> f,
                                std::size_t lo = 0) {
  std::vector<double> out(f.size(), 0.0);
  first_derivative(f, g.spacing, out, lo, f.size() - 1);
  for (std::size_t i = lo; i < f.size(); ++i) out[i] /= g.jacobian[i];
  return out;
}

/// d/dr with eighth-order centered stencils, fourth order within four nodes of
/// either end. For post-processing only; the evolution uses d_dr.
inline std::vector<double> d_dr_fine(const RadialGrid& g, std::span<const double> f,
                                     std::size_t lo = 0) {
  std::vector<double> out(f.size(), 0.0);
  const std::size_t hi = f.size() - 1;
  first_derivative(f, g.spacing, out, lo, hi);
  static constexpr std::array<double, 4> c{4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};
  for (std::size_t i = lo + 4; i + 4 <= hi; ++i) {
    double a = 0.0;
    for (std::size_t m = 0; m < 4; ++m) a += c[m] * (f[i + m + 1] - f[i - m - 1]);
    out[i] = a / g.spacing;
  }
  for (std::size_t i = lo; i < f.size(); ++i) out[i] /= g.jacobian[i];
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation and quadrature in x.

/// Lagrange interpolation through `order` consecutive nodes around xv.
inline double interpolate(const RadialGrid& g, std::span<const double> f, double xv,
                          std::size_t order = 6, std::size_t lo = 0) {
  const std::size_t n = f.size();
  require(n >= lo + order, ErrorCode::InvalidArgument, "not enough nodes to interpolate");
  const double pos = (xv - g.x[0]) / g.spacing;
  auto base = static_cast<long>(std::floor(pos)) - static_cast<long>(order / 2) + 1;
  base = std::clamp(base, static_cast<long>(lo), static_cast<long>(n - order));
  double sum = 0.0;
  for (std::size_t a = 0; a < order; ++a) {
    const std::size_t ia = static_cast<std::size_t>(base) + a;
    double w = 1.0;
    for (std::size_t b = 0; b < order; ++b) {
      if (a == b) continue;
      const std::size_t ib = static_cast<std::size_t>(base) + b;
      w *= (xv - g.x[ib]) / (g.x[ia] - g.x[ib]);
    }
    sum += w * f[ia];
  }
  return sum;
}

namespace detail {
// Integral over [a, b] of the cubic through the four nodes around the cell.
inline double partial_cell(const RadialGrid& g, std::span<const double> f, double a, double b,
                           std::size_t lo) {
  if (b <= a) return 0.0;
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double off = half / std::sqrt(3.0);
  return half * (interpolate(g, f, mid - off, 4, lo) + interpolate(g, f, mid + off, 4, lo));
}

inline double simpson(std::span<const double> f, double h, std::size_t i0, std::size_t i1) {
  // i1 - i0 even
  double s = f[i0] + f[i1];
  for (std::size_t i = i0 + 1; i < i1; ++i) s += (i - i0) % 2 == 1 ? 4.0 * f[i] : 2.0 * f[i];
  return s * h / 3.0;
}
}  // namespace detail

/// Fourth-order integral of samples over x in [xa, xb] (clipped to the grid),
/// exact for cubics in x. Cells cut by the window use the local cubic.
inline double integrate_x(const RadialGrid& g, std::span<const double> f, double xa, double xb,
                          std::size_t lo = 0) {
  const double xmin = g.x[lo];
  xa = std::max(xa, xmin);
  xb = std::min(xb, g.x.back());
  if (!(xb > xa)) return 0.0;
  const double h = g.spacing;
  std::size_t ia = g.lower_index(xa);
  std::size_t ib = g.lower_index(xb);
  if (ib >= g.size() || g.x[ib] > xb) --ib;  // last node <= xb
  if (ia > ib) return detail::partial_cell(g, f, xa, xb, lo);
  double total = detail::partial_cell(g, f, xa, g.x[ia], lo) +
                 detail::partial_cell(g, f, g.x[ib], xb, lo);
  const std::size_t m = ib - ia;
  if (m == 0) return total;
  if (m == 1) return total + detail::partial_cell(g, f, g.x[ia], g.x[ib], lo);
  if (m % 2 == 0) return total + detail::simpson(f, h, ia, ib);
  const std::size_t j = ib - 3;
  total += detail::simpson(f, h, ia, j);
  total += 3.0 * h / 8.0 * (f[j] + 3.0 * f[j + 1] + 3.0 * f[j + 2] + f[j + 3]);
  return total;
}

/// Eighth-order integral of samples over x in [xa, x_max]: Gregory end weights on
/// the nodes, four-point Gauss on the octic interpolant for the cut cell.
inline double integrate_x_fine(const RadialGrid& g, std::span<const double> f, double xa,
                               std::size_t lo = 0) {
  static constexpr std::array<double, 8> w{
      1070017.0 / 3628800.0, 5537111.0 / 3628800.0, 103613.0 / 403200.0, 261115.0 / 145152.0,
      298951.0 / 725760.0,   515677.0 / 403200.0,   3349879.0 / 3628800.0, 3662753.0 / 3628800.0};
  static constexpr std::array<double, 2> gx{0.3399810435848563, 0.8611363115940526};
  static constexpr std::array<double, 2> gw{0.6521451548625461, 0.3478548451374538};
  xa = std::max(xa, g.x[lo]);
  std::size_t ia = g.lower_index(xa);
  if (ia < g.size() && g.x[ia] < xa) ++ia;
  const std::size_t n = g.size() - ia;
  require(n >= 2 * w.size(), ErrorCode::InvalidArgument, "window too short for the fine rule");
  double cut = 0.0;
  if (g.x[ia] > xa) {
    const double mid = 0.5 * (xa + g.x[ia]), half = 0.5 * (g.x[ia] - xa);
    for (std::size_t q = 0; q < 2; ++q) {
      cut += gw[q] * (interpolate(g, f, mid - gx[q] * half, 8, lo) +
                      interpolate(g, f, mid + gx[q] * half, 8, lo));
    }
    cut *= half;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double wi = 1.0;
    if (i < w.size()) wi = w[i];
    if (n - 1 - i < w.size()) wi = w[n - 1 - i];
    sum += wi * f[ia + i];
  }
  return cut + sum * g.spacing;
}

/// Composite Simpson over the whole grid.
inline double integrate_x(const RadialGrid& g, std::span<const double> f) {
  return detail::simpson(f, g.spacing, 0, f.size() - 1);
}

}  // namespace wormhole
