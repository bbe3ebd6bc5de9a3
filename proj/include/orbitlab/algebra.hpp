#pragma once

// 2x2 matrix algebra over Z and R, the NAK / NAN-bar coordinate systems of
// SL(2,R) and the Hilbert-Schmidt norm in its trace convention.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <ostream>

#include "orbitlab/errors.hpp"

namespace orbitlab {

using i64 = std::int64_t;
using i128 = __int128;

/// Integer matrix [[a, b], [c, d]] with determinant one.
struct LatticeElement {
  i64 a = 1, b = 0, c = 0, d = 1;

  constexpr i128 det() const { return i128(a) * d - i128(b) * c; }
  constexpr bool valid() const { return det() == 1; }

  constexpr LatticeElement inverse() const { return {d, -b, -c, a}; }
  constexpr LatticeElement operator-() const { return {-a, -b, -c, -d}; }

  friend constexpr bool operator==(const LatticeElement&, const LatticeElement&) = default;
  friend constexpr auto operator<=>(const LatticeElement&, const LatticeElement&) = default;
};

inline constexpr LatticeElement operator*(const LatticeElement& x, const LatticeElement& y) {
  return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d,
          x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
}

inline std::ostream& operator<<(std::ostream& os, const LatticeElement& g) {
  return os << "[[" << g.a << ", " << g.b << "], [" << g.c << ", " << g.d << "]]";
}

/// Real 2x2 matrix; represents an element of G = SL(2,R) when det is 1.
struct RealMatrix {
  double a = 1, b = 0, c = 0, d = 1;

  double det() const { return a * d - b * c; }
  RealMatrix inverse() const { return {d, -b, -c, a}; }
  RealMatrix operator-() const { return {-a, -b, -c, -d}; }

  friend bool operator==(const RealMatrix&, const RealMatrix&) = default;
};

inline RealMatrix operator*(const RealMatrix& x, const RealMatrix& y) {
  return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d,
          x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
}

inline RealMatrix to_real(const LatticeElement& g) {
  return {double(g.a), double(g.b), double(g.c), double(g.d)};
}

/// gamma * g with the integer factor applied exactly entry by entry.
inline RealMatrix operator*(const LatticeElement& x, const RealMatrix& y) {
  auto dot = [](i64 p, double s, i64 q, double t) {
    return static_cast<double>(static_cast<long double>(p) * s + static_cast<long double>(q) * t);
  };
  return {dot(x.a, y.a, x.b, y.c), dot(x.a, y.b, x.b, y.d),
          dot(x.c, y.a, x.d, y.c), dot(x.c, y.b, x.d, y.d)};
}

inline std::ostream& operator<<(std::ostream& os, const RealMatrix& g) {
  return os << "[[" << g.a << ", " << g.b << "], [" << g.c << ", " << g.d << "]]";
}

/// A point of the plane R^2 (column vector).
struct PlanePoint {
  double v1 = 0, v2 = 0;

  double norm() const { return std::hypot(v1, v2); }
  bool off_axes() const { return v1 != 0.0 && v2 != 0.0; }

  friend bool operator==(const PlanePoint&, const PlanePoint&) = default;
};

inline PlanePoint operator-(const PlanePoint& p, const PlanePoint& q) { return {p.v1 - q.v1, p.v2 - q.v2}; }

inline std::ostream& operator<<(std::ostream& os, const PlanePoint& p) {
  return os << "(" << p.v1 << ", " << p.v2 << ")";
}

inline PlanePoint operator*(const RealMatrix& g, const PlanePoint& p) {
  return {g.a * p.v1 + g.b * p.v2, g.c * p.v1 + g.d * p.v2};
}

// --- norms ----------------------------------------------------------------

/// Trace norm tr(g^t g): the sum of squared entries, no square root.
inline constexpr i128 hs_norm(const LatticeElement& g) {
  return i128(g.a) * g.a + i128(g.b) * g.b + i128(g.c) * g.c + i128(g.d) * g.d;
}

inline double hs_norm(const RealMatrix& g) { return g.a * g.a + g.b * g.b + g.c * g.c + g.d * g.d; }

/// Frobenius norm sqrt(tr(g^t g)); only for reporting in the other convention.
inline double frobenius_norm(const RealMatrix& g) { return std::sqrt(hs_norm(g)); }
inline double frobenius_norm(const LatticeElement& g) { return std::sqrt(static_cast<double>(hs_norm(g))); }

// --- one-parameter subgroups ----------------------------------------------

inline RealMatrix n_mat(double x) { return {1, x, 0, 1}; }
inline RealMatrix nbar_mat(double x) { return {1, 0, x, 1}; }
inline RealMatrix a_mat(double y) {
  const double s = std::sqrt(y);
  return {s, 0, 0, 1 / s};
}
inline RealMatrix k_mat(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c, s, -s, c};
}

/// Fractional linear action g.z on the upper half plane.
inline std::complex<double> mobius(const RealMatrix& g, std::complex<double> z) {
  return (g.a * z + g.b) / (g.c * z + g.d);
}

// --- coordinates ----------------------------------------------------------

/// g = sign * n_x a_y nbar_{x'}; sign is -1 when the source had d < 0.
struct NANbarCoords {
  double x = 0, y = 1, xprime = 0;
  int sign = 1;
};

/// g = n_x a_y k_theta with theta in [0, 2 pi).
struct NAKCoords {
  double x = 0, y = 1, theta = 0;
};

inline RealMatrix recompose(const NANbarCoords& c) {
  RealMatrix g = n_mat(c.x) * a_mat(c.y) * nbar_mat(c.xprime);
  return c.sign < 0 ? -g : g;
}

inline RealMatrix recompose(const NAKCoords& c) { return n_mat(c.x) * a_mat(c.y) * k_mat(c.theta); }

/// n_x a_y nbar_{x'} = [[sqrt(y) + x x'/sqrt(y), x/sqrt(y)], [x'/sqrt(y), 1/sqrt(y)]],
/// so y = 1/d^2, x = b/d, x' = c/d on the d > 0 half; d < 0 is handled via -g.
inline NANbarCoords decompose_nan(const RealMatrix& g) {
  const double scale = std::sqrt(hs_norm(g));
  if (!(std::abs(g.d) >= 1e-12 * scale))
    throw degenerate_coordinate("decompose_nan: entry d vanishes (measure-zero set)");
  const int sign = g.d > 0 ? 1 : -1;
  const double d = sign * g.d;
  return {(sign * g.b) / d, 1 / (d * d), (sign * g.c) / d, sign};
}

/// x + iy = g.i; theta from the residual rotation: c = -sin(theta)/sqrt(y), d = cos(theta)/sqrt(y).
inline NAKCoords decompose_nak(const RealMatrix& g) {
  const double r2 = g.c * g.c + g.d * g.d;
  NAKCoords out;
  out.x = (g.a * g.c + g.b * g.d) / r2;
  out.y = 1 / r2;
  double theta = std::atan2(-g.c, g.d);
  if (theta < 0) theta += 2 * std::numbers::pi;
  if (theta >= 2 * std::numbers::pi) theta = 0;
  out.theta = theta;
  return out;
}

/// The y >= 1 with y + 1/y = 2 + t^2 (Cartan radius of nbar_t).
inline double cartan_radius(double t) {
  const double t2 = t * t;
  return (2 + t2 + std::abs(t) * std::sqrt(4 + t2)) / 2;
}

/// Relative Frobenius distance, used for round-trip checks.
inline double relative_error(const RealMatrix& x, const RealMatrix& y) {
  RealMatrix diff{x.a - y.a, x.b - y.b, x.c - y.c, x.d - y.d};
  return frobenius_norm(diff) / frobenius_norm(y);
}

}  // namespace orbitlab
