#pragma once

// The quotient SL(2,Z)\SL(2,R): reduction to the modular fundamental domain,
// Haar sampling, the shrinking targets A_delta(v) ⊂ G and B_delta(v) = Gamma A_delta(v),
// and the smooth bumps f_delta / F_delta supported on them.
//
// In NAN-bar coordinates g = n_x a_y nbar_{x'} (d > 0) one has
//   g e2 = (x / sqrt(y), 1 / sqrt(y)) = (b, d),   x' = c / d,
// so the box A_delta(v) reads |b - v1| <= delta/2, |d - v2| <= delta/2, |c/d| < 1/2,
// and Haar measure dx dy dx'/y^2 becomes 2 db dd dx'.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "json.hpp"
#include "orbitlab/algebra.hpp"
#include "orbitlab/errors.hpp"
#include "orbitlab/lattice_enum.hpp"
#include "orbitlab/orbit_approx.hpp"
#include "orbitlab/random.hpp"

namespace orbitlab {

/// Haar volume of SL(2,Z)\SL(2,R) for dg = dx dy dtheta / y^2, theta in [0, 2 pi).
/// -I lies in SL(2,Z) and k_{theta + pi} = -k_theta, so a fundamental domain
/// is F x [0, pi) with hyperbolic area(F) = pi/3.
inline constexpr double kCovolume = std::numbers::pi * std::numbers::pi / 3;

/// Hyperbolic area of the modular fundamental domain.
inline constexpr double kFundamentalArea = std::numbers::pi / 3;

// --- targets ----------------------------------------------------------------

/// Target point v (off the axes) and box size delta.
struct TargetSpec {
  PlanePoint v;
  double delta = 0.1;

  /// Validates and normalises v2 > 0. Since -I is in Gamma, B_delta(v) and
  /// B_delta(-v) describe the same approximation problem.
  static TargetSpec make(PlanePoint v, double delta) {
    if (!v.off_axes()) throw config_error("target v must satisfy v1 * v2 != 0");
    if (!(delta > 0 && delta < 0.5)) throw config_error("delta must lie in (0, 1/2)");
    if (!(delta < std::abs(v.v2))) throw config_error("delta must be smaller than |v2|");
    if (v.v2 < 0) v = {-v.v1, -v.v2};
    return {v, delta};
  }

  TargetSpec with_delta(double d) const { return make(v, d); }

  nlohmann::json to_json() const { return {{"v1", v.v1}, {"v2", v.v2}, {"delta", delta}}; }
  static TargetSpec from_json(const nlohmann::json& j) {
    return make({j.at("v1").get<double>(), j.at("v2").get<double>()}, j.at("delta").get<double>());
  }
};

/// Membership g ∈ A_delta(v): closed in (b, d), open in x'.
inline bool in_target(const RealMatrix& g, const TargetSpec& spec) {
  const NANbarCoords nan = decompose_nan(g);  // throws on the degenerate set
  if (nan.sign < 0) return false;
  const double half = spec.delta / 2;
  return std::abs(g.b - spec.v.v1) <= half && std::abs(g.d - spec.v.v2) <= half && std::abs(g.c / g.d) < 0.5;
}

/// Upper bound on tr(h^t h) over h ∈ A_{delta}(v).
inline double target_norm_bound(const TargetSpec& spec) {
  const double half = spec.delta / 2;
  const double bmax = std::abs(spec.v.v1) + half;
  const double dmax = spec.v.v2 + half;
  const double dmin = spec.v.v2 - half;
  const double cmax = dmax / 2;
  const double amax = (1 + bmax * cmax) / dmin;
  return amax * amax + bmax * bmax + cmax * cmax + dmax * dmax;
}

/// mu(B_delta) = vol_G(A_delta) / covolume with vol_G(A_delta) = 2 delta^2.
inline double target_measure(const TargetSpec& spec) { return 2 * spec.delta * spec.delta / kCovolume; }

// --- points of the quotient -------------------------------------------------

/// A point Gamma g, stored by a representative whose image g.i lies in the
/// standard fundamental domain.
struct HomPoint {
  RealMatrix rep;

  PlanePoint u() const { return {rep.b, rep.d}; }  // rep e2
  PlanePoint w() const { return {rep.a, rep.c}; }  // rep e1
  std::complex<double> z() const { return mobius(rep, {0, 1}); }
};

inline constexpr int kMaxReductionSteps = 10000;
inline constexpr double kBoundaryTolerance = 1e-12;

/// Gauss reduction: returns (gamma g, gamma) with (gamma g).i in
/// { |Re z| <= 1/2, |z| >= 1 }, Re z = +1/2 on the vertical edges and Re z >= 0
/// on the unit arc.
inline std::pair<HomPoint, LatticeElement> reduce(const RealMatrix& g) {
  if (!(std::abs(g.det() - 1) <= 1e-6 * std::max(1.0, hs_norm(g))))
    throw config_error("reduce: matrix is not in SL(2,R)");
  LatticeElement gamma{};
  std::complex<double> z = mobius(g, {0, 1});
  int steps = 0;
  for (;; ++steps) {
    if (steps > kMaxReductionSteps || !std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw non_convergence("reduce: no convergence");
    const double n = std::round(z.real());
    if (n != 0) {
      if (!(std::abs(n) < 9e15)) throw non_convergence("reduce: translation out of range");
      z -= n;
      gamma = LatticeElement{1, -static_cast<i64>(n), 0, 1} * gamma;
    }
    if (std::norm(z) < 1 - kBoundaryTolerance) {
      z = -1.0 / z;
      gamma = LatticeElement{0, -1, 1, 0} * gamma;
      continue;
    }
    break;
  }
  if (z.real() < -0.5 + kBoundaryTolerance) {
    gamma = LatticeElement{1, 1, 0, 1} * gamma;
  } else if (std::abs(std::norm(z) - 1) <= kBoundaryTolerance && z.real() < 0) {
    gamma = LatticeElement{0, -1, 1, 0} * gamma;
  }
  return {HomPoint{gamma * g}, gamma};
}

inline HomPoint to_hom(const RealMatrix& g) { return reduce(g).first; }

/// x . nbar_t, re-reduced.
inline HomPoint translate(const HomPoint& x, double t) { return to_hom(x.rep * nbar_mat(t)); }

// --- Haar sampling ----------------------------------------------------------

/// Cusp cutoff for the sampler; the excluded mass is (1/Y)/(pi/3) < 1e-6.
inline constexpr double kHaarYMax = 1e6;

/// The i-th Haar-distributed point for a seed: z = x + iy rejection-sampled
/// from dx dy / y^2 on the fundamental domain, theta uniform on [0, 2 pi).
inline HomPoint haar_point(std::uint64_t seed, std::uint64_t index) {
  const CounterRng rng(seed);
  const double y0 = std::sqrt(3.0) / 2;
  const double span = 1 / y0 - 1 / kHaarYMax;
  for (std::uint64_t attempt = 0;; ++attempt) {
    const double x = rng.uniform(index, 3 * attempt) - 0.5;
    const double y = 1 / (1 / y0 - rng.uniform(index, 3 * attempt + 1) * span);
    if (x * x + y * y < 1) continue;
    const double theta = 2 * std::numbers::pi * rng.uniform(index, 3 * attempt + 2);
    return HomPoint{recompose(NAKCoords{x, y, theta})};
  }
}

inline std::vector<HomPoint> haar_sample(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw config_error("haar_sample: n must be positive");
  std::vector<HomPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(haar_point(seed, i));
  return out;
}

// --- membership in B_delta ---------------------------------------------------

/// All gamma with gamma rep ∈ A_delta(v), found by a norm-ball search:
/// ||gamma|| <= ||h|| ||rep|| for some h ∈ A_delta, and gamma u lies within
/// delta/sqrt(2) of v.
inline std::vector<LatticeElement> target_elements_by_norm(const HomPoint& x, const TargetSpec& spec) {
  const double T = std::ceil(target_norm_bound(spec) * hs_norm(x.rep) * (1 + 1e-9)) + 1;
  const double radius = spec.delta / std::sqrt(2.0) * (1 + 1e-12);
  std::vector<LatticeElement> out;
  for (const ApproxRecord& rec : near_elements(x.u(), spec.v, T, SubgroupFilter::full(), radius)) {
    const RealMatrix h = rec.gamma * x.rep;
    if (h.d != 0 && in_target(h, spec)) out.push_back(rec.gamma);
  }
  return out;
}

/// x ∈ B_delta(v).
inline bool in_shrunk_orbit_target(const HomPoint& x, const TargetSpec& spec) {
  return !target_elements_by_norm(x, spec).empty();
}

// --- duality search -----------------------------------------------------------

/// gamma with gamma u in the closed delta-box around v, where u = rep e2;
/// b and d are the coordinates of gamma u and s = (gamma rep)_21 / d is the
/// x'-coordinate of gamma rep.
struct BoxCandidate {
  LatticeElement gamma;
  double b = 0, d = 0, s = 0;
};

/// Closed rectangle [b_lo, b_hi] x [d_lo, d_hi] in the plane, d_lo > 0.
struct PlaneBox {
  double b_lo = 0, b_hi = 0, d_lo = 0, d_hi = 0;

  static PlaneBox around(const TargetSpec& spec) {
    const double half = spec.delta / 2;
    return {spec.v.v1 - half, spec.v.v1 + half, spec.v.v2 - half, spec.v.v2 + half};
  }
};

/// Every gamma with gamma u in the closed box and x'-coordinate s of
/// gamma rep in the open window (s_lo, s_hi).
///
/// Only the second row (p, q) of gamma enters d = p u1 + q u2 and
/// s d = p w1 + q w2, so the rows form the lattice Z^2 rep^{-1} intersected with
/// a thin trapezoid; the first row is then fixed up to the shift (r, t) + m (p, q),
/// which moves the first coordinate of gamma u by m d.
inline std::vector<BoxCandidate> box_candidates(const RealMatrix& rep, const PlaneBox& box, double s_lo,
                                                double s_hi) {
  std::vector<BoxCandidate> out;
  if (!(s_hi > s_lo)) return out;
  if (!(box.d_lo > 0) || box.d_hi < box.d_lo || box.b_hi < box.b_lo) throw config_error("box_candidates: bad box");
  const double u1 = rep.b, u2 = rep.d, w1 = rep.a, w2 = rep.c;
  const double P0 = box.d_lo, P1 = box.d_hi;
  const double b_lo = box.b_lo, b_hi = box.b_hi;

  // corners of the (Q, P) trapezoid mapped to rows (p, q) = (Q u2 - P w2, -Q u1 + P w1)
  const std::array<std::pair<double, double>, 4> corners{
      {{s_lo * P0, P0}, {s_hi * P0, P0}, {s_lo * P1, P1}, {s_hi * P1, P1}}};
  const bool iterate_p = std::abs(u2) >= std::abs(u1);
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& [Q, P] : corners) {
    const double val = iterate_p ? Q * u2 - P * w2 : -Q * u1 + P * w1;
    lo = std::min(lo, val);
    hi = std::max(hi, val);
  }
  if (!(hi - lo < 4e15)) throw numerical_error("box_candidates: search region too large");
  const i64 outer_lo = static_cast<i64>(std::floor(lo)) - 1;
  const i64 outer_hi = static_cast<i64>(std::ceil(hi)) + 1;
  const double lead = iterate_p ? u2 : u1;
  const double other = iterate_p ? u1 : u2;

  for (i64 o = outer_lo; o <= outer_hi; ++o) {
    // P = o * other + inner * lead in [P0, P1]
    double ilo = (P0 - o * other) / lead, ihi = (P1 - o * other) / lead;
    if (ilo > ihi) std::swap(ilo, ihi);
    const i64 inner_lo = static_cast<i64>(std::floor(ilo)) - 1;
    const i64 inner_hi = static_cast<i64>(std::ceil(ihi)) + 1;
    for (i64 in = inner_lo; in <= inner_hi; ++in) {
      const i64 p = iterate_p ? o : in;
      const i64 q = iterate_p ? in : o;
      const double P = double(p) * u1 + double(q) * u2;
      if (P < P0 || P > P1) continue;
      const double Q = double(p) * w1 + double(q) * w2;
      const double s = Q / P;
      if (!(s > s_lo && s < s_hi)) continue;
      if (std::gcd(p, q) != 1) continue;
      // first row (r, t) with r q - t p = 1
      const auto [t0, r0] = canonical_bezout(q, p);
      const double base = double(r0) * u1 + double(t0) * u2;
      const i64 m_lo = static_cast<i64>(std::floor((b_lo - base) / P)) - 1;
      const i64 m_hi = static_cast<i64>(std::ceil((b_hi - base) / P)) + 1;
      for (i64 m = m_lo; m <= m_hi; ++m) {
        const LatticeElement gamma{r0 + m * p, t0 + m * q, p, q};
        const double b = double(gamma.a) * u1 + double(gamma.b) * u2;
        if (b < b_lo || b > b_hi) continue;
        out.push_back({gamma, b, P, s});
      }
    }
  }
  return out;
}

inline std::vector<BoxCandidate> box_candidates(const RealMatrix& rep, const TargetSpec& spec, double s_lo,
                                                double s_hi) {
  return box_candidates(rep, PlaneBox::around(spec), s_lo, s_hi);
}

// --- bump functions -----------------------------------------------------------

/// Smooth even bump supported in (-1/2, 1/2) with unit integral.
struct BumpProfile {
  static double raw(double t) {
    const double u = 2 * t;
    if (!(std::abs(u) < 1)) return 0;
    return std::exp(-1 / (1 - u * u));
  }

  static double normalisation() {
    static const double value = [] {
      using boost::math::quadrature::gauss_kronrod;
      return gauss_kronrod<double, 61>::integrate(raw, -0.5, 0.5, 15, 1e-15);
    }();
    return value;
  }

  static double rho(double t) { return raw(t) / normalisation(); }
};

/// f_delta(g) = rho((b - v1)/delta) rho((d - v2)/delta) rho(x'), supported in A_delta(v).
inline double f_delta(const RealMatrix& g, const TargetSpec& spec) {
  if (!(g.d > 0)) return 0;
  return BumpProfile::rho((g.b - spec.v.v1) / spec.delta) * BumpProfile::rho((g.d - spec.v.v2) / spec.delta) *
         BumpProfile::rho(g.c / g.d);
}

/// Value of f_delta on gamma rep from its duality coordinates.
inline double f_delta(const BoxCandidate& cand, const TargetSpec& spec) {
  return BumpProfile::rho((cand.b - spec.v.v1) / spec.delta) * BumpProfile::rho((cand.d - spec.v.v2) / spec.delta) *
         BumpProfile::rho(cand.s);
}

/// F_delta(Gamma g) = sum over gamma of f_delta(gamma g), via the norm-ball search.
inline double bump_F(const HomPoint& x, const TargetSpec& spec) {
  double total = 0;
  for (const LatticeElement& gamma : target_elements_by_norm(x, spec)) total += f_delta(gamma * x.rep, spec);
  return total;
}

/// F_delta(x nbar_t) via the duality search; x need not be reduced.
inline double bump_F_translated(const HomPoint& x, const TargetSpec& spec, double t) {
  double total = 0;
  for (const BoxCandidate& c : box_candidates(x.rep, spec, -t - 0.5, -t + 0.5)) {
    BoxCandidate shifted = c;
    shifted.s += t;
    total += f_delta(shifted, spec);
  }
  return total;
}

/// mu(F_delta): each rho factor has unit mass, so the integral over G is
/// 2 delta^2 and the mean is that over the covolume.
inline double bump_mean(const TargetSpec& spec) { return 2 * spec.delta * spec.delta / kCovolume; }

// --- serialisation ------------------------------------------------------------

inline std::string to_string(const HomPoint& x) {
  return fmt17(x.rep.a) + " " + fmt17(x.rep.b) + " " + fmt17(x.rep.c) + " " + fmt17(x.rep.d);
}

inline HomPoint hom_point_from_string(const std::string& text) {
  RealMatrix m;
  std::istringstream in(text);
  if (!(in >> m.a >> m.b >> m.c >> m.d)) throw config_error("HomPoint needs four numbers");
  return to_hom(m);
}

}  // namespace orbitlab
