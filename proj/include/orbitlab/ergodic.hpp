#pragma once

// The discrete horocycle flow x -> x nbar_k on SL(2,Z)\SL(2,R): averaging
// operators, variance decay, matrix coefficients, hitting sets for the
// shrinking targets B_delta(v) and the measure of the missing set.
//
// Orbit quantities go through the duality search: nbar_k fixes e2, so
// gamma rep nbar_k lies in A_delta(v) exactly when gamma u is in the delta-box
// and s_gamma + k is in (-1/2, 1/2). One candidate list covers the whole
// window |k| <= K.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "orbitlab/homogeneous.hpp"
#include "orbitlab/parallel.hpp"

namespace orbitlab {

// --- averaging ---------------------------------------------------------------

/// (1/(2T+1)) sum_{|k|<=T} F(x nbar_k), each translate re-reduced.
template <class F>
double beta_T(F&& f, const HomPoint& x, i64 T) {
  if (T < 0) throw config_error("beta_T: T must be nonnegative");
  double total = 0;
  for (i64 k = -T; k <= T; ++k) total += f(translate(x, double(k)));
  return total / double(2 * T + 1);
}

/// k_gamma = the integer moving s_gamma into (-1/2, 1/2), if any.
inline std::optional<i64> hit_time(const BoxCandidate& c) {
  const double k = std::round(-c.s);
  if (!(std::abs(c.s + k) < 0.5)) return std::nullopt;
  return static_cast<i64>(k);
}

/// F_delta(x nbar_k) for k = -K..K (index k + K).
inline std::vector<double> bump_along_orbit(const HomPoint& x, const TargetSpec& spec, i64 K) {
  if (K < 0) throw config_error("bump_along_orbit: K must be nonnegative");
  std::vector<double> values(static_cast<std::size_t>(2 * K + 1), 0.0);
  const double edge = double(K) + 0.5;
  for (const BoxCandidate& c : box_candidates(x.rep, spec, -edge, edge)) {
    const auto k = hit_time(c);
    if (!k || *k < -K || *k > K) continue;
    BoxCandidate shifted = c;
    shifted.s += double(*k);
    values[static_cast<std::size_t>(*k + K)] += f_delta(shifted, spec);
  }
  return values;
}

/// beta_T(F_delta)(x) via the duality search.
inline double beta_T_bump(const HomPoint& x, const TargetSpec& spec, i64 T) {
  const std::vector<double> values = bump_along_orbit(x, spec, T);
  double total = 0;
  for (double v : values) total += v;
  return total / double(2 * T + 1);
}

// --- Monte Carlo plumbing ----------------------------------------------------

/// Runs fn(i) for every sample index and returns the results in index order.
template <class R, class Fn>
std::vector<R> per_sample(std::size_t n, unsigned workers, Fn&& fn) {
  std::vector<R> out(n);
  parallel_chunks(n, std::min<std::size_t>(n, 256), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = fn(i);
  });
  return out;
}

struct MeanEstimate {
  double mean = 0, stderr_ = 0;
};

inline MeanEstimate mean_and_stderr(const std::vector<double>& xs) {
  if (xs.empty()) throw insufficient_data("mean of an empty sample");
  double m = 0;
  for (double x : xs) m += x;
  m /= double(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double n = double(xs.size());
  return {m, xs.size() > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0};
}

inline constexpr std::size_t kMinSamples = 1000;

inline void require_samples(std::size_t n) {
  if (n < kMinSamples) throw config_error("nSamples must be at least 1000");
}

/// Least-squares slope of log y against log x over the positive pairs.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i)
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  if (lx.size() < 2) throw insufficient_data("slope fit needs two positive points");
  const double n = double(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  return sxy / sxx;
}

// --- variance of the averages ------------------------------------------------

struct VarianceCurve {
  std::vector<i64> Ts;
  std::vector<double> variances, stderrs;
  double mean = 0;  // mu(F_delta)
  std::size_t nSamples = 0;
  std::uint64_t seed = 0;

  double slope() const {
    std::vector<double> x(Ts.begin(), Ts.end());
    return loglog_slope(x, variances);
  }
};

/// int |beta_T(F_delta) - mu(F_delta)|^2 dmu for each T, one Haar sample set for all T.
inline VarianceCurve variance_curve(const TargetSpec& spec, const std::vector<i64>& Ts, std::size_t nSamples,
                                    std::uint64_t seed, unsigned workers = 1) {
  require_samples(nSamples);
  if (Ts.empty()) throw config_error("variance_curve: empty T grid");
  for (i64 T : Ts)
    if (T < 0) throw config_error("variance_curve: T must be nonnegative");
  const i64 Tmax = *std::max_element(Ts.begin(), Ts.end());
  const double mu = bump_mean(spec);

  auto rows = per_sample<std::vector<double>>(nSamples, workers, [&](std::size_t i) {
    const std::vector<double> F = bump_along_orbit(haar_point(seed, i), spec, Tmax);
    std::vector<double> dev(Ts.size());
    for (std::size_t j = 0; j < Ts.size(); ++j) {
      double total = 0;
      for (i64 k = -Ts[j]; k <= Ts[j]; ++k) total += F[static_cast<std::size_t>(k + Tmax)];
      const double beta = total / double(2 * Ts[j] + 1);
      dev[j] = (beta - mu) * (beta - mu);
    }
    return dev;
  });

  VarianceCurve out{Ts, {}, {}, mu, nSamples, seed};
  for (std::size_t j = 0; j < Ts.size(); ++j) {
    std::vector<double> col(nSamples);
    for (std::size_t i = 0; i < nSamples; ++i) col[i] = rows[i][j];
    const MeanEstimate est = mean_and_stderr(col);
    out.variances.push_back(est.mean);
    out.stderrs.push_back(est.stderr_);
  }
  return out;
}

// --- matrix coefficients -----------------------------------------------------

struct MatrixCoefficient {
  double t = 0, value = 0, stderr_ = 0;
};

/// <pi(nbar_t) phi, phi> with phi = F_delta - mu(F_delta), for several t on one sample set.
inline std::vector<MatrixCoefficient> matrix_coefficients(const TargetSpec& spec, const std::vector<double>& ts,
                                                          std::size_t nSamples, std::uint64_t seed,
                                                          unsigned workers = 1) {
  require_samples(nSamples);
  const double mu = bump_mean(spec);
  auto rows = per_sample<std::vector<double>>(nSamples, workers, [&](std::size_t i) {
    const HomPoint x = haar_point(seed, i);
    const double phi0 = bump_F_translated(x, spec, 0) - mu;
    std::vector<double> r(ts.size());
    for (std::size_t j = 0; j < ts.size(); ++j) r[j] = (bump_F_translated(x, spec, ts[j]) - mu) * phi0;
    return r;
  });
  std::vector<MatrixCoefficient> out;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    std::vector<double> col(nSamples);
    for (std::size_t i = 0; i < nSamples; ++i) col[i] = rows[i][j];
    const MeanEstimate est = mean_and_stderr(col);
    out.push_back({ts[j], est.mean, est.stderr_});
  }
  return out;
}

inline MatrixCoefficient matrix_coefficient(const TargetSpec& spec, double t, std::size_t nSamples, std::uint64_t seed,
                                            unsigned workers = 1) {
  return matrix_coefficients(spec, {t}, nSamples, seed, workers).front();
}

// --- hitting sets --------------------------------------------------------------

struct HitSet {
  i64 K = 0;
  std::vector<i64> ks;  // sorted, unique
};

/// { k : |k| <= K, x nbar_k ∈ B_delta(v) }.
inline HitSet hit_set(const HomPoint& x, const TargetSpec& spec, i64 K) {
  if (K < 1) throw config_error("hit_set: K must be at least 1");
  HitSet out{K, {}};
  const double edge = double(K) + 0.5;
  for (const BoxCandidate& c : box_candidates(x.rep, spec, -edge, edge)) {
    const auto k = hit_time(c);
    if (k && *k >= -K && *k <= K) out.ks.push_back(*k);
  }
  std::sort(out.ks.begin(), out.ks.end());
  out.ks.erase(std::unique(out.ks.begin(), out.ks.end()), out.ks.end());
  return out;
}

// --- shrinking targets ---------------------------------------------------------

/// One orbit visit to the plane region: gamma u = (b, d) at time l.
struct Visit {
  i64 l = 0;
  double b = 0, d = 0;
};

/// Twice the sup-distance: gamma u is in the delta-box around v iff this is <= delta.
inline double box_size_needed(const Visit& vis, const PlanePoint& v) {
  return 2 * std::max(std::abs(vis.b - v.v1), std::abs(vis.d - v.v2));
}

/// Orbit visits with |l| <= K whose gamma u lands in the box, sorted by |l|.
inline std::vector<Visit> orbit_visits(const HomPoint& x, const PlaneBox& box, i64 K) {
  std::vector<Visit> out;
  const double edge = double(K) + 0.5;
  for (const BoxCandidate& c : box_candidates(x.rep, box, -edge, edge)) {
    const auto k = hit_time(c);
    if (k && *k >= -K && *k <= K) out.push_back({*k, c.b, c.d});
  }
  std::stable_sort(out.begin(), out.end(), [](const Visit& p, const Visit& q) {
    const i64 ap = p.l < 0 ? -p.l : p.l, aq = q.l < 0 ? -q.l : q.l;
    return ap != aq ? ap < aq : p.l < q.l;
  });
  return out;
}

inline double shrinking_delta(double eta, i64 k) { return std::pow(double(k), -eta); }

/// First k >= 1 with k^-eta < bound.
inline i64 first_admissible_k(double eta, double bound) {
  i64 k = std::max<i64>(1, static_cast<i64>(std::floor(std::pow(bound, -1 / eta))));
  while (k > 1 && shrinking_delta(eta, k - 1) < bound) --k;
  while (!(shrinking_delta(eta, k) < bound)) ++k;
  return k;
}

struct ShrinkingResult {
  std::optional<i64> T0;  // empty on failure
  i64 kStart = 0, Kmax = 0;
  i64 lastMiss = 0;               // 0 when every admissible k hits
  std::vector<i64> exactHitTimes;  // signed l with |l| >= kStart and x nbar_l ∈ B_{|l|^-eta}(v)

  /// Number of distinct exact hit times with |l| in [lo, hi].
  std::size_t hits_between(i64 lo, i64 hi) const {
    std::size_t n = 0;
    for (i64 l : exactHitTimes) {
      const i64 a = l < 0 ? -l : l;
      n += (a >= lo && a <= hi);
    }
    return n;
  }
};

namespace detail {

inline void validate_eta(double eta) {
  if (!(eta > 0 && eta < 1)) throw config_error("eta must lie in (0, 1)");
}

/// Scans k in [kLo, kHi]: misses are k with no visit |l| <= k at box size <= k^-eta
/// around v. visits must be sorted by |l|. Returns the last miss (or 0).
inline i64 last_miss(const std::vector<Visit>& visits, const PlanePoint& v, double eta, i64 kLo, i64 kHi) {
  double best = INFINITY;
  std::size_t next = 0;
  i64 last = 0;
  for (i64 k = kLo; k <= kHi; ++k) {
    while (next < visits.size() && std::abs(visits[next].l) <= k) {
      best = std::min(best, box_size_needed(visits[next], v));
      ++next;
    }
    if (!(best <= shrinking_delta(eta, k))) last = k;
  }
  return last;
}

inline std::optional<i64> resolve_T0(i64 last, i64 kStart, i64 Kmax) {
  const i64 T0 = last == 0 ? kStart : last + 1;
  if (2 * T0 > Kmax) return std::nullopt;
  return T0;
}

}  // namespace detail

/// Least T0 with O_k(x) ∩ B_{k^-eta}(v) nonempty for all k in [T0, Kmax].
/// k runs from the first k with k^-eta < min(1/2, v2), where the target is defined.
inline ShrinkingResult shrinking_hit_experiment(double eta, const HomPoint& x, PlanePoint v, i64 Kmax) {
  detail::validate_eta(eta);
  if (Kmax < 2) throw config_error("Kmax must be at least 2");
  if (!v.off_axes()) throw config_error("target v must satisfy v1 * v2 != 0");
  if (v.v2 < 0) v = {-v.v1, -v.v2};
  ShrinkingResult out;
  out.Kmax = Kmax;
  out.kStart = first_admissible_k(eta, std::min(0.5, v.v2));
  if (out.kStart > Kmax) throw config_error("Kmax below the first admissible k");
  const double d0 = shrinking_delta(eta, out.kStart);
  const std::vector<Visit> visits = orbit_visits(x, PlaneBox::around(TargetSpec::make(v, d0)), Kmax);

  out.lastMiss = detail::last_miss(visits, v, eta, out.kStart, Kmax);
  out.T0 = detail::resolve_T0(out.lastMiss, out.kStart, Kmax);
  for (const Visit& vis : visits) {
    const i64 a = vis.l < 0 ? -vis.l : vis.l;
    if (a >= out.kStart && box_size_needed(vis, v) <= shrinking_delta(eta, a)) out.exactHitTimes.push_back(vis.l);
  }
  std::sort(out.exactHitTimes.begin(), out.exactHitTimes.end());
  out.exactHitTimes.erase(std::unique(out.exactHitTimes.begin(), out.exactHitTimes.end()), out.exactHitTimes.end());
  return out;
}

/// Axis-parallel rectangle [x0, x1] x [y0, y1] of targets.
struct Rect {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;

  static Rect parse(const std::string& text) {
    Rect r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(text);
    if (!(in >> r.x0 >> c1 >> r.x1 >> c2 >> r.y0 >> c3 >> r.y1) || c1 != ',' || c2 != ',' || c3 != ',')
      throw config_error("rectangle must read x0,x1,y0,y1");
    std::string rest;
    if (in >> rest) throw config_error("rectangle must read x0,x1,y0,y1");
    return r;
  }

  /// Validated, and flipped into the upper half plane via -I.
  Rect normalised() const {
    if (!(x0 <= x1 && y0 <= y1)) throw config_error("rectangle corners out of order");
    if (x0 <= 0 && x1 >= 0) throw config_error("rectangle meets the v1 = 0 axis");
    if (y0 <= 0 && y1 >= 0) throw config_error("rectangle meets the v2 = 0 axis");
    if (y0 > 0) return *this;
    return {-x1, -x0, -y1, -y0};
  }
};

/// Equally spaced points from lo to hi with gaps at most h.
inline std::vector<double> grid_axis(double lo, double hi, double h) {
  if (hi == lo) return {lo};
  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / h)) + 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i + 1 == n ? hi : lo + (hi - lo) * double(i) / double(n - 1);
  return out;
}

struct GridBlock {
  i64 kLo = 0, kHi = 0;
  double spacing = 0;
  std::size_t points = 0;
  i64 lastMiss = 0;
};

struct UniformGridResult {
  std::optional<i64> T0;
  i64 kStart = 0, Kmax = 0;
  i64 lastMiss = 0;
  std::vector<GridBlock> blocks;
};

/// Dyadic blocks [2^j, 2^{j+1}) from kStart, each with a grid of targets in
/// Omega whose spacing is at most the block-end radius; reports the T0 that works
/// for every grid point of every block at once.
inline UniformGridResult uniform_grid_experiment(const Rect& omega_in, double eta, const HomPoint& x, i64 Kmax) {
  detail::validate_eta(eta);
  if (Kmax < 2) throw config_error("Kmax must be at least 2");
  const Rect omega = omega_in.normalised();
  UniformGridResult out;
  out.Kmax = Kmax;
  out.kStart = first_admissible_k(eta, std::min(0.5, omega.y0));
  if (out.kStart > Kmax) throw config_error("Kmax below the first admissible k");
  const double d0 = shrinking_delta(eta, out.kStart);
  const PlaneBox box{omega.x0 - d0 / 2, omega.x1 + d0 / 2, omega.y0 - d0 / 2, omega.y1 + d0 / 2};
  const std::vector<Visit> visits = orbit_visits(x, box, Kmax);

  i64 kLo = out.kStart;
  while (kLo <= Kmax) {
    i64 pow2 = 1;
    while (pow2 <= kLo) pow2 *= 2;
    const i64 kHi = std::min(Kmax, pow2 - 1);
    const double h = shrinking_delta(eta, kHi);
    GridBlock block{kLo, kHi, h, 0, 0};

    // only visits with |l| <= kHi and box size <= delta_{kLo} around some grid point matter
    const double reach = shrinking_delta(eta, kLo);
    std::vector<Visit> relevant;
    for (const Visit& vis : visits) {
      if (std::abs(vis.l) > kHi) break;
      relevant.push_back(vis);
    }
    for (double gx : grid_axis(omega.x0, omega.x1, h))
      for (double gy : grid_axis(omega.y0, omega.y1, h)) {
        const PlanePoint v{gx, gy};
        std::vector<Visit> near;
        for (const Visit& vis : relevant)
          if (box_size_needed(vis, v) <= reach) near.push_back(vis);
        block.lastMiss = std::max(block.lastMiss, detail::last_miss(near, v, eta, kLo, kHi));
        ++block.points;
      }
    out.lastMiss = std::max(out.lastMiss, block.lastMiss);
    out.blocks.push_back(block);
    kLo = kHi + 1;
  }
  out.T0 = detail::resolve_T0(out.lastMiss, out.kStart, Kmax);
  return out;
}

// --- missing set ---------------------------------------------------------------

struct MissRate {
  i64 T = 0;
  double delta = 0;
  double fraction = 0, lo = 0, hi = 1;  // Wilson 95% interval
  std::size_t misses = 0, nSamples = 0;

  double stderr_() const {
    return std::sqrt(std::max(fraction * (1 - fraction), 0.0) / double(std::max<std::size_t>(nSamples, 1)));
  }
};

inline constexpr double kWilsonZ = 1.959963984540054;

inline MissRate make_miss_rate(i64 T, double delta, std::size_t misses, std::size_t n) {
  const double p = double(misses) / double(n);
  const double z2 = kWilsonZ * kWilsonZ;
  const double denom = 1 + z2 / n;
  const double centre = (p + z2 / (2 * n)) / denom;
  const double half = kWilsonZ * std::sqrt(p * (1 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {T, delta, p, std::max(0.0, centre - half), std::min(1.0, centre + half), misses, n};
}

/// min |k| with x nbar_k ∈ B_delta(v), if some |k| <= K.
inline std::optional<i64> first_hit(const HomPoint& x, const TargetSpec& spec, i64 K) {
  const std::vector<Visit> visits = orbit_visits(x, PlaneBox::around(spec), K);
  if (visits.empty()) return std::nullopt;
  return std::abs(visits.front().l);
}

/// Miss fractions for several horizons on one sample set.
inline std::vector<MissRate> miss_rate_curve(const std::vector<i64>& Ts, const TargetSpec& spec,
                                             std::size_t nSamples, std::uint64_t seed, unsigned workers = 1) {
  require_samples(nSamples);
  if (Ts.empty()) throw config_error("miss_rate: empty T grid");
  for (i64 T : Ts)
    if (T < 0) throw config_error("miss_rate: T must be nonnegative");
  const i64 Tmax = *std::max_element(Ts.begin(), Ts.end());
  const auto firsts = per_sample<i64>(nSamples, workers, [&](std::size_t i) {
    const auto f = first_hit(haar_point(seed, i), spec, Tmax);
    return f ? *f : Tmax + 1;
  });
  std::vector<MissRate> out;
  for (i64 T : Ts) {
    std::size_t misses = 0;
    for (i64 f : firsts) misses += f > T;
    out.push_back(make_miss_rate(T, spec.delta, misses, nSamples));
  }
  return out;
}

inline MissRate miss_rate(i64 T, double delta, PlanePoint v, std::size_t nSamples, std::uint64_t seed,
                          unsigned workers = 1) {
  return miss_rate_curve({T}, TargetSpec::make(v, delta), nSamples, seed, workers).front();
}

// --- output --------------------------------------------------------------------

inline void write_curve_csv(std::ostream& os, const VarianceCurve& c) {
  os << "T,value,stderr\n";
  for (std::size_t j = 0; j < c.Ts.size(); ++j)
    os << c.Ts[j] << ',' << fmt17(c.variances[j]) << ',' << fmt17(c.stderrs[j]) << '\n';
}

inline void write_curve_csv(std::ostream& os, const std::vector<MissRate>& rates) {
  os << "T,value,stderr\n";
  for (const MissRate& r : rates) os << r.T << ',' << fmt17(r.fraction) << ',' << fmt17(r.stderr_()) << '\n';
}

inline void write_curve_csv(std::ostream& os, const std::vector<MatrixCoefficient>& cs) {
  os << "T,value,stderr\n";
  for (const MatrixCoefficient& c : cs) os << fmt17(c.t) << ',' << fmt17(c.value) << ',' << fmt17(c.stderr_) << '\n';
}

}  // namespace orbitlab
