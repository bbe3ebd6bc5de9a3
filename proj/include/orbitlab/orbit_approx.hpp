#pragma once

// Best approximation of a target v by the finite orbit Gamma_T u and the
// critical exponent estimators built on top of it.
//
// All gamma with first column (a, c) send u onto the line
//   { p : a p2 - c p1 = u2 },
// i.e. w + k u2 (a, c) with w = (a u1 + b0 u2, c u1 + d0 u2). The distance
// from v to that line, |a v2 - c v1 - u2| / sqrt(a^2 + c^2), bounds every
// orbit point of the family from below, so only columns in a thin strip
// around the direction of v are visited.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "orbitlab/algebra.hpp"
#include "orbitlab/errors.hpp"
#include "orbitlab/lattice_enum.hpp"
#include "orbitlab/parallel.hpp"

namespace orbitlab {

inline PlanePoint orbit_point(const LatticeElement& g, const PlanePoint& u) {
  return {double(g.a) * u.v1 + double(g.b) * u.v2, double(g.c) * u.v1 + double(g.d) * u.v2};
}

/// One orbit point gamma u together with ||gamma|| and ||gamma u - v||.
struct ApproxRecord {
  LatticeElement gamma;
  double gammaNorm = 0;
  double dist = std::numeric_limits<double>::infinity();
};

inline ApproxRecord make_record(const LatticeElement& g, const PlanePoint& u, const PlanePoint& v) {
  return {g, static_cast<double>(hs_norm(g)), (orbit_point(g, u) - v).norm()};
}

/// Total order used for ties: (dist, norm, a, c, b, d).
inline bool better(const ApproxRecord& x, const ApproxRecord& y) {
  if (x.dist != y.dist) return x.dist < y.dist;
  if (x.gammaNorm != y.gammaNorm) return x.gammaNorm < y.gammaNorm;
  const auto& p = x.gamma;
  const auto& q = y.gamma;
  if (p.a != q.a) return p.a < q.a;
  if (p.c != q.c) return p.c < q.c;
  if (p.b != q.b) return p.b < q.b;
  return p.d < q.d;
}

/// A family whose line passes near v, with the continuous minimiser of
/// ||gamma_k u - v|| over k.
struct LineFamily {
  ColumnFamily family;
  SubgroupFilter::Progression shifts;
  double kstar = 0;  // continuous minimiser along the line
  double perp = 0;   // distance from v to the line
  double step = 0;   // spacing of consecutive k on the line
};

/// Allowed k of a family as first + j * step, j in [0, count).
struct ShiftGrid {
  i64 first = 0, step = 1, count = 0;

  static ShiftGrid of(const LineFamily& lf) {
    const auto& f = lf.family;
    ShiftGrid g;
    g.step = lf.shifts.step;
    if (f.empty()) return g;
    g.first = f.klo + mod_floor(lf.shifts.offset - f.klo, g.step);
    if (g.first > f.khi) return g;
    g.count = (f.khi - g.first) / g.step + 1;
    return g;
  }
  /// Index j of the grid point nearest below k (may lie outside [0, count)).
  double index_of(double k) const { return (k - static_cast<double>(first)) / static_cast<double>(step); }
  i64 at(i64 j) const { return first + j * step; }
};

/// Closed-form minimiser of ||gamma u - v|| inside one family: the integer
/// neighbours of k*, clamped into the admissible shifts.
inline std::optional<ApproxRecord> family_best(const LineFamily& lf, const PlanePoint& u, const PlanePoint& v) {
  const ShiftGrid grid = ShiftGrid::of(lf);
  if (grid.count == 0) return std::nullopt;
  const double jstar = std::clamp(grid.index_of(lf.kstar), -1.0, static_cast<double>(grid.count));
  const auto jf = static_cast<i64>(std::floor(jstar));
  std::optional<ApproxRecord> best;
  for (i64 j = jf - 1; j <= jf + 2; ++j) {
    const i64 jj = std::clamp<i64>(j, 0, grid.count - 1);
    const ApproxRecord rec = make_record(lf.family.at(grid.at(jj)), u, v);
    if (!best || better(rec, *best)) best = rec;
  }
  return best;
}

namespace detail {

/// Slack on pruning comparisons so that rounding never drops a candidate.
inline double prune_radius(double r) { return r * (1 + 1e-9) + 1e-300; }

/// Visits every family whose line lies within policy.radius() of v. Requires
/// u2 != 0. The outer loop runs over a (or c) index range [begin, end).
template <class Policy>
void scan_lines(const PlanePoint& u, const PlanePoint& v, i64 Tn, const SubgroupFilter& filter,
                std::size_t begin, std::size_t end, Policy& policy) {
  const i64 A = isqrt(Tn - 1);
  const double sqrtR = std::sqrt(static_cast<double>(Tn - 1));
  const bool outer_is_a = std::abs(v.v1) >= std::abs(v.v2);
  const double lead = outer_is_a ? v.v1 : v.v2;

  for (std::size_t idx = begin; idx < end; ++idx) {
    const i64 outer = -A + static_cast<i64>(idx);
    const i64 C = isqrt(Tn - 1 - outer * outer);
    i64 lo = -C, hi = C;
    const double W = prune_radius(policy.radius()) * sqrtR;
    if (lead != 0 && std::isfinite(W)) {
      // |a v2 - c v1 - u2| <= W, solved for the inner variable
      const double center = outer_is_a ? (outer * v.v2 - u.v2) / v.v1 : (outer * v.v1 + u.v2) / v.v2;
      const double half = W / std::abs(lead);
      const double flo = std::floor(center - half), fhi = std::ceil(center + half);
      if (fhi < static_cast<double>(lo) || flo > static_cast<double>(hi)) continue;
      lo = std::max<i64>(lo, static_cast<i64>(std::max(flo, static_cast<double>(lo))));
      hi = std::min<i64>(hi, static_cast<i64>(std::min(fhi, static_cast<double>(hi))));
    }
    for (i64 inner = lo; inner <= hi; ++inner) {
      const i64 a = outer_is_a ? outer : inner;
      const i64 c = outer_is_a ? inner : outer;
      if (!filter.keeps_column(a, c)) continue;
      const double r = double(a) * a + double(c) * c;
      const double sr = std::sqrt(r);
      const double perp = std::abs(double(a) * v.v2 - double(c) * v.v1 - u.v2) / sr;
      if (!(perp <= prune_radius(policy.radius()))) continue;
      if (std::gcd(a, c) != 1) continue;
      LineFamily lf;
      lf.family = make_family(a, c, Tn);
      if (lf.family.empty()) continue;
      lf.shifts = filter.shifts(lf.family.b0);
      const double w1 = double(a) * u.v1 + double(lf.family.b0) * u.v2;
      const double w2 = double(c) * u.v1 + double(lf.family.d0) * u.v2;
      lf.kstar = ((v.v1 - w1) * a + (v.v2 - w2) * c) / (u.v2 * r);
      lf.kstar = std::clamp(lf.kstar, double(lf.family.klo) - 2, double(lf.family.khi) + 2);
      lf.perp = perp;
      lf.step = std::abs(u.v2) * sr;
      policy.visit(lf);
    }
  }
}

struct BestPolicy {
  const PlanePoint& u;
  const PlanePoint& v;
  double bound;
  std::optional<ApproxRecord> best;

  double radius() const { return best ? std::min(best->dist, bound) : bound; }
  void visit(const LineFamily& lf) {
    if (auto rec = family_best(lf, u, v); rec && (!best || better(*rec, *best))) best = rec;
  }
};

struct CollectPolicy {
  const PlanePoint& u;
  const PlanePoint& v;
  double bound;
  std::vector<ApproxRecord> hits;

  double radius() const { return bound; }
  void visit(const LineFamily& lf) {
    const ShiftGrid grid = ShiftGrid::of(lf);
    if (grid.count == 0 || lf.step == 0) return;
    const double slack = prune_radius(bound);
    const double along = std::sqrt(std::max(0.0, slack * slack - lf.perp * lf.perp)) / lf.step;
    const double jlo = std::ceil(grid.index_of(lf.kstar - along) - 1e-9);
    const double jhi = std::floor(grid.index_of(lf.kstar + along) + 1e-9);
    const i64 from = static_cast<i64>(std::max(jlo, 0.0));
    const i64 to = static_cast<i64>(std::min(jhi, static_cast<double>(grid.count - 1)));
    for (i64 j = from; j <= to; ++j) {
      ApproxRecord rec = make_record(lf.family.at(grid.at(j)), u, v);
      if (rec.dist <= bound) hits.push_back(rec);
    }
  }
};

inline const LatticeElement kQuarterTurn{0, 1, -1, 0};

/// Best record over Gamma_T ∩ filter with an a-priori upper bound on the
/// optimal distance (infinity when unknown).
inline std::optional<ApproxRecord> best_within(const PlanePoint& u, const PlanePoint& v, i64 Tn,
                                               const SubgroupFilter& filter, double bound, unsigned workers) {
  if (Tn < 2) return std::nullopt;
  if (u.v2 == 0) {
    if (filter.kind != SubgroupFilter::Kind::full) {
      std::optional<ApproxRecord> best;
      for_each_element(static_cast<double>(Tn), filter, [&](const LatticeElement& g) {
        ApproxRecord rec = make_record(g, u, v);
        if (!best || better(rec, *best)) best = rec;
      });
      return best;
    }
    // gamma u = (gamma R^{-1}) (R u) with R a quarter turn; R preserves the norm
    const PlanePoint turned = orbit_point(kQuarterTurn, u);
    auto rec = best_within(turned, v, Tn, filter, bound, workers);
    if (rec) *rec = make_record(rec->gamma * kQuarterTurn, u, v);
    return rec;
  }
  const std::size_t n = outer_extent(Tn);
  const std::size_t chunks = chunk_count_for(n);
  std::vector<std::optional<ApproxRecord>> parts(chunks);
  parallel_chunks(n, chunks, workers, [&](std::size_t i, std::size_t b, std::size_t e) {
    BestPolicy policy{u, v, bound, std::nullopt};
    scan_lines(u, v, Tn, filter, b, e, policy);
    parts[i] = policy.best;
  });
  std::optional<ApproxRecord> best;
  for (const auto& p : parts)
    if (p && (!best || better(*p, *best))) best = p;
  return best;
}

/// Budget below which a full scan is cheaper than bootstrapping a bound.
inline constexpr i64 kDirectScanBudget = 4096;

inline std::optional<ApproxRecord> best_bootstrapped(const PlanePoint& u, const PlanePoint& v, i64 Tn,
                                                     const SubgroupFilter& filter, unsigned workers) {
  double bound = std::numeric_limits<double>::infinity();
  if (Tn > kDirectScanBudget) {
    if (auto coarse = best_bootstrapped(u, v, Tn / 16, filter, workers)) bound = coarse->dist;
  }
  return best_within(u, v, Tn, filter, bound, workers);
}

}  // namespace detail

/// A gamma in Gamma_T ∩ filter minimising ||gamma u - v||_2; ties resolved by
/// the (dist, norm, a, c, b, d) order so the answer is worker-independent.
inline ApproxRecord best_approx(const PlanePoint& u, const PlanePoint& v, double T,
                                const SubgroupFilter& filter = {}, unsigned workers = 1) {
  if (u.v1 == 0 && u.v2 == 0) throw config_error("best_approx: u must be nonzero");
  const i64 Tn = budget_to_integer(T);
  auto best = detail::best_bootstrapped(u, v, Tn, filter, workers);
  if (!best) throw empty_budget("best_approx: Gamma_T is empty for this budget and filter");
  return *best;
}

/// Every gamma in Gamma_T ∩ filter with ||gamma u - v|| <= radius, sorted by `better`.
inline std::vector<ApproxRecord> near_elements(const PlanePoint& u, const PlanePoint& v, double T,
                                               const SubgroupFilter& filter, double radius,
                                               unsigned workers = 1) {
  if (u.v1 == 0 && u.v2 == 0) throw config_error("near_elements: u must be nonzero");
  const i64 Tn = budget_to_integer(T);
  std::vector<ApproxRecord> out;
  if (Tn < 2) return out;
  if (u.v2 == 0) {
    if (filter.kind != SubgroupFilter::Kind::full) {
      for_each_element(T, filter, [&](const LatticeElement& g) {
        ApproxRecord rec = make_record(g, u, v);
        if (rec.dist <= radius) out.push_back(rec);
      });
    } else {
      const PlanePoint turned = orbit_point(detail::kQuarterTurn, u);
      for (const auto& rec : near_elements(turned, v, T, filter, radius, workers))
        out.push_back(make_record(rec.gamma * detail::kQuarterTurn, u, v));
    }
  } else {
    const std::size_t n = detail::outer_extent(Tn);
    const std::size_t chunks = detail::chunk_count_for(n);
    std::vector<std::vector<ApproxRecord>> parts(chunks);
    parallel_chunks(n, chunks, workers, [&](std::size_t i, std::size_t b, std::size_t e) {
      detail::CollectPolicy policy{u, v, radius, {}};
      detail::scan_lines(u, v, Tn, filter, b, e, policy);
      parts[i] = std::move(policy.hits);
    });
    for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  }
  std::sort(out.begin(), out.end(), better);
  return out;
}

// --- traces -----------------------------------------------------------------

/// Best records d(T) over an increasing list of budgets.
struct ApproxTrace {
  std::vector<double> budgets;
  std::vector<ApproxRecord> best;
};

/// Budgets lo, lo*ratio, ... up to hi (inclusive within rounding).
inline std::vector<double> geometric_budgets(double lo, double hi, double ratio) {
  if (!(lo >= 2) || !(hi >= lo) || !(ratio > 1)) throw config_error("budget grid needs 2 <= lo <= hi and ratio > 1");
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double T = std::round(lo * std::pow(ratio, i));
    if (T > hi * (1 + 1e-12)) break;
    if (out.empty() || T > out.back()) out.push_back(T);
  }
  return out;
}

/// Parses "lo:hi:ratio".
inline std::vector<double> parse_budgets(const std::string& text) {
  double lo = 0, hi = 0, ratio = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> lo >> c1 >> hi >> c2 >> ratio) || c1 != ':' || c2 != ':' || !in.eof())
    throw config_error("budget grid must look like lo:hi:ratio, got '" + text + "'");
  return geometric_budgets(lo, hi, ratio);
}

/// d(T) for every budget. Each budget is scanned with the previous best
/// distance as pruning radius, which is valid because Gamma_T grows with T.
inline ApproxTrace approx_trace(const PlanePoint& u, const PlanePoint& v, const std::vector<double>& budgets,
                                const SubgroupFilter& filter = {}, unsigned workers = 1) {
  if (budgets.empty() || !(budgets.front() >= 2)) throw config_error("approx_trace: budgets must start at >= 2");
  for (std::size_t i = 1; i < budgets.size(); ++i)
    if (!(budgets[i] > budgets[i - 1])) throw config_error("approx_trace: budgets must increase");
  if (u.v1 == 0 && u.v2 == 0) throw config_error("approx_trace: u must be nonzero");
  ApproxTrace trace;
  trace.budgets = budgets;
  std::optional<ApproxRecord> prev;
  for (double T : budgets) {
    const i64 Tn = budget_to_integer(T);
    std::optional<ApproxRecord> rec =
        prev ? detail::best_within(u, v, Tn, filter, prev->dist, workers)
             : detail::best_bootstrapped(u, v, Tn, filter, workers);
    if (!rec) throw empty_budget("approx_trace: Gamma_T is empty for budget " + std::to_string(T));
    trace.best.push_back(*rec);
    prev = rec;
  }
  return trace;
}

// --- exponent estimation ----------------------------------------------------

struct ExponentEstimate {
  double muHat = 0;  // slope of -log d(T) against log T over the tail
  double mu = 0;     // max of log(1/dist)/log(norm) over tail records
  double window = 0.5;
  double slopeStderr = 0;
  std::size_t tailPoints = 0;
  std::size_t muWitnesses = 0;
  bool exactHit = false;

  /// Exponents in the Frobenius-norm convention (twice the trace-norm ones).
  double muHatFrobenius() const { return 2 * muHat; }
  double muFrobenius() const { return 2 * mu; }
};

inline constexpr std::size_t kMinTailPoints = 8;

/// Distances at or below this multiple of max(1, |v|) count as exact hits.
inline constexpr double kExactHitTolerance = 1e-12;

/// The tail holds budgets T >= T_max^(1 - tailFraction).
inline ExponentEstimate estimate_exponents(const ApproxTrace& trace, double tailFraction = 0.5,
                                           double scale = 1.0) {
  if (!(tailFraction > 0 && tailFraction <= 1)) throw config_error("tailFraction must lie in (0, 1]");
  if (trace.budgets.size() != trace.best.size()) throw config_error("malformed trace");
  if (trace.budgets.size() < kMinTailPoints) throw insufficient_data("trace needs at least 8 budgets");
  ExponentEstimate est;
  est.window = tailFraction;
  const double logTmax = std::log(trace.budgets.back());
  const double cut = (1 - tailFraction) * logTmax;
  std::vector<double> xs, ys;
  bool hit = false;
  for (std::size_t i = 0; i < trace.budgets.size(); ++i) {
    const double lt = std::log(trace.budgets[i]);
    if (lt < cut - 1e-12) continue;
    const ApproxRecord& r = trace.best[i];
    if (r.dist <= kExactHitTolerance * std::max(1.0, scale)) hit = true;
    xs.push_back(lt);
    ys.push_back(r.dist > 0 ? -std::log(r.dist) : std::numeric_limits<double>::infinity());
    if (r.dist > 0 && std::log(r.gammaNorm) > cut) {
      est.mu = std::max(est.mu, -std::log(r.dist) / std::log(r.gammaNorm));
      ++est.muWitnesses;
    }
  }
  est.tailPoints = xs.size();
  if (hit) {
    est.exactHit = true;
    est.muHat = est.mu = std::numeric_limits<double>::infinity();
    return est;
  }
  if (xs.size() < kMinTailPoints) throw insufficient_data("fewer than 8 budgets in the tail window");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  est.muHat = sxy / sxx;
  double sse = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - my - est.muHat * (xs[i] - mx);
    sse += e * e;
  }
  est.slopeStderr = std::sqrt(sse / (n - 2) / sxx);
  return est;
}

// --- CSV --------------------------------------------------------------------

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const ApproxTrace& trace) {
  os << "T,dist,norm,a,b,c,d\n";
  for (std::size_t i = 0; i < trace.budgets.size(); ++i) {
    const auto& r = trace.best[i];
    os << fmt17(trace.budgets[i]) << ',' << fmt17(r.dist) << ',' << fmt17(r.gammaNorm) << ',' << r.gamma.a << ','
       << r.gamma.b << ',' << r.gamma.c << ',' << r.gamma.d << '\n';
  }
}

/// Reads the format written by write_trace_csv; lines starting with '#' are skipped.
inline ApproxTrace read_trace_csv(std::istream& is) {
  ApproxTrace trace;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "T,dist,norm,a,b,c,d") throw config_error("trace CSV header must be T,dist,norm,a,b,c,d");
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(row, field, ',')) f.push_back(field);
    if (f.size() != 7) throw config_error("trace CSV row needs 7 fields: " + line);
    try {
      trace.budgets.push_back(std::stod(f[0]));
      ApproxRecord r;
      r.dist = std::stod(f[1]);
      r.gammaNorm = std::stod(f[2]);
      r.gamma = {std::stoll(f[3]), std::stoll(f[4]), std::stoll(f[5]), std::stoll(f[6])};
      trace.best.push_back(r);
    } catch (const std::exception&) {
      throw config_error("unparsable trace CSV row: " + line);
    }
  }
  if (!header) throw config_error("trace CSV is empty");
  return trace;
}

}  // namespace orbitlab
