#pragma once

// Exact enumeration of Gamma_T = { gamma : tr(gamma^t gamma) <= T } for SL(2,Z)
// and the congruence subgroups Gamma_0(N), Gamma(N).
//
// Every gamma with first column (a, c) has second column (b0 + k a, d0 + k c)
// for a fixed Bezout solution (b0, d0), so Gamma_T splits into one family per
// primitive (a, c), each an integer interval of shifts k.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "orbitlab/algebra.hpp"
#include "orbitlab/errors.hpp"
#include "orbitlab/parallel.hpp"
#include "orbitlab/version.hpp"
#include "json.hpp"

namespace orbitlab {

/// Largest norm budget handled with exact 64-bit entries.
inline constexpr double kMaxBudget = 1e18;

// --- integer helpers ------------------------------------------------------

inline i64 isqrt(i64 n) {
  if (n <= 0) return 0;
  i64 r = static_cast<i64>(std::sqrt(static_cast<long double>(n)));
  while (i128(r) * r > n) --r;
  while (i128(r + 1) * (r + 1) <= n) ++r;
  return r;
}

inline i64 floor_div(i64 p, i64 q) {
  i64 d = p / q;
  if ((p % q != 0) && ((p < 0) != (q < 0))) --d;
  return d;
}

inline i64 mod_floor(i64 p, i64 q) {
  i64 m = p % q;
  return m < 0 ? m + q : m;
}

struct Bezout {
  i64 b0, d0;
};

/// Canonical (b0, d0) with a d0 - c b0 = 1, shifted along (a, c) to minimise
/// b0^2 + d0^2; ties go to the smaller b0. Requires gcd(a, c) = 1.
inline Bezout canonical_bezout(i64 a, i64 c) {
  // extended Euclid on |a|, |c|
  i64 r0 = a < 0 ? -a : a, r1 = c < 0 ? -c : c;
  i64 s0 = 1, s1 = 0, t0 = 0, t1 = 1;
  while (r1 != 0) {
    const i64 q = r0 / r1;
    std::tie(r0, r1) = std::make_pair(r1, r0 - q * r1);
    std::tie(s0, s1) = std::make_pair(s1, s0 - q * s1);
    std::tie(t0, t1) = std::make_pair(t1, t0 - q * t1);
  }
  // |a| s0 + |c| t0 = 1  =>  a x + c y = 1
  const i64 x = a < 0 ? -s0 : s0;
  const i64 y = c < 0 ? -t0 : t0;
  i64 b0 = -y, d0 = x;
  const i128 r = i128(a) * a + i128(c) * c;
  const i128 p = i128(a) * b0 + i128(c) * d0;
  // minimiser of r k^2 + 2 p k over integers is floor(-p/r) or floor(-p/r) + 1
  i128 k = -p / r;
  if ((-p % r != 0) && ((-p < 0) != (r < 0))) --k;
  Bezout best{0, 0};
  i128 best_norm = -1;
  for (i128 kk = k - 1; kk <= k + 2; ++kk) {
    const i128 bb = b0 + kk * a, dd = d0 + kk * c;
    const i128 nn = bb * bb + dd * dd;
    if (best_norm < 0 || nn < best_norm || (nn == best_norm && bb < best.b0)) {
      best_norm = nn;
      best = {static_cast<i64>(bb), static_cast<i64>(dd)};
    }
  }
  return best;
}

// --- subgroup filters -----------------------------------------------------

struct SubgroupFilter {
  enum class Kind { full, gamma0, gamma };
  Kind kind = Kind::full;
  i64 level = 1;

  static SubgroupFilter full() { return {}; }
  static SubgroupFilter gamma0(i64 n) { return {Kind::gamma0, n}; }
  static SubgroupFilter gamma(i64 n) { return {Kind::gamma, n}; }

  /// Parses "full", "gamma0:N" or "gamma:N".
  static SubgroupFilter parse(const std::string& text) {
    if (text == "full" || text.empty()) return full();
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw config_error("bad filter '" + text + "'");
    const std::string head = text.substr(0, colon);
    i64 n = 0;
    try {
      std::size_t used = 0;
      n = std::stoll(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1) throw config_error("");
    } catch (...) {
      throw config_error("bad filter level in '" + text + "'");
    }
    if (n < 1) throw config_error("filter level must be positive");
    if (head == "gamma0") return gamma0(n);
    if (head == "gamma") return gamma(n);
    throw config_error("unknown filter kind '" + head + "'");
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::full: return "full";
      case Kind::gamma0: return "gamma0:" + std::to_string(level);
      case Kind::gamma: return "gamma:" + std::to_string(level);
    }
    return "full";
  }

  bool keeps(const LatticeElement& g) const {
    switch (kind) {
      case Kind::full: return true;
      case Kind::gamma0: return mod_floor(g.c, level) == 0;
      case Kind::gamma:
        return mod_floor(g.a - 1, level) == 0 && mod_floor(g.b, level) == 0 &&
               mod_floor(g.c, level) == 0 && mod_floor(g.d - 1, level) == 0;
    }
    return true;
  }

  /// Whether any element with first column (a, c) can pass.
  bool keeps_column(i64 a, i64 c) const {
    switch (kind) {
      case Kind::full: return true;
      case Kind::gamma0: return mod_floor(c, level) == 0;
      case Kind::gamma: return mod_floor(a - 1, level) == 0 && mod_floor(c, level) == 0;
    }
    return true;
  }

  /// Shifts k allowed within a family: k = offset (mod step).
  struct Progression {
    i64 offset = 0, step = 1;
  };
  Progression shifts(i64 b0) const {
    if (kind == Kind::gamma && level > 1) return {mod_floor(-b0, level), level};
    return {0, 1};
  }

  friend bool operator==(const SubgroupFilter&, const SubgroupFilter&) = default;
};

// --- column families ------------------------------------------------------

/// All gamma in Gamma_T with first column (a, c): (b, d) = (b0 + k a, d0 + k c), k in [klo, khi].
struct ColumnFamily {
  i64 a = 1, c = 0, b0 = 0, d0 = 1;
  i64 klo = 0, khi = -1;

  bool empty() const { return klo > khi; }
  i64 size() const { return empty() ? 0 : khi - klo + 1; }
  i128 column_norm() const { return i128(a) * a + i128(c) * c; }
  LatticeElement at(i64 k) const { return {a, b0 + k * a, c, d0 + k * c}; }

  /// Number of k in [klo, khi] with k = offset mod step.
  i64 count_in(SubgroupFilter::Progression p) const {
    if (empty()) return 0;
    if (p.step == 1) return size();
    const i64 first = klo + mod_floor(p.offset - klo, p.step);
    if (first > khi) return 0;
    return (khi - first) / p.step + 1;
  }
};

inline i64 budget_to_integer(double T) {
  if (!(T <= kMaxBudget)) throw budget_overflow("norm budget exceeds the exact 64-bit range");
  if (!(T >= 0)) return -1;
  return static_cast<i64>(std::floor(T));
}

/// Shifts k with (b0 + k a)^2 + (d0 + k c)^2 <= room. Exact.
inline std::pair<i64, i64> shift_range(i64 a, i64 c, i64 b0, i64 d0, i64 room) {
  if (room < 0) return {0, -1};
  const i128 r = i128(a) * a + i128(c) * c;
  auto norm_at = [&](i64 k) {
    const i128 bb = b0 + i128(k) * a, dd = d0 + i128(k) * c;
    return bb * bb + dd * dd;
  };
  const long double p = static_cast<long double>(i128(a) * b0 + i128(c) * d0);
  const long double q0 = static_cast<long double>(i128(b0) * b0 + i128(d0) * d0);
  const long double rl = static_cast<long double>(r);
  const long double disc = p * p - rl * (q0 - static_cast<long double>(room));
  const long double center = -p / rl;
  i64 kc = static_cast<i64>(std::llround(center));
  if (disc < 0 && norm_at(kc) > room) return {0, -1};
  const long double half = disc > 0 ? std::sqrt(disc) / rl : 0;
  i64 lo = static_cast<i64>(std::ceil(center - half));
  i64 hi = static_cast<i64>(std::floor(center + half));
  if (lo > hi) {
    if (norm_at(kc) > room) return {0, -1};
    lo = hi = kc;
  }
  while (lo <= hi && norm_at(lo) > room) ++lo;
  while (hi >= lo && norm_at(hi) > room) --hi;
  if (lo > hi) return {0, -1};
  while (norm_at(lo - 1) <= room) --lo;
  while (norm_at(hi + 1) <= room) ++hi;
  return {lo, hi};
}

/// Family of first column (a, c) under budget Tn; empty when (a, c) is not
/// primitive or no second column fits.
inline ColumnFamily make_family(i64 a, i64 c, i64 Tn) {
  ColumnFamily f;
  f.a = a;
  f.c = c;
  if (std::gcd(a, c) != 1) return f;
  const auto [b0, d0] = canonical_bezout(a, c);
  f.b0 = b0;
  f.d0 = d0;
  const i128 r = i128(a) * a + i128(c) * c;
  if (r > Tn) return f;
  const auto [lo, hi] = shift_range(a, c, b0, d0, static_cast<i64>(Tn - r));
  f.klo = lo;
  f.khi = hi;
  return f;
}

namespace detail {

/// Visits every nonempty family with a in the given index range [begin, end)
/// of the outer loop a = -A..A, in (a, c) lexicographic order.
template <class Fn>
void scan_families(i64 Tn, std::size_t begin, std::size_t end, Fn&& fn) {
  const i64 A = isqrt(Tn - 1);
  for (std::size_t idx = begin; idx < end; ++idx) {
    const i64 a = -A + static_cast<i64>(idx);
    const i64 C = isqrt(Tn - 1 - a * a);
    for (i64 c = -C; c <= C; ++c) {
      if (std::gcd(a, c) != 1) continue;
      ColumnFamily f = make_family(a, c, Tn);
      if (!f.empty()) fn(f);
    }
  }
}

inline std::size_t outer_extent(i64 Tn) { return Tn < 2 ? 0 : static_cast<std::size_t>(2 * isqrt(Tn - 1) + 1); }

inline std::size_t chunk_count_for(std::size_t n) { return std::max<std::size_t>(1, std::min<std::size_t>(n, 256)); }

}  // namespace detail

/// Nonempty families for budget T sorted by (a^2 + c^2, a, c).
inline std::vector<ColumnFamily> family_iter(double T, unsigned workers = 1) {
  const i64 Tn = budget_to_integer(T);
  const std::size_t n = detail::outer_extent(Tn);
  const std::size_t chunks = detail::chunk_count_for(n);
  std::vector<std::vector<ColumnFamily>> parts(chunks);
  parallel_chunks(n, chunks, workers, [&](std::size_t i, std::size_t b, std::size_t e) {
    detail::scan_families(Tn, b, e, [&](const ColumnFamily& f) { parts[i].push_back(f); });
  });
  std::vector<ColumnFamily> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  std::sort(out.begin(), out.end(), [](const ColumnFamily& x, const ColumnFamily& y) {
    const i128 nx = x.column_norm(), ny = y.column_norm();
    if (nx != ny) return nx < ny;
    if (x.a != y.a) return x.a < y.a;
    return x.c < y.c;
  });
  return out;
}

/// Calls fn(gamma) for every gamma in Gamma_T passing the filter, in the
/// canonical order: families by (a^2 + c^2, a, c), then k ascending.
template <class Fn>
void for_each_element(double T, const SubgroupFilter& filter, Fn&& fn, unsigned workers = 1) {
  for (const ColumnFamily& f : family_iter(T, workers)) {
    if (!filter.keeps_column(f.a, f.c)) continue;
    const auto prog = filter.shifts(f.b0);
    const i64 first = f.klo + mod_floor(prog.offset - f.klo, prog.step);
    for (i64 k = first; k <= f.khi; k += prog.step) fn(f.at(k));
  }
}

inline std::vector<LatticeElement> enumerate(double T, const SubgroupFilter& filter = {}, unsigned workers = 1) {
  std::vector<LatticeElement> out;
  for_each_element(T, filter, [&](const LatticeElement& g) { out.push_back(g); }, workers);
  return out;
}

/// |Gamma_T ∩ filter| by summing shift-range lengths.
inline std::uint64_t count(double T, const SubgroupFilter& filter = {}, unsigned workers = 1) {
  const i64 Tn = budget_to_integer(T);
  const std::size_t n = detail::outer_extent(Tn);
  const std::size_t chunks = detail::chunk_count_for(n);
  std::vector<std::uint64_t> parts(chunks, 0);
  parallel_chunks(n, chunks, workers, [&](std::size_t i, std::size_t b, std::size_t e) {
    detail::scan_families(Tn, b, e, [&](const ColumnFamily& f) {
      if (filter.keeps_column(f.a, f.c)) parts[i] += static_cast<std::uint64_t>(f.count_in(filter.shifts(f.b0)));
    });
  });
  return std::accumulate(parts.begin(), parts.end(), std::uint64_t{0});
}

// --- binary dump ----------------------------------------------------------

/// Writes elements as little-endian int64 quadruples (a, b, c, d) plus a JSON
/// sidecar at path + ".json".
inline void write_dump(const std::string& path, double T, const SubgroupFilter& filter,
                       const std::vector<LatticeElement>& elems) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write " + path);
  unsigned char buf[32];
  for (const auto& g : elems) {
    const i64 vals[4] = {g.a, g.b, g.c, g.d};
    for (int j = 0; j < 4; ++j) {
      const auto u = static_cast<std::uint64_t>(vals[j]);
      for (int byte = 0; byte < 8; ++byte) buf[8 * j + byte] = static_cast<unsigned char>(u >> (8 * byte));
    }
    out.write(reinterpret_cast<const char*>(buf), sizeof buf);
  }
  nlohmann::json meta = {{"T", T}, {"filter", filter.to_string()}, {"count", elems.size()}, {"version", kVersion}};
  std::ofstream side(path + ".json");
  if (!side) throw config_error("cannot write " + path + ".json");
  side << meta.dump(2) << "\n";
}

/// Reads a dump written by write_dump; nullopt when the sidecar is missing or
/// describes a different enumeration.
inline std::optional<std::vector<LatticeElement>> read_dump(const std::string& path, double T,
                                                            const SubgroupFilter& filter) {
  std::ifstream side(path + ".json");
  if (!side) return std::nullopt;
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (...) {
    return std::nullopt;
  }
  if (meta.value("T", -1.0) != T || meta.value("filter", "") != filter.to_string() ||
      meta.value("version", "") != kVersion)
    return std::nullopt;
  const auto n = meta.value("count", std::uint64_t{0});
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::vector<LatticeElement> out;
  out.reserve(n);
  unsigned char buf[32];
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) return std::nullopt;
    i64 vals[4];
    for (int j = 0; j < 4; ++j) {
      std::uint64_t u = 0;
      for (int byte = 0; byte < 8; ++byte) u |= std::uint64_t(buf[8 * j + byte]) << (8 * byte);
      vals[j] = static_cast<i64>(u);
    }
    out.push_back({vals[0], vals[1], vals[2], vals[3]});
  }
  return out;
}

}  // namespace orbitlab
