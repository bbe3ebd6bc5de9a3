#pragma once

// Command-line front end. Every command builds a JSON config, runs, and
// writes CSV or JSON carrying the seed, a hash of the config and the version.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "orbitlab/ergodic.hpp"
#include "orbitlab/homogeneous.hpp"
#include "orbitlab/lattice_enum.hpp"
#include "orbitlab/orbit_approx.hpp"
#include "orbitlab/random.hpp"
#include "orbitlab/version.hpp"

namespace orbitlab::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

// --- parsing helpers ------------------------------------------------------------

inline PlanePoint parse_point(const std::string& text, const char* what) {
  PlanePoint p;
  char comma = 0;
  std::istringstream in(text);
  std::string rest;
  if (!(in >> p.v1 >> comma >> p.v2) || comma != ',' || (in >> rest))
    throw config_error(std::string(what) + " must read x,y; got '" + text + "'");
  if (!std::isfinite(p.v1) || !std::isfinite(p.v2)) throw config_error(std::string(what) + " must be finite");
  return p;
}

inline RealMatrix parse_matrix(const std::string& text) {
  RealMatrix m;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  std::string rest;
  if (!(in >> m.a >> c1 >> m.b >> c2 >> m.c >> c3 >> m.d) || c1 != ',' || c2 != ',' || c3 != ',' || (in >> rest))
    throw config_error("--x must read a,b,c,d; got '" + text + "'");
  return m;
}

/// Spectral-gap parameter: a number in [0, 1/2), a fraction p/q, or
/// "congruence", which carries both candidate values 6/64 and 7/64.
struct TauSpec {
  std::string label = "0";
  std::vector<double> values{0.0};

  static TauSpec parse(const std::string& text) {
    if (text == "congruence") return {text, {6.0 / 64, 7.0 / 64}};
    double value = 0;
    const auto slash = text.find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        value = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
      } else {
        const std::string num = text.substr(0, slash), den = text.substr(slash + 1);
        std::size_t u1 = 0, u2 = 0;
        const double p = std::stod(num, &u1), q = std::stod(den, &u2);
        if (u1 != num.size() || u2 != den.size() || q == 0) throw std::invalid_argument(text);
        value = p / q;
      }
    } catch (const std::logic_error&) {
      throw config_error("--tau must be a number, p/q, or 'congruence'; got '" + text + "'");
    }
    if (!(value >= 0 && value < 0.5)) throw config_error("--tau must lie in [0, 1/2)");
    return {text, {value}};
  }

  json predictions() const {
    json out = json::array();
    for (double t : values)
      out.push_back({{"tau", t}, {"windowLow", (1 - 2 * t) / 3}, {"windowHigh", 0.5}, {"uniform", (1 - 2 * t) / 5}});
    return out;
  }
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

/// Ordinary quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw insufficient_data("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * double(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - double(lo)) * (xs[hi] - xs[lo]);
}

inline std::vector<i64> integer_grid(const std::string& budgets) {
  std::vector<i64> out;
  for (double T : parse_budgets(budgets)) out.push_back(static_cast<i64>(T));
  return out;
}

// --- output ---------------------------------------------------------------------

struct Common {
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out;
  std::string format = "csv";
};

/// Rows plus a summary; CSV shows the rows, JSON shows both.
struct Report {
  std::string csv;  // header and rows, no metadata
  json perSample = json::array();
  json summary = json::object();
};

inline std::string metadata_line(const Common& c, const json& config) {
  return std::string("# orbitlab version=") + kVersion + " seed=" + std::to_string(c.seed) +
         " config_hash=" + hex64(fnv1a(config.dump()));
}

inline std::string render(const Common& c, const json& config, const Report& r) {
  if (c.format == "csv") return metadata_line(c, config) + "\n" + r.csv;
  json doc{{"config", config},
           {"seed", c.seed},
           {"meta", {{"version", kVersion}, {"configHash", hex64(fnv1a(config.dump()))}}},
           {"perSample", r.perSample},
           {"summary", r.summary}};
  return doc.dump(2) + "\n";
}

inline void emit(const Common& c, const json& config, const Report& r, std::ostream& stdout_) {
  const std::string text = render(c, config, r);
  if (c.out.empty()) {
    stdout_ << text;
    return;
  }
  std::ofstream f(c.out, std::ios::binary | std::ios::trunc);
  if (!f) throw config_error("cannot write '" + c.out + "'");
  f << text;
  if (!f) throw config_error("failed writing '" + c.out + "'");
}

inline json base_config(const std::string& command, const Common& c) {
  return {{"command", command}, {"seed", c.seed}, {"workers", c.workers}, {"format", c.format}};
}

// --- commands --------------------------------------------------------------------

struct EnumerateArgs {
  double T = 0;
  std::string filter = "full";
};

inline std::string cache_path(const std::string& dir, i64 Tn, const SubgroupFilter& f) {
  std::string tag = f.to_string();
  std::replace(tag.begin(), tag.end(), ':', '-');
  return (std::filesystem::path(dir) / ("gamma-T" + std::to_string(Tn) + "-" + tag + ".bin")).string();
}

/// Elements of Gamma_T, through the dump cache when ORBITLAB_CACHE is set.
inline std::vector<LatticeElement> cached_enumeration(double T, const SubgroupFilter& filter, unsigned workers) {
  const char* dir = std::getenv("ORBITLAB_CACHE");
  if (!dir || !*dir) return enumerate(T, filter, workers);
  std::filesystem::create_directories(dir);
  const std::string path = cache_path(dir, budget_to_integer(T), filter);
  if (auto hit = read_dump(path, T, filter)) return *hit;
  std::vector<LatticeElement> all = enumerate(T, filter, workers);
  write_dump(path, T, filter, all);
  return all;
}

inline int cmd_enumerate(const Common& c, const EnumerateArgs& a, std::ostream& out) {
  const SubgroupFilter filter = SubgroupFilter::parse(a.filter);
  json config = base_config("enumerate", c);
  config["T"] = a.T;
  config["filter"] = filter.to_string();
  const char* dir = std::getenv("ORBITLAB_CACHE");
  const bool need_elements = !c.out.empty() || (dir && *dir);
  if (!need_elements) {
    out << count(a.T, filter, c.workers) << '\n';
    return kExitOk;
  }
  const std::vector<LatticeElement> all = cached_enumeration(a.T, filter, c.workers);
  if (!c.out.empty()) {
    Report r;
    std::ostringstream csv;
    csv << "a,b,c,d\n";
    for (const auto& g : all) {
      csv << g.a << ',' << g.b << ',' << g.c << ',' << g.d << '\n';
      r.perSample.push_back({g.a, g.b, g.c, g.d});
    }
    r.csv = csv.str();
    r.summary = {{"count", all.size()}};
    emit(c, config, r, out);
  }
  out << all.size() << '\n';
  return kExitOk;
}

struct ApproxArgs {
  std::string u, v, budgets, filter = "full";
  std::optional<double> T;
};

inline std::vector<double> budgets_or_single(const std::optional<double>& T, const std::string& budgets) {
  if (T && !budgets.empty()) throw config_error("give either --T or --budgets, not both");
  if (T) return {*T};
  if (budgets.empty()) throw config_error("one of --T or --budgets is required");
  return parse_budgets(budgets);
}

inline Report trace_report(const ApproxTrace& trace) {
  Report r;
  std::ostringstream csv;
  write_trace_csv(csv, trace);
  r.csv = csv.str();
  for (std::size_t i = 0; i < trace.budgets.size(); ++i) {
    const auto& b = trace.best[i];
    r.perSample.push_back({{"T", trace.budgets[i]},
                           {"dist", b.dist},
                           {"norm", b.gammaNorm},
                           {"gamma", {b.gamma.a, b.gamma.b, b.gamma.c, b.gamma.d}}});
  }
  return r;
}

inline int cmd_approx(const Common& c, const ApproxArgs& a, std::ostream& out) {
  const PlanePoint u = parse_point(a.u, "--u"), v = parse_point(a.v, "--v");
  const SubgroupFilter filter = SubgroupFilter::parse(a.filter);
  const std::vector<double> budgets = budgets_or_single(a.T, a.budgets);
  json config = base_config("approx", c);
  config.update({{"u", {u.v1, u.v2}}, {"v", {v.v1, v.v2}}, {"budgets", budgets}, {"filter", filter.to_string()}});
  const ApproxTrace trace = approx_trace(u, v, budgets, filter, c.workers);
  Report r = trace_report(trace);
  r.summary = {{"finalDist", trace.best.back().dist}, {"finalNorm", trace.best.back().gammaNorm}};
  emit(c, config, r, out);
  return kExitOk;
}

struct ExponentArgs {
  std::string u, v, budgets = "256:134217728:2", replay, filter = "full", tau = "0";
  double tail = 0.5;
};

inline json estimate_json(const ExponentEstimate& e) {
  return {{"muHat", e.muHat},           {"mu", e.mu},
          {"slopeStderr", e.slopeStderr}, {"tailPoints", e.tailPoints},
          {"muWitnesses", e.muWitnesses}, {"exactHit", e.exactHit},
          {"window", e.window},           {"muHatFrobenius", e.muHatFrobenius()},
          {"muFrobenius", e.muFrobenius()}};
}

inline int cmd_exponent(const Common& c, const ExponentArgs& a, std::ostream& out) {
  const TauSpec tau = TauSpec::parse(a.tau);
  json config = base_config("exponent", c);
  config.update({{"tail", a.tail}, {"tau", tau.label}});
  ApproxTrace trace;
  double scale = 1;
  if (!a.replay.empty()) {
    std::ifstream f(a.replay, std::ios::binary);
    if (!f) throw config_error("cannot read replay file '" + a.replay + "'");
    const std::string text{std::istreambuf_iterator<char>(f), {}};
    std::istringstream in(text);
    trace = read_trace_csv(in);
    config["replay"] = std::filesystem::path(a.replay).filename().string();
    config["replayHash"] = hex64(fnv1a(text));
  } else {
    const PlanePoint u = parse_point(a.u, "--u"), v = parse_point(a.v, "--v");
    const SubgroupFilter filter = SubgroupFilter::parse(a.filter);
    const std::vector<double> budgets = parse_budgets(a.budgets);
    config.update({{"u", {u.v1, u.v2}}, {"v", {v.v1, v.v2}}, {"budgets", budgets}, {"filter", filter.to_string()}});
    trace = approx_trace(u, v, budgets, filter, c.workers);
    scale = v.norm();
  }
  const ExponentEstimate e = estimate_exponents(trace, a.tail, scale);
  Report r = trace_report(trace);
  std::ostringstream csv;
  csv << "muHat,mu,slopeStderr,tailPoints,muWitnesses,exactHit,muHatFrobenius,muFrobenius\n"
      << fmt17(e.muHat) << ',' << fmt17(e.mu) << ',' << fmt17(e.slopeStderr) << ',' << e.tailPoints << ','
      << e.muWitnesses << ',' << (e.exactHit ? 1 : 0) << ',' << fmt17(e.muHatFrobenius()) << ','
      << fmt17(e.muFrobenius()) << '\n';
  r.csv = csv.str();
  r.summary = estimate_json(e);
  r.summary["predictions"] = tau.predictions();
  emit(c, config, r, out);
  return kExitOk;
}

struct SurveyArgs {
  int part = 1;
  std::size_t samples = 100;
  std::string v, budgets = "256:134217728:2", tau = "0", omega = "1,2,1,2", filter = "full";
  double tail = 0.5, eta = 0.15;
  i64 Kmax = 100000;
};

inline int cmd_survey(const Common& c, const SurveyArgs& a, std::ostream& out) {
  if (a.samples == 0) throw config_error("--samples must be positive");
  const TauSpec tau = TauSpec::parse(a.tau);
  json config = base_config("survey", c);
  config.update({{"part", a.part}, {"samples", a.samples}, {"tau", tau.label}});
  const CounterRng rng(c.seed);
  Report r;
  std::ostringstream csv;

  if (a.part == 1) {
    const std::optional<PlanePoint> fixed_v =
        a.v.empty() ? std::nullopt : std::optional<PlanePoint>(parse_point(a.v, "--v"));
    const std::vector<double> budgets = parse_budgets(a.budgets);
    const SubgroupFilter filter = SubgroupFilter::parse(a.filter);
    config.update({{"budgets", budgets}, {"tail", a.tail}, {"filter", filter.to_string()}});
    if (fixed_v) config["v"] = {fixed_v->v1, fixed_v->v2};

    struct Row {
      PlanePoint u, v;
      ExponentEstimate e;
    };
    // pairs run one after another; each pair uses the worker pool internally
    std::vector<Row> rows;
    for (std::size_t i = 0; i < a.samples; ++i) {
      const PlanePoint u{1 + rng.uniform(i, 0), 1 + rng.uniform(i, 1)};
      const PlanePoint v = fixed_v ? *fixed_v : PlanePoint{1 + rng.uniform(i, 2), 1 + rng.uniform(i, 3)};
      rows.push_back({u, v, estimate_exponents(approx_trace(u, v, budgets, filter, c.workers), a.tail, v.norm())});
    }
    csv << "index,u1,u2,v1,v2,muHat,mu,slopeStderr,exactHit\n";
    std::vector<double> hats;
    std::size_t inside = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Row& row = rows[i];
      csv << i << ',' << fmt17(row.u.v1) << ',' << fmt17(row.u.v2) << ',' << fmt17(row.v.v1) << ','
          << fmt17(row.v.v2) << ',' << fmt17(row.e.muHat) << ',' << fmt17(row.e.mu) << ','
          << fmt17(row.e.slopeStderr) << ',' << (row.e.exactHit ? 1 : 0) << '\n';
      json js = estimate_json(row.e);
      js["u"] = {row.u.v1, row.u.v2};
      js["v"] = {row.v.v1, row.v.v2};
      r.perSample.push_back(js);
      hats.push_back(row.e.muHat);
      inside += row.e.muHat >= 0.25 && row.e.muHat <= 0.65;
    }
    r.summary = {{"count", hats.size()},
                 {"q10", quantile(hats, 0.1)},
                 {"q25", quantile(hats, 0.25)},
                 {"median", quantile(hats, 0.5)},
                 {"q75", quantile(hats, 0.75)},
                 {"q90", quantile(hats, 0.9)},
                 {"fractionInWidenedWindow", double(inside) / double(hats.size())},
                 {"predictions", tau.predictions()}};
  } else if (a.part == 2) {
    const Rect omega = Rect::parse(a.omega);
    config.update({{"omega", {omega.x0, omega.x1, omega.y0, omega.y1}}, {"eta", a.eta}, {"Kmax", a.Kmax}});
    const auto results = per_sample<UniformGridResult>(a.samples, c.workers, [&](std::size_t i) {
      return uniform_grid_experiment(omega, a.eta, haar_point(c.seed, i), a.Kmax);
    });
    csv << "index,found,T0,lastMiss,kStart\n";
    std::size_t found = 0;
    i64 worst = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& res = results[i];
      csv << i << ',' << (res.T0 ? 1 : 0) << ',' << (res.T0 ? *res.T0 : -1) << ',' << res.lastMiss << ','
          << res.kStart << '\n';
      r.perSample.push_back(
          {{"found", res.T0.has_value()}, {"T0", res.T0 ? json(*res.T0) : json()}, {"lastMiss", res.lastMiss}});
      if (res.T0) {
        ++found;
        worst = std::max(worst, *res.T0);
      }
    }
    r.summary = {{"fractionFound", double(found) / double(results.size())},
                 {"maxT0", worst},
                 {"predictions", tau.predictions()}};
  } else {
    throw config_error("--part must be 1 or 2");
  }
  r.csv = csv.str();
  emit(c, config, r, out);
  return kExitOk;
}

struct HitTimesArgs {
  std::string v = "1.3,0.8", x;
  double delta = 0.1;
  std::optional<double> eta;
  i64 T = 1000, index = 0, Kmax = 100000;
  std::size_t samples = 1;
};

inline int cmd_hit_times(const Common& c, const HitTimesArgs& a, std::ostream& out) {
  const PlanePoint v = parse_point(a.v, "--v");
  json config = base_config("hit-times", c);
  config["v"] = {v.v1, v.v2};
  Report r;
  std::ostringstream csv;
  if (a.eta) {
    config.update({{"eta", *a.eta}, {"Kmax", a.Kmax}, {"samples", a.samples}});
    if (a.samples == 0) throw config_error("--samples must be positive");
    const auto results = per_sample<ShrinkingResult>(a.samples, c.workers, [&](std::size_t i) {
      return shrinking_hit_experiment(*a.eta, haar_point(c.seed, i), v, a.Kmax);
    });
    csv << "index,found,T0,lastMiss,exactHits\n";
    std::size_t found = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& res = results[i];
      csv << i << ',' << (res.T0 ? 1 : 0) << ',' << (res.T0 ? *res.T0 : -1) << ',' << res.lastMiss << ','
          << res.exactHitTimes.size() << '\n';
      r.perSample.push_back({{"found", res.T0.has_value()},
                             {"T0", res.T0 ? json(*res.T0) : json()},
                             {"lastMiss", res.lastMiss},
                             {"exactHitTimes", res.exactHitTimes}});
      found += res.T0.has_value();
    }
    r.summary = {{"fractionFound", double(found) / double(results.size())}};
  } else {
    const TargetSpec spec = TargetSpec::make(v, a.delta);
    const HomPoint x = a.x.empty() ? haar_point(c.seed, static_cast<std::uint64_t>(a.index)) : to_hom(parse_matrix(a.x));
    config.update({{"delta", a.delta}, {"T", a.T}});
    if (a.x.empty())
      config["index"] = a.index;
    else
      config["x"] = a.x;
    const HitSet hs = hit_set(x, spec, a.T);
    csv << "k\n";
    for (i64 k : hs.ks) csv << k << '\n';
    r.perSample = hs.ks;
    r.summary = {{"K", hs.K}, {"hits", hs.ks.size()}, {"point", to_string(x)}};
  }
  r.csv = csv.str();
  emit(c, config, r, out);
  return kExitOk;
}

struct ErgodicArgs {
  std::string v = "1.3,0.8", budgets;
  double delta = 0.1;
  std::size_t samples = 10000;
};

inline int cmd_ergodic_variance(const Common& c, const ErgodicArgs& a, std::ostream& out) {
  const TargetSpec spec = TargetSpec::make(parse_point(a.v, "--v"), a.delta);
  const std::vector<i64> Ts = integer_grid(a.budgets.empty() ? "64:16384:2" : a.budgets);
  json config = base_config("ergodic-variance", c);
  config.update({{"target", spec.to_json()}, {"Ts", Ts}, {"samples", a.samples}});
  const VarianceCurve vc = variance_curve(spec, Ts, a.samples, c.seed, c.workers);
  Report r;
  std::ostringstream csv;
  write_curve_csv(csv, vc);
  r.csv = csv.str();
  for (std::size_t j = 0; j < Ts.size(); ++j)
    r.perSample.push_back({{"T", Ts[j]}, {"value", vc.variances[j]}, {"stderr", vc.stderrs[j]}});
  r.summary = {{"mean", vc.mean}, {"slope", Ts.size() > 1 ? json(vc.slope()) : json()}};
  emit(c, config, r, out);
  return kExitOk;
}

inline int cmd_miss_rate(const Common& c, const ErgodicArgs& a, std::ostream& out) {
  const TargetSpec spec = TargetSpec::make(parse_point(a.v, "--v"), a.delta);
  const std::vector<i64> Ts = integer_grid(a.budgets.empty() ? "16:4096:2" : a.budgets);
  json config = base_config("miss-rate", c);
  config.update({{"target", spec.to_json()}, {"Ts", Ts}, {"samples", a.samples}});
  const std::vector<MissRate> rates = miss_rate_curve(Ts, spec, a.samples, c.seed, c.workers);
  Report r;
  std::ostringstream csv;
  write_curve_csv(csv, rates);
  r.csv = csv.str();
  std::vector<double> x, y;
  for (const MissRate& m : rates) {
    r.perSample.push_back({{"T", m.T}, {"value", m.fraction}, {"stderr", m.stderr_()}, {"lo", m.lo}, {"hi", m.hi}});
    if (m.fraction < 0.5) {
      x.push_back(double(m.T));
      y.push_back(m.fraction);
    }
  }
  json slope;
  try {
    slope = loglog_slope(x, y);
  } catch (const insufficient_data&) {
  }
  r.summary = {{"slopeBelowHalf", slope}};
  emit(c, config, r, out);
  return kExitOk;
}

inline int cmd_matcoef(const Common& c, const ErgodicArgs& a, std::ostream& out) {
  const TargetSpec spec = TargetSpec::make(parse_point(a.v, "--v"), a.delta);
  const std::vector<double> ts = parse_budgets(a.budgets.empty() ? "16:4096:2" : a.budgets);
  json config = base_config("matcoef", c);
  config.update({{"target", spec.to_json()}, {"ts", ts}, {"samples", a.samples}});
  const std::vector<MatrixCoefficient> cs = matrix_coefficients(spec, ts, a.samples, c.seed, c.workers);
  Report r;
  std::ostringstream csv;
  write_curve_csv(csv, cs);
  r.csv = csv.str();
  for (const auto& m : cs) r.perSample.push_back({{"t", m.t}, {"value", m.value}, {"stderr", m.stderr_}});
  emit(c, config, r, out);
  return kExitOk;
}

// --- entry point ---------------------------------------------------------------------

inline void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
  sub->add_option("--workers", c.workers, "worker threads (0 = all cores)")->capture_default_str();
  sub->add_option("--out", c.out, "output file (default stdout)");
  sub->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

/// Runs the command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"orbitlab: lattice orbit approximation and horocycle experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  std::function<int()> action;

  EnumerateArgs en;
  auto* s_en = app.add_subcommand("enumerate", "count (and list) Gamma_T");
  s_en->add_option("--T", en.T, "trace-norm budget")->required();
  s_en->add_option("--filter", en.filter, "full, gamma0:N or gamma:N")->capture_default_str();
  add_common(s_en, common);
  s_en->callback([&] { action = [&] { return cmd_enumerate(common, en, out); }; });

  ApproxArgs ap;
  double apT = 0;
  auto* s_ap = app.add_subcommand("approx", "best approximation d(T) of v by the orbit of u");
  s_ap->add_option("--u", ap.u)->required();
  s_ap->add_option("--v", ap.v)->required();
  auto* apTopt = s_ap->add_option("--T", apT, "single budget");
  s_ap->add_option("--budgets", ap.budgets, "geometric grid lo:hi:ratio");
  s_ap->add_option("--filter", ap.filter)->capture_default_str();
  add_common(s_ap, common);
  s_ap->callback([&] {
    if (apTopt->count() > 0) ap.T = apT;
    action = [&] { return cmd_approx(common, ap, out); };
  });

  ExponentArgs ex;
  auto* s_ex = app.add_subcommand("exponent", "exponent estimates from a budget trace");
  s_ex->add_option("--u", ex.u);
  s_ex->add_option("--v", ex.v);
  s_ex->add_option("--budgets", ex.budgets)->capture_default_str();
  s_ex->add_option("--replay", ex.replay, "trace CSV to estimate from instead of searching");
  s_ex->add_option("--filter", ex.filter)->capture_default_str();
  s_ex->add_option("--tail", ex.tail, "tail fraction of log T")->capture_default_str();
  s_ex->add_option("--tau", ex.tau)->capture_default_str();
  add_common(s_ex, common);
  s_ex->callback([&] {
    if (ex.replay.empty() && (ex.u.empty() || ex.v.empty())) throw config_error("exponent needs --u and --v, or --replay");
    action = [&] { return cmd_exponent(common, ex, out); };
  });

  SurveyArgs sv;
  auto* s_sv = app.add_subcommand("survey", "exponent survey (part 1) or uniform grid experiment (part 2)");
  s_sv->add_option("--part", sv.part)->capture_default_str();
  s_sv->add_option("--samples", sv.samples)->capture_default_str();
  s_sv->add_option("--v", sv.v, "fixed target (part 1); random when absent");
  s_sv->add_option("--budgets", sv.budgets)->capture_default_str();
  s_sv->add_option("--filter", sv.filter)->capture_default_str();
  s_sv->add_option("--tail", sv.tail)->capture_default_str();
  s_sv->add_option("--tau", sv.tau)->capture_default_str();
  s_sv->add_option("--omega", sv.omega, "x0,x1,y0,y1")->capture_default_str();
  s_sv->add_option("--eta", sv.eta)->capture_default_str();
  s_sv->add_option("--Kmax", sv.Kmax)->capture_default_str();
  add_common(s_sv, common);
  s_sv->callback([&] { action = [&] { return cmd_survey(common, sv, out); }; });

  HitTimesArgs ht;
  double eta = 0;
  auto* s_ht = app.add_subcommand("hit-times", "hit set of one orbit, or shrinking-target runs with --eta");
  s_ht->add_option("--v", ht.v)->capture_default_str();
  s_ht->add_option("--delta", ht.delta)->capture_default_str();
  s_ht->add_option("--T", ht.T, "horizon K")->capture_default_str();
  s_ht->add_option("--x", ht.x, "representative a,b,c,d (default: Haar sample)");
  s_ht->add_option("--index", ht.index, "Haar sample index")->capture_default_str();
  auto* eta_opt = s_ht->add_option("--eta", eta, "shrinking exponent");
  s_ht->add_option("--Kmax", ht.Kmax)->capture_default_str();
  s_ht->add_option("--samples", ht.samples)->capture_default_str();
  add_common(s_ht, common);
  s_ht->callback([&] {
    if (eta_opt->count() > 0) ht.eta = eta;
    action = [&] { return cmd_hit_times(common, ht, out); };
  });

  ErgodicArgs ev, mr, mc;
  mr.delta = 0.2;
  auto add_ergodic = [&](CLI::App* s, ErgodicArgs& e, const char* grid) {
    s->add_option("--v", e.v)->capture_default_str();
    s->add_option("--delta", e.delta)->capture_default_str();
    s->add_option("--budgets", e.budgets, std::string("grid lo:hi:ratio (default ") + grid + ")");
    s->add_option("--samples", e.samples)->capture_default_str();
    add_common(s, common);
  };
  auto* s_ev = app.add_subcommand("ergodic-variance", "variance of the horocycle averages of F_delta");
  add_ergodic(s_ev, ev, "64:16384:2");
  s_ev->callback([&] { action = [&] { return cmd_ergodic_variance(common, ev, out); }; });
  auto* s_mr = app.add_subcommand("miss-rate", "fraction of orbits missing B_delta");
  add_ergodic(s_mr, mr, "16:4096:2");
  s_mr->callback([&] { action = [&] { return cmd_miss_rate(common, mr, out); }; });
  auto* s_mc = app.add_subcommand("matcoef", "matrix coefficients of F_delta along nbar_t");
  add_ergodic(s_mc, mc, "16:4096:2");
  s_mc->callback([&] { action = [&] { return cmd_matcoef(common, mc, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "orbitlab: " << e.what() << '\n';
    return kExitConfig;
  } catch (const config_error& e) {
    err << "orbitlab: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (common.workers == 0) common.workers = resolve_workers(0);
    return action();
  } catch (const numerical_error& e) {
    err << "orbitlab: numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const insufficient_data& e) {
    err << "orbitlab: numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const error& e) {
    err << "orbitlab: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "orbitlab: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace orbitlab::cli
