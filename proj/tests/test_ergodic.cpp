#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "orbitlab/ergodic.hpp"

using namespace orbitlab;

namespace {

RealMatrix from_bdx(double b, double d, double xp) { return recompose(NANbarCoords{b / d, 1 / (d * d), xp, 1}); }

const TargetSpec kSpec = TargetSpec::make({1.3, 0.8}, 0.2);

}  // namespace

TEST(Beta, ConstantAndSingleTerm) {
  const HomPoint x = haar_point(1, 0);
  EXPECT_EQ(beta_T([](const HomPoint&) { return 1.0; }, x, 25), 1.0);
  EXPECT_EQ(beta_T([&](const HomPoint& p) { return bump_F(p, kSpec); }, x, 0), bump_F(x, kSpec));
  EXPECT_THROW(beta_T([](const HomPoint&) { return 1.0; }, x, -1), config_error);
}

TEST(Beta, LinearAndBounded) {
  auto F = [](const HomPoint& p) { return bump_F(p, kSpec); };
  auto G = [](const HomPoint& p) { return p.z().imag(); };
  for (std::uint64_t i = 0; i < 20; ++i) {
    const HomPoint x = haar_point(2, i);
    const double a = 2.5, b = -0.75;
    const double lhs = beta_T([&](const HomPoint& p) { return a * F(p) + b * G(p); }, x, 30);
    const double rhs = a * beta_T(F, x, 30) + b * beta_T(G, x, 30);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1 + std::abs(lhs)));
    double lo = INFINITY, hi = -INFINITY;
    for (int k = -30; k <= 30; ++k) {
      const double v = G(translate(x, k));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double bg = beta_T(G, x, 30);
    EXPECT_GE(bg, lo);
    EXPECT_LE(bg, hi);
  }
}

TEST(Beta, DualityRouteMatchesReReduction) {
  auto F = [](const HomPoint& p) { return bump_F(p, kSpec); };
  for (std::uint64_t i = 0; i < 40; ++i) {
    const HomPoint x = haar_point(3, i);
    const double direct = beta_T(F, x, 40);
    EXPECT_NEAR(beta_T_bump(x, kSpec, 40), direct, 1e-9 * (1 + direct)) << i;
  }
}

TEST(HitSet, MatchesTranslateBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.5, 2.0), D(0.05, 0.3);
  for (std::uint64_t i = 0; i < 6; ++i) {
    const TargetSpec s = TargetSpec::make({U(rng), U(rng)}, D(rng));
    const HomPoint x = haar_point(4, i);
    EXPECT_EQ(hit_set(x, s, 200).ks, oracle::hit_set_by_translates(x, s, 200)) << i;
  }
}

TEST(HitSet, SortedUniqueMonotoneAndRechecked) {
  const HomPoint x = haar_point(5, 7);
  const HitSet small = hit_set(x, kSpec, 300), big = hit_set(x, kSpec, 3000);
  EXPECT_TRUE(std::is_sorted(big.ks.begin(), big.ks.end()));
  EXPECT_EQ(std::adjacent_find(big.ks.begin(), big.ks.end()), big.ks.end());
  for (i64 k : small.ks) EXPECT_TRUE(std::binary_search(big.ks.begin(), big.ks.end(), k));
  for (i64 k : big.ks) EXPECT_TRUE(in_shrunk_orbit_target(translate(x, double(k)), kSpec)) << k;
}

TEST(HitSet, CentreAndEmpty) {
  const HomPoint centre = to_hom(from_bdx(1.3, 0.8, 0));
  const HitSet hs = hit_set(centre, TargetSpec::make({1.3, 0.8}, 0.01), 10);
  EXPECT_TRUE(std::binary_search(hs.ks.begin(), hs.ks.end(), 0));
  // identity: gamma u = (b, d) is an integer vector, never in the box around (0.5, 0.5)
  EXPECT_TRUE(hit_set(HomPoint{RealMatrix{}}, TargetSpec::make({0.5, 0.5}, 0.2), 1000).ks.empty());
  EXPECT_THROW(hit_set(centre, kSpec, 0), config_error);
}

TEST(Variance, NonnegativeDecreasingReproducible) {
  const std::vector<i64> Ts{0, 4, 16, 64, 256};
  const VarianceCurve a = variance_curve(kSpec, Ts, 2000, 9, 1);
  const VarianceCurve b = variance_curve(kSpec, Ts, 2000, 9, 1);
  const VarianceCurve c = variance_curve(kSpec, Ts, 2000, 9, 3);
  EXPECT_EQ(a.variances, b.variances);
  EXPECT_EQ(a.stderrs, b.stderrs);
  for (std::size_t j = 0; j < Ts.size(); ++j) {
    EXPECT_GE(a.variances[j], 0);
    EXPECT_GT(a.stderrs[j], 0);
    EXPECT_NEAR(c.variances[j], a.variances[j], 1e-9 * a.variances[j]);
  }
  const double drop = a.variances.front() - a.variances.back();
  EXPECT_GT(drop, 3 * std::hypot(a.stderrs.front(), a.stderrs.back()));
  EXPECT_THROW(variance_curve(kSpec, Ts, 999, 9), config_error);
}

TEST(MatrixCoefficient, ZeroLagIsVariance) {
  const MatrixCoefficient m0 = matrix_coefficient(kSpec, 0, 2000, 11);
  const VarianceCurve v = variance_curve(kSpec, {0}, 2000, 11);
  EXPECT_GT(m0.value, 0);
  EXPECT_NEAR(m0.value, v.variances[0], 1e-12 * v.variances[0]);
}

TEST(MatrixCoefficient, Decays) {
  const auto cs = matrix_coefficients(kSpec, {16, 1024}, 20000, 12);
  EXPECT_LE(std::abs(cs[1].value), std::abs(cs[0].value) + 3 * std::hypot(cs[0].stderr_, cs[1].stderr_));
}

TEST(MissRate, IntervalsAndMonotonicity) {
  const std::vector<i64> Ts{8, 32, 128, 512};
  const auto rates = miss_rate_curve(Ts, kSpec, 2000, 13);
  for (std::size_t j = 0; j < rates.size(); ++j) {
    EXPECT_GE(rates[j].fraction, 0);
    EXPECT_LE(rates[j].fraction, 1);
    EXPECT_LE(rates[j].lo, rates[j].fraction);
    EXPECT_GE(rates[j].hi, rates[j].fraction);
    if (j > 0) {
      EXPECT_LE(rates[j].fraction, rates[j - 1].fraction);
    }
  }
  // smaller targets are missed at least as often
  const MissRate big = miss_rate(128, 0.2, {1.3, 0.8}, 2000, 13);
  const MissRate small = miss_rate(128, 0.05, {1.3, 0.8}, 2000, 13);
  EXPECT_GE(small.fraction, big.fraction);
  EXPECT_EQ(big.fraction, rates[2].fraction);
}

TEST(MissRate, Wilson) {
  const MissRate r = make_miss_rate(10, 0.1, 0, 1000);
  EXPECT_NEAR(r.lo, 0, 1e-15);
  EXPECT_NEAR(r.hi, 0.00382, 1e-4);
  const MissRate h = make_miss_rate(10, 0.1, 500, 1000);
  EXPECT_NEAR(h.lo, 0.469, 1e-3);
  EXPECT_NEAR(h.hi, 0.531, 1e-3);
}

TEST(Shrinking, ConstantTargetKeepsBeingHit) {
  // eta = 0: every dyadic window of times sees a hit
  const HomPoint x = haar_point(14, 0);
  const HitSet hs = hit_set(x, kSpec, 1 << 14);
  for (i64 lo = 512; lo < (1 << 14); lo *= 2) {
    const auto n = std::count_if(hs.ks.begin(), hs.ks.end(), [&](i64 k) { return std::abs(k) >= lo && std::abs(k) < 2 * lo; });
    EXPECT_GT(n, 0) << lo;
  }
}

TEST(Shrinking, AdmissibleStart) {
  EXPECT_EQ(first_admissible_k(0.5, 0.5), 5);  // 4^-0.5 = 0.5 is not < 0.5
  EXPECT_EQ(first_admissible_k(0.25, 0.5), 17);
  const auto r = shrinking_hit_experiment(0.25, haar_point(15, 0), {1.3, 0.8}, 20000);
  EXPECT_EQ(r.kStart, 17);
  EXPECT_THROW(shrinking_hit_experiment(1.0, haar_point(15, 0), {1.3, 0.8}, 100), config_error);
}

TEST(Shrinking, HitsAgreeWithHitSets) {
  const double eta = 0.3;
  const PlanePoint v{1.3, 0.8};
  const HomPoint x = haar_point(16, 3);
  const i64 K = 3000;
  const ShrinkingResult r = shrinking_hit_experiment(eta, x, v, K);
  // O_k hits B_{k^-eta} iff some |l| <= k hits it
  i64 last_miss = 0;
  for (i64 k = r.kStart; k <= K; k += 97) {
    const HitSet hs = hit_set(x, TargetSpec::make(v, shrinking_delta(eta, k)), k);
    const bool hit = !hs.ks.empty();
    if (!hit) last_miss = std::max(last_miss, k);
    if (k > r.lastMiss) {
      EXPECT_TRUE(hit) << k;
    }
  }
  EXPECT_LE(last_miss, r.lastMiss);
  for (i64 l : r.exactHitTimes) {
    const i64 a = std::abs(l);
    EXPECT_TRUE(in_shrunk_orbit_target(translate(x, double(l)), TargetSpec::make(v, shrinking_delta(eta, a))));
  }
}

TEST(UniformGrid, SinglePointReduces) {
  for (std::uint64_t i = 0; i < 5; ++i) {
    const HomPoint x = haar_point(17, i);
    const auto a = shrinking_hit_experiment(0.2, x, {1.5, 1.25}, 30000);
    const auto b = uniform_grid_experiment(Rect{1.5, 1.5, 1.25, 1.25}, 0.2, x, 30000);
    EXPECT_EQ(a.T0, b.T0);
    EXPECT_EQ(a.lastMiss, b.lastMiss);
  }
}

TEST(UniformGrid, GridCoversOmega) {
  const auto r = uniform_grid_experiment(Rect{1, 2, 1, 2}, 0.15, haar_point(18, 0), 20000);
  ASSERT_FALSE(r.blocks.empty());
  for (const auto& b : r.blocks) {
    EXPECT_LE(b.spacing, shrinking_delta(0.15, b.kHi) * (1 + 1e-12));
    const auto n = grid_axis(1, 2, b.spacing).size();
    EXPECT_EQ(b.points, n * n);
    EXPECT_LE(1.0 / double(n - 1), b.spacing);
  }
}

TEST(UniformGrid, RefinementStaysWithinStabilitySlack) {
  // a hit of B_delta(v_i) is a hit of B_{2 delta}(v) for |v - v_i|_inf <= delta/2
  const HomPoint x = haar_point(19, 0);
  const double delta = 0.1;
  const auto coarse = grid_axis(1, 2, delta);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  for (double gx : coarse)
    for (double gy : coarse) {
      const PlanePoint vi{gx, gy}, v{gx + delta * U(rng), gy + delta * U(rng)};
      const HitSet fine = hit_set(x, TargetSpec::make(vi, delta), 2000);
      const HitSet wide = hit_set(x, TargetSpec::make(v, 2 * delta), 2000);
      for (i64 k : fine.ks) EXPECT_TRUE(std::binary_search(wide.ks.begin(), wide.ks.end(), k));
    }
}

TEST(Rect, ParseAndNormalise) {
  const Rect r = Rect::parse("1,2,-3,-1").normalised();
  EXPECT_EQ(r.x0, -2);
  EXPECT_EQ(r.y0, 1);
  EXPECT_THROW(Rect::parse("1,2,3"), config_error);
  EXPECT_THROW(Rect::parse("-1,2,1,2").normalised(), config_error);
  EXPECT_THROW(Rect::parse("2,1,1,2").normalised(), config_error);
}

TEST(Output, CurveCsv) {
  const VarianceCurve v = variance_curve(kSpec, {0, 8}, 1000, 20);
  std::ostringstream os;
  write_curve_csv(os, v);
  EXPECT_EQ(os.str().substr(0, 15), "T,value,stderr\n");
}
