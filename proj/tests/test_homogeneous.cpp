#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <random>
#include <set>

#include "oracles.hpp"
#include "orbitlab/homogeneous.hpp"

using namespace orbitlab;

namespace {

bool in_fundamental_domain(std::complex<double> z) {
  return std::abs(z.real()) <= 0.5 + 1e-12 && std::norm(z) >= 1 - 1e-12;
}

RealMatrix random_sl2(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(-5, 5), logy(-5, 5), th(0, 2 * std::numbers::pi);
  return recompose(NAKCoords{x(rng), std::exp(logy(rng)), th(rng)});
}

LatticeElement random_gamma(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 3);
  LatticeElement g{};
  for (int i = 0; i < 8; ++i) {
    switch (pick(rng)) {
      case 0: g = LatticeElement{1, 1, 0, 1} * g; break;
      case 1: g = LatticeElement{1, -1, 0, 1} * g; break;
      case 2: g = LatticeElement{0, -1, 1, 0} * g; break;
      default: g = LatticeElement{1, 0, 1, 1} * g; break;
    }
  }
  return g;
}

/// A point of A_delta(v) from (b, d, x') coordinates.
RealMatrix from_bdx(double b, double d, double xp) {
  const double y = 1 / (d * d);
  return recompose(NANbarCoords{b / d, y, xp, 1});
}

}  // namespace

TEST(Reduce, LandsInFundamentalDomain) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 5000; ++i) {
    const RealMatrix g = random_sl2(rng);
    const auto [x, gamma] = reduce(g);
    EXPECT_TRUE(gamma.valid());
    EXPECT_TRUE(in_fundamental_domain(x.z())) << x.z();
    EXPECT_LE(relative_error(x.rep, gamma * g), 1e-15);
  }
}

TEST(Reduce, IsGammaInvariantUpToSign) {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 2000; ++i) {
    const RealMatrix g = random_sl2(rng);
    const HomPoint x = to_hom(g), y = to_hom(random_gamma(rng) * g);
    const double e = std::min(relative_error(x.rep, y.rep), relative_error(-x.rep, y.rep));
    EXPECT_LE(e, 1e-9);
  }
}

TEST(Reduce, RejectsNonUnimodular) { EXPECT_THROW(reduce(RealMatrix{2, 0, 0, 2}), config_error); }

TEST(Haar, MomentsMatchQuadrature) {
  const std::size_t n = 200000;
  double inv_y = 0, inv_y2 = 0, above = 0, x2 = 0, x2sq = 0, cos_t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const HomPoint p = haar_point(5, i);
    const NAKCoords c = decompose_nak(p.rep);
    ASSERT_TRUE(in_fundamental_domain({c.x, c.y}));
    inv_y += 1 / c.y;
    inv_y2 += 1 / (c.y * c.y);
    above += c.y > 2;
    x2 += c.x * c.x;
    x2sq += std::pow(c.x, 4);
    cos_t += std::cos(c.theta);
  }
  const double N = double(n);
  const double m1 = inv_y / N, s1 = std::sqrt((inv_y2 / N - m1 * m1) / N);
  EXPECT_NEAR(m1, oracle::haar_mean_inverse_y(), 3 * s1);
  const double p = above / N;
  EXPECT_NEAR(p, oracle::haar_prob_y_above(2), 3 * std::sqrt(p * (1 - p) / N));
  const double mx = x2 / N;
  EXPECT_NEAR(mx, oracle::haar_mean_x_squared(), 3 * std::sqrt((x2sq / N - mx * mx) / N));
  EXPECT_NEAR(cos_t / N, 0, 3 * std::sqrt(0.5 / N));
}

TEST(Haar, CountersAreStable) {
  const HomPoint a = haar_point(9, 123), b = haar_point(9, 123);
  EXPECT_EQ(a.rep, b.rep);
  EXPECT_NE(haar_point(9, 124).rep, a.rep);
  EXPECT_EQ(haar_sample(10, 9)[3].rep, haar_point(9, 3).rep);
}

TEST(Target, Validation) {
  EXPECT_THROW(TargetSpec::make({0, 1}, 0.1), config_error);
  EXPECT_THROW(TargetSpec::make({1, 0}, 0.1), config_error);
  EXPECT_THROW(TargetSpec::make({1, 1}, 0.5), config_error);
  EXPECT_THROW(TargetSpec::make({1, 1}, 0), config_error);
  EXPECT_THROW(TargetSpec::make({1, 0.05}, 0.1), config_error);
  const TargetSpec s = TargetSpec::make({-1.3, -0.8}, 0.1);
  EXPECT_EQ(s.v, (PlanePoint{1.3, 0.8}));
  EXPECT_EQ(TargetSpec::from_json(s.to_json()).v, s.v);
}

TEST(Target, MembershipBoundaries) {
  const TargetSpec s = TargetSpec::make({1.3, 0.8}, 0.2);
  EXPECT_TRUE(in_target(from_bdx(1.3, 0.8, 0), s));
  EXPECT_TRUE(in_target(from_bdx(1.3, 0.8, 0.49), s));
  EXPECT_FALSE(in_target(from_bdx(1.3, 0.8, 0.51), s));
  EXPECT_TRUE(in_target(from_bdx(1.25, 0.75, 0), s));
  EXPECT_FALSE(in_target(from_bdx(1.41, 0.8, 0), s));
  EXPECT_FALSE(in_target(-from_bdx(1.3, 0.8, 0), s));  // d < 0
  // -g for g in the box lies in the same coset
  EXPECT_TRUE(in_shrunk_orbit_target(to_hom(-from_bdx(1.3, 0.8, 0.2)), s));
}

TEST(Target, NormBoundCoversBox) {
  const TargetSpec s = TargetSpec::make({-1.7, 0.9}, 0.3);
  const double R = target_norm_bound(s);
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  for (int i = 0; i < 10000; ++i) {
    const RealMatrix h = from_bdx(s.v.v1 + s.delta * U(rng), s.v.v2 + s.delta * U(rng), U(rng));
    EXPECT_LE(hs_norm(h), R);
  }
}

TEST(Target, DualitySearchMatchesNormSearch) {
  const TargetSpec s = TargetSpec::make({0.7, 1.3}, 0.2);
  for (std::uint64_t i = 0; i < 3000; ++i) {
    const HomPoint x = haar_point(42, i);
    std::set<LatticeElement> by_norm, by_rows;
    for (const auto& g : target_elements_by_norm(x, s)) by_norm.insert(g);
    for (const auto& c : box_candidates(x.rep, s, -0.5, 0.5))
      if (in_target(c.gamma * x.rep, s)) by_rows.insert(c.gamma);
    ASSERT_EQ(by_norm, by_rows) << i;
  }
}

TEST(Target, CentrePointIsInside) {
  const TargetSpec s = TargetSpec::make({1.3, 0.8}, 0.05);
  const HomPoint x = to_hom(from_bdx(1.3, 0.8, 0));
  EXPECT_TRUE(in_shrunk_orbit_target(x, s));
}

TEST(Target, MeasureByMonteCarlo) {
  const TargetSpec s = TargetSpec::make({1.3, 0.8}, 0.2);
  const std::size_t n = 100000;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += in_shrunk_orbit_target(haar_point(77, i), s);
  const double p = double(hits) / double(n);
  EXPECT_NEAR(p, target_measure(s), 3 * std::sqrt(p * (1 - p) / double(n)));
  EXPECT_NEAR(kCovolume, 2 * std::numbers::pi * oracle::fundamental_area() / 2, 1e-12);
}

TEST(Target, StabilityWithHalfRadiusShift) {
  // B_delta(v) ⊆ B_{2 delta}(w) whenever |v - w|_inf <= delta / 2
  const TargetSpec s = TargetSpec::make({1.3, 0.8}, 0.1);
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  for (int i = 0; i < 500; ++i) {
    const RealMatrix h = from_bdx(s.v.v1 + s.delta * U(rng), s.v.v2 + s.delta * U(rng), U(rng));
    const HomPoint x = to_hom(random_gamma(rng) * h);
    ASSERT_TRUE(in_shrunk_orbit_target(x, s));
    const PlanePoint w{s.v.v1 + s.delta * U(rng), s.v.v2 + s.delta * U(rng)};
    EXPECT_TRUE(in_shrunk_orbit_target(x, TargetSpec::make(w, 2 * s.delta)));
  }
}

TEST(Target, StabilityFailsForFullRadiusShift) {
  // the box is not a disc: a corner point escapes B_{2 delta}(w) once |v - w| is close to delta
  const TargetSpec s = TargetSpec::make({1.3, 0.8}, 0.1);
  const HomPoint x = to_hom(from_bdx(1.3 + 0.049, 0.8, 0));
  const PlanePoint w{1.3 - 0.099, 0.8};
  EXPECT_LT((s.v - w).norm(), s.delta);
  EXPECT_TRUE(in_shrunk_orbit_target(x, s));
  EXPECT_FALSE(in_shrunk_orbit_target(x, TargetSpec::make(w, 2 * s.delta)));
}

TEST(Bump, UnitMassAndSupport) {
  boost::math::quadrature::tanh_sinh<double> ts;
  EXPECT_NEAR(ts.integrate([](double t) { return BumpProfile::rho(t); }, -0.5, 0.5), 1.0, 1e-12);
  EXPECT_EQ(BumpProfile::rho(0.5), 0.0);
  EXPECT_EQ(BumpProfile::rho(-0.7), 0.0);
  EXPECT_GT(BumpProfile::rho(0.49), 0.0);
  EXPECT_EQ(BumpProfile::rho(0.2), BumpProfile::rho(-0.2));
}

TEST(Bump, SupportedOnTarget) {
  const TargetSpec s = TargetSpec::make({1.3, 0.8}, 0.2);
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int i = 0; i < 20000; ++i) {
    const RealMatrix h = from_bdx(s.v.v1 + 0.2 * U(rng), s.v.v2 + 0.2 * U(rng), U(rng));
    if (f_delta(h, s) > 0) {
      EXPECT_TRUE(in_target(h, s));
    }
  }
}

TEST(Bump, BothRoutesAgree) {
  const TargetSpec s = TargetSpec::make({1.3, 0.8}, 0.2);
  for (std::uint64_t i = 0; i < 2000; ++i) {
    const HomPoint x = haar_point(36, i);
    EXPECT_NEAR(bump_F(x, s), bump_F_translated(x, s, 0), 1e-9 * (1 + bump_F(x, s)));
  }
}

TEST(Bump, MeanByQuadratureAndMonteCarlo) {
  const TargetSpec s = TargetSpec::make({1.3, 0.8}, 0.2);
  using boost::math::quadrature::gauss_kronrod;
  const double fb = gauss_kronrod<double, 61>::integrate(
      [&](double b) { return BumpProfile::rho((b - s.v.v1) / s.delta); }, s.v.v1 - 0.1, s.v.v1 + 0.1, 15, 1e-14);
  const double fd = gauss_kronrod<double, 61>::integrate(
      [&](double d) { return BumpProfile::rho((d - s.v.v2) / s.delta); }, s.v.v2 - 0.1, s.v.v2 + 0.1, 15, 1e-14);
  const double fx = gauss_kronrod<double, 61>::integrate([](double t) { return BumpProfile::rho(t); }, -0.5, 0.5, 15,
                                                         1e-14);
  EXPECT_NEAR(bump_mean(s), 2 * fb * fd * fx / kCovolume, 1e-12);

  const std::size_t n = 200000;
  double m = 0, m2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double F = bump_F_translated(haar_point(37, i), s, 0);
    m += F;
    m2 += F * F;
  }
  m /= double(n);
  const double se = std::sqrt((m2 / double(n) - m * m) / double(n));
  EXPECT_NEAR(m, bump_mean(s), 4 * se);
}

TEST(HomPoint, StringRoundTrip) {
  const HomPoint x = haar_point(1, 1);
  EXPECT_EQ(hom_point_from_string(to_string(x)).rep, x.rep);
  EXPECT_THROW(hom_point_from_string("1 2 3"), config_error);
}
