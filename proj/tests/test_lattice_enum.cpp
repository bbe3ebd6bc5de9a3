#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <tuple>

#include "oracles.hpp"
#include "orbitlab/lattice_enum.hpp"

using namespace orbitlab;

TEST(Enumerate, MatchesBruteForceSmallBudgets) {
  for (i64 T = 0; T <= 30; ++T) {
    const auto got = enumerate(double(T));
    const std::set<LatticeElement> as_set(got.begin(), got.end());
    EXPECT_EQ(as_set.size(), got.size()) << "duplicates at T=" << T;
    EXPECT_EQ(as_set, oracle::brute_gamma(T)) << "T=" << T;
    EXPECT_EQ(count(double(T)), got.size());
  }
}

TEST(Enumerate, KnownCounts) {
  EXPECT_EQ(count(1), 0u);
  EXPECT_EQ(count(2), 4u);
  EXPECT_EQ(count(3), 20u);
  EXPECT_EQ(count(2.9), 4u);  // budgets are floored
}

TEST(Enumerate, EveryElementValidAndWithinBudget) {
  for (const auto& g : enumerate(400)) {
    EXPECT_TRUE(g.valid());
    EXPECT_LE(hs_norm(g), 400);
  }
}

TEST(Enumerate, CanonicalOrder) {
  const auto all = enumerate(300);
  for (std::size_t i = 1; i < all.size(); ++i) {
    const auto& p = all[i - 1];
    const auto& q = all[i];
    const auto kp = std::tuple(p.a * p.a + p.c * p.c, p.a, p.c);
    const auto kq = std::tuple(q.a * q.a + q.c * q.c, q.a, q.c);
    ASSERT_LE(kp, kq);
  }
}

TEST(Enumerate, WorkerCountDoesNotChangeOutput) {
  EXPECT_EQ(enumerate(5000, {}, 1), enumerate(5000, {}, 4));
  EXPECT_EQ(count(200000, {}, 1), count(200000, {}, 3));
}

TEST(Enumerate, FiltersMatchBruteForce) {
  for (const char* spec : {"gamma0:2", "gamma0:3", "gamma:2", "gamma:3", "gamma:5"}) {
    const auto filter = SubgroupFilter::parse(spec);
    for (i64 T : {2, 10, 37, 60}) {
      std::set<LatticeElement> expect;
      for (const auto& g : oracle::brute_gamma(T))
        if (filter.keeps(g)) expect.insert(g);
      const auto got = enumerate(double(T), filter);
      EXPECT_EQ(std::set<LatticeElement>(got.begin(), got.end()), expect) << spec << " T=" << T;
      EXPECT_EQ(count(double(T), filter), expect.size());
    }
  }
}

TEST(Enumerate, Gamma0TwoAtHundred) {
  std::uint64_t even = 0;
  for (const auto& g : enumerate(100))
    if (g.c % 2 == 0) ++even;
  EXPECT_EQ(count(100, SubgroupFilter::gamma0(2)), even);
}

TEST(Enumerate, LinearGrowthInTraceNorm) {
  for (double T : {1e4, 1e5, 1e6}) {
    const double ratio = double(count(T)) / T;
    EXPECT_NEAR(ratio, 6.0, 0.2) << T;
  }
}

TEST(Enumerate, CanonicalBezout) {
  for (i64 a = -30; a <= 30; ++a)
    for (i64 c = -30; c <= 30; ++c) {
      if (std::gcd(a, c) != 1) continue;
      const auto [b0, d0] = canonical_bezout(a, c);
      ASSERT_EQ(a * d0 - c * b0, 1);
      // no other solution (b0 + k a, d0 + k c) is shorter
      for (i64 k = -3; k <= 3; ++k) {
        const i64 b = b0 + k * a, d = d0 + k * c;
        EXPECT_GE(b * b + d * d, b0 * b0 + d0 * d0);
      }
    }
}

TEST(Enumerate, BudgetOverflow) {
  EXPECT_THROW(count(1e19), budget_overflow);
  EXPECT_NO_THROW(budget_to_integer(1e18));
}

TEST(Enumerate, FilterParsing) {
  EXPECT_EQ(SubgroupFilter::parse("full"), SubgroupFilter::full());
  EXPECT_EQ(SubgroupFilter::parse("gamma0:4").to_string(), "gamma0:4");
  EXPECT_THROW(SubgroupFilter::parse("gamma0:"), config_error);
  EXPECT_THROW(SubgroupFilter::parse("gamma1:3"), config_error);
  EXPECT_THROW(SubgroupFilter::parse("gamma:0"), config_error);
}

TEST(Enumerate, DumpRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "orbitlab_dump_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "g.bin").string();
  const auto f = SubgroupFilter::gamma0(3);
  const auto all = enumerate(500, f);
  write_dump(path, 500, f, all);
  const auto back = read_dump(path, 500, f);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(*back, all);
  EXPECT_FALSE(read_dump(path, 501, f).has_value());
  EXPECT_FALSE(read_dump(path, 500, SubgroupFilter::full()).has_value());
  std::filesystem::remove_all(dir);
}
