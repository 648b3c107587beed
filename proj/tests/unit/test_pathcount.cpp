#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "test_util.hpp"
#include "ubalab/attackers.hpp"
#include "ubalab/pathcount.hpp"

namespace ubalab {
namespace {

using testing::MakeMatrix;
using testing::RandomMatrix;

// G0 = {u0:{i0,i1}, u1:{i1,i2}, u2:{i2}}.
InteractionMatrix G0() { return MakeMatrix(3, {{0, 1}, {1, 2}, {2}}); }

// Counts walks u -> i' -> u' -> i by enumerating every intermediate pair.
std::uint64_t EnumerateThreeWalks(const InteractionMatrix& m, UserIndex u, ItemIndex i) {
  std::uint64_t n = 0;
  for (ItemIndex a : m.row(u))
    for (std::size_t v = 0; v < m.num_users(); ++v)
      if (m.Likes(static_cast<UserIndex>(v), a) && m.Likes(static_cast<UserIndex>(v), i)) ++n;
  return n;
}

// Dense adjacency power by naive triple loops, users first then items.
std::vector<std::vector<std::uint64_t>> DensePower(const InteractionMatrix& m, int order) {
  const std::size_t nu = m.num_users(), n = nu + m.num_items();
  std::vector<std::vector<std::uint64_t>> a(n, std::vector<std::uint64_t>(n, 0));
  for (std::size_t u = 0; u < nu; ++u)
    for (ItemIndex i : m.row(static_cast<UserIndex>(u))) a[u][nu + i] = a[nu + i][u] = 1;
  auto p = a;
  for (int k = 1; k < order; ++k) {
    std::vector<std::vector<std::uint64_t>> q(n, std::vector<std::uint64_t>(n, 0));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < n; ++t) q[r][t] += p[r][s] * a[s][t];
    p = std::move(q);
  }
  return p;
}

PathQuery AllPairs(const InteractionMatrix& m, int order) {
  PathQuery q;
  q.order = order;
  for (UserIndex u = 0; u < m.num_users(); ++u)
    for (ItemIndex i = 0; i < m.num_items(); ++i) q.pairs.emplace_back(u, i);
  return q;
}

TEST(PathCounts, G0Examples) {
  const auto m = G0();
  EXPECT_EQ(PathCounts(m, {{{0, 2}}, 3}), std::vector<std::uint64_t>{1});
  EXPECT_EQ(EnumerateThreeWalks(m, 0, 2), 1u);
  EXPECT_EQ(PathCounts(m, {{{0, 0}, {0, 2}}, 1}), (std::vector<std::uint64_t>{1, 0}));
}

TEST(PathCounts, DisconnectedIsZero) {
  const auto m = MakeMatrix(4, {{0, 1}, {1}, {2, 3}});
  for (int order : {1, 3, 5, 7}) {
    EXPECT_EQ(PathCounts(m, {{{0, 3}, {2, 0}}, order}), (std::vector<std::uint64_t>{0, 0}));
  }
}

TEST(PathCounts, RejectsBadQueries) {
  const auto m = G0();
  EXPECT_THROW(PathCounts(m, {{{0, 0}}, 2}), ContractError);
  EXPECT_THROW(PathCounts(m, {{{3, 0}}, 3}), IndexError);
  EXPECT_THROW(PathCounts(m, {{{0, 3}}, 3}), IndexError);
  EXPECT_TRUE(IsSupportedOrder(5));
  EXPECT_FALSE(IsSupportedOrder(9));
}

TEST(PathCounts, MatchesDensePowerOnSmallRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t nu = 3 + seed % 12, ni = 30 - nu - seed % 5;
    const auto m = RandomMatrix(nu, ni, 0.3, seed);
    for (int order : {1, 3, 5, 7}) {
      const auto dense = DensePower(m, order);
      const auto q = AllPairs(m, order);
      const auto counts = PathCounts(m, q);
      for (std::size_t k = 0; k < q.pairs.size(); ++k) {
        const auto [u, i] = q.pairs[k];
        ASSERT_EQ(counts[k], dense[u][nu + i]) << "seed " << seed << " order " << order;
      }
    }
  }
}

TEST(PathCounts, SimilarityWeightedIdentity) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto m = RandomMatrix(50, 50, 0.08 + 0.02 * static_cast<double>(seed), 100 + seed);
    const auto q = AllPairs(m, 3);
    const auto counts = PathCounts(m, q);
    for (std::size_t k = 0; k < q.pairs.size(); ++k) {
      const auto [u, i] = q.pairs[k];
      if (m.Likes(u, i)) continue;
      std::uint64_t expected = 0;
      const auto ru = m.row(u);
      const std::set<ItemIndex> mine(ru.begin(), ru.end());
      for (UserIndex v = 0; v < m.num_users(); ++v) {
        if (!m.Likes(v, i)) continue;
        for (ItemIndex j : m.row(v)) expected += mine.count(j);
      }
      ASSERT_EQ(counts[k], expected);
    }
  }
}

TEST(PathCounts, FromUserAgreesWithPairs) {
  const auto m = RandomMatrix(20, 10, 0.3, 5);
  const auto row = PathCountsFromUser(m, 4, 5);
  PathQuery q;
  q.order = 5;
  for (ItemIndex i = 0; i < 10; ++i) q.pairs.emplace_back(4, i);
  EXPECT_EQ(row, PathCounts(m, q));
}

TEST(PathCounts, OverflowDetected) {
  // Complete bipartite 2000x2000: order-7 count is 2000^6 = 6.4e19 > 2^64.
  std::vector<std::vector<ItemIndex>> rows(2000, std::vector<ItemIndex>(2000));
  for (auto& r : rows)
    for (ItemIndex i = 0; i < 2000; ++i) r[i] = i;
  const auto m = MakeMatrix(2000, rows);
  EXPECT_EQ(PathCounts(m, {{{0, 0}}, 3}), std::vector<std::uint64_t>{2000ull * 2000});
  EXPECT_THROW(PathCounts(m, {{{0, 0}}, 7}), OverflowError);
}

FakeUserBlock Fakes(std::size_t num_items, ItemIndex target,
                    std::vector<std::vector<ItemIndex>> rows) {
  FakeUserBlock f;
  f.num_items = num_items;
  f.target_item = target;
  f.rows = std::move(rows);
  f.provenance.resize(f.rows.size());
  return f;
}

TEST(AugmentedPathCounts, Examples) {
  const auto m = G0();
  EXPECT_EQ(AugmentedPathCounts(m, Fakes(3, 2, {}), {{{0, 2}}, 3}),
            PathCounts(m, {{{0, 2}}, 3}));
  const auto fakes = Fakes(3, 2, {{1, 2}});
  EXPECT_EQ(AugmentedPathCounts(m, fakes, {{{0, 2}}, 3}), std::vector<std::uint64_t>{2});
  EXPECT_EQ(EnumerateThreeWalks(StackFakes(m, fakes), 0, 2), 2u);
  // u2 shares no item with a fake liking only the target.
  EXPECT_EQ(AugmentedPathCounts(m, Fakes(3, 0, {{0}}), {{{2, 0}}, 3}),
            PathCounts(m, {{{2, 0}}, 3}));
}

TEST(AugmentedPathCounts, EqualsStackedCounts) {
  const auto m = RandomMatrix(25, 20, 0.2, 17);
  const auto fakes = Fakes(20, 3, {{1, 3, 7}, {3}, {0, 3, 19}});
  const auto q = AllPairs(m, 3);
  EXPECT_EQ(AugmentedPathCounts(m, fakes, q), PathCounts(StackFakes(m, fakes), q));
  EXPECT_THROW(AugmentedPathCounts(m, Fakes(21, 3, {{3}}), q), ContractError);
}

TEST(ProxyUplift, Examples) {
  const ProxyParams p;
  EXPECT_EQ(ProxyUplift(0, p, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(ProxyUplift(2, p, 5.0), 0.4);
  EXPECT_DOUBLE_EQ(ProxyUplift(5, p, 5.0), 1.0);
  EXPECT_DOUBLE_EQ(ProxyRaw(16, {2.0, 0.5}), 8.0);
  EXPECT_THROW((ProxyParams{0.0, 1.0}.Validate()), ContractError);
  EXPECT_THROW((ProxyParams{1.0, -1.0}.Validate()), ContractError);
}

TEST(ProxyUplift, MonotoneAndBounded) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> param(0.05, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const ProxyParams p{param(rng), param(rng)};
    const double norm = ProxyRaw(1000, p);
    double prev = -1.0;
    for (std::uint64_t c = 0; c <= 1000; c += 7) {
      const double v = ProxyUplift(c, p, norm);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(Spearman, PerfectAndReversed) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{10, 20, 25, 40, 100};
  const auto r = Spearman(x, y);
  EXPECT_DOUBLE_EQ(r.r, 1.0);
  EXPECT_LT(r.p_value, 1e-6);
  const std::vector<double> rev{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(Spearman(x, rev).r, -1.0);
}

TEST(Spearman, TiesAndKnownValue) {
  // Ranks x: 1,2,3,4,5; y: 2,1,4,3,5 -> d^2 sum 4 -> rho = 1 - 6*4/(5*24) = 0.8.
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 1, 4, 3, 5};
  const auto r = Spearman(x, y);
  EXPECT_NEAR(r.r, 0.8, 1e-12);
  // t = 0.8*sqrt(3/0.36) = 2.3094; two-sided p with 3 df = 0.1041.
  EXPECT_NEAR(r.p_value, 0.1041, 1e-3);
  const std::vector<double> tied{1, 1, 2, 2, 3};
  EXPECT_GT(Spearman(x, tied).r, 0.9);
}

TEST(CorrelationReport, DeterministicAndWellFormed) {
  const auto m = RandomMatrix(60, 40, 0.1, 23);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.embedding_dim = 8;
  const auto model = Train(m, cfg);
  CorrelationOptions opts;
  opts.num_groups = 20;
  opts.sample_cap = 500;
  opts.seed = 4;
  const auto a = ComputeCorrelationReport(model, m, opts);
  const auto b = ComputeCorrelationReport(model, m, opts);
  EXPECT_EQ(a.spearman_r, b.spearman_r);
  EXPECT_EQ(a.groups.size(), 20u);
  EXPECT_EQ(a.num_pairs, 500u);
  EXPECT_GE(a.spearman_r, -1.0);
  EXPECT_LE(a.spearman_r, 1.0);
  for (std::size_t g = 1; g < a.groups.size(); ++g)
    EXPECT_LE(a.groups[g - 1].mean_count, a.groups[g].mean_count);

  std::ostringstream out;
  WriteCorrelationPlotData(a, out);
  EXPECT_EQ(out.str().rfind("# spearman_r=", 0), 0u);
}

TEST(CorrelationReport, TooFewGroups) {
  // Two non-interacting pairs only.
  const auto m = MakeMatrix(2, {{0}, {0, 1}, {1}});
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.embedding_dim = 2;
  const auto model = Train(m, cfg);
  EXPECT_THROW(ComputeCorrelationReport(model, m, {}), InsufficientDataError);
}

}  // namespace
}  // namespace ubalab
