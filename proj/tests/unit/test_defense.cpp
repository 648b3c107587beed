#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "test_util.hpp"
#include "ubalab/attackers.hpp"
#include "ubalab/defense.hpp"

namespace ubalab {
namespace {

using testing::MakeMatrix;
using testing::RandomMatrix;

// 50 diverse real users over 60 items, then 20 identical fake rows.
InteractionMatrix IdenticalFakes(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution like(0.1);
  std::vector<std::vector<ItemIndex>> rows(70);
  for (std::size_t u = 0; u < 50; ++u) {
    for (ItemIndex i = 0; i < 60; ++i)
      if (like(rng)) rows[u].push_back(i);
    if (rows[u].empty()) rows[u].push_back(static_cast<ItemIndex>(u % 60));
  }
  for (std::size_t u = 50; u < 70; ++u) rows[u] = {0, 3, 7, 11, 20, 33};
  return MakeMatrix(60, rows);
}

std::size_t FakesFlagged(const DetectionResult& r, std::size_t num_real) {
  return static_cast<std::size_t>(std::count_if(
      r.flagged.begin(), r.flagged.end(), [&](UserIndex u) { return u >= num_real; }));
}

TEST(PcaDetect, CatchesIdenticalFakeBlock) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = PcaDetect(IdenticalFakes(seed), 20);
    EXPECT_GE(FakesFlagged(r, 50), 15u) << "seed " << seed;
    r.AttachGroundTruth(50);
    EXPECT_GE(r.confusion->recall(), 0.75);
    EXPECT_FALSE(r.warning);
  }
}

TEST(PcaDetect, ZeroFlagsIsEmpty) {
  const auto r = PcaDetect(IdenticalFakes(1), 0);
  EXPECT_TRUE(r.flagged.empty());
  EXPECT_EQ(r.scores.size(), 70u);
}

TEST(PcaDetect, IdenticalUsersTieToLowestIndices) {
  const std::vector<std::vector<ItemIndex>> rows(8, {1, 2, 4});
  for (bool largest : {true, false}) {
    PcaOptions opts;
    opts.flag_largest = largest;
    const auto r = PcaDetect(MakeMatrix(6, rows), 3, opts);
    for (double s : r.scores) EXPECT_EQ(s, r.scores[0]);
    EXPECT_EQ(r.flagged, (std::vector<UserIndex>{0, 1, 2}));
  }
}

TEST(PcaDetect, DegenerateRankReducesComponents) {
  // Two distinct profiles: the standardized rows span one direction.
  std::vector<std::vector<ItemIndex>> rows;
  for (int k = 0; k < 6; ++k) rows.push_back(k % 2 ? std::vector<ItemIndex>{0, 1}
                                                    : std::vector<ItemIndex>{2, 3});
  const auto r = PcaDetect(MakeMatrix(4, rows), 2);
  EXPECT_TRUE(r.warning);
  EXPECT_EQ(r.params.at("components_used"), "1");
}

TEST(PcaDetect, PermutationEquivariant) {
  for (auto standardize : {PcaStandardize::kUsers, PcaStandardize::kItems}) {
    PcaOptions opts;
    opts.standardize = standardize;
    const auto m = RandomMatrix(40, 30, 0.15, 8);
    std::vector<UserIndex> perm(m.num_users());
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
    const auto permuted = m.SelectUsers(perm);
    const auto a = PcaDetect(m, 5, opts);
    const auto b = PcaDetect(permuted, 5, opts);
    for (std::size_t k = 0; k < perm.size(); ++k)
      EXPECT_NEAR(b.scores[k], a.scores[perm[k]], 1e-9);
  }
}

TEST(PcaDetect, ItemCapKeepsMostPopular) {
  PcaOptions opts;
  opts.item_cap = 10;
  const auto r = PcaDetect(RandomMatrix(30, 40, 0.2, 2), 3, opts);
  EXPECT_EQ(r.params.at("items_used"), "10");
  EXPECT_EQ(r.params.at("standardize"), "users");
}

TEST(PcaDetect, RejectsBadArguments) {
  const auto m = RandomMatrix(10, 8, 0.3, 1);
  EXPECT_THROW(PcaDetect(m, 10), ContractError);
  PcaOptions opts;
  opts.n_components = 0;
  EXPECT_THROW(PcaDetect(m, 2, opts), ContractError);
}

TEST(PcaStandardize, RoundTrip) {
  for (auto s : {PcaStandardize::kUsers, PcaStandardize::kItems})
    EXPECT_EQ(ParsePcaStandardize(ToString(s)), s);
  EXPECT_THROW(ParsePcaStandardize("rows"), ContractError);
}

TEST(FapDetect, UnreachableUsersHaveZeroBelief) {
  // Users 0-1 share the hint's component; users 2-3 live on items 3-4.
  const auto m = MakeMatrix(5, {{0, 1}, {1, 2}, {3, 4}, {4}});
  const auto r = FapDetect(m, 0, 1);
  EXPECT_GT(r.scores[0], 0.0);
  EXPECT_GT(r.scores[1], 0.0);
  EXPECT_EQ(r.scores[2], 0.0);
  EXPECT_EQ(r.scores[3], 0.0);
  EXPECT_EQ(r.flagged, (std::vector<UserIndex>{0}));
}

TEST(FapDetect, BeliefsBoundedAndContracting) {
  const auto m = RandomMatrix(60, 40, 0.1, 6);
  FapOptions opts;
  opts.max_iters = 200;
  opts.tol = 1e-12;
  std::vector<double> change;
  const auto r = FapDetect(m, 5, 10, opts, &change);
  for (double b : r.scores) {
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 1.0);
  }
  ASSERT_GE(change.size(), 3u);
  for (std::size_t k = 2; k < change.size(); ++k) EXPECT_LE(change[k], change[k - 1]);
}

TEST(FapDetect, VanishingDampingZeroesBeliefs) {
  FapOptions opts;
  opts.damping = 1e-12;
  const auto r = FapDetect(RandomMatrix(30, 20, 0.2, 4), 2, 3, opts);
  for (double b : r.scores) EXPECT_LE(b, 1e-12);
}

TEST(FapDetect, ShortFakeProfilesRankHigh) {
  const auto real = RandomMatrix(80, 50, 0.12, 11);
  FakeUserBlock fakes;
  fakes.target_item = 7;
  fakes.num_items = 50;
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10; ++k) {
    std::vector<ItemIndex> row{7, static_cast<ItemIndex>(rng() % 50)};
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    fakes.rows.push_back(row);
    fakes.provenance.push_back({});
  }
  const auto stacked = StackFakes(real, fakes);
  auto r = FapDetect(stacked, 7, 10);
  r.AttachGroundTruth(80);
  EXPECT_GE(r.confusion->recall(), 0.8);
  double real_mean = 0.0, fake_mean = 0.0;
  for (std::size_t u = 0; u < 80; ++u) real_mean += r.scores[u] / 80.0;
  for (std::size_t u = 80; u < 90; ++u) fake_mean += r.scores[u] / 10.0;
  EXPECT_GT(fake_mean, real_mean);
}

TEST(FapDetect, RejectsBadArguments) {
  const auto m = RandomMatrix(10, 8, 0.3, 1);
  EXPECT_THROW(FapDetect(m, 0, 10), ContractError);
  EXPECT_THROW(FapDetect(m, 8, 1), IndexError);
  FapOptions opts;
  opts.damping = 1.0;
  EXPECT_THROW(FapDetect(m, 0, 1, opts), ContractError);
}

TEST(DetectionResult, ConfusionCountsSumToUsers) {
  const auto m = IdenticalFakes(4);
  for (std::size_t n_flag : {0u, 5u, 20u, 40u}) {
    auto r = PcaDetect(m, n_flag);
    EXPECT_EQ(r.flagged.size(), n_flag);
    EXPECT_TRUE(std::is_sorted(r.flagged.begin(), r.flagged.end()));
    r.AttachGroundTruth(50);
    const auto& c = *r.confusion;
    EXPECT_EQ(c.tp + c.fp + c.fn + c.tn, 70u);
    EXPECT_EQ(c.tp + c.fp, n_flag);
    EXPECT_EQ(c.tp + c.fn, 20u);
  }
}

struct AttackFixture {
  InteractionMatrix real;
  TargetSpec spec;
  FakeUserBlock fakes;
};

AttackFixture MakeAttack() {
  AttackFixture f{RandomMatrix(50, 30, 0.15, 21), {}, {}};
  f.spec.target_item = 4;
  f.spec.target_users = {1, 3, 5, 7};
  AttackerConfig cfg;
  cfg.profile_size = 4;
  Allocation alloc;
  alloc.budgets = {2, 1, 2, 1};
  f.fakes = GenerateFakeUsers(cfg, alloc, f.spec, f.real);
  return f;
}

TrainConfig SmallVictim() {
  TrainConfig cfg;
  cfg.embedding_dim = 6;
  cfg.epochs = 6;
  return cfg;
}

void ExpectSameCells(const MetricsReport& a, const MetricsReport& b) {
  ASSERT_EQ(a.ks(), b.ks());
  for (auto g : {UserGroup::kTarget, UserGroup::kAll})
    for (auto p : {Phase::kBefore, Phase::kAfter})
      for (std::size_t k : a.ks()) {
        const auto x = a.Get(g, p, k), y = b.Get(g, p, k);
        EXPECT_EQ(x.hr, y.hr);
        EXPECT_EQ(x.ndcg, y.ndcg);
        EXPECT_EQ(x.mrr, y.mrr);
      }
}

TEST(FilterAndEvaluate, EmptyDetectionMatchesEvaluate) {
  const auto f = MakeAttack();
  const auto stacked = StackFakes(f.real, f.fakes);
  const auto det = PcaDetect(stacked, 0);
  const auto defended = FilterAndEvaluate(f.real, f.fakes, det, f.spec, SmallVictim(), {5, 10}, 17);
  const auto plain = Evaluate(f.real, f.fakes, f.spec, SmallVictim(), {5, 10}, 17);
  ExpectSameCells(defended, plain);
  EXPECT_EQ(defended.metadata().at("defense"), "pca");
}

TEST(FilterAndEvaluate, RemovingExactlyTheFakesRestoresBefore) {
  const auto f = MakeAttack();
  const auto stacked = StackFakes(f.real, f.fakes);
  DetectionResult det;
  det.kind = DetectorKind::kFap;
  det.scores.assign(stacked.num_users(), 0.0);
  for (std::size_t u = f.real.num_users(); u < stacked.num_users(); ++u)
    det.flagged.push_back(static_cast<UserIndex>(u));
  const auto r = FilterAndEvaluate(f.real, f.fakes, det, f.spec, SmallVictim(), {10}, 3);
  for (auto g : {UserGroup::kTarget, UserGroup::kAll}) {
    const auto before = r.Get(g, Phase::kBefore, 10), after = r.Get(g, Phase::kAfter, 10);
    EXPECT_EQ(before.hr, after.hr);
    EXPECT_EQ(before.ndcg, after.ndcg);
    EXPECT_EQ(before.mrr, after.mrr);
  }
  EXPECT_EQ(r.metadata().at("flagged_fake"), std::to_string(f.fakes.size()));
  EXPECT_EQ(r.metadata().at("flagged_real"), "0");
}

TEST(FilterAndEvaluate, FlaggedRealUsersLeaveDenominators) {
  const auto f = MakeAttack();
  const auto stacked = StackFakes(f.real, f.fakes);
  DetectionResult det;
  det.scores.assign(stacked.num_users(), 0.0);
  det.flagged = {0, 2};
  const auto r = FilterAndEvaluate(f.real, f.fakes, det, f.spec, SmallVictim(), {10}, 3);
  EXPECT_EQ(r.metadata().at("flagged_real"), "2");
  EXPECT_EQ(r.metadata().at("after.all_users"), "48");
  EXPECT_TRUE(r.SatisfiesInvariants());
}

TEST(FilterAndEvaluate, RejectsForeignDetection) {
  const auto f = MakeAttack();
  DetectionResult det;
  det.scores.assign(3, 0.0);
  det.flagged = {0};
  EXPECT_THROW(FilterAndEvaluate(f.real, f.fakes, det, f.spec, SmallVictim(), {10}, 3),
               ContractError);
}

TEST(WriteDetection, OneLinePerUser) {
  const auto m = IdenticalFakes(2);
  auto r = PcaDetect(m, 20);
  r.AttachGroundTruth(50);
  std::ostringstream out;
  WriteDetection(r, m, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "user_id\tscore\tflagged\tis_fake");
  std::size_t rows = 0, flagged = 0, fake = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string id, score, flag, is_fake;
    std::getline(fields, id, '\t');
    std::getline(fields, score, '\t');
    std::getline(fields, flag, '\t');
    std::getline(fields, is_fake, '\t');
    EXPECT_EQ(id, m.user_ids()[rows]);
    flagged += flag == "1";
    fake += is_fake == "1";
    ++rows;
  }
  EXPECT_EQ(rows, 70u);
  EXPECT_EQ(flagged, 20u);
  EXPECT_EQ(fake, 20u);
}

TEST(DetectorKind, RoundTrip) {
  for (auto k : {DetectorKind::kPca, DetectorKind::kFap})
    EXPECT_EQ(ParseDetectorKind(ToString(k)), k);
  EXPECT_THROW(ParseDetectorKind("svm"), ContractError);
}

}  // namespace
}  // namespace ubalab
