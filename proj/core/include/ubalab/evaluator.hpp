#ifndef UBALAB_EVALUATOR_HPP_
#define UBALAB_EVALUATOR_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubalab/attackers.hpp"
#include "ubalab/cf_engine.hpp"
#include "ubalab/dataset.hpp"

namespace ubalab {

struct RankMetrics {
  double hr = 0.0;
  double ndcg = 0.0;
  double mrr = 0.0;
};

// Single relevant item at 1-based `rank` (0 = not rankable):
// hr = [rank <= K], ndcg = 1 / log2(rank + 1), mrr = 1 / rank.
RankMetrics MetricsAtRank(std::size_t rank, std::size_t k);
// Same, locating `target` in a ranked list.
RankMetrics MetricsFromRankedList(std::span<const ItemIndex> ranked,
                                  ItemIndex target, std::size_t k);

enum class UserGroup { kTarget, kAll };
enum class Phase { kBefore, kAfter };
std::string ToString(UserGroup g);
std::string ToString(Phase p);

class MetricsReport {
 public:
  MetricsReport() = default;
  explicit MetricsReport(std::vector<std::size_t> ks) : ks_(std::move(ks)) {}

  const std::vector<std::size_t>& ks() const { return ks_; }
  void Set(UserGroup g, Phase p, std::size_t k, RankMetrics m);
  RankMetrics Get(UserGroup g, Phase p, std::size_t k) const;
  bool Has(UserGroup g, Phase p, std::size_t k) const;

  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  std::string label() const;

  // Every cell in [0, 1] and mrr <= ndcg <= hr.
  bool SatisfiesInvariants() const;

  // "<group>.<phase>.k<K>.<metric>=<value>" lines, then "meta.<key>=<value>".
  void WriteKeyValue(std::ostream& out) const;
  nlohmann::json ToJson() const;
  static MetricsReport FromJson(const nlohmann::json& j);

 private:
  static std::string Key(UserGroup g, Phase p, std::size_t k);
  std::vector<std::size_t> ks_;
  std::map<std::string, RankMetrics> cells_;
  std::map<std::string, std::string> metadata_;
};

// Cell-wise mean over reports sharing K set; metadata from the first, with
// "repeats" added.
MetricsReport AverageReports(const std::vector<MetricsReport>& reports);

// Metrics of an already-trained victim. `victim_rows[u]` is the model row of
// real user u, or -1 when u was removed from training; removed users leave
// the denominators. Exclusion sets are the users' rows in `real`.
void EvaluatePhase(const TrainedModel& victim, const InteractionMatrix& real,
                   std::span<const std::int64_t> victim_rows,
                   const TargetSpec& spec, Phase phase, MetricsReport& report);

// Trains the victim on `real` (before) and on real + fakes (after), with
// the same seed, and reports metrics over the target users and all real
// users. Fake users never enter a denominator.
MetricsReport Evaluate(const InteractionMatrix& real, const FakeUserBlock& fakes,
                       const TargetSpec& spec, const TrainConfig& victim,
                       const std::vector<std::size_t>& ks, std::uint64_t seed);

// Shared core of Evaluate and defended evaluation: the after-phase victim is
// trained on `after_training`, where real user u sits at row after_rows[u]
// (-1 if removed).
MetricsReport EvaluateAgainst(const InteractionMatrix& real,
                              const InteractionMatrix& after_training,
                              std::span<const std::int64_t> after_rows,
                              const TargetSpec& spec, const TrainConfig& victim,
                              const std::vector<std::size_t>& ks,
                              std::uint64_t seed);

struct ComparisonRow {
  std::string label;
  std::vector<double> values;  // aligned with ComparisonTable::columns
};

struct ComparisonTable {
  std::vector<std::string> columns;
  std::vector<ComparisonRow> rows;

  void WriteDelimited(std::ostream& out, char separator = '\t') const;
  void WriteSummary(std::ostream& out) const;
};

// One row per report, sorted by target-user HR@10 after attack (or the first
// K if 10 is absent), descending. Columns per group and K: before, after,
// after - before for hr/ndcg/mrr, and the after-phase difference to the
// leading row.
ComparisonTable Compare(const std::vector<MetricsReport>& reports);

}  // namespace ubalab

#endif  // UBALAB_EVALUATOR_HPP_
