#ifndef UBALAB_DEFENSE_HPP_
#define UBALAB_DEFENSE_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ubalab/attackers.hpp"
#include "ubalab/evaluator.hpp"

namespace ubalab {

enum class DetectorKind { kPca, kFap };
std::string ToString(DetectorKind kind);
DetectorKind ParseDetectorKind(const std::string& s);

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  double precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
};

struct DetectionResult {
  DetectorKind kind = DetectorKind::kPca;
  std::vector<UserIndex> flagged;  // ascending
  std::vector<double> scores;      // per stacked user
  std::map<std::string, std::string> params;
  // PCA: fewer components than requested. FAP: hit max_iters unconverged.
  bool warning = false;
  std::optional<ConfusionCounts> confusion;

  // Users at index >= num_real are fake.
  void AttachGroundTruth(std::size_t num_real);
};

// kUsers z-scores every user row over the kept items; a block of
// near-identical profiles then dominates the leading directions. kItems
// z-scores item columns.
enum class PcaStandardize { kUsers, kItems };
std::string ToString(PcaStandardize s);
PcaStandardize ParsePcaStandardize(const std::string& s);

struct PcaOptions {
  int n_components = 3;
  std::size_t item_cap = 2000;
  PcaStandardize standardize = PcaStandardize::kUsers;
  // Flag the largest projection scores; false flags the smallest.
  bool flag_largest = true;
};

// Standardizes the dense 0/1 matrix over its non-constant item columns (at
// most `item_cap` most popular items kept), takes the top principal
// directions of Z^T Z and scores every user by the squared norm of its
// projection. Flags n_flag users by score, ties to the lower index. Rank
// below n_components reduces the component count and sets `warning`.
DetectionResult PcaDetect(const InteractionMatrix& stacked, std::size_t n_flag,
                          const PcaOptions& opts = {});

struct FapOptions {
  double damping = 0.85;
  int max_iters = 50;
  double tol = 1e-6;
};

// Spam-belief propagation seeded at the hinted item (pinned at 1):
// b_u = damping * mean_{i in row(u)} b_i, then
// b_i = damping * mean_{u likes i} b_u. Flags the n_flag users with the
// largest belief, ties to the lower index. `max_change` receives the per
// iteration max belief change when non-null.
DetectionResult FapDetect(const InteractionMatrix& stacked,
                          ItemIndex target_item_hint, std::size_t n_flag,
                          const FapOptions& opts = {},
                          std::vector<double>* max_change = nullptr);

// Removes every flagged user (real or fake), retrains the victim and
// evaluates like Evaluate. Flagged real users leave the after-phase
// denominators.
MetricsReport FilterAndEvaluate(const InteractionMatrix& real,
                                const FakeUserBlock& fakes,
                                const DetectionResult& detection,
                                const TargetSpec& spec, const TrainConfig& victim,
                                const std::vector<std::size_t>& ks,
                                std::uint64_t seed);

// `user_id<sep>score<sep>flagged<sep>is_fake` lines (is_fake empty when no
// ground truth is attached), preceded by a header line.
void WriteDetection(const DetectionResult& result,
                    const InteractionMatrix& stacked, std::ostream& out,
                    char separator = '\t');

}  // namespace ubalab

#endif  // UBALAB_DEFENSE_HPP_
