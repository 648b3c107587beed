#ifndef UBALAB_PATHCOUNT_HPP_
#define UBALAB_PATHCOUNT_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ubalab/attackers.hpp"
#include "ubalab/cf_engine.hpp"
#include "ubalab/dataset.hpp"

namespace ubalab {

// Walk counts between users and items of the bipartite graph
// A = [[0, D], [D^T, 0]]. Only odd orders connect a user to an item.
struct PathQuery {
  std::vector<std::pair<UserIndex, ItemIndex>> pairs;
  int order = 3;
};

bool IsSupportedOrder(int order);

// Number of length-`order` walks from u to i for every pair. Walks are
// counted with sparse vector propagation seeded at u, in 128-bit
// arithmetic; OverflowError if a count leaves the 64-bit range.
std::vector<std::uint64_t> PathCounts(const InteractionMatrix& m,
                                      const PathQuery& q);

// Same over the stacked matrix [D_real; D_fake].
std::vector<std::uint64_t> AugmentedPathCounts(const InteractionMatrix& real,
                                               const FakeUserBlock& fakes,
                                               const PathQuery& q);

// Walk counts from one user to every item.
std::vector<std::uint64_t> PathCountsFromUser(const InteractionMatrix& m,
                                              UserIndex u, int order);

struct ProxyParams {
  double alpha = 1.0;
  double beta = 1.0;

  void Validate() const;
};

// alpha * count^beta, before normalization.
double ProxyRaw(std::uint64_t count, const ProxyParams& p);
// min(1, alpha * count^beta / normalizer).
double ProxyUplift(std::uint64_t count, const ProxyParams& p,
                   double normalizer);

// Spearman rank correlation (average ranks for ties) and its two-sided
// p-value from the t approximation with n - 2 degrees of freedom.
struct SpearmanResult {
  double r = 0.0;
  double p_value = 1.0;
};
SpearmanResult Spearman(const std::vector<double>& x,
                        const std::vector<double>& y);

struct CorrelationGroup {
  double mean_count = 0.0;
  double mean_score = 0.0;
};

struct CorrelationReport {
  double spearman_r = 0.0;
  double p_value = 1.0;
  std::vector<CorrelationGroup> groups;
  std::size_t num_pairs = 0;
  int order = 3;
};

struct CorrelationOptions {
  int order = 3;
  std::size_t num_groups = 50;
  std::size_t sample_cap = 200000;
  std::uint64_t seed = 0;
};

// Ranks non-interacting (user, item) pairs of `m` by walk count, splits them
// into equal contiguous groups (earlier groups take the remainder) and
// correlates the group-mean counts with the group-mean model scores.
CorrelationReport ComputeCorrelationReport(const TrainedModel& model,
                                           const InteractionMatrix& m,
                                           const CorrelationOptions& opts);

// "# spearman_r=... p_value=... order=... groups=... pairs=..." then
// "mean_count<sep>mean_score" lines.
void WriteCorrelationPlotData(const CorrelationReport& report, std::ostream& out,
                              char separator = '\t');

}  // namespace ubalab

#endif  // UBALAB_PATHCOUNT_HPP_
