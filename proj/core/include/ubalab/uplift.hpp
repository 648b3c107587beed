#ifndef UBALAB_UPLIFT_HPP_
#define UBALAB_UPLIFT_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ubalab/attackers.hpp"
#include "ubalab/cf_engine.hpp"
#include "ubalab/dataset.hpp"
#include "ubalab/pathcount.hpp"

namespace ubalab {

enum class EstimatorKind { kSimulated, kProxy };
std::string ToString(EstimatorKind kind);
EstimatorKind ParseEstimatorKind(const std::string& s);

// Y[u][t]: estimated probability that the target item reaches user u's
// top-K when u receives t fake users, t = 0..H.
struct UpliftTable {
  std::vector<std::string> target_user_ids;
  int max_budget = 0;  // H
  std::vector<std::vector<double>> values;
  EstimatorKind estimator = EstimatorKind::kProxy;
  std::map<std::string, std::string> metadata;

  std::size_t num_users() const { return values.size(); }
  double at(std::size_t row, int t) const { return values.at(row).at(t); }

  // Shape and [0, 1] range checks; ContractError on failure.
  void Validate() const;
  std::uint64_t ContentHash() const;
};

struct SimulationOptions {
  int max_budget = 6;   // H
  int repeats = 10;     // E
  std::size_t top_k = 10;
  std::uint64_t base_seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

// Monte Carlo estimate: for every (t, e) cell, give t fakes to every target
// user, train the surrogate on accessible + fakes and count top-K hits.
// `spec` indexes users of `accessible`.
UpliftTable EstimateSimulated(const InteractionMatrix& accessible,
                              const TargetSpec& spec,
                              const AttackerConfig& attacker,
                              const TrainConfig& surrogate,
                              const SimulationOptions& opts);

// Walk-count proxy: alpha * c(u, t)^beta with c the three-order count after
// adding t maximally similar fake users, normalized by the table maximum.
UpliftTable EstimateProxy(const InteractionMatrix& accessible,
                          const TargetSpec& spec, int max_budget,
                          const ProxyParams& params, int profile_size);

// Y[u][t] - Y[u][0]; t must be >= 1.
double Uplift(const UpliftTable& table, std::size_t row, int t);

// Text snapshot:
//   UBALAB-UT v1
//   estimator\t<simulated|proxy>
//   H\t<H>
//   users\t<n>
//   meta\t<key>\t<value>      (sorted by key)
//   row\t<user_id>\t<Y_0>\t...\t<Y_H>
//   hash\t<16 hex digits>     (ContentHash of everything above)
inline constexpr const char* kUpliftMagic = "UBALAB-UT v1";
void WriteUpliftTable(const UpliftTable& table, std::ostream& out);
void WriteUpliftTableFile(const UpliftTable& table, const std::string& path);
// Verifies the stored hash; IoError on mismatch.
UpliftTable ReadUpliftTable(std::istream& in);
UpliftTable ReadUpliftTableFile(const std::string& path);

// Plot data, one line per (user, budget): user_id<sep>budget<sep>Y.
void WriteUpliftCurves(const UpliftTable& table, std::ostream& out,
                       char separator = '\t');

}  // namespace ubalab

#endif  // UBALAB_UPLIFT_HPP_
