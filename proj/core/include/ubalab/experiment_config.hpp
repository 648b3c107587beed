#ifndef UBALAB_EXPERIMENT_CONFIG_HPP_
#define UBALAB_EXPERIMENT_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubalab/allocator.hpp"
#include "ubalab/attackers.hpp"
#include "ubalab/cf_engine.hpp"
#include "ubalab/dataset.hpp"
#include "ubalab/defense.hpp"
#include "ubalab/pathcount.hpp"
#include "ubalab/synthetic.hpp"
#include "ubalab/uplift.hpp"

namespace ubalab {

struct DatasetSection {
  // Rating log and item-category file; when ratings is empty the synthetic
  // generator supplies both.
  std::string ratings;
  std::string categories;
  char separator = ',';
  bool skip_header = false;
  SyntheticConfig synthetic;
};

struct PreprocessSection {
  std::size_t kcore = 0;  // 0 disables k-core filtering
  double like_threshold = 3.0;
};

struct TargetSection {
  PopularityMode mode = PopularityMode::kPopular;
  std::size_t n_items = 1;
  std::size_t n_users = 50;
  std::size_t cat_threshold = 10;
};

struct AttackerSection {
  AttackerKind kind = AttackerKind::kTemplate;
  int profile_size = 0;  // 0 = round(mean row length) of the real matrix
  int bandwagon_pool = 50;
};

struct EstimatorSection {
  EstimatorKind kind = EstimatorKind::kSimulated;
  int repeats = 10;    // E
  int max_budget = 6;  // H
  std::size_t top_k = 10;
  double alpha = 1.0;
  double beta = 1.0;
  TrainConfig surrogate;
  unsigned threads = 0;
};

struct DefenseSection {
  std::vector<DetectorKind> detectors;  // empty = stage skipped
  int pca_components = 3;
  std::size_t pca_item_cap = 2000;
  PcaStandardize pca_standardize = PcaStandardize::kUsers;
  bool pca_flag_largest = true;
  FapOptions fap;
  // Detectors run on attacks produced by these allocators.
  std::vector<AllocatorKind> allocators{AllocatorKind::kDp};
};

struct CorrelateSection {
  std::vector<int> orders{3};
  std::size_t num_groups = 50;
  std::size_t sample_cap = 200000;
  TrainConfig model;
};

struct ExperimentConfig {
  DatasetSection dataset;
  PreprocessSection preprocess;
  TargetSection targets;
  double accessible_ratio = 0.2;
  AttackerSection attacker;
  EstimatorSection estimator;
  std::vector<AllocatorKind> allocators{AllocatorKind::kDp, AllocatorKind::kUniform,
                                        AllocatorKind::kRandom};
  int budget = 100;  // N
  std::vector<TrainConfig> victims{TrainConfig{}};
  std::vector<std::size_t> ks{10, 20};
  DefenseSection defense;
  CorrelateSection correlate;
  std::vector<std::uint64_t> repeat_seeds{1, 2, 3, 4, 5};
  std::uint64_t root_seed = 2024;
  std::string output_dir = "ubalab-out";

  // ContractError naming the offending field.
  void Validate() const;
  std::uint64_t Hash() const;
};

// Missing keys take their defaults; unknown keys are rejected so typos do not
// silently fall back. ContractError on bad values.
ExperimentConfig ConfigFromJson(const nlohmann::json& j);
nlohmann::json ConfigToJson(const ExperimentConfig& cfg);
ExperimentConfig LoadConfig(const std::string& path);

nlohmann::json TrainConfigToJson(const TrainConfig& cfg);
TrainConfig TrainConfigFromJson(const nlohmann::json& j, const TrainConfig& base = {});

// "mf-bce" style label used in artifact names.
std::string VictimLabel(const TrainConfig& cfg);

}  // namespace ubalab

#endif  // UBALAB_EXPERIMENT_CONFIG_HPP_
