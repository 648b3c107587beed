#ifndef UBALAB_TESTS_TEST_UTIL_HPP_
#define UBALAB_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "ubalab/dataset.hpp"
#include "ubalab/experiment_config.hpp"

namespace ubalab::testing {

// Users "u0".., items "i0"..; rows are sorted and deduplicated.
inline InteractionMatrix MakeMatrix(std::size_t num_items,
                                    std::vector<std::vector<ItemIndex>> rows) {
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < rows.size(); ++u) {
    auto& r = rows[u];
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    users.push_back("u" + std::to_string(u));
  }
  for (std::size_t i = 0; i < num_items; ++i) items.push_back("i" + std::to_string(i));
  return InteractionMatrix(num_items, std::move(rows), std::move(users), std::move(items));
}

inline InteractionMatrix RandomMatrix(std::size_t users, std::size_t items, double density,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution like(density);
  std::vector<std::vector<ItemIndex>> rows(users);
  for (auto& r : rows)
    for (std::size_t i = 0; i < items; ++i)
      if (like(rng)) r.push_back(static_cast<ItemIndex>(i));
  return MakeMatrix(items, std::move(rows));
}

// A synthetic experiment small enough to run end to end in seconds.
inline ExperimentConfig TinyConfig(const std::string& out) {
  ExperimentConfig cfg;
  auto& syn = cfg.dataset.synthetic;
  syn.num_users = 150;
  syn.num_items = 80;
  syn.num_categories = 4;
  syn.density = 0.06;
  syn.seed = 5;
  cfg.targets.n_users = 6;
  cfg.targets.cat_threshold = 100;
  cfg.accessible_ratio = 0.5;
  cfg.estimator.repeats = 2;
  cfg.estimator.max_budget = 2;
  cfg.estimator.surrogate.epochs = 3;
  cfg.estimator.surrogate.embedding_dim = 4;
  cfg.estimator.threads = 1;
  cfg.budget = 6;
  cfg.victims[0].epochs = 3;
  cfg.victims[0].embedding_dim = 4;
  cfg.ks = {5, 10};
  cfg.defense.detectors = {DetectorKind::kFap, DetectorKind::kPca};
  cfg.correlate.num_groups = 5;
  cfg.correlate.sample_cap = 2000;
  cfg.correlate.model.epochs = 3;
  cfg.correlate.model.embedding_dim = 4;
  cfg.repeat_seeds = {1, 2};
  cfg.output_dir = out;
  return cfg;
}

}  // namespace ubalab::testing

#endif  // UBALAB_TESTS_TEST_UTIL_HPP_
