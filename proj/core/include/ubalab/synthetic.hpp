#ifndef UBALAB_SYNTHETIC_HPP_
#define UBALAB_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ubalab/dataset.hpp"

namespace ubalab {

// Seeded generator for desk-scale experiments: power-law item popularity,
// a fixed number of item categories, and users with planted affinities for
// one primary and one secondary category.
struct SyntheticConfig {
  std::size_t num_users = 2000;
  std::size_t num_items = 1500;
  std::size_t num_categories = 8;
  double density = 0.005;            // expected likes / (users * items)
  std::size_t min_likes_per_user = 3;
  double popularity_exponent = 0.9;  // Zipf exponent on popularity rank
  double primary_affinity = 0.6;     // P(draw from primary category)
  double secondary_affinity = 0.25;  // P(draw from secondary category)
  double dislike_fraction = 0.25;    // extra sub-threshold ratings per like
  std::uint64_t seed = 2024;
};

struct SyntheticData {
  RatingLog ratings;
  // (item_id, category) pairs, one per item.
  std::vector<std::pair<std::string, std::string>> item_categories;
};

SyntheticData GenerateSynthetic(const SyntheticConfig& cfg);

void WriteSyntheticFiles(const SyntheticData& data,
                         const std::string& ratings_path,
                         const std::string& categories_path,
                         char separator = ',');

// Parsed matrix + category map straight from the generator, without files.
struct SyntheticDataset {
  InteractionMatrix matrix;
  ItemCategoryMap categories;
};
SyntheticDataset BuildSyntheticDataset(const SyntheticConfig& cfg,
                                       double like_threshold = 3.0);

}  // namespace ubalab

#endif  // UBALAB_SYNTHETIC_HPP_
