#include "ubalab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ubalab {

namespace {

std::string PaddedId(char prefix, std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%05zu", prefix, v);
  return buf;
}

}  // namespace

SyntheticData GenerateSynthetic(const SyntheticConfig& cfg) {
  if (cfg.num_users == 0 || cfg.num_items == 0 || cfg.num_categories == 0)
    throw ContractError("synthetic dataset needs users, items and categories");
  if (cfg.min_likes_per_user >= cfg.num_items)
    throw ContractError("min likes per user must be below the item count");
  Rng rng(DeriveSeed(cfg.seed, "synthetic"));

  // Item categories and power-law popularity over a shuffled rank order.
  std::vector<std::size_t> category(cfg.num_items);
  std::uniform_int_distribution<std::size_t> pick_cat(0, cfg.num_categories - 1);
  for (auto& c : category) c = pick_cat(rng);
  std::vector<std::size_t> rank(cfg.num_items);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);

  std::vector<std::vector<std::size_t>> members(cfg.num_categories);
  std::vector<std::vector<double>> weights(cfg.num_categories);
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    members[category[i]].push_back(i);
    weights[category[i]].push_back(
        std::pow(static_cast<double>(rank[i] + 1), -cfg.popularity_exponent));
  }
  std::vector<std::discrete_distribution<std::size_t>> within;
  for (std::size_t c = 0; c < cfg.num_categories; ++c) {
    if (weights[c].empty()) weights[c].push_back(0.0);
    within.emplace_back(weights[c].begin(), weights[c].end());
  }

  const double mean_likes =
      std::max(cfg.density * static_cast<double>(cfg.num_items),
               static_cast<double>(cfg.min_likes_per_user));
  const double extra_mean =
      mean_likes - static_cast<double>(cfg.min_likes_per_user);
  std::geometric_distribution<std::size_t> extra(1.0 / (1.0 + extra_mean));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_item(0, cfg.num_items - 1);
  std::uniform_int_distribution<int> like_rating(4, 5);
  std::uniform_int_distribution<int> dislike_rating(1, 3);

  SyntheticData out;
  std::int64_t clock = 1'000'000'000;
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    const std::string uid = PaddedId('u', u);
    const std::size_t primary = pick_cat(rng);
    std::size_t secondary = pick_cat(rng);
    if (cfg.num_categories > 1)
      while (secondary == primary) secondary = pick_cat(rng);
    const std::size_t target = std::min(
        cfg.num_items - 1, cfg.min_likes_per_user + extra(rng));

    std::unordered_set<std::size_t> seen;
    std::size_t attempts = 0;
    while (seen.size() < target && attempts < 50 * target) {
      ++attempts;
      const double r = unit(rng);
      std::size_t c;
      if (r < cfg.primary_affinity) {
        c = primary;
      } else if (r < cfg.primary_affinity + cfg.secondary_affinity) {
        c = secondary;
      } else {
        c = pick_cat(rng);
      }
      if (members[c].empty()) continue;
      const std::size_t item = members[c][within[c](rng)];
      if (!seen.insert(item).second) continue;
      out.ratings.records.push_back(
          {uid, PaddedId('i', item), static_cast<double>(like_rating(rng)),
           clock++});
    }
    // Sub-threshold ratings exercise the implicit mapping.
    const auto n_dislikes = static_cast<std::size_t>(
        std::round(cfg.dislike_fraction * static_cast<double>(seen.size())));
    for (std::size_t d = 0; d < n_dislikes; ++d) {
      const std::size_t item = any_item(rng);
      if (!seen.insert(item).second) continue;
      out.ratings.records.push_back({uid, PaddedId('i', item),
                                     static_cast<double>(dislike_rating(rng)),
                                     clock++});
    }
  }
  out.item_categories.reserve(cfg.num_items);
  for (std::size_t i = 0; i < cfg.num_items; ++i)
    out.item_categories.emplace_back(PaddedId('i', i),
                                     "c" + std::to_string(category[i]));
  return out;
}

void WriteSyntheticFiles(const SyntheticData& data,
                         const std::string& ratings_path,
                         const std::string& categories_path, char separator) {
  std::ofstream ratings(ratings_path);
  if (!ratings) throw IoError("cannot write " + ratings_path);
  WriteRatings(data.ratings, ratings, {separator, false});
  std::ofstream cats(categories_path);
  if (!cats) throw IoError("cannot write " + categories_path);
  for (const auto& [item, cat] : data.item_categories)
    cats << item << separator << cat << '\n';
}

SyntheticDataset BuildSyntheticDataset(const SyntheticConfig& cfg,
                                       double like_threshold) {
  const auto data = GenerateSynthetic(cfg);
  SyntheticDataset ds;
  ds.matrix = ToImplicit(data.ratings, like_threshold);
  ds.categories = ItemCategoryMap(ds.matrix.num_items());
  for (const auto& [item, cat] : data.item_categories) {
    if (auto idx = ds.matrix.FindItem(item)) ds.categories.Add(*idx, cat);
  }
  return ds;
}

}  // namespace ubalab
