#include "ubalab/attackers.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ubalab {

namespace {

// Draws up to k distinct items from `pool` uniformly, skipping `exclude`.
void SampleUniform(const std::vector<ItemIndex>& pool, std::size_t k,
                   const std::vector<char>& exclude, Rng& rng,
                   std::vector<ItemIndex>& out) {
  std::vector<ItemIndex> free;
  free.reserve(pool.size());
  for (ItemIndex i : pool)
    if (!exclude[i]) free.push_back(i);
  std::sample(free.begin(), free.end(), std::back_inserter(out),
              static_cast<std::ptrdiff_t>(std::min(k, free.size())), rng);
}

// Weighted sampling without replacement (Efraimidis-Spirakis keys).
void SampleWeighted(const std::vector<double>& weight, std::size_t k,
                    const std::vector<char>& exclude, Rng& rng,
                    std::vector<ItemIndex>& out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<double, ItemIndex>> keys;
  for (ItemIndex i = 0; i < weight.size(); ++i) {
    if (exclude[i] || weight[i] <= 0) continue;
    double r = unit(rng);
    if (r <= 0) r = std::numeric_limits<double>::min();
    keys.emplace_back(std::log(r) / weight[i], i);
  }
  const std::size_t take = std::min(k, keys.size());
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(take),
                    keys.end(), [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  for (std::size_t j = 0; j < take; ++j) out.push_back(keys[j].second);
}

std::vector<ItemIndex> TopPopular(const std::vector<std::size_t>& degree,
                                  std::size_t n) {
  std::vector<ItemIndex> order(degree.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ItemIndex a, ItemIndex b) {
    return degree[a] > degree[b];
  });
  order.resize(std::min(n, order.size()));
  return order;
}

}  // namespace

std::string ToString(AttackerKind kind) {
  switch (kind) {
    case AttackerKind::kRandom:
      return "random";
    case AttackerKind::kAverage:
      return "average";
    case AttackerKind::kBandwagon:
      return "bandwagon";
    case AttackerKind::kSegment:
      return "segment";
    case AttackerKind::kTemplate:
      return "template";
  }
  return "unknown";
}

AttackerKind ParseAttackerKind(const std::string& s) {
  for (auto k : {AttackerKind::kRandom, AttackerKind::kAverage,
                 AttackerKind::kBandwagon, AttackerKind::kSegment,
                 AttackerKind::kTemplate})
    if (ToString(k) == s) return k;
  throw ContractError("unknown attacker kind '" + s + "'");
}

std::uint64_t AttackerConfig::Hash() const {
  Fnv1a64 h;
  h.UpdateValue(static_cast<int>(kind))
      .UpdateValue(profile_size)
      .UpdateValue(bandwagon_pool)
      .UpdateValue(seed);
  return h.digest();
}

std::vector<std::string> FakeUserBlock::UserIds() const {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k)
    ids.push_back(kFakeUserPrefix + std::to_string(k));
  return ids;
}

void FakeUserBlock::Validate() const {
  if (provenance.size() != rows.size())
    throw ContractError("fake provenance does not match row count");
  for (const auto& row : rows) {
    if (!std::binary_search(row.begin(), row.end(), target_item))
      throw ContractError("fake row without the target item");
    if (!row.empty() && row.back() >= num_items)
      throw ContractError("fake row item out of range");
  }
}

InteractionMatrix StackFakes(const InteractionMatrix& real,
                             const FakeUserBlock& fakes) {
  if (!fakes.rows.empty() && fakes.num_items != real.num_items())
    throw ContractError("fake block item space does not match");
  return real.Stacked(fakes.rows, fakes.UserIds());
}

int DefaultProfileSize(const InteractionMatrix& m) {
  if (m.num_users() == 0) return 1;
  const double mean = static_cast<double>(m.num_interactions()) /
                      static_cast<double>(m.num_users());
  return std::max(1, static_cast<int>(std::lround(mean)));
}

FakeUserBlock GenerateFakeUsers(const AttackerConfig& cfg,
                                const Allocation& alloc, const TargetSpec& spec,
                                const InteractionMatrix& accessible) {
  if (alloc.budgets.size() != spec.target_users.size())
    throw ContractError("allocation does not match the target-user set");
  if (cfg.profile_size < 1 ||
      static_cast<std::size_t>(cfg.profile_size) > accessible.num_items())
    throw ContractError("profile_size must lie in [1, n_items]");
  if (spec.target_item >= accessible.num_items())
    throw ContractError("target item out of range");
  for (int b : alloc.budgets)
    if (b < 0) throw ContractError("negative budget");

  const std::size_t n_items = accessible.num_items();
  const std::size_t fillers = static_cast<std::size_t>(cfg.profile_size - 1);
  const auto degree = accessible.ItemDegrees();
  std::vector<double> popularity(degree.begin(), degree.end());

  std::vector<ItemIndex> all_items(n_items);
  std::iota(all_items.begin(), all_items.end(), 0);
  std::vector<ItemIndex> bandwagon_pool;
  if (cfg.kind == AttackerKind::kBandwagon) {
    // The target is not a filler candidate, so take one extra.
    auto top = TopPopular(degree, static_cast<std::size_t>(cfg.bandwagon_pool) + 1);
    for (ItemIndex i : top)
      if (i != spec.target_item &&
          bandwagon_pool.size() < static_cast<std::size_t>(cfg.bandwagon_pool))
        bandwagon_pool.push_back(i);
  }
  std::vector<ItemIndex> segment_pool;
  if (cfg.kind == AttackerKind::kSegment) {
    for (UserIndex u : spec.target_users) {
      auto row = accessible.row(u);
      segment_pool.insert(segment_pool.end(), row.begin(), row.end());
    }
    std::sort(segment_pool.begin(), segment_pool.end());
    segment_pool.erase(std::unique(segment_pool.begin(), segment_pool.end()),
                       segment_pool.end());
  }

  FakeUserBlock block;
  block.target_item = spec.target_item;
  block.num_items = n_items;
  block.seed = cfg.seed;

  std::vector<char> exclude(n_items, 0);
  for (std::size_t k = 0; k < spec.target_users.size(); ++k) {
    const UserIndex u = spec.target_users[k];
    const int budget = alloc.budgets[k];
    if (budget == 0) continue;
    if (u >= accessible.num_users())
      throw ContractError("target user out of range");
    Rng rng(DeriveSeed(cfg.seed, "attack", {u}));
    const auto template_row = accessible.row(u);
    std::vector<ItemIndex> template_items;
    for (ItemIndex i : template_row)
      if (i != spec.target_item) template_items.push_back(i);
    std::size_t cursor = 0;

    for (int f = 0; f < budget; ++f) {
      std::vector<ItemIndex> row{spec.target_item};
      std::fill(exclude.begin(), exclude.end(), 0);
      exclude[spec.target_item] = 1;
      switch (cfg.kind) {
        case AttackerKind::kRandom:
          SampleUniform(all_items, fillers, exclude, rng, row);
          break;
        case AttackerKind::kAverage:
          SampleWeighted(popularity, fillers, exclude, rng, row);
          break;
        case AttackerKind::kBandwagon:
          SampleUniform(bandwagon_pool, fillers, exclude, rng, row);
          break;
        case AttackerKind::kSegment:
          SampleUniform(segment_pool, fillers, exclude, rng, row);
          break;
        case AttackerKind::kTemplate: {
          // Cycle through the template row so consecutive fakes reuse the
          // least recently copied items first.
          const std::size_t take = std::min(fillers, template_items.size());
          for (std::size_t j = 0; j < take; ++j) {
            const ItemIndex i = template_items[(cursor + j) % template_items.size()];
            row.push_back(i);
            exclude[i] = 1;
          }
          if (!template_items.empty())
            cursor = (cursor + take) % template_items.size();
          if (take < fillers)
            SampleWeighted(popularity, fillers - take, exclude, rng, row);
          break;
        }
      }
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
      block.rows.push_back(std::move(row));
      FakeProvenance prov;
      prov.kind = cfg.kind;
      prov.target_user = u;
      if (cfg.kind == AttackerKind::kTemplate) prov.template_user = u;
      block.provenance.push_back(prov);
    }
  }
  return block;
}

FakeUserBlock MaxSimilarityProfiles(UserIndex u, int t, const TargetSpec& spec,
                                    const InteractionMatrix& accessible,
                                    int profile_size) {
  if (t < 0) throw ContractError("budget must be >= 0");
  if (profile_size < 1) throw ContractError("profile_size must be >= 1");
  FakeUserBlock block;
  block.target_item = spec.target_item;
  block.num_items = accessible.num_items();
  if (t == 0) return block;
  std::vector<ItemIndex> row{spec.target_item};
  const std::size_t fillers = static_cast<std::size_t>(profile_size - 1);
  for (ItemIndex i : accessible.row(u)) {
    if (row.size() - 1 >= fillers) break;
    if (i != spec.target_item) row.push_back(i);
  }
  std::sort(row.begin(), row.end());
  for (int k = 0; k < t; ++k) {
    block.rows.push_back(row);
    block.provenance.push_back({AttackerKind::kTemplate, u, u});
  }
  return block;
}

void WriteFakeUsers(const FakeUserBlock& fakes, const InteractionMatrix& m,
                    std::ostream& out, char separator) {
  const auto ids = fakes.UserIds();
  for (std::size_t k = 0; k < fakes.rows.size(); ++k)
    for (ItemIndex i : fakes.rows[k])
      out << ids[k] << separator << m.item_ids().at(i) << separator << "5\n";
}

FakeUserBlock ReadFakeUsers(std::istream& in, const InteractionMatrix& m,
                            ItemIndex target_item, char separator) {
  FakeUserBlock block;
  block.target_item = target_item;
  block.num_items = m.num_items();
  std::string line;
  std::size_t line_no = 0;
  std::string current;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string uid, iid;
    if (!std::getline(fields, uid, separator) ||
        !std::getline(fields, iid, separator))
      throw ParseError("malformed fake-user line", line_no);
    if (uid.rfind(kFakeUserPrefix, 0) != 0)
      throw ParseError("fake user id must start with fake::", line_no);
    auto item = m.FindItem(iid);
    if (!item) throw ParseError("unknown item '" + iid + "'", line_no);
    if (uid != current) {
      current = uid;
      block.rows.emplace_back();
      block.provenance.push_back({});
    }
    block.rows.back().push_back(*item);
  }
  for (auto& row : block.rows) std::sort(row.begin(), row.end());
  block.Validate();
  return block;
}

}  // namespace ubalab
