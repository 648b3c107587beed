#include "ubalab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

namespace ubalab {

namespace {

std::vector<std::string_view> SplitFields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r' || s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

template <typename T>
bool ParseNumber(std::string_view s, T& out) {
  s = Trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::ifstream OpenOrThrow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rating logs

RatingLog ParseRatings(std::istream& in, const DelimitedFormat& format) {
  RatingLog log;
  std::unordered_map<std::string, std::size_t> position;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = format.skip_header;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = Trim(line);
    if (view.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    auto fields = SplitFields(view, format.separator);
    if (fields.size() != 3 && fields.size() != 4)
      throw ParseError("expected 3 or 4 fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    RatingRecord rec;
    rec.user_id = std::string(Trim(fields[0]));
    rec.item_id = std::string(Trim(fields[1]));
    if (rec.user_id.empty() || rec.item_id.empty())
      throw ParseError("empty user or item id", line_no);
    if (!ParseNumber(fields[2], rec.rating) || !std::isfinite(rec.rating))
      throw ParseError("malformed rating '" + std::string(fields[2]) + "'",
                       line_no);
    if (fields.size() == 4) {
      std::int64_t ts = 0;
      if (!ParseNumber(fields[3], ts))
        throw ParseError("malformed timestamp '" + std::string(fields[3]) + "'",
                         line_no);
      rec.timestamp = ts;
    }
    std::string key = rec.user_id;
    key.push_back('\0');
    key += rec.item_id;
    auto [it, inserted] = position.try_emplace(key, log.records.size());
    if (inserted) {
      log.records.push_back(std::move(rec));
    } else {
      log.records[it->second] = std::move(rec);  // last wins
    }
  }
  if (log.records.empty()) throw EmptyInputError("rating input has no records");
  return log;
}

RatingLog LoadRatings(const std::string& path, const DelimitedFormat& format) {
  auto in = OpenOrThrow(path);
  return ParseRatings(in, format);
}

void WriteRatings(const RatingLog& log, std::ostream& out,
                  const DelimitedFormat& format) {
  const char sep = format.separator;
  for (const auto& r : log.records) {
    out << r.user_id << sep << r.item_id << sep << FormatDouble(r.rating);
    if (r.timestamp) out << sep << *r.timestamp;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// InteractionMatrix

InteractionMatrix::InteractionMatrix(std::size_t num_items,
                                     std::vector<std::vector<ItemIndex>> rows,
                                     std::vector<std::string> user_ids,
                                     std::vector<std::string> item_ids)
    : rows_(std::move(rows)),
      user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)) {
  if (item_ids_.size() != num_items)
    throw ContractError("item id map size does not match num_items");
  if (user_ids_.size() != rows_.size())
    throw ContractError("user id map size does not match row count");
  for (auto& row : rows_) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    if (!row.empty() && row.back() >= num_items)
      throw ContractError("item index out of range");
    nnz_ += row.size();
  }
  user_lookup_.reserve(user_ids_.size());
  for (std::size_t u = 0; u < user_ids_.size(); ++u) {
    if (!user_lookup_.emplace(user_ids_[u], static_cast<UserIndex>(u)).second)
      throw ContractError("duplicate user id '" + user_ids_[u] + "'");
  }
  item_lookup_.reserve(item_ids_.size());
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    if (!item_lookup_.emplace(item_ids_[i], static_cast<ItemIndex>(i)).second)
      throw ContractError("duplicate item id '" + item_ids_[i] + "'");
  }
}

bool InteractionMatrix::Likes(UserIndex u, ItemIndex i) const {
  const auto& r = rows_.at(u);
  return std::binary_search(r.begin(), r.end(), i);
}

std::optional<UserIndex> InteractionMatrix::FindUser(
    const std::string& id) const {
  auto it = user_lookup_.find(id);
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<ItemIndex> InteractionMatrix::FindItem(
    const std::string& id) const {
  auto it = item_lookup_.find(id);
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> InteractionMatrix::ItemDegrees() const {
  std::vector<std::size_t> deg(num_items(), 0);
  for (const auto& row : rows_)
    for (ItemIndex i : row) ++deg[i];
  return deg;
}

std::vector<std::vector<UserIndex>> InteractionMatrix::ItemColumns() const {
  std::vector<std::vector<UserIndex>> cols(num_items());
  for (std::size_t u = 0; u < rows_.size(); ++u)
    for (ItemIndex i : rows_[u]) cols[i].push_back(static_cast<UserIndex>(u));
  return cols;
}

InteractionMatrix InteractionMatrix::Stacked(
    const std::vector<std::vector<ItemIndex>>& rows,
    const std::vector<std::string>& user_ids) const {
  auto all_rows = rows_;
  all_rows.insert(all_rows.end(), rows.begin(), rows.end());
  auto all_ids = user_ids_;
  all_ids.insert(all_ids.end(), user_ids.begin(), user_ids.end());
  return InteractionMatrix(num_items(), std::move(all_rows), std::move(all_ids),
                           item_ids_);
}

InteractionMatrix InteractionMatrix::SelectUsers(
    std::span<const UserIndex> users) const {
  std::vector<std::vector<ItemIndex>> rows;
  std::vector<std::string> ids;
  rows.reserve(users.size());
  ids.reserve(users.size());
  for (UserIndex u : users) {
    rows.push_back(rows_.at(u));
    ids.push_back(user_ids_.at(u));
  }
  return InteractionMatrix(num_items(), std::move(rows), std::move(ids),
                           item_ids_);
}

std::uint64_t InteractionMatrix::Fingerprint() const {
  Fnv1a64 h;
  h.UpdateValue(static_cast<std::uint64_t>(num_users()));
  h.UpdateValue(static_cast<std::uint64_t>(num_items()));
  for (const auto& id : item_ids_) h.Update(id);
  for (std::size_t u = 0; u < rows_.size(); ++u) {
    h.Update(user_ids_[u]);
    h.UpdateSpan(std::span<const ItemIndex>(rows_[u]));
  }
  return h.digest();
}

// ---------------------------------------------------------------------------
// Snapshots

void WriteMatrix(const InteractionMatrix& m, std::ostream& out) {
  out << kMatrixMagic << '\n';
  out << m.num_users() << '\t' << m.num_items() << '\t' << m.num_interactions()
      << '\n';
  for (const auto& id : m.item_ids()) out << id << '\n';
  for (std::size_t u = 0; u < m.num_users(); ++u) {
    auto row = m.row(static_cast<UserIndex>(u));
    out << m.user_ids()[u] << '\t' << row.size();
    for (ItemIndex i : row) out << '\t' << i;
    out << '\n';
  }
}

void WriteMatrixFile(const InteractionMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  WriteMatrix(m, out);
}

InteractionMatrix ReadMatrix(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || Trim(line) != kMatrixMagic)
    throw ParseError("missing matrix header '" + std::string(kMatrixMagic) + "'",
                     line_no);
  ++line_no;
  if (!std::getline(in, line)) throw ParseError("truncated matrix", line_no);
  auto dims = SplitFields(Trim(line), '\t');
  std::size_t n_users = 0, n_items = 0, nnz = 0;
  if (dims.size() != 3 || !ParseNumber(dims[0], n_users) ||
      !ParseNumber(dims[1], n_items) || !ParseNumber(dims[2], nnz))
    throw ParseError("malformed matrix dimensions", line_no);

  std::vector<std::string> item_ids(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    ++line_no;
    if (!std::getline(in, line)) throw ParseError("truncated item ids", line_no);
    item_ids[i] = std::string(Trim(line));
  }
  std::vector<std::string> user_ids(n_users);
  std::vector<std::vector<ItemIndex>> rows(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    ++line_no;
    if (!std::getline(in, line)) throw ParseError("truncated user rows", line_no);
    auto fields = SplitFields(Trim(line), '\t');
    std::size_t k = 0;
    if (fields.size() < 2 || !ParseNumber(fields[1], k) ||
        fields.size() != k + 2)
      throw ParseError("malformed user row", line_no);
    user_ids[u] = std::string(fields[0]);
    rows[u].resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      if (!ParseNumber(fields[j + 2], rows[u][j]))
        throw ParseError("malformed item index", line_no);
    }
  }
  InteractionMatrix m(n_items, std::move(rows), std::move(user_ids),
                      std::move(item_ids));
  if (m.num_interactions() != nnz)
    throw ParseError("interaction count mismatch", 2);
  return m;
}

InteractionMatrix ReadMatrixFile(const std::string& path) {
  auto in = OpenOrThrow(path);
  return ReadMatrix(in);
}

// ---------------------------------------------------------------------------
// Preprocessing

InteractionMatrix ToImplicit(const RatingLog& log, double like_threshold) {
  if (log.records.empty()) throw EmptyInputError("rating log is empty");
  std::unordered_map<std::string, UserIndex> users;
  std::unordered_map<std::string, ItemIndex> items;
  std::vector<std::string> user_ids, item_ids;
  std::vector<std::vector<ItemIndex>> rows;
  for (const auto& r : log.records) {
    if (!(r.rating > like_threshold)) continue;
    auto [uit, new_user] =
        users.try_emplace(r.user_id, static_cast<UserIndex>(user_ids.size()));
    if (new_user) {
      user_ids.push_back(r.user_id);
      rows.emplace_back();
    }
    auto [iit, new_item] =
        items.try_emplace(r.item_id, static_cast<ItemIndex>(item_ids.size()));
    if (new_item) item_ids.push_back(r.item_id);
    rows[uit->second].push_back(iit->second);
  }
  if (rows.empty())
    throw EmptyMatrixError("no rating exceeds the like threshold");
  const std::size_t n_items = item_ids.size();
  return InteractionMatrix(n_items, std::move(rows), std::move(user_ids),
                           std::move(item_ids));
}

InteractionMatrix KCoreFilter(const InteractionMatrix& m, std::size_t k) {
  if (k == 0) throw ContractError("k-core filtering needs k >= 1");
  const std::size_t n_users = m.num_users();
  const std::size_t n_items = m.num_items();
  std::vector<char> user_alive(n_users, 1), item_alive(n_items, 1);
  std::vector<std::size_t> user_deg(n_users), item_deg = m.ItemDegrees();
  for (std::size_t u = 0; u < n_users; ++u)
    user_deg[u] = m.row(static_cast<UserIndex>(u)).size();
  const auto cols = m.ItemColumns();

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t u = 0; u < n_users; ++u) {
      if (user_alive[u] && user_deg[u] < k) {
        user_alive[u] = 0;
        changed = true;
        for (ItemIndex i : m.row(static_cast<UserIndex>(u)))
          if (item_alive[i]) --item_deg[i];
      }
    }
    for (std::size_t i = 0; i < n_items; ++i) {
      if (item_alive[i] && item_deg[i] < k) {
        item_alive[i] = 0;
        changed = true;
        for (UserIndex u : cols[i])
          if (user_alive[u]) --user_deg[u];
      }
    }
  }

  std::vector<ItemIndex> item_map(n_items, 0);
  std::vector<std::string> item_ids;
  for (std::size_t i = 0; i < n_items; ++i) {
    if (!item_alive[i]) continue;
    item_map[i] = static_cast<ItemIndex>(item_ids.size());
    item_ids.push_back(m.item_ids()[i]);
  }
  std::vector<std::vector<ItemIndex>> rows;
  std::vector<std::string> user_ids;
  for (std::size_t u = 0; u < n_users; ++u) {
    if (!user_alive[u]) continue;
    std::vector<ItemIndex> row;
    for (ItemIndex i : m.row(static_cast<UserIndex>(u)))
      if (item_alive[i]) row.push_back(item_map[i]);
    rows.push_back(std::move(row));
    user_ids.push_back(m.user_ids()[u]);
  }
  if (rows.empty() || item_ids.empty())
    throw EmptyMatrixError("nothing survives " + std::to_string(k) +
                           "-core filtering");
  const std::size_t kept_items = item_ids.size();
  return InteractionMatrix(kept_items, std::move(rows), std::move(user_ids),
                           std::move(item_ids));
}

// ---------------------------------------------------------------------------
// Categories

void ItemCategoryMap::Add(ItemIndex item, std::string category) {
  if (item >= labels_.size()) throw IndexError("category item out of range");
  labels_[item].push_back(std::move(category));
}

ItemCategoryMap ParseCategories(std::istream& in, const InteractionMatrix& m,
                                const DelimitedFormat& format) {
  ItemCategoryMap cats(m.num_items());
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = format.skip_header;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = Trim(line);
    if (view.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    auto fields = SplitFields(view, format.separator);
    if (fields.size() != 2)
      throw ParseError("expected item<sep>category", line_no);
    auto item = m.FindItem(std::string(Trim(fields[0])));
    if (!item) continue;
    cats.Add(*item, std::string(Trim(fields[1])));
  }
  return cats;
}

ItemCategoryMap LoadCategories(const std::string& path,
                               const InteractionMatrix& m,
                               const DelimitedFormat& format) {
  auto in = OpenOrThrow(path);
  return ParseCategories(in, m, format);
}

// ---------------------------------------------------------------------------
// Target selection

std::string ToString(PopularityMode mode) {
  return mode == PopularityMode::kPopular ? "popular" : "unpopular";
}

PopularityMode ParsePopularityMode(const std::string& s) {
  if (s == "popular") return PopularityMode::kPopular;
  if (s == "unpopular") return PopularityMode::kUnpopular;
  throw ContractError("unknown popularity mode '" + s + "'");
}

void TargetSpec::Validate(const InteractionMatrix& m) const {
  if (target_item >= m.num_items())
    throw ContractError("target item out of range");
  if (target_users.empty()) throw ContractError("target user set is empty");
  for (std::size_t j = 0; j < target_users.size(); ++j) {
    UserIndex u = target_users[j];
    if (u >= m.num_users()) throw ContractError("target user out of range");
    if (j > 0 && target_users[j - 1] >= u)
      throw ContractError("target users must be ascending and unique");
    if (m.Likes(u, target_item))
      throw ContractError("target user " + m.user_ids()[u] +
                          " already likes the target item");
  }
}

std::vector<std::vector<ItemIndex>> PopularityQuintiles(
    const InteractionMatrix& m) {
  const auto deg = m.ItemDegrees();
  std::vector<ItemIndex> order(m.num_items());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](ItemIndex a, ItemIndex b) { return deg[a] > deg[b]; });
  std::vector<std::vector<ItemIndex>> groups(5);
  const std::size_t base = order.size() / 5, extra = order.size() % 5;
  std::size_t pos = 0;
  for (std::size_t g = 0; g < 5; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    groups[g].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                     order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return groups;
}

std::vector<ItemIndex> SelectTargetItems(const InteractionMatrix& m,
                                         PopularityMode mode, std::size_t n,
                                         std::uint64_t seed) {
  const auto groups = PopularityQuintiles(m);
  const auto& group =
      mode == PopularityMode::kPopular ? groups.front() : groups.back();
  if (n > group.size())
    throw InsufficientCandidatesError(
        "requested " + std::to_string(n) + " target items from a group of " +
        std::to_string(group.size()));
  std::vector<ItemIndex> out;
  Rng rng(DeriveSeed(seed, "select-items"));
  std::sample(group.begin(), group.end(), std::back_inserter(out),
              static_cast<std::ptrdiff_t>(n), rng);
  return out;
}

std::vector<UserIndex> TargetUserCandidates(const InteractionMatrix& m,
                                            const ItemCategoryMap& cats,
                                            ItemIndex target_item,
                                            std::size_t cat_threshold) {
  if (!cats.mapped(target_item))
    throw ContractError("target item has no category");
  const auto target_cats = cats.categories(target_item);
  std::vector<UserIndex> out;
  for (std::size_t u = 0; u < m.num_users(); ++u) {
    const auto uu = static_cast<UserIndex>(u);
    if (m.Likes(uu, target_item)) continue;
    std::size_t count = 0;
    for (ItemIndex i : m.row(uu)) {
      if (!cats.mapped(i)) continue;
      for (const auto& c : cats.categories(i))
        if (std::find(target_cats.begin(), target_cats.end(), c) !=
            target_cats.end())
          ++count;
    }
    if (count >= 1 && count < cat_threshold) out.push_back(uu);
  }
  return out;
}

TargetSpec SelectTargetUsers(const InteractionMatrix& m,
                             const ItemCategoryMap& cats, ItemIndex target_item,
                             std::size_t n, std::size_t cat_threshold,
                             std::uint64_t seed, PopularityMode mode) {
  if (n == 0) throw ContractError("need at least one target user");
  const auto candidates =
      TargetUserCandidates(m, cats, target_item, cat_threshold);
  if (candidates.size() < n)
    throw InsufficientCandidatesError(
        "only " + std::to_string(candidates.size()) +
        " target-user candidates, need " + std::to_string(n));
  TargetSpec spec;
  spec.target_item = target_item;
  spec.popularity_mode = mode;
  spec.selection_seed = seed;
  Rng rng(DeriveSeed(seed, "select-users", {target_item}));
  std::sample(candidates.begin(), candidates.end(),
              std::back_inserter(spec.target_users),
              static_cast<std::ptrdiff_t>(n), rng);
  return spec;
}

InteractionMatrix SplitAccessible(const InteractionMatrix& m, double ratio,
                                  std::span<const UserIndex> target_users,
                                  std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw ContractError("accessible ratio must lie in (0, 1]");
  const std::size_t n = m.num_users();
  // Guard against 0.2 * 100 = 20.000000000000004.
  const auto keep = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(n) - 1e-9));
  std::vector<char> is_target(n, 0);
  std::size_t n_targets = 0;
  for (UserIndex u : target_users) {
    if (u >= n) throw IndexError("target user out of range");
    if (!is_target[u]) ++n_targets;
    is_target[u] = 1;
  }
  if (keep < n_targets)
    throw InsufficientCandidatesError(
        "accessible set of " + std::to_string(keep) +
        " users cannot hold " + std::to_string(n_targets) + " target users");

  std::vector<UserIndex> others;
  for (std::size_t u = 0; u < n; ++u)
    if (!is_target[u]) others.push_back(static_cast<UserIndex>(u));
  std::vector<UserIndex> chosen;
  Rng rng(DeriveSeed(seed, "accessible"));
  std::sample(others.begin(), others.end(), std::back_inserter(chosen),
              static_cast<std::ptrdiff_t>(keep - n_targets), rng);
  for (std::size_t u = 0; u < n; ++u)
    if (is_target[u]) chosen.push_back(static_cast<UserIndex>(u));
  std::sort(chosen.begin(), chosen.end());
  return m.SelectUsers(chosen);
}

TargetSpec RebaseTargetSpec(const TargetSpec& spec,
                            const InteractionMatrix& from,
                            const InteractionMatrix& to) {
  TargetSpec out = spec;
  auto item = to.FindItem(from.item_ids().at(spec.target_item));
  if (!item) throw ContractError("target item missing from destination matrix");
  out.target_item = *item;
  out.target_users.clear();
  for (UserIndex u : spec.target_users) {
    auto v = to.FindUser(from.user_ids().at(u));
    if (!v)
      throw ContractError("target user " + from.user_ids()[u] +
                          " missing from destination matrix");
    out.target_users.push_back(*v);
  }
  std::sort(out.target_users.begin(), out.target_users.end());
  return out;
}

}  // namespace ubalab
