#ifndef UBALAB_DATASET_HPP_
#define UBALAB_DATASET_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ubalab/common.hpp"

namespace ubalab {

struct RatingRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
};

// Raw explicit feedback. Holds at most one record per (user, item); the
// record order is the order of first occurrence in the source.
struct RatingLog {
  std::vector<RatingRecord> records;
};

struct DelimitedFormat {
  char separator = ',';
  bool skip_header = false;
};

// Parses `user<sep>item<sep>rating[<sep>timestamp]` lines. Blank lines are
// ignored. Duplicate (user, item) pairs keep the last rating.
RatingLog ParseRatings(std::istream& in, const DelimitedFormat& format = {});
RatingLog LoadRatings(const std::string& path,
                      const DelimitedFormat& format = {});
void WriteRatings(const RatingLog& log, std::ostream& out,
                  const DelimitedFormat& format = {});

// Sparse binary user x item matrix with dense indices and id maps. Rows are
// sorted and duplicate-free; it is immutable once built.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;

  // Validates every invariant; throws ContractError on violation. Rows are
  // sorted and deduplicated on the way in.
  InteractionMatrix(std::size_t num_items,
                    std::vector<std::vector<ItemIndex>> rows,
                    std::vector<std::string> user_ids,
                    std::vector<std::string> item_ids);

  std::size_t num_users() const { return rows_.size(); }
  std::size_t num_items() const { return item_ids_.size(); }
  std::size_t num_interactions() const { return nnz_; }
  bool empty() const { return nnz_ == 0; }

  std::span<const ItemIndex> row(UserIndex u) const { return rows_.at(u); }
  const std::vector<std::vector<ItemIndex>>& rows() const { return rows_; }
  bool Likes(UserIndex u, ItemIndex i) const;

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  std::optional<UserIndex> FindUser(const std::string& id) const;
  std::optional<ItemIndex> FindItem(const std::string& id) const;

  // Number of users liking each item.
  std::vector<std::size_t> ItemDegrees() const;
  // Users per item, each list ascending.
  std::vector<std::vector<UserIndex>> ItemColumns() const;

  // Appends extra rows (same item space) below the existing users.
  InteractionMatrix Stacked(const std::vector<std::vector<ItemIndex>>& rows,
                            const std::vector<std::string>& user_ids) const;
  // Keeps the given users (in the given order); item space unchanged.
  InteractionMatrix SelectUsers(std::span<const UserIndex> users) const;

  // Content hash of ids and rows.
  std::uint64_t Fingerprint() const;

 private:
  std::vector<std::vector<ItemIndex>> rows_;
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, UserIndex> user_lookup_;
  std::unordered_map<std::string, ItemIndex> item_lookup_;
  std::size_t nnz_ = 0;
};

// Snapshot format, text, tab separated:
//   UBALAB-IM v1
//   <n_users>\t<n_items>\t<n_interactions>
//   <item_id>                          (n_items lines, index order)
//   <user_id>\t<k>\t<i_1>\t...\t<i_k>  (n_users lines, index order)
inline constexpr const char* kMatrixMagic = "UBALAB-IM v1";
void WriteMatrix(const InteractionMatrix& m, std::ostream& out);
void WriteMatrixFile(const InteractionMatrix& m, const std::string& path);
InteractionMatrix ReadMatrix(std::istream& in);
InteractionMatrix ReadMatrixFile(const std::string& path);

// (u, i) is kept iff rating > like_threshold. Users and items without any
// like are dropped; indices follow first appearance in the log.
InteractionMatrix ToImplicit(const RatingLog& log, double like_threshold = 3.0);

// Iteratively drops users and items with fewer than k interactions.
InteractionMatrix KCoreFilter(const InteractionMatrix& m, std::size_t k = 10);

// Item index -> category labels. An item may carry several labels.
class ItemCategoryMap {
 public:
  ItemCategoryMap() = default;
  explicit ItemCategoryMap(std::size_t num_items) : labels_(num_items) {}

  void Add(ItemIndex item, std::string category);
  std::span<const std::string> categories(ItemIndex item) const {
    return labels_.at(item);
  }
  bool mapped(ItemIndex item) const {
    return item < labels_.size() && !labels_[item].empty();
  }
  std::size_t num_items() const { return labels_.size(); }

 private:
  std::vector<std::vector<std::string>> labels_;
};

// `item_id<sep>category` lines; ids not present in `m` are skipped.
ItemCategoryMap ParseCategories(std::istream& in, const InteractionMatrix& m,
                                const DelimitedFormat& format = {});
ItemCategoryMap LoadCategories(const std::string& path,
                               const InteractionMatrix& m,
                               const DelimitedFormat& format = {});

enum class PopularityMode { kPopular, kUnpopular };
std::string ToString(PopularityMode mode);
PopularityMode ParsePopularityMode(const std::string& s);

struct TargetSpec {
  ItemIndex target_item = 0;
  std::vector<UserIndex> target_users;  // ascending, duplicate-free
  PopularityMode popularity_mode = PopularityMode::kPopular;
  std::uint64_t selection_seed = 0;

  // Throws ContractError if any TargetSpec invariant fails against `m`.
  void Validate(const InteractionMatrix& m) const;
};

// Popularity quintiles: items sorted by degree (desc, ties by ascending
// index), split into five contiguous groups; earlier groups take the
// remainder. Exposed for tests.
std::vector<std::vector<ItemIndex>> PopularityQuintiles(
    const InteractionMatrix& m);

std::vector<ItemIndex> SelectTargetItems(const InteractionMatrix& m,
                                         PopularityMode mode, std::size_t n,
                                         std::uint64_t seed);

// Users with 1 <= (liked items sharing a category with the target) <
// cat_threshold, and who have not liked the target item.
std::vector<UserIndex> TargetUserCandidates(const InteractionMatrix& m,
                                            const ItemCategoryMap& cats,
                                            ItemIndex target_item,
                                            std::size_t cat_threshold = 10);

TargetSpec SelectTargetUsers(const InteractionMatrix& m,
                             const ItemCategoryMap& cats, ItemIndex target_item,
                             std::size_t n, std::size_t cat_threshold,
                             std::uint64_t seed,
                             PopularityMode mode = PopularityMode::kPopular);

// Attacker-visible sub-matrix: ceil(ratio * n_users) users, always including
// the target users, the rest drawn uniformly. Users keep their relative
// order; item indices are unchanged.
InteractionMatrix SplitAccessible(const InteractionMatrix& m, double ratio,
                                  std::span<const UserIndex> target_users,
                                  std::uint64_t seed);

// Re-expresses a spec built against `from` in the user indices of `to`,
// matching users by external id.
TargetSpec RebaseTargetSpec(const TargetSpec& spec,
                            const InteractionMatrix& from,
                            const InteractionMatrix& to);

}  // namespace ubalab

#endif  // UBALAB_DATASET_HPP_
