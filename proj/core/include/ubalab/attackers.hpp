#ifndef UBALAB_ATTACKERS_HPP_
#define UBALAB_ATTACKERS_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ubalab/allocation.hpp"
#include "ubalab/common.hpp"
#include "ubalab/dataset.hpp"

namespace ubalab {

enum class AttackerKind { kRandom, kAverage, kBandwagon, kSegment, kTemplate };

std::string ToString(AttackerKind kind);
AttackerKind ParseAttackerKind(const std::string& s);

struct AttackerConfig {
  AttackerKind kind = AttackerKind::kTemplate;
  int profile_size = 8;     // likes per fake user, target item included
  int bandwagon_pool = 50;  // top-popular items for the bandwagon filler
  std::uint64_t seed = 0;

  std::uint64_t Hash() const;
};

struct FakeProvenance {
  AttackerKind kind = AttackerKind::kTemplate;
  std::optional<UserIndex> template_user;
  std::optional<UserIndex> target_user;
};

// Injected profiles D_f. Every row is sorted and contains the target item.
struct FakeUserBlock {
  std::vector<std::vector<ItemIndex>> rows;
  std::vector<FakeProvenance> provenance;
  ItemIndex target_item = 0;
  std::size_t num_items = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return rows.size(); }
  std::vector<std::string> UserIds() const;  // "fake::<k>"
  // Throws ContractError if a row misses the target or leaves the item range.
  void Validate() const;
};

inline constexpr const char* kFakeUserPrefix = "fake::";

// [D_real; D_fake] as one matrix; fake users take ids "fake::<k>".
InteractionMatrix StackFakes(const InteractionMatrix& real,
                             const FakeUserBlock& fakes);

// round(mean row length), at least 1.
int DefaultProfileSize(const InteractionMatrix& m);

// Emits sum(alloc.budgets) rows. `spec` indexes users of `accessible`, and
// alloc.budgets[k] belongs to spec.target_users[k].
FakeUserBlock GenerateFakeUsers(const AttackerConfig& cfg,
                                const Allocation& alloc, const TargetSpec& spec,
                                const InteractionMatrix& accessible);

// t copies of {target} + the first (profile_size - 1) items of row(u).
FakeUserBlock MaxSimilarityProfiles(UserIndex u, int t, const TargetSpec& spec,
                                    const InteractionMatrix& accessible,
                                    int profile_size);

// Same interaction text format as rating input: `fake::<k><sep>item<sep>5`.
void WriteFakeUsers(const FakeUserBlock& fakes, const InteractionMatrix& m,
                    std::ostream& out, char separator = ',');
FakeUserBlock ReadFakeUsers(std::istream& in, const InteractionMatrix& m,
                            ItemIndex target_item, char separator = ',');

}  // namespace ubalab

#endif  // UBALAB_ATTACKERS_HPP_
