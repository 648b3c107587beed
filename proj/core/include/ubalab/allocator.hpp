#ifndef UBALAB_ALLOCATOR_HPP_
#define UBALAB_ALLOCATOR_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ubalab/allocation.hpp"
#include "ubalab/uplift.hpp"

namespace ubalab {

enum class AllocatorKind { kDp, kUniform, kRandom };
std::string ToString(AllocatorKind kind);
AllocatorKind ParseAllocatorKind(const std::string& s);

// Sum of Y[u][t_u] accumulated in user order.
double AllocationObjective(const UpliftTable& table,
                           const std::vector<int>& budgets);

// Exact maximum of sum_u Y[u][t_u] subject to sum_u t_u <= N and
// t_u in [0, H], by group-knapsack dynamic programming over
// dp[users][budget]. Every cell records its chosen budget, so the
// allocation is recovered by walking the choices back from dp[n][N].
// Among equal-value choices a user takes the smallest budget; since the
// walk starts at the last user, later users are the ones kept small.
Allocation AllocateDp(const UpliftTable& table, int total_budget);

// Exhaustive search with the same tie rule; CapacityError when
// (H + 1)^users exceeds 1e7.
Allocation AllocateBruteForce(const UpliftTable& table, int total_budget);

// floor(N / n) each (capped at H), remainder one per user in order.
Allocation AllocateUniform(const std::vector<std::string>& user_ids,
                           int total_budget, int max_budget);

// Increments a uniformly chosen unsaturated user until N is spent or every
// user holds H.
Allocation AllocateRandom(const std::vector<std::string>& user_ids,
                          int total_budget, int max_budget, std::uint64_t seed);

// Fills allocation.objective from `table` (same user order required).
void ScoreAllocation(const UpliftTable& table, Allocation& allocation);

// "# P_max=<value|na> N=<N>" then `user_id<sep>budget` lines.
void WriteAllocation(const Allocation& alloc, std::ostream& out,
                     char separator = '\t');
void WriteAllocationFile(const Allocation& alloc, const std::string& path);
Allocation ReadAllocation(std::istream& in, char separator = '\t');
Allocation ReadAllocationFile(const std::string& path);

}  // namespace ubalab

#endif  // UBALAB_ALLOCATOR_HPP_
