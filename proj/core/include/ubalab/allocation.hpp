#ifndef UBALAB_ALLOCATION_HPP_
#define UBALAB_ALLOCATION_HPP_

#include <optional>
#include <string>
#include <vector>

namespace ubalab {

// Fake-user budget per target user. Entries align with the target-user order
// of the TargetSpec / UpliftTable they were computed for.
struct Allocation {
  std::vector<std::string> user_ids;
  std::vector<int> budgets;
  int total_budget = 0;             // N
  std::optional<double> objective;  // sum_u Y[u][t_u] when a table was used

  int Spent() const {
    int s = 0;
    for (int b : budgets) s += b;
    return s;
  }
};

}  // namespace ubalab

#endif  // UBALAB_ALLOCATION_HPP_
