#include "ubalab/allocator.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ubalab {

std::string ToString(AllocatorKind kind) {
  switch (kind) {
    case AllocatorKind::kDp:
      return "dp";
    case AllocatorKind::kUniform:
      return "uniform";
    case AllocatorKind::kRandom:
      return "random";
  }
  return "unknown";
}

AllocatorKind ParseAllocatorKind(const std::string& s) {
  if (s == "dp") return AllocatorKind::kDp;
  if (s == "uniform") return AllocatorKind::kUniform;
  if (s == "random") return AllocatorKind::kRandom;
  throw ContractError("unknown allocator '" + s + "'");
}

double AllocationObjective(const UpliftTable& table,
                           const std::vector<int>& budgets) {
  if (budgets.size() != table.num_users())
    throw ContractError("allocation does not match uplift table");
  double total = 0.0;
  for (std::size_t r = 0; r < budgets.size(); ++r) total += table.at(r, budgets[r]);
  return total;
}

Allocation AllocateDp(const UpliftTable& table, int total_budget) {
  if (total_budget < 0) throw ContractError("N must be >= 0");
  table.Validate();
  const std::size_t n = table.num_users();
  const int H = table.max_budget;
  const auto width = static_cast<std::size_t>(total_budget) + 1;

  // dp[i][j]: best value of the first i users with at most j fakes.
  std::vector<double> dp((n + 1) * width, 0.0);
  std::vector<int> choice((n + 1) * width, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    const auto& y = table.values[i - 1];
    for (std::size_t j = 0; j < width; ++j) {
      double best = dp[(i - 1) * width + j] + y[0];
      int best_k = 0;
      for (int k = 1; k <= H && static_cast<std::size_t>(k) <= j; ++k) {
        const double v = dp[(i - 1) * width + (j - k)] + y[k];
        if (v > best) {
          best = v;
          best_k = k;
        }
      }
      dp[i * width + j] = best;
      choice[i * width + j] = best_k;
    }
  }

  Allocation alloc;
  alloc.user_ids = table.target_user_ids;
  alloc.total_budget = total_budget;
  alloc.budgets.assign(n, 0);
  std::size_t j = width - 1;
  for (std::size_t i = n; i >= 1; --i) {
    const int k = choice[i * width + j];
    alloc.budgets[i - 1] = k;
    j -= static_cast<std::size_t>(k);
  }
  alloc.objective = dp[n * width + width - 1];
  return alloc;
}

Allocation AllocateBruteForce(const UpliftTable& table, int total_budget) {
  if (total_budget < 0) throw ContractError("N must be >= 0");
  table.Validate();
  const std::size_t n = table.num_users();
  const int H = table.max_budget;
  double space = 1.0;
  for (std::size_t i = 0; i < n; ++i) space *= H + 1;
  if (space > 1e7)
    throw CapacityError("brute-force search space exceeds 1e7 allocations");

  // Odometer over t with the LAST user as the most significant digit, so
  // candidates are visited in lexicographic order of (t_{n-1}, ..., t_0);
  // the first maximizer seen is the tie-rule winner.
  std::vector<int> t(n, 0), best_t(n, 0);
  double best = -1.0;
  bool have = false;
  while (true) {
    int spent = 0;
    for (int b : t) spent += b;
    if (spent <= total_budget) {
      const double v = AllocationObjective(table, t);
      if (!have || v > best) {
        best = v;
        best_t = t;
        have = true;
      }
    }
    std::size_t pos = 0;
    while (pos < n && t[pos] == H) t[pos++] = 0;
    if (pos == n) break;
    ++t[pos];
  }
  Allocation alloc;
  alloc.user_ids = table.target_user_ids;
  alloc.total_budget = total_budget;
  alloc.budgets = best_t;
  alloc.objective = n == 0 ? 0.0 : best;
  return alloc;
}

Allocation AllocateUniform(const std::vector<std::string>& user_ids,
                           int total_budget, int max_budget) {
  if (total_budget < 0) throw ContractError("N must be >= 0");
  if (max_budget < 0) throw ContractError("H must be >= 0");
  Allocation alloc;
  alloc.user_ids = user_ids;
  alloc.total_budget = total_budget;
  const int n = static_cast<int>(user_ids.size());
  if (n == 0) return alloc;
  const int base = std::min(max_budget, total_budget / n);
  alloc.budgets.assign(user_ids.size(), base);
  int remainder = total_budget - base * n;
  for (int r = 0; r < n && remainder > 0; ++r) {
    if (alloc.budgets[r] < max_budget) {
      ++alloc.budgets[r];
      --remainder;
    }
  }
  return alloc;
}

Allocation AllocateRandom(const std::vector<std::string>& user_ids,
                          int total_budget, int max_budget, std::uint64_t seed) {
  if (total_budget < 0) throw ContractError("N must be >= 0");
  if (max_budget < 0) throw ContractError("H must be >= 0");
  Allocation alloc;
  alloc.user_ids = user_ids;
  alloc.total_budget = total_budget;
  alloc.budgets.assign(user_ids.size(), 0);
  std::vector<std::size_t> open;
  if (max_budget > 0)
    for (std::size_t r = 0; r < user_ids.size(); ++r) open.push_back(r);
  Rng rng(DeriveSeed(seed, "random-alloc"));
  for (int spent = 0; spent < total_budget && !open.empty(); ++spent) {
    std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
    const std::size_t slot = pick(rng);
    const std::size_t r = open[slot];
    if (++alloc.budgets[r] == max_budget) open.erase(open.begin() + static_cast<std::ptrdiff_t>(slot));
  }
  return alloc;
}

void ScoreAllocation(const UpliftTable& table, Allocation& allocation) {
  if (allocation.user_ids != table.target_user_ids)
    throw ContractError("allocation users differ from table users");
  allocation.objective = AllocationObjective(table, allocation.budgets);
}

// ---------------------------------------------------------------------------

void WriteAllocation(const Allocation& alloc, std::ostream& out, char separator) {
  out << "# P_max="
      << (alloc.objective ? FormatDouble(*alloc.objective) : std::string("na"))
      << " N=" << alloc.total_budget << '\n';
  for (std::size_t r = 0; r < alloc.budgets.size(); ++r)
    out << alloc.user_ids[r] << separator << alloc.budgets[r] << '\n';
}

void WriteAllocationFile(const Allocation& alloc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  WriteAllocation(alloc, out);
}

Allocation ReadAllocation(std::istream& in, char separator) {
  Allocation alloc;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream header(line.substr(1));
      std::string tok;
      while (header >> tok) {
        if (tok.rfind("P_max=", 0) == 0 && tok.substr(6) != "na")
          alloc.objective = std::stod(tok.substr(6));
        else if (tok.rfind("N=", 0) == 0)
          alloc.total_budget = std::stoi(tok.substr(2));
      }
      continue;
    }
    const auto pos = line.rfind(separator);
    if (pos == std::string::npos) throw ParseError("malformed allocation line", line_no);
    alloc.user_ids.push_back(line.substr(0, pos));
    try {
      alloc.budgets.push_back(std::stoi(line.substr(pos + 1)));
    } catch (const std::exception&) {
      throw ParseError("malformed budget", line_no);
    }
  }
  if (alloc.Spent() > alloc.total_budget)
    throw ContractError("allocation exceeds its total budget");
  return alloc;
}

Allocation ReadAllocationFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return ReadAllocation(in);
}

}  // namespace ubalab
