#include "ubalab/pathcount.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include <boost/math/distributions/students_t.hpp>

namespace ubalab {

namespace {

using Wide = unsigned __int128;

void CheckedAdd(Wide& acc, Wide v) {
  const Wide before = acc;
  acc += v;
  if (acc < before) throw OverflowError("walk count exceeds 128-bit range");
}

}  // namespace

bool IsSupportedOrder(int order) {
  return order == 1 || order == 3 || order == 5 || order == 7;
}

std::vector<std::uint64_t> PathCountsFromUser(const InteractionMatrix& m,
                                              UserIndex u, int order) {
  if (!IsSupportedOrder(order))
    throw ContractError("walk order must be one of 1, 3, 5, 7");
  if (u >= m.num_users()) throw IndexError("user index out of range");

  std::vector<Wide> items(m.num_items(), 0);
  for (ItemIndex i : m.row(u)) items[i] = 1;
  std::vector<Wide> users(m.num_users(), 0);
  for (int step = 1; step < order; step += 2) {
    // item -> user
    for (std::size_t v = 0; v < m.num_users(); ++v) {
      Wide acc = 0;
      for (ItemIndex i : m.row(static_cast<UserIndex>(v))) CheckedAdd(acc, items[i]);
      users[v] = acc;
    }
    // user -> item
    std::fill(items.begin(), items.end(), Wide{0});
    for (std::size_t v = 0; v < m.num_users(); ++v) {
      if (users[v] == 0) continue;
      for (ItemIndex i : m.row(static_cast<UserIndex>(v)))
        CheckedAdd(items[i], users[v]);
    }
  }
  std::vector<std::uint64_t> out(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] > std::numeric_limits<std::uint64_t>::max())
      throw OverflowError("walk count exceeds 64-bit range");
    out[i] = static_cast<std::uint64_t>(items[i]);
  }
  return out;
}

std::vector<std::uint64_t> PathCounts(const InteractionMatrix& m,
                                      const PathQuery& q) {
  if (!IsSupportedOrder(q.order))
    throw ContractError("walk order must be one of 1, 3, 5, 7");
  for (const auto& [u, i] : q.pairs) {
    if (u >= m.num_users()) throw IndexError("user index out of range");
    if (i >= m.num_items()) throw IndexError("item index out of range");
  }
  // One propagation per distinct user.
  std::map<UserIndex, std::vector<std::size_t>> by_user;
  for (std::size_t k = 0; k < q.pairs.size(); ++k)
    by_user[q.pairs[k].first].push_back(k);
  std::vector<std::uint64_t> out(q.pairs.size(), 0);
  for (const auto& [u, positions] : by_user) {
    const auto counts = PathCountsFromUser(m, u, q.order);
    for (std::size_t k : positions) out[k] = counts[q.pairs[k].second];
  }
  return out;
}

std::vector<std::uint64_t> AugmentedPathCounts(const InteractionMatrix& real,
                                               const FakeUserBlock& fakes,
                                               const PathQuery& q) {
  if (fakes.rows.empty()) return PathCounts(real, q);
  if (fakes.num_items != real.num_items())
    throw ContractError("fake block item space does not match");
  return PathCounts(StackFakes(real, fakes), q);
}

// ---------------------------------------------------------------------------

void ProxyParams::Validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) ||
      !std::isfinite(beta))
    throw ContractError("proxy alpha and beta must be positive");
}

double ProxyRaw(std::uint64_t count, const ProxyParams& p) {
  if (count == 0) return 0.0;
  return p.alpha * std::pow(static_cast<double>(count), p.beta);
}

double ProxyUplift(std::uint64_t count, const ProxyParams& p,
                   double normalizer) {
  if (!(normalizer > 0.0)) throw ContractError("normalizer must be positive");
  return std::min(1.0, ProxyRaw(count, p) / normalizer);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> AverageRanks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

SpearmanResult Spearman(const std::vector<double>& x,
                        const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractError("sequence lengths differ");
  const std::size_t n = x.size();
  if (n < 3) throw InsufficientDataError("Spearman needs at least 3 points");
  const auto rx = AverageRanks(x), ry = AverageRanks(y);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += (rx[k] - mean) * (ry[k] - mean);
    sxx += (rx[k] - mean) * (rx[k] - mean);
    syy += (ry[k] - mean) * (ry[k] - mean);
  }
  SpearmanResult res;
  if (sxx == 0 || syy == 0) return res;  // constant sequence: r = 0, p = 1
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  if (std::abs(res.r) >= 1.0) {
    res.p_value = 0.0;
    return res;
  }
  const double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
  boost::math::students_t dist(df);
  res.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return res;
}

CorrelationReport ComputeCorrelationReport(const TrainedModel& model,
                                           const InteractionMatrix& m,
                                           const CorrelationOptions& opts) {
  if (model.num_users() != m.num_users() || model.num_items() != m.num_items())
    throw ContractError("model was not trained on this matrix");
  if (!IsSupportedOrder(opts.order))
    throw ContractError("walk order must be one of 1, 3, 5, 7");

  const std::size_t n_items = m.num_items();
  std::vector<std::uint64_t> cells;
  cells.reserve(m.num_users() * n_items - m.num_interactions());
  for (std::size_t u = 0; u < m.num_users(); ++u) {
    auto row = m.row(static_cast<UserIndex>(u));
    std::size_t e = 0;
    for (std::size_t i = 0; i < n_items; ++i) {
      while (e < row.size() && row[e] < i) ++e;
      if (e < row.size() && row[e] == i) continue;
      cells.push_back(u * n_items + i);
    }
  }
  if (opts.sample_cap > 0 && cells.size() > opts.sample_cap) {
    std::vector<std::uint64_t> sampled;
    sampled.reserve(opts.sample_cap);
    Rng rng(DeriveSeed(opts.seed, "correlate"));
    std::sample(cells.begin(), cells.end(), std::back_inserter(sampled),
                static_cast<std::ptrdiff_t>(opts.sample_cap), rng);
    cells.swap(sampled);
  }

  struct PairStat {
    std::uint64_t count;
    double score;
  };
  std::vector<PairStat> stats;
  stats.reserve(cells.size());
  std::size_t pos = 0;
  while (pos < cells.size()) {
    const auto u = static_cast<UserIndex>(cells[pos] / n_items);
    const auto counts = PathCountsFromUser(m, u, opts.order);
    for (; pos < cells.size() && cells[pos] / n_items == u; ++pos) {
      const auto i = static_cast<ItemIndex>(cells[pos] % n_items);
      stats.push_back({counts[i], Predict(model, u, i)});
    }
  }
  std::stable_sort(stats.begin(), stats.end(),
                   [](const PairStat& a, const PairStat& b) {
                     return a.count < b.count;
                   });

  CorrelationReport report;
  report.order = opts.order;
  report.num_pairs = stats.size();
  const std::size_t groups = std::min(opts.num_groups, stats.size());
  if (groups < 3)
    throw InsufficientDataError("fewer than 3 correlation groups");
  const std::size_t base = stats.size() / groups, extra = stats.size() % groups;
  std::size_t start = 0;
  std::vector<double> xs, ys;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t len = base + (g < extra ? 1 : 0);
    double sc = 0, ss = 0;
    for (std::size_t k = start; k < start + len; ++k) {
      sc += static_cast<double>(stats[k].count);
      ss += stats[k].score;
    }
    start += len;
    const CorrelationGroup grp{sc / static_cast<double>(len),
                               ss / static_cast<double>(len)};
    report.groups.push_back(grp);
    xs.push_back(grp.mean_count);
    ys.push_back(grp.mean_score);
  }
  const auto sp = Spearman(xs, ys);
  report.spearman_r = sp.r;
  report.p_value = sp.p_value;
  return report;
}

void WriteCorrelationPlotData(const CorrelationReport& report, std::ostream& out,
                              char separator) {
  out << "# spearman_r=" << FormatDouble(report.spearman_r)
      << " p_value=" << FormatDouble(report.p_value)
      << " order=" << report.order << " groups=" << report.groups.size()
      << " pairs=" << report.num_pairs << '\n';
  out << "mean_count" << separator << "mean_score" << '\n';
  for (const auto& g : report.groups)
    out << FormatDouble(g.mean_count) << separator << FormatDouble(g.mean_score)
        << '\n';
}

}  // namespace ubalab
