#include "ubalab/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ubalab {

RankMetrics MetricsAtRank(std::size_t rank, std::size_t k) {
  RankMetrics m;
  if (rank == 0 || rank > k) return m;
  const double r = static_cast<double>(rank);
  m.hr = 1.0;
  m.ndcg = 1.0 / std::log2(r + 1.0);
  m.mrr = 1.0 / r;
  return m;
}

RankMetrics MetricsFromRankedList(std::span<const ItemIndex> ranked,
                                  ItemIndex target, std::size_t k) {
  auto it = std::find(ranked.begin(), ranked.end(), target);
  if (it == ranked.end()) return {};
  return MetricsAtRank(static_cast<std::size_t>(it - ranked.begin()) + 1, k);
}

std::string ToString(UserGroup g) {
  return g == UserGroup::kTarget ? "target" : "all";
}

std::string ToString(Phase p) { return p == Phase::kBefore ? "before" : "after"; }

// ---------------------------------------------------------------------------

std::string MetricsReport::Key(UserGroup g, Phase p, std::size_t k) {
  return ToString(g) + "." + ToString(p) + ".k" + std::to_string(k);
}

void MetricsReport::Set(UserGroup g, Phase p, std::size_t k, RankMetrics m) {
  if (std::find(ks_.begin(), ks_.end(), k) == ks_.end()) ks_.push_back(k);
  cells_[Key(g, p, k)] = m;
}

RankMetrics MetricsReport::Get(UserGroup g, Phase p, std::size_t k) const {
  auto it = cells_.find(Key(g, p, k));
  if (it == cells_.end()) throw ContractError("missing metric " + Key(g, p, k));
  return it->second;
}

bool MetricsReport::Has(UserGroup g, Phase p, std::size_t k) const {
  return cells_.count(Key(g, p, k)) > 0;
}

std::string MetricsReport::label() const {
  auto it = metadata_.find("label");
  return it == metadata_.end() ? std::string("report") : it->second;
}

bool MetricsReport::SatisfiesInvariants() const {
  for (const auto& [key, m] : cells_) {
    for (double v : {m.hr, m.ndcg, m.mrr})
      if (!(v >= 0.0 && v <= 1.0)) return false;
    // Means of per-user inequalities; allow for summation rounding.
    if (m.mrr > m.ndcg + 1e-12 || m.ndcg > m.hr + 1e-12) return false;
  }
  return true;
}

void MetricsReport::WriteKeyValue(std::ostream& out) const {
  for (const auto& [key, m] : cells_) {
    out << key << ".hr=" << FormatDouble(m.hr) << '\n';
    out << key << ".ndcg=" << FormatDouble(m.ndcg) << '\n';
    out << key << ".mrr=" << FormatDouble(m.mrr) << '\n';
  }
  for (const auto& [k, v] : metadata_) out << "meta." << k << '=' << v << '\n';
}

nlohmann::json MetricsReport::ToJson() const {
  nlohmann::json j;
  j["ks"] = ks_;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [key, m] : cells_)
    j["metrics"][key] = {{"hr", m.hr}, {"ndcg", m.ndcg}, {"mrr", m.mrr}};
  j["metadata"] = metadata_;
  return j;
}

MetricsReport MetricsReport::FromJson(const nlohmann::json& j) {
  MetricsReport r(j.at("ks").get<std::vector<std::size_t>>());
  for (const auto& [key, v] : j.at("metrics").items())
    r.cells_[key] = {v.at("hr").get<double>(), v.at("ndcg").get<double>(),
                     v.at("mrr").get<double>()};
  r.metadata_ = j.at("metadata").get<std::map<std::string, std::string>>();
  return r;
}

MetricsReport AverageReports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ContractError("nothing to average");
  MetricsReport out(reports.front().ks());
  for (const auto& r : reports)
    if (r.ks() != out.ks()) throw ContractError("reports use different K sets");
  const double n = static_cast<double>(reports.size());
  for (auto g : {UserGroup::kTarget, UserGroup::kAll})
    for (auto p : {Phase::kBefore, Phase::kAfter})
      for (std::size_t k : out.ks()) {
        if (!reports.front().Has(g, p, k)) continue;
        RankMetrics sum;
        for (const auto& r : reports) {
          const auto m = r.Get(g, p, k);
          sum.hr += m.hr;
          sum.ndcg += m.ndcg;
          sum.mrr += m.mrr;
        }
        out.Set(g, p, k, {sum.hr / n, sum.ndcg / n, sum.mrr / n});
      }
  out.metadata() = reports.front().metadata();
  out.metadata()["repeats"] = std::to_string(reports.size());
  out.metadata().erase("seed");
  return out;
}

// ---------------------------------------------------------------------------

void EvaluatePhase(const TrainedModel& victim, const InteractionMatrix& real,
                   std::span<const std::int64_t> victim_rows,
                   const TargetSpec& spec, Phase phase, MetricsReport& report) {
  if (victim_rows.size() != real.num_users())
    throw ContractError("victim row map must cover every real user");
  std::vector<char> is_target(real.num_users(), 0);
  for (UserIndex u : spec.target_users) is_target.at(u) = 1;

  const auto& ks = report.ks();
  std::vector<RankMetrics> target_sum(ks.size()), all_sum(ks.size());
  std::size_t n_target = 0, n_all = 0;
  for (std::size_t u = 0; u < real.num_users(); ++u) {
    if (victim_rows[u] < 0) continue;
    const auto row = static_cast<UserIndex>(victim_rows[u]);
    if (row >= victim.num_users())
      throw ContractError("victim row out of range");
    const std::size_t rank = RankOf(victim, row, spec.target_item,
                                    real.row(static_cast<UserIndex>(u)));
    ++n_all;
    if (is_target[u]) ++n_target;
    for (std::size_t k = 0; k < ks.size(); ++k) {
      const auto m = MetricsAtRank(rank, ks[k]);
      all_sum[k].hr += m.hr;
      all_sum[k].ndcg += m.ndcg;
      all_sum[k].mrr += m.mrr;
      if (is_target[u]) {
        target_sum[k].hr += m.hr;
        target_sum[k].ndcg += m.ndcg;
        target_sum[k].mrr += m.mrr;
      }
    }
  }
  auto mean = [](RankMetrics s, std::size_t n) {
    if (n == 0) return RankMetrics{};
    const double d = static_cast<double>(n);
    return RankMetrics{s.hr / d, s.ndcg / d, s.mrr / d};
  };
  for (std::size_t k = 0; k < ks.size(); ++k) {
    report.Set(UserGroup::kTarget, phase, ks[k], mean(target_sum[k], n_target));
    report.Set(UserGroup::kAll, phase, ks[k], mean(all_sum[k], n_all));
  }
  report.metadata()[ToString(phase) + ".target_users"] = std::to_string(n_target);
  report.metadata()[ToString(phase) + ".all_users"] = std::to_string(n_all);
}

MetricsReport EvaluateAgainst(const InteractionMatrix& real,
                              const InteractionMatrix& after_training,
                              std::span<const std::int64_t> after_rows,
                              const TargetSpec& spec, const TrainConfig& victim,
                              const std::vector<std::size_t>& ks,
                              std::uint64_t seed) {
  if (ks.empty()) throw ContractError("need at least one K");
  spec.Validate(real);
  if (after_training.num_items() != real.num_items())
    throw ContractError("after-attack matrix item space differs");

  TrainConfig cfg = victim;
  cfg.seed = seed;
  MetricsReport report(ks);

  std::vector<std::int64_t> identity(real.num_users());
  std::iota(identity.begin(), identity.end(), 0);
  const auto before = Train(real, cfg);
  EvaluatePhase(before, real, identity, spec, Phase::kBefore, report);
  const auto after = Train(after_training, cfg);
  EvaluatePhase(after, real, after_rows, spec, Phase::kAfter, report);

  report.metadata()["victim"] = ToString(victim.model_kind) + "/" +
                                ToString(victim.loss);
  report.metadata()["seed"] = std::to_string(seed);
  report.metadata()["target_item"] = real.item_ids()[spec.target_item];
  report.metadata()["after_training_users"] =
      std::to_string(after_training.num_users());
  return report;
}

MetricsReport Evaluate(const InteractionMatrix& real, const FakeUserBlock& fakes,
                       const TargetSpec& spec, const TrainConfig& victim,
                       const std::vector<std::size_t>& ks, std::uint64_t seed) {
  if (!fakes.rows.empty()) {
    fakes.Validate();
    if (fakes.target_item != spec.target_item)
      throw ContractError("fake block promotes a different item");
  }
  const auto stacked = StackFakes(real, fakes);
  if (stacked.num_users() != real.num_users() + fakes.size())
    throw ContractError("stacked matrix lost users");
  std::vector<std::int64_t> rows(real.num_users());
  std::iota(rows.begin(), rows.end(), 0);
  auto report = EvaluateAgainst(real, stacked, rows, spec, victim, ks, seed);
  report.metadata()["fake_users"] = std::to_string(fakes.size());
  return report;
}

// ---------------------------------------------------------------------------

ComparisonTable Compare(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ContractError("nothing to compare");
  const auto& ks = reports.front().ks();
  for (const auto& r : reports)
    if (r.ks() != ks) throw ContractError("reports use different K sets");
  const std::size_t sort_k =
      std::find(ks.begin(), ks.end(), 10) != ks.end() ? 10 : ks.front();

  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return reports[a].Get(UserGroup::kTarget, Phase::kAfter, sort_k).hr >
           reports[b].Get(UserGroup::kTarget, Phase::kAfter, sort_k).hr;
  });

  ComparisonTable table;
  const MetricsReport& lead = reports[order.front()];
  for (auto g : {UserGroup::kTarget, UserGroup::kAll})
    for (std::size_t k : ks)
      for (const char* metric : {"hr", "ndcg", "mrr"}) {
        const std::string base = ToString(g) + "." + metric + "@" + std::to_string(k);
        table.columns.push_back(base + ".before");
        table.columns.push_back(base + ".after");
        table.columns.push_back(base + ".delta");
        table.columns.push_back(base + ".vs_lead");
      }

  auto pick = [](const RankMetrics& m, const std::string& metric) {
    return metric == "hr" ? m.hr : metric == "ndcg" ? m.ndcg : m.mrr;
  };
  for (std::size_t idx : order) {
    const auto& r = reports[idx];
    ComparisonRow row;
    row.label = r.label();
    for (auto g : {UserGroup::kTarget, UserGroup::kAll})
      for (std::size_t k : ks)
        for (const std::string metric : {"hr", "ndcg", "mrr"}) {
          const double before = pick(r.Get(g, Phase::kBefore, k), metric);
          const double after = pick(r.Get(g, Phase::kAfter, k), metric);
          const double lead_after = pick(lead.Get(g, Phase::kAfter, k), metric);
          row.values.push_back(before);
          row.values.push_back(after);
          row.values.push_back(after - before);
          row.values.push_back(after - lead_after);
        }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void ComparisonTable::WriteDelimited(std::ostream& out, char separator) const {
  out << "method";
  for (const auto& c : columns) out << separator << c;
  out << '\n';
  for (const auto& row : rows) {
    out << row.label;
    for (double v : row.values) out << separator << FormatDouble(v);
    out << '\n';
  }
}

void ComparisonTable::WriteSummary(std::ostream& out) const {
  // Only the target-user HR columns; the delimited table has everything.
  std::vector<std::size_t> shown;
  for (std::size_t c = 0; c < columns.size(); ++c)
    if (columns[c].rfind("target.hr@", 0) == 0) shown.push_back(c);
  std::size_t label_width = 6;
  for (const auto& row : rows) label_width = std::max(label_width, row.label.size());
  out << std::left << std::setw(static_cast<int>(label_width) + 2) << "method";
  for (std::size_t c : shown) out << std::setw(22) << columns[c];
  out << '\n';
  for (const auto& row : rows) {
    out << std::setw(static_cast<int>(label_width) + 2) << row.label;
    for (std::size_t c : shown) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << row.values[c];
      out << std::setw(22) << cell.str();
    }
    out << '\n';
  }
}

}  // namespace ubalab
