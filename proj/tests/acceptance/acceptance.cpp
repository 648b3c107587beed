// Acceptance suite: one PASS/FAIL line per criterion, exit 1 on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubalab/allocator.hpp"
#include "ubalab/cf_engine.hpp"
#include "ubalab/evaluator.hpp"
#include "ubalab/pathcount.hpp"
#include "ubalab/pipeline.hpp"
#include "ubalab/synthetic.hpp"

namespace fs = std::filesystem;

namespace ubalab {
namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

InteractionMatrix MatrixFromRows(std::size_t num_items,
                                 std::vector<std::vector<ItemIndex>> rows) {
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < rows.size(); ++u) {
    std::sort(rows[u].begin(), rows[u].end());
    rows[u].erase(std::unique(rows[u].begin(), rows[u].end()), rows[u].end());
    users.push_back("u" + std::to_string(u));
  }
  for (std::size_t i = 0; i < num_items; ++i) items.push_back("i" + std::to_string(i));
  return InteractionMatrix(num_items, std::move(rows), std::move(users), std::move(items));
}

InteractionMatrix RandomMatrix(std::mt19937_64& rng, std::size_t max_users,
                               std::size_t max_items) {
  const std::size_t users = 1 + rng() % max_users;
  const std::size_t items = 1 + rng() % max_items;
  std::bernoulli_distribution like(std::uniform_real_distribution<double>(0.05, 0.6)(rng));
  std::vector<std::vector<ItemIndex>> rows(users);
  for (auto& r : rows)
    for (std::size_t i = 0; i < items; ++i)
      if (like(rng)) r.push_back(static_cast<ItemIndex>(i));
  return MatrixFromRows(items, std::move(rows));
}

// A^3_{u,i} = sum over users v liking i of |row(u) & row(v)|.
Verdict SimilarityIdentity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::size_t pairs = 0, mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = RandomMatrix(rng, 50, 50);
    std::vector<std::set<ItemIndex>> sets;
    for (UserIndex u = 0; u < m.num_users(); ++u) {
      const auto row = m.row(u);
      sets.emplace_back(row.begin(), row.end());
    }
    PathQuery q;
    for (UserIndex u = 0; u < m.num_users(); ++u)
      for (ItemIndex i = 0; i < m.num_items(); ++i)
        if (!sets[u].count(i)) q.pairs.emplace_back(u, i);
    const auto counts = PathCounts(m, q);
    for (std::size_t k = 0; k < q.pairs.size(); ++k) {
      const auto [u, i] = q.pairs[k];
      std::uint64_t expected = 0;
      for (UserIndex v = 0; v < m.num_users(); ++v) {
        if (!sets[v].count(i)) continue;
        for (ItemIndex j : sets[u]) expected += sets[v].count(j);
      }
      mismatches += counts[k] != expected;
      ++pairs;
    }
  }
  const double secs = Seconds(start);
  std::ostringstream d;
  d << pairs << " pairs, " << mismatches << " mismatches, " << secs << " s";
  return {mismatches == 0 && secs < 5.0, d.str()};
}

// Entries of A^3 from dense integer products of the bipartite adjacency.
Verdict DensePowerAgreement() {
  const auto start = Clock::now();
  std::mt19937_64 rng(202);
  std::size_t checked = 0, mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nodes = 2 + rng() % 29;
    const std::size_t users = 1 + rng() % (nodes - 1);
    const auto m = RandomMatrix(rng, users, nodes - users);
    const std::size_t nu = m.num_users(), n = nu + m.num_items();
    using Dense = std::vector<std::vector<std::uint64_t>>;
    Dense a(n, std::vector<std::uint64_t>(n, 0));
    for (UserIndex u = 0; u < nu; ++u)
      for (ItemIndex i : m.row(u)) a[u][nu + i] = a[nu + i][u] = 1;
    auto mul = [n](const Dense& x, const Dense& y) {
      Dense z(n, std::vector<std::uint64_t>(n, 0));
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < n; ++k)
          if (x[r][k])
            for (std::size_t c = 0; c < n; ++c) z[r][c] += x[r][k] * y[k][c];
      return z;
    };
    const auto a3 = mul(mul(a, a), a);
    PathQuery q;
    for (UserIndex u = 0; u < nu; ++u)
      for (ItemIndex i = 0; i < m.num_items(); ++i) q.pairs.emplace_back(u, i);
    const auto counts = PathCounts(m, q);
    for (std::size_t k = 0; k < q.pairs.size(); ++k) {
      const auto [u, i] = q.pairs[k];
      mismatches += counts[k] != a3[u][nu + i];
      ++checked;
    }
  }
  const double secs = Seconds(start);
  std::ostringstream d;
  d << checked << " entries, " << mismatches << " mismatches, " << secs << " s";
  return {mismatches == 0 && secs < 5.0, d.str()};
}

// Independent enumeration of every budget vector.
double EnumeratedMax(const UpliftTable& t, int budget) {
  const std::size_t n = t.num_users();
  std::vector<int> b(n, 0);
  double best = -1.0;
  while (true) {
    int spent = 0;
    for (int x : b) spent += x;
    if (spent <= budget) {
      double value = 0.0;
      for (std::size_t u = 0; u < n; ++u) value += t.values[u][b[u]];
      best = std::max(best, value);
    }
    std::size_t k = 0;
    while (k < n && b[k] == t.max_budget) b[k++] = 0;
    if (k == n) break;
    ++b[k];
  }
  return best;
}

Verdict DpOptimality() {
  const auto start = Clock::now();
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    UpliftTable t;
    const std::size_t users = 1 + rng() % 6;
    t.max_budget = static_cast<int>(rng() % 5);
    for (std::size_t u = 0; u < users; ++u) {
      t.target_user_ids.push_back("u" + std::to_string(u));
      std::vector<double> row;
      for (int b = 0; b <= t.max_budget; ++b) row.push_back(unit(rng));
      t.values.push_back(row);
    }
    const int budget = static_cast<int>(rng() % 13);
    const auto dp = AllocateDp(t, budget);
    const auto brute = AllocateBruteForce(t, budget);
    const double oracle = EnumeratedMax(t, budget);
    if (!(dp.Spent() <= budget && *dp.objective == *brute.objective &&
          *dp.objective == oracle && AllocationObjective(t, dp.budgets) == oracle))
      ++mismatches;
  }
  const double secs = Seconds(start);
  std::ostringstream d;
  d << "500 tables, " << mismatches << " mismatches, " << secs << " s";
  return {mismatches == 0 && secs < 10.0, d.str()};
}

struct CorrelationArm {
  std::string name;
  ModelKind model;
  LossKind loss;
  double min_r;
  bool scored;  // informational arms never fail the criterion
};

Verdict Correlation() {
  const auto start = Clock::now();
  const std::uint64_t root = 2024;
  const auto s = BuildSyntheticDataset(SyntheticConfig{});
  const std::vector<CorrelationArm> arms{
      {"mf-bce", ModelKind::kMf, LossKind::kBce, 0.95, true},
      {"mf-bpr", ModelKind::kMf, LossKind::kBpr, 0.9, true},
      {"lightgcn-bpr", ModelKind::kLightGcn, LossKind::kBpr, 0.9, true},
      {"lightgcn-bce", ModelKind::kLightGcn, LossKind::kBce, 0.9, false}};
  bool pass = true;
  std::ostringstream d;
  for (const auto& arm : arms) {
    TrainConfig cfg;
    cfg.embedding_dim = 32;
    cfg.epochs = 50;
    cfg.model_kind = arm.model;
    cfg.loss = arm.loss;
    cfg.seed = DeriveSeed(root, "correlate");
    const auto model = Train(s.matrix, cfg);
    CorrelationOptions co;
    co.order = 3;
    co.num_groups = 50;
    co.seed = DeriveSeed(root, "correlate", {3});
    const auto report = ComputeCorrelationReport(model, s.matrix, co);
    bool ok = report.spearman_r >= arm.min_r && report.groups.size() == 50;
    if (arm.name == "mf-bce") ok = ok && report.p_value <= 1e-6;
    if (arm.scored) pass = pass && ok;
    d << arm.name << " r=" << report.spearman_r << " p=" << report.p_value
      << (arm.scored ? "" : " (informational)") << "; ";
  }
  const double secs = Seconds(start);
  d << secs << " s";
  return {pass && secs < 600.0, d.str()};
}

Verdict MetricOracle(const std::vector<MetricsReport>& reports) {
  const auto start = Clock::now();
  int mismatches = 0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t len = 1 + n % 15;
    const std::size_t k = 1 + (n * 7) % 20;
    const std::size_t pos = (n * 3) % (len + 2);  // pos >= len: target absent
    const ItemIndex target = 1000;
    std::vector<ItemIndex> list;
    for (std::size_t p = 0; p < len; ++p)
      list.push_back(p == pos ? target : static_cast<ItemIndex>(p));
    double hr = 0.0, ndcg = 0.0, mrr = 0.0;
    if (pos < len && pos < k) {
      hr = 1.0;
      ndcg = std::log(2.0) / std::log(static_cast<double>(pos) + 2.0);
      mrr = 1.0 / (static_cast<double>(pos) + 1.0);
    }
    const auto got = MetricsFromRankedList(list, target, k);
    if (std::abs(got.hr - hr) > 1e-12 || std::abs(got.ndcg - ndcg) > 1e-12 ||
        std::abs(got.mrr - mrr) > 1e-12)
      ++mismatches;
  }
  int bad_reports = 0;
  for (const auto& r : reports) bad_reports += !r.SatisfiesInvariants();
  const double secs = Seconds(start);
  std::ostringstream d;
  d << "100 lists, " << mismatches << " mismatches; " << reports.size() << " reports, "
    << bad_reports << " violate mrr<=ndcg<=hr";
  return {mismatches == 0 && bad_reports == 0 && !reports.empty() && secs < 1.0, d.str()};
}

Verdict Gradients() {
  const auto start = Clock::now();
  const auto m = MatrixFromRows(3, {{0, 1}, {1}, {2}});
  std::mt19937_64 rng(707);
  std::normal_distribution<double> gauss(0.0, 0.5);
  EmbeddingMatrix ub(3, 3), ib(3, 3);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) {
      ub(r, c) = gauss(rng);
      ib(r, c) = gauss(rng);
    }
  const std::vector<TrainingSample> batch{{0, 0, {2}}, {0, 1, {2}}, {1, 1, {0, 2}}, {2, 2, {0}}};
  const double l2 = 0.01, h = 1e-6;
  double worst = 0.0;
  for (auto loss : {LossKind::kBce, LossKind::kBpr}) {
    TrainConfig cfg;
    cfg.embedding_dim = 3;
    auto eval = [&](const EmbeddingMatrix& u, const EmbeddingMatrix& i) {
      TrainedModel model(cfg, u, i, 0);
      model.Refresh(m);
      return ComputeBatchGradient(model, m, batch, loss, l2);
    };
    const auto analytic = eval(ub, ib);
    for (int which = 0; which < 2; ++which)
      for (Eigen::Index r = 0; r < 3; ++r)
        for (Eigen::Index c = 0; c < 3; ++c) {
          EmbeddingMatrix up = which == 0 ? ub : ib, down = up;
          up(r, c) += h;
          down(r, c) -= h;
          const double plus = which == 0 ? eval(up, ib).loss : eval(ub, up).loss;
          const double minus = which == 0 ? eval(down, ib).loss : eval(ub, down).loss;
          const double numeric = (plus - minus) / (2.0 * h);
          const double exact = which == 0 ? analytic.user_grad(r, c) : analytic.item_grad(r, c);
          const double scale = std::max({std::abs(numeric), std::abs(exact), 1e-3});
          worst = std::max(worst, std::abs(numeric - exact) / scale);
        }
  }
  const double secs = Seconds(start);
  std::ostringstream d;
  d << "max relative error " << worst << ", " << secs << " s";
  return {worst <= 1e-4 && secs < 5.0, d.str()};
}

ExperimentConfig AttackConfig(const std::string& out) {
  ExperimentConfig cfg;
  cfg.targets.n_users = 50;
  cfg.budget = 100;
  cfg.estimator.max_budget = 6;
  cfg.estimator.repeats = 10;
  cfg.attacker.kind = AttackerKind::kTemplate;
  cfg.victims = {TrainConfig{}};
  cfg.repeat_seeds = {1, 2, 3, 4, 5};
  cfg.allocators = {AllocatorKind::kDp, AllocatorKind::kUniform, AllocatorKind::kRandom};
  cfg.ks = {10, 20};
  cfg.defense.detectors = {DetectorKind::kFap, DetectorKind::kPca};
  cfg.defense.allocators = {AllocatorKind::kDp};
  cfg.output_dir = out;
  return cfg;
}

RunResult RunFresh(const ExperimentConfig& cfg, const std::string& cache) {
  fs::remove_all(cfg.output_dir);
  fs::remove_all(cache);
  PipelineOptions opts;
  opts.cache_dir = cache;
  opts.log = &std::cerr;
  return Pipeline(cfg, opts).Run();
}

double TargetHr10(const RunResult& result, const std::string& label) {
  for (const auto& r : result.reports)
    if (r.label() == label) return r.Get(UserGroup::kTarget, Phase::kAfter, 10).hr;
  throw Error("no report labeled " + label);
}

// Every per-repeat report JSON under the run directory.
std::vector<MetricsReport> ReportFilesUnder(const std::string& dir) {
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().string().ends_with(".report.json")) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<MetricsReport> out;
  for (const auto& p : paths) {
    std::ifstream in(p);
    out.push_back(MetricsReport::FromJson(nlohmann::json::parse(in)));
  }
  return out;
}

double MeanRecall(const std::vector<MetricsReport>& reports, const std::string& detector) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : reports) {
    const auto& meta = r.metadata();
    auto it = meta.find("defense");
    if (it == meta.end() || it->second != detector) continue;
    sum += std::stod(meta.at("recall"));
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

void Print(int n, const Verdict& v) {
  std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << " - " << v.detail
            << std::endl;
}

}  // namespace
}  // namespace ubalab

int main(int argc, char** argv) {
  using namespace ubalab;
  std::string workdir = "acceptance-work";
  for (int a = 1; a < argc; ++a) {
    if (std::strcmp(argv[a], "--workdir") == 0 && a + 1 < argc) {
      workdir = argv[++a];
    } else {
      std::cerr << "usage: ubalab_acceptance [--workdir DIR]\n";
      return 2;
    }
  }
  fs::create_directories(workdir);
  const std::string base = fs::absolute(workdir).string();
  bool all = true;
  auto record = [&](int n, std::function<Verdict()> body) {
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    all = all && v.pass;
    Print(n, v);
    return v;
  };

  record(1, SimilarityIdentity);
  record(2, DensePowerAgreement);
  record(3, DpOptimality);
  record(4, Correlation);

  // Criteria 5, 6 and 8 share the attack runs.
  RunResult sim, proxy;
  std::vector<MetricsReport> all_reports;
  double sim_seconds = 0.0, proxy_seconds = 0.0;
  std::string run_error;
  try {
    auto start = Clock::now();
    sim = RunFresh(AttackConfig(base + "/sim"), base + "/sim-cache");
    sim_seconds = Seconds(start);
    auto proxy_cfg = AttackConfig(base + "/proxy");
    proxy_cfg.estimator.kind = EstimatorKind::kProxy;
    proxy_cfg.allocators = {AllocatorKind::kDp};
    proxy_cfg.defense.detectors.clear();
    start = Clock::now();
    proxy = RunFresh(proxy_cfg, base + "/proxy-cache");
    proxy_seconds = Seconds(start);
    all_reports = ReportFilesUnder(base + "/sim");
    for (const auto& r : ReportFilesUnder(base + "/proxy")) all_reports.push_back(r);
    for (const auto& r : sim.reports) all_reports.push_back(r);
    for (const auto& r : proxy.reports) all_reports.push_back(r);
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto need_runs = [&] {
    if (!run_error.empty()) throw Error("attack run failed: " + run_error);
  };

  record(5, [&] { return MetricOracle(all_reports); });
  record(6, [&] {
    need_runs();
    const double dp = TargetHr10(sim, "dp/mf-bce");
    const double uniform = TargetHr10(sim, "uniform/mf-bce");
    const double random = TargetHr10(sim, "random/mf-bce");
    const double proxy_dp = TargetHr10(proxy, "dp/mf-bce");
    std::ostringstream d;
    d << "HR@10 dp=" << dp << " uniform=" << uniform << " random=" << random
      << " proxy-dp=" << proxy_dp << " (dp-random=" << dp - random << "); simulated arm "
      << sim_seconds << " s, proxy arm " << proxy_seconds << " s";
    const bool pass = dp >= uniform && dp >= random && dp - random >= 0.05 &&
                      proxy_dp >= random && sim_seconds <= 3600.0 && proxy_seconds <= 300.0;
    return Verdict{pass, d.str()};
  });
  record(7, Gradients);
  record(8, [&] {
    need_runs();
    const double attacked = TargetHr10(sim, "dp/mf-bce");
    const double defended = TargetHr10(sim, "dp+fap/mf-bce");
    const double reduction = attacked > 0.0 ? (attacked - defended) / attacked : 0.0;
    const auto reports = ReportFilesUnder(base + "/sim/defend");
    const double fap_recall = MeanRecall(reports, "fap");
    const double pca_recall = MeanRecall(reports, "pca");
    std::ostringstream d;
    d << "HR@10 " << attacked << " -> " << defended << " with fap (relative drop "
      << reduction << "); recall fap=" << fap_recall << " pca=" << pca_recall;
    return Verdict{reduction >= 0.3 && fap_recall >= 0.5 && pca_recall >= 0.5, d.str()};
  });
  record(9, [&] {
    need_runs();
    const auto start = Clock::now();
    const auto rerun = RunFresh(AttackConfig(base + "/sim-rerun"), base + "/sim-rerun-cache");
    const double secs = Seconds(start);
    const auto a = sim.manifest.ArtifactHashes();
    const auto b = rerun.manifest.ArtifactHashes();
    std::size_t differing = 0;
    for (const auto& [path, hash] : a) {
      auto it = b.find(path);
      differing += it == b.end() || it->second != hash;
    }
    differing += b.size() > a.size() ? b.size() - a.size() : 0;
    std::ostringstream d;
    d << a.size() << " artifacts, " << differing << " differ; rerun " << secs << " s";
    return Verdict{differing == 0 && !a.empty() && secs < 2.0 * (sim_seconds + proxy_seconds),
                   d.str()};
  });

  std::cout << (all ? "acceptance: PASS" : "acceptance: FAIL") << std::endl;
  return all ? 0 : 1;
}
