#include <benchmark/benchmark.h>

#include <random>

#include "ubalab/allocator.hpp"
#include "ubalab/cf_engine.hpp"
#include "ubalab/pathcount.hpp"
#include "ubalab/synthetic.hpp"

namespace {

const ubalab::InteractionMatrix& Synthetic() {
  static const auto data = ubalab::BuildSyntheticDataset(ubalab::SyntheticConfig{});
  return data.matrix;
}

void BM_PathCountsFromUser(benchmark::State& state) {
  const auto& m = Synthetic();
  const int order = static_cast<int>(state.range(0));
  ubalab::UserIndex u = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ubalab::PathCountsFromUser(m, u, order));
    u = static_cast<ubalab::UserIndex>((u + 97) % m.num_users());
  }
}
BENCHMARK(BM_PathCountsFromUser)->Arg(3)->Arg(5)->Arg(7);

void BM_AllocateDp(benchmark::State& state) {
  const auto users = static_cast<std::size_t>(state.range(0));
  const int h = 6;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> y(0.0, 1.0);
  ubalab::UpliftTable table;
  table.max_budget = h;
  for (std::size_t u = 0; u < users; ++u) {
    table.target_user_ids.push_back("u" + std::to_string(u));
    std::vector<double> row(h + 1);
    for (double& v : row) v = y(rng);
    table.values.push_back(std::move(row));
  }
  const int budget = static_cast<int>(2 * users);
  for (auto _ : state) benchmark::DoNotOptimize(ubalab::AllocateDp(table, budget));
}
BENCHMARK(BM_AllocateDp)->Arg(50)->Arg(500)->Arg(5000);

void BM_TrainEpoch(benchmark::State& state) {
  const auto& m = Synthetic();
  ubalab::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.model_kind = state.range(0) ? ubalab::ModelKind::kLightGcn : ubalab::ModelKind::kMf;
  for (auto _ : state) benchmark::DoNotOptimize(ubalab::Train(m, cfg));
  state.SetLabel(ubalab::ToString(cfg.model_kind));
}
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
