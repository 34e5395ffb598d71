#include "dkcf/assignment.hpp"
#include "dkcf/detection.hpp"
#include "dkcf/experiment.hpp"

#include "oracles.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

std::vector<dkcf::Vec2> random_points(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::vector<dkcf::Vec2> pts(n);
  for (auto& p : pts) p = {u(gen), u(gen)};
  return pts;
}

void BM_DbscanGrid(benchmark::State& state) {
  const auto pts = random_points(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(dkcf::dbscan(pts, {0.4, 3, 100.0}));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DbscanGrid)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_DbscanNaive(benchmark::State& state) {
  const auto pts = random_points(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(oracle::naive_dbscan(pts, 0.4, 3));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DbscanNaive)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

void BM_Hungarian(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) c(i, j) = u(gen);
  }
  for (auto _ : state) benchmark::DoNotOptimize(dkcf::hungarian(c));
}
BENCHMARK(BM_Hungarian)->Arg(4)->Arg(16)->Arg(64);

dkcf::ExperimentConfig sweep_config() {
  auto cfg = dkcf::load_config(std::string(DKCF_CONFIG_DIR) + "/drift_asymmetry.json");
  cfg.world.duration = 10.0;
  cfg.sweep = dkcf::SweepSpec{{dkcf::ConsensusMode::standard, dkcf::ConsensusMode::adaptive}, {1, 2, 3, 4}, {}, {}};
  return cfg;
}

void BM_SweepSerial(benchmark::State& state) {
  const auto cfg = sweep_config();
  for (auto _ : state) benchmark::DoNotOptimize(dkcf::run_sweep(cfg, dkcf::SweepExecution::serial, std::nullopt));
}
BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_SweepParallel(benchmark::State& state) {
  const auto cfg = sweep_config();
  for (auto _ : state) benchmark::DoNotOptimize(dkcf::run_sweep(cfg, dkcf::SweepExecution::parallel, std::nullopt));
}
BENCHMARK(BM_SweepParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
