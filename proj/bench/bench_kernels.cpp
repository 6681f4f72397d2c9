#include <benchmark/benchmark.h>

#include <random>

#include "prodfn/dgp.hpp"
#include "prodfn/gmm.hpp"
#include "prodfn/kernels.hpp"

using namespace prodfn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = z(eng);
  }
  return m;
}

void BM_GramSerial(benchmark::State& state) {
  const Eigen::MatrixXd a = random_matrix(state.range(0), 35, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::gram(a));
}

void BM_GramParallel(benchmark::State& state) {
  const Eigen::MatrixXd a = random_matrix(state.range(0), 35, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::gram(a));
}

void BM_CrossVectorSerial(benchmark::State& state) {
  const Eigen::MatrixXd a = random_matrix(state.range(0), 35, 2);
  const Eigen::VectorXd v = random_matrix(state.range(0), 1, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::cross_vector(a, v));
}

void BM_CrossVectorParallel(benchmark::State& state) {
  const Eigen::MatrixXd a = random_matrix(state.range(0), 35, 2);
  const Eigen::VectorXd v = random_matrix(state.range(0), 1, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::cross_vector(a, v));
}

struct MomentFixture {
  ModelParams theta;
  EstimationSample sample;

  MomentFixture() {
    DgpConfig cfg = baseline_config();
    cfg.n_firms = 1000;
    cfg.burn_in = 200;
    cfg.alpha_omega = 0.0;
    const LawCoefficients law = calibrate_law(cfg.targets, 0.0);
    theta = true_params(cfg, law);
    const FirmPanel panel = simulate_panel(cfg, law);
    sample = make_sample(panel, fit_ols(panel, 3, 4), 4);
  }
};

const MomentFixture& fixture() {
  static const MomentFixture f;
  return f;
}

void BM_MomentsSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_moments_serial(f.theta, f.sample, MomentKind::Modified, true));
  }
}

void BM_MomentsParallel(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_moments(f.theta, f.sample, MomentKind::Modified, true));
  }
}

void BM_SimulateSerial(benchmark::State& state) {
  DgpConfig cfg = baseline_config();
  cfg.n_firms = 200;
  cfg.burn_in = 200;
  const LawCoefficients law = calibrate_law(cfg.targets, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(simulate_panel_serial(cfg, law));
}

void BM_SimulateParallel(benchmark::State& state) {
  DgpConfig cfg = baseline_config();
  cfg.n_firms = 200;
  cfg.burn_in = 200;
  const LawCoefficients law = calibrate_law(cfg.targets, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(simulate_panel(cfg, law));
}

}  // namespace

BENCHMARK(BM_GramSerial)->Arg(40000)->Arg(200000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GramParallel)->Arg(40000)->Arg(200000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CrossVectorSerial)->Arg(40000)->Arg(200000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CrossVectorParallel)->Arg(40000)->Arg(200000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentsParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
