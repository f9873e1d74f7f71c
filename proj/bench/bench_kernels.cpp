// Serial reference kernels against the OpenMP versions. Set OMP_NUM_THREADS to vary the pool.

#include <benchmark/benchmark.h>

#include <random>

#include "attnes/attention.hpp"
#include "attnes/cmaes.hpp"

using namespace attnes;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  Matrix m(r, c);
  for (double& v : m.data()) v = g(rng);
  return m;
}

struct AttentionFixture {
  Matrix x = random_matrix(529, 147, 1);
  AttentionParams p{random_matrix(147, 4, 2), std::vector<double>(4, 0.1), random_matrix(147, 4, 3),
                    std::vector<double>(4, -0.1)};
};

void BM_AttentionSerial(benchmark::State& state) {
  AttentionFixture f;
  for (auto _ : state) benchmark::DoNotOptimize(serial::attention_matrix(f.x, f.p));
}

void BM_AttentionParallel(benchmark::State& state) {
  AttentionFixture f;
  for (auto _ : state) benchmark::DoNotOptimize(attention_matrix(f.x, f.p));
}

void BM_WeightedOutputSerial(benchmark::State& state) {
  AttentionFixture f;
  const Matrix a = attention_matrix(f.x, f.p);
  for (auto _ : state) benchmark::DoNotOptimize(serial::weighted_output(a, f.x));
}

void BM_WeightedOutputParallel(benchmark::State& state) {
  AttentionFixture f;
  const Matrix a = attention_matrix(f.x, f.p);
  for (auto _ : state) benchmark::DoNotOptimize(weighted_output(a, f.x));
}

struct CovFixture {
  explicit CovFixture(int n) : cov(Eigen::MatrixXd::Identity(n, n)), pc(Eigen::VectorXd::Random(n)) {
    for (int k = 0; k < 128; ++k) {
      ys.push_back(Eigen::VectorXd::Random(n));
      w.push_back(1.0 / 128);
    }
  }
  Eigen::MatrixXd cov;
  Eigen::VectorXd pc;
  std::vector<Eigen::VectorXd> ys;
  std::vector<double> w;
};

void BM_CovarianceSerial(benchmark::State& state) {
  CovFixture f(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(serial::covariance_update(f.cov, f.pc, 0.0, f.ys, f.w, 1e-4, 1e-3));
}

void BM_CovarianceParallel(benchmark::State& state) {
  CovFixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(covariance_update(f.cov, f.pc, 0.0, f.ys, f.w, 1e-4, 1e-3));
}

}  // namespace

BENCHMARK(BM_AttentionSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AttentionParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_WeightedOutputSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_WeightedOutputParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_CovarianceSerial)->Arg(300)->Arg(1275)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CovarianceParallel)->Arg(300)->Arg(1275)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
