#include <benchmark/benchmark.h>

#include <numeric>

#include "dsdgp/kernels.hpp"
#include "dsdgp/linalg.hpp"
#include "dsdgp/model.hpp"
#include "dsdgp/trainer.hpp"

using namespace dsdgp;

namespace {

DGPModel boston_like_model(int layers, Eigen::Index n, Eigen::Index d) {
  RngStream rng(1);
  Mat x = rng.normal_matrix(n, d);
  Mat y = rng.normal_matrix(n, 1);
  RngStream init_rng(2);
  return initialize(x, y, layers, 100, LikelihoodKind::kGaussian, init_rng);
}

void BM_rng_normal(benchmark::State& state) {
  RngStream rng(7);
  for (auto _ : state) {
    double acc = 0;
    for (int i = 0; i < 1024; ++i) acc += rng.next_normal();
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_rng_normal);

void BM_gram(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  RngStream rng(3);
  Mat a = rng.normal_matrix(n, 13);
  KernelVariant k = RbfArdKernel::create(2.0, 2.0, 13);
  for (auto _ : state) {
    Mat g = gram(k, a, a, true);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_gram)->Arg(100)->Arg(455);

void BM_cholesky_jitter(benchmark::State& state) {
  const Eigen::Index m = state.range(0);
  RngStream rng(4);
  Mat z = rng.normal_matrix(m, 13);
  KernelVariant k = RbfArdKernel::create(2.0, 2.0, 13);
  Mat g = gram(k, z, z, true);
  for (auto _ : state) {
    auto res = cholesky_with_jitter(g, 1e-6);
    benchmark::DoNotOptimize(res.l.m);
  }
}
BENCHMARK(BM_cholesky_jitter)->Arg(100);

void BM_elbo_value(benchmark::State& state) {
  const int layers = static_cast<int>(state.range(0));
  const Eigen::Index n = 455, d = 13;
  DGPModel model = boston_like_model(layers, n, d);
  RngStream rng(5);
  Mat x = rng.normal_matrix(n, d);
  Mat y = rng.normal_matrix(n, 1);
  RngStream eps(6);
  for (auto _ : state) {
    ElboEstimate est = model.elbo(x, y, eps);
    benchmark::DoNotOptimize(est.value);
  }
}
BENCHMARK(BM_elbo_value)->Arg(1)->Arg(2);

void BM_elbo_step(benchmark::State& state) {
  const int layers = static_cast<int>(state.range(0));
  const Eigen::Index n = 455, d = 13;
  DGPModel model = boston_like_model(layers, n, d);
  RngStream rng(5);
  Mat x = rng.normal_matrix(n, d);
  Mat y = rng.normal_matrix(n, 1);
  RngStream eps_rng(6);
  RngEps eps(eps_rng);
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  for (auto _ : state) {
    auto [est, tape] = model.elbo_with_gradients(x, y, eps, rows);
    benchmark::DoNotOptimize(tape.grads.back());
  }
}
BENCHMARK(BM_elbo_step)->Arg(1)->Arg(2)->Arg(5);

}  // namespace

BENCHMARK_MAIN();
