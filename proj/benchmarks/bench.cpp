#include <benchmark/benchmark.h>

#include <vector>

#include "ddmc/augment.hpp"
#include "ddmc/config.hpp"
#include "ddmc/dataset.hpp"
#include "ddmc/metrics.hpp"
#include "ddmc/rng.hpp"
#include "ddmc/tensor.hpp"
#include "ddmc/trainer.hpp"

using namespace ddmc;

namespace {

Tensor random_matrix(std::int64_t r, std::int64_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(r * c));
  for (auto& x : v) x = rng.normal();
  return Tensor::from({r, c}, std::move(v));
}

void BM_matmul(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor a = random_matrix(n, 400, 1);
  const Tensor b = random_matrix(400, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).value());
  state.SetItemsProcessed(state.iterations() * n * 400 * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_hsic(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor a = random_matrix(n, 400, 3);
  const Tensor b = random_matrix(n, 400, 4);
  for (auto _ : state) benchmark::DoNotOptimize(hsic(a, b).value());
}
BENCHMARK(BM_hsic)->Arg(64)->Arg(128);

void BM_coarse_loss_k3(benchmark::State& state) {
  const auto n = state.range(0);
  const std::vector<Tensor> xs = {random_matrix(n, 400, 5),
                                  random_matrix(n, 400, 6),
                                  random_matrix(n, 400, 7)};
  for (auto _ : state) benchmark::DoNotOptimize(coarse_loss(xs).value());
}
BENCHMARK(BM_coarse_loss_k3)->Arg(128);

void BM_kmeans(benchmark::State& state) {
  Rng rng(8);
  const std::int64_t n = 900, d = 16;
  std::vector<double> z(static_cast<std::size_t>(n * d));
  for (auto& x : z) x = rng.normal();
  for (auto _ : state)
    benchmark::DoNotOptimize(kmeans_init(z, n, d, 3, 42));
}
BENCHMARK(BM_kmeans);

void BM_assign(benchmark::State& state) {
  Rng rng(9);
  const std::int64_t n = 900, d = 16;
  std::vector<double> z(static_cast<std::size_t>(n * d));
  for (auto& x : z) x = rng.normal();
  const auto centers = kmeans_init(z, n, d, 3, 42);
  for (auto _ : state) benchmark::DoNotOptimize(assign(z, n, d, centers, 3));
}
BENCHMARK(BM_assign);

void BM_nmi(benchmark::State& state) {
  Rng rng(10);
  std::vector<int> a, b;
  for (int i = 0; i < 900; ++i) {
    a.push_back(int(rng.next_below(3)));
    b.push_back(int(rng.next_below(3)));
  }
  const auto pa = Partition::of(a, 3), pb = Partition::of(b, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nmi(pa, pb));
}
BENCHMARK(BM_nmi);

void BM_train_epoch(benchmark::State& state) {
  RunConfig cfg;
  cfg.hidden = {64, 32};
  cfg.d_z = 8;
  cfg.batch_size = 64;
  cfg.per_combo = 16;  // 144 images
  cfg.t1 = 3;
  cfg.t2 = 3;
  const auto ds = dataset_from_config(cfg);
  Trainer tr(cfg, ds);
  std::int64_t epoch = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tr.e_epoch(epoch++).coarse);
}
BENCHMARK(BM_train_epoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
