#include <benchmark/benchmark.h>

#include "modest/hsic.hpp"
#include "modest/rng.hpp"

namespace {

using namespace modest;

struct Setup {
  HsicWorkspace ws;
  Vec logits;

  Setup(int items, int proj_dim, HsicMode mode) {
    RngStream rng(1234, "bench.hsic");
    std::vector<Mat> projected(2);
    std::vector<Vec> mask(2);
    std::vector<ItemIndex> subset(items);
    for (int m = 0; m < 2; ++m) {
      projected[m].resize(items, proj_dim);
      for (int i = 0; i < items; ++i)
        for (int r = 0; r < proj_dim; ++r) projected[m](i, r) = rng.gaussian();
      mask[m] = Vec::Ones(proj_dim);
    }
    for (int i = 0; i < items; ++i) subset[i] = i;
    ws = make_hsic_workspace(projected, mask, subset, mode);
    logits.resize(items);
    for (int i = 0; i < items; ++i) logits(i) = rng.gaussian();
  }
};

void BM_HsicLossPerItem(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)), 16, HsicMode::per_item);
  const Vec w = Vec::Ones(s.ws.items.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(masked_weighted_hsic_loss(s.ws, w));
  }
}
BENCHMARK(BM_HsicLossPerItem)->Arg(64)->Arg(256)->Arg(1024);

void BM_HsicGradPerItem(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)), 16, HsicMode::per_item);
  Vec grad(s.logits.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hsic_loss_and_grad_logits(s.ws, s.logits, 2.0, 0.1, grad));
  }
}
BENCHMARK(BM_HsicGradPerItem)->Arg(64)->Arg(256)->Arg(1024);

void BM_HsicGradPopulation(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)), 16, HsicMode::population);
  Vec grad(s.logits.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hsic_loss_and_grad_logits(s.ws, s.logits, 2.0, 0.1, grad));
  }
}
BENCHMARK(BM_HsicGradPopulation)->Arg(64)->Arg(256);

void BM_MedianSigma(benchmark::State& state) {
  RngStream rng(7, "bench.sigma");
  Vec u(state.range(0));
  for (int i = 0; i < u.size(); ++i) u(i) = rng.gaussian();
  for (auto _ : state) {
    benchmark::DoNotOptimize(median_heuristic_sigma(u));
  }
}
BENCHMARK(BM_MedianSigma)->Arg(16)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
