#include <benchmark/benchmark.h>

#include "modest/backbone.hpp"
#include "modest/dataset.hpp"
#include "modest/rng.hpp"

namespace {

using namespace modest;

struct Setup {
  InteractionDataset ds;
  FeatureStore store;
  BackboneParams params;
  std::vector<TrainTriple> triples;

  Setup(int users, int items, int d, int dp, int dm, std::size_t batch) {
    RngStream rng(99, "bench.backbone");
    for (int u = 0; u < users; ++u) ds.intern_user("u" + std::to_string(u));
    for (int i = 0; i < items; ++i) ds.intern_item("i" + std::to_string(i));
    for (int u = 0; u < users; ++u)
      for (int t = 0; t < 10; ++t)
        ds.add_interaction(u, static_cast<ItemIndex>(rng.uniform_index(items)));
    ds.finalize();

    store.modalities = {"visual", "text"};
    for (int m = 0; m < 2; ++m) {
      Mat f(items, dm);
      for (int i = 0; i < items; ++i)
        for (int j = 0; j < dm; ++j) f(i, j) = rng.gaussian();
      store.features.push_back(std::move(f));
    }
    params = init_backbone(ModelKind::vbpr, users, items, d, dp, store, rng);
    triples = sample_epoch_triples(ds, rng);
    if (triples.size() > batch) triples.resize(batch);
  }
};

void BM_BprBatchGrad(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Setup s(2000, 1000, 32, 16, 32, batch);
  const Vec weights = Vec::Ones(s.ds.num_items());
  BackboneGrads grads;
  for (auto _ : state) {
    grads.zero_like(s.params);
    benchmark::DoNotOptimize(
        bpr_batch_loss_and_grad(s.params, s.store, s.triples, 0,
                                s.triples.size(), weights, 1e-4, grads,
                                nullptr));
  }
}
BENCHMARK(BM_BprBatchGrad)->Arg(256)->Arg(1024)->Arg(4096);

void BM_ProjectFeatures(benchmark::State& state) {
  Setup s(64, static_cast<int>(state.range(0)), 32, 16, 32, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(project_features(s.params, s.store));
  }
}
BENCHMARK(BM_ProjectFeatures)->Arg(1000)->Arg(10000);

void BM_EpochTriples(benchmark::State& state) {
  Setup s(2000, 1000, 8, 4, 8, 1);
  RngStream rng(5, "bench.triples");
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_epoch_triples(s.ds, rng));
  }
}
BENCHMARK(BM_EpochTriples);

}  // namespace

BENCHMARK_MAIN();
