#include <benchmark/benchmark.h>

#include "modest/backbone.hpp"
#include "modest/dataset.hpp"
#include "modest/eval.hpp"
#include "modest/rng.hpp"

namespace {

using namespace modest;

struct Setup {
  InteractionDataset ds;
  FeatureStore store;
  BackboneParams params;
  std::vector<Mat> projected;

  Setup(int users, int items) {
    RngStream rng(31, "bench.eval");
    for (int u = 0; u < users; ++u) ds.intern_user("u" + std::to_string(u));
    for (int i = 0; i < items; ++i) ds.intern_item("i" + std::to_string(i));
    for (int u = 0; u < users; ++u) {
      for (int t = 0; t < 12; ++t)
        ds.add_interaction(u, static_cast<ItemIndex>(rng.uniform_index(items)),
                           t < 10 ? SplitTag::train : SplitTag::test);
    }
    ds.finalize();

    store.modalities = {"visual", "text"};
    for (int m = 0; m < 2; ++m) {
      Mat f(items, 32);
      for (int i = 0; i < items; ++i)
        for (int j = 0; j < 32; ++j) f(i, j) = rng.gaussian();
      store.features.push_back(std::move(f));
    }
    params = init_backbone(ModelKind::vbpr, users, items, 32, 16, store, rng);
    projected = project_features(params, store);
  }
};

void BM_EvaluateTopK(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)), 1000);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        evaluate_topk(s.params, s.projected, s.ds, SplitTag::test, 20));
  }
}
BENCHMARK(BM_EvaluateTopK)->Arg(500)->Arg(2000);

void BM_RankItems(benchmark::State& state) {
  Setup s(64, static_cast<int>(state.range(0)));
  const std::vector<ItemIndex> exclude = s.ds.positives_train(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rank_items(s.params, s.projected, 0, exclude, 20));
  }
}
BENCHMARK(BM_RankItems)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
