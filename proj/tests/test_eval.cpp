#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "modest/eval.hpp"
#include "modest/rng.hpp"

using namespace modest;

namespace {

// mf params whose scores for user 0 are exactly the given vector.
BackboneParams params_with_scores(const Vec& scores) {
  BackboneParams p;
  p.kind = ModelKind::mf;
  p.user_embed = Mat::Ones(1, 1);
  p.item_embed = Mat(scores.size(), 1);
  for (Eigen::Index i = 0; i < scores.size(); ++i) p.item_embed(i, 0) = scores(i);
  return p;
}

// Brute-force metrics for one user given explicit scores.
struct BruteMetrics {
  Real recall, precision, ndcg;
};

BruteMetrics brute_force_user(const Vec& scores,
                              const std::set<ItemIndex>& relevant,
                              const std::set<ItemIndex>& exclude, int k) {
  std::vector<ItemIndex> order;
  for (ItemIndex i = 0; i < scores.size(); ++i)
    if (!exclude.count(i)) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](ItemIndex a, ItemIndex b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  });
  if (static_cast<int>(order.size()) > k) order.resize(k);

  int hits = 0;
  Real dcg = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (relevant.count(order[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<Real>(r) + 2.0);
    }
  }
  Real idcg = 0.0;
  const int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
  for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<Real>(r) + 2.0);
  BruteMetrics out;
  out.recall = static_cast<Real>(hits) / static_cast<Real>(relevant.size());
  out.precision = static_cast<Real>(hits) / static_cast<Real>(k);
  out.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
  return out;
}

}  // namespace

TEST_CASE("rank_items sorts by score with index tie-break") {
  Vec scores(3);
  scores << 0.1, 0.9, 0.5;
  auto p = params_with_scores(scores);

  auto top = rank_items(p, {}, 0, {}, 2);
  CHECK(top == std::vector<ItemIndex>{1, 2});

  SUBCASE("ties fall back to ascending index") {
    auto q = params_with_scores(Vec::Zero(6));
    CHECK(rank_items(q, {}, 0, {}, 4) == std::vector<ItemIndex>{0, 1, 2, 3});
    CHECK(rank_items(q, {}, 0, {1, 2}, 3) == std::vector<ItemIndex>{0, 3, 4});
  }
  SUBCASE("excluded items never appear") {
    auto top2 = rank_items(p, {}, 0, {1}, 2);
    CHECK(top2 == std::vector<ItemIndex>{2, 0});
  }
  SUBCASE("truncation when candidates run out") {
    auto top3 = rank_items(p, {}, 0, {0, 1}, 5);
    CHECK(top3 == std::vector<ItemIndex>{2});
  }
}

TEST_CASE("single-user metrics match hand values") {
  InteractionDataset ds;
  ds.intern_user("u");
  for (int j = 0; j < 8; ++j) ds.intern_item("i" + std::to_string(j));

  SUBCASE("perfect hit at K=1") {
    ds.add_interaction(0, 3, SplitTag::test);
    ds.finalize();
    Vec scores = Vec::Zero(8);
    scores(3) = 5.0;
    auto p = params_with_scores(scores);
    auto rep = evaluate_topk(p, {}, ds, SplitTag::test, 1);
    CHECK(rep.recall == 1.0);
    CHECK(rep.precision == 1.0);
    CHECK(rep.ndcg == 1.0);
    CHECK(rep.num_users == 1);
  }
  SUBCASE("hit at rank 2 of K=2") {
    // relevant {3}, ranked [7, 3] -> N = (1/log2 3)/1
    ds.add_interaction(0, 3, SplitTag::test);
    ds.finalize();
    Vec scores = Vec::Zero(8);
    scores(7) = 2.0;
    scores(3) = 1.0;
    auto p = params_with_scores(scores);
    auto rep = evaluate_topk(p, {}, ds, SplitTag::test, 2);
    CHECK(rep.recall == 1.0);
    CHECK(rep.precision == 0.5);
    CHECK(rep.ndcg == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
    CHECK(rep.ndcg == doctest::Approx(0.63093).epsilon(1e-4));
  }
  SUBCASE("train positives are excluded from candidates") {
    ds.add_interaction(0, 0, SplitTag::train);
    ds.add_interaction(0, 3, SplitTag::test);
    ds.finalize();
    Vec scores = Vec::Zero(8);
    scores(0) = 9.0;  // would rank first but is excluded
    scores(3) = 1.0;
    auto p = params_with_scores(scores);
    auto rep = evaluate_topk(p, {}, ds, SplitTag::test, 1);
    CHECK(rep.recall == 1.0);
  }
}

TEST_CASE("valid items excluded only under train_valid mode") {
  InteractionDataset ds;
  ds.intern_user("u");
  for (int j = 0; j < 5; ++j) ds.intern_item("i" + std::to_string(j));
  ds.add_interaction(0, 0, SplitTag::valid);
  ds.add_interaction(0, 1, SplitTag::test);
  ds.finalize();

  Vec scores(5);
  scores << 5.0, 4.0, 0.0, 0.0, 0.0;  // valid item 0 outranks test item 1
  auto p = params_with_scores(scores);

  auto keep = evaluate_topk(p, {}, ds, SplitTag::test, 1, ExcludeMode::train);
  CHECK(keep.recall == 0.0);
  auto drop =
      evaluate_topk(p, {}, ds, SplitTag::test, 1, ExcludeMode::train_valid);
  CHECK(drop.recall == 1.0);
}

TEST_CASE("evaluating the valid split with train_valid exclusion is rejected") {
  InteractionDataset ds;
  ds.intern_user("u");
  ds.intern_item("a");
  ds.intern_item("b");
  ds.add_interaction(0, 0, SplitTag::train);
  ds.add_interaction(0, 1, SplitTag::valid);
  ds.finalize();
  auto p = params_with_scores(Vec::Zero(2));
  CHECK_THROWS_AS(
      evaluate_topk(p, {}, ds, SplitTag::valid, 1, ExcludeMode::train_valid),
      ConfigError);
  CHECK_NOTHROW(
      evaluate_topk(p, {}, ds, SplitTag::valid, 1, ExcludeMode::train));
}

TEST_CASE("users without relevant items are skipped; none eligible throws") {
  InteractionDataset ds;
  ds.intern_user("u0");
  ds.intern_user("u1");
  for (int j = 0; j < 4; ++j) ds.intern_item("i" + std::to_string(j));
  ds.add_interaction(0, 0, SplitTag::train);
  ds.add_interaction(0, 1, SplitTag::test);
  ds.add_interaction(1, 2, SplitTag::train);
  ds.finalize();

  Vec scores = Vec::Zero(4);
  scores(1) = 1.0;
  auto p = params_with_scores(scores);
  // user u1 has no test positives: excluded from the mean
  auto rep = evaluate_topk(p, {}, ds, SplitTag::test, 1);
  CHECK(rep.num_users == 1);
  CHECK(rep.recall == 1.0);

  CHECK_THROWS_AS(evaluate_topk(p, {}, ds, SplitTag::valid, 1), DataError);
}

TEST_CASE("random instances match the brute-force evaluator") {
  RngStream rng(2718, "test.eval.brute");
  for (int trial = 0; trial < 15; ++trial) {
    CAPTURE(trial);
    const int users = 6, items = 30, k = 5;
    InteractionDataset ds;
    for (int u = 0; u < users; ++u) ds.intern_user("u" + std::to_string(u));
    for (int i = 0; i < items; ++i) ds.intern_item("i" + std::to_string(i));
    for (int u = 0; u < users; ++u) {
      std::set<ItemIndex> used;
      const int n_train = 2 + static_cast<int>(rng.uniform_index(3));
      const int n_test = static_cast<int>(rng.uniform_index(4));
      while (static_cast<int>(used.size()) < n_train + n_test) {
        const auto i = static_cast<ItemIndex>(rng.uniform_index(items));
        if (!used.insert(i).second) continue;
        ds.add_interaction(u, i,
                           static_cast<int>(used.size()) <= n_train
                               ? SplitTag::train
                               : SplitTag::test);
      }
    }
    ds.finalize();

    BackboneParams p;
    p.kind = ModelKind::mf;
    p.user_embed = Mat(users, 3);
    p.item_embed = Mat(items, 3);
    for (int u = 0; u < users; ++u)
      for (int c = 0; c < 3; ++c) p.user_embed(u, c) = rng.gaussian();
    for (int i = 0; i < items; ++i)
      for (int c = 0; c < 3; ++c) p.item_embed(i, c) = rng.gaussian();

    Real wr = 0.0, wp = 0.0, wn = 0.0;
    int eligible = 0;
    for (int u = 0; u < users; ++u) {
      std::set<ItemIndex> rel, excl;
      for (const auto& x : ds.interactions()) {
        if (x.user != u) continue;
        if (x.tag == SplitTag::test) rel.insert(x.item);
        if (x.tag == SplitTag::train) excl.insert(x.item);
      }
      if (rel.empty()) continue;
      ++eligible;
      Vec scores(items);
      for (int i = 0; i < items; ++i)
        scores(i) = p.user_embed.row(u).dot(p.item_embed.row(i));
      auto bm = brute_force_user(scores, rel, excl, k);
      wr += bm.recall;
      wp += bm.precision;
      wn += bm.ndcg;
    }
    if (eligible == 0) continue;

    auto rep = evaluate_topk(p, {}, ds, SplitTag::test, k);
    CHECK(rep.num_users == eligible);
    CHECK(rep.recall == doctest::Approx(wr / eligible).epsilon(1e-12));
    CHECK(rep.precision == doctest::Approx(wp / eligible).epsilon(1e-12));
    CHECK(rep.ndcg == doctest::Approx(wn / eligible).epsilon(1e-12));
  }
}

TEST_CASE("metrics are invariant to monotone score transforms") {
  InteractionDataset ds;
  RngStream rng(9, "test.eval.mono");
  for (int u = 0; u < 4; ++u) ds.intern_user("u" + std::to_string(u));
  for (int i = 0; i < 12; ++i) ds.intern_item("i" + std::to_string(i));
  for (int u = 0; u < 4; ++u) {
    ds.add_interaction(u, static_cast<ItemIndex>(u), SplitTag::train);
    ds.add_interaction(u, static_cast<ItemIndex>(u + 4), SplitTag::test);
    ds.add_interaction(u, static_cast<ItemIndex>(u + 8), SplitTag::test);
  }
  ds.finalize();

  BackboneParams p;
  p.kind = ModelKind::mf;
  p.user_embed = Mat::Identity(4, 4);
  p.item_embed = Mat(12, 4);
  for (int i = 0; i < 12; ++i)
    for (int c = 0; c < 4; ++c) p.item_embed(i, c) = rng.gaussian();

  auto rep = evaluate_topk(p, {}, ds, SplitTag::test, 3);

  // x -> 2x + 7 preserves the argsort of every user's score vector.
  BackboneParams q = p;
  q.user_embed = Mat(4, 5);
  q.user_embed.leftCols(4) = 2.0 * p.user_embed;
  q.user_embed.col(4).setConstant(7.0);
  q.item_embed = Mat(12, 5);
  q.item_embed.leftCols(4) = p.item_embed;
  q.item_embed.col(4).setConstant(1.0);

  auto rep2 = evaluate_topk(q, {}, ds, SplitTag::test, 3);
  CHECK(rep2.recall == doctest::Approx(rep.recall).epsilon(1e-12));
  CHECK(rep2.precision == doctest::Approx(rep.precision).epsilon(1e-12));
  CHECK(rep2.ndcg == doctest::Approx(rep.ndcg).epsilon(1e-12));
}

TEST_CASE("recall precision identity on small instances") {
  // With |relevant| <= K: recall = precision * K / |relevant| per user.
  InteractionDataset ds;
  ds.intern_user("u");
  for (int i = 0; i < 10; ++i) ds.intern_item("i" + std::to_string(i));
  ds.add_interaction(0, 2, SplitTag::test);
  ds.add_interaction(0, 5, SplitTag::test);
  ds.finalize();

  RngStream rng(77, "test.eval.identity");
  Vec scores(10);
  for (int i = 0; i < 10; ++i) scores(i) = rng.gaussian();
  auto p = params_with_scores(scores);
  const int k = 4;
  auto rep = evaluate_topk(p, {}, ds, SplitTag::test, k, ExcludeMode::train,
                           1, true);
  CHECK(rep.recall == doctest::Approx(rep.precision * k / 2.0).epsilon(1e-12));
  REQUIRE(rep.per_user_recall.size() == 1);
  CHECK(rep.per_user_ids[0] == 0);
  CHECK(rep.per_user_recall[0] == doctest::Approx(rep.recall));
}

TEST_CASE("evaluation is thread-count invariant") {
  InteractionDataset ds;
  RngStream rng(123, "test.eval.threads");
  for (int u = 0; u < 50; ++u) ds.intern_user("u" + std::to_string(u));
  for (int i = 0; i < 80; ++i) ds.intern_item("i" + std::to_string(i));
  for (int u = 0; u < 50; ++u) {
    std::set<ItemIndex> used;
    while (used.size() < 6) {
      const auto i = static_cast<ItemIndex>(rng.uniform_index(80));
      if (used.insert(i).second)
        ds.add_interaction(u, i, used.size() <= 4 ? SplitTag::train : SplitTag::test);
    }
  }
  ds.finalize();

  BackboneParams p;
  p.kind = ModelKind::mf;
  p.user_embed = Mat(50, 6);
  p.item_embed = Mat(80, 6);
  for (int u = 0; u < 50; ++u)
    for (int c = 0; c < 6; ++c) p.user_embed(u, c) = rng.gaussian();
  for (int i = 0; i < 80; ++i)
    for (int c = 0; c < 6; ++c) p.item_embed(i, c) = rng.gaussian();

  auto r1 = evaluate_topk(p, {}, ds, SplitTag::test, 10, ExcludeMode::train, 1);
  auto r4 = evaluate_topk(p, {}, ds, SplitTag::test, 10, ExcludeMode::train, 4);
  CHECK(r1.recall == r4.recall);
  CHECK(r1.precision == r4.precision);
  CHECK(r1.ndcg == r4.ndcg);
  CHECK(r1.num_users == r4.num_users);
}

TEST_CASE("exclude mode names parse") {
  CHECK(exclude_mode_from_name("train") == ExcludeMode::train);
  CHECK(exclude_mode_from_name("train+valid") == ExcludeMode::train_valid);
  CHECK_THROWS_AS(exclude_mode_from_name("none"), ConfigError);
}
