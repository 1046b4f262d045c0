#include "modest/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "modest/parallel.hpp"

namespace modest {

ExcludeMode exclude_mode_from_name(const std::string& name) {
  if (name == "train") return ExcludeMode::train;
  if (name == "train+valid") return ExcludeMode::train_valid;
  throw ConfigError("unknown exclude mode '" + name + "'");
}

namespace {

// Top-K indices of `scores` skipping `exclude_sorted`, score descending with
// ascending-index tie break.
std::vector<ItemIndex> topk_from_scores(const Vec& scores,
                                        const std::vector<ItemIndex>& exclude_sorted,
                                        int k) {
  std::vector<ItemIndex> cand;
  cand.reserve(scores.size());
  for (ItemIndex i = 0; i < static_cast<ItemIndex>(scores.size()); ++i)
    if (!std::binary_search(exclude_sorted.begin(), exclude_sorted.end(), i))
      cand.push_back(i);
  const auto cmp = [&](ItemIndex a, ItemIndex b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  };
  if (static_cast<int>(cand.size()) > k) {
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), cmp);
    cand.resize(k);
  } else {
    std::sort(cand.begin(), cand.end(), cmp);
  }
  return cand;
}

struct UserMetrics {
  Real recall = 0.0, precision = 0.0, ndcg = 0.0;
  bool eligible = false;
};

UserMetrics metrics_for_user(const Vec& scores,
                             const std::vector<ItemIndex>& exclude_sorted,
                             const std::vector<ItemIndex>& relevant, int k) {
  UserMetrics um;
  if (relevant.empty()) return um;
  um.eligible = true;
  const auto topk = topk_from_scores(scores, exclude_sorted, k);
  int hits = 0;
  Real dcg = 0.0;
  for (std::size_t r = 0; r < topk.size(); ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), topk[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<Real>(r + 2));
    }
  }
  Real idcg = 0.0;
  const int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
  for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<Real>(r + 2));
  um.recall = static_cast<Real>(hits) / static_cast<Real>(relevant.size());
  um.precision = static_cast<Real>(hits) / static_cast<Real>(k);
  um.ndcg = dcg / idcg;
  return um;
}

}  // namespace

std::vector<ItemIndex> rank_items(const BackboneParams& p,
                                  const std::vector<Mat>& projected,
                                  UserIndex user,
                                  const std::vector<ItemIndex>& exclude_sorted,
                                  int k) {
  if (k < 1) throw ConfigError("rank_items: K must be >= 1");
  const Vec scores = score_all_items(p, projected, user);
  const int avail = static_cast<int>(scores.size()) -
                    static_cast<int>(exclude_sorted.size());
  if (k > avail)
    std::cerr << "warning: K=" << k << " exceeds " << avail
              << " candidate items; list truncated\n";
  return topk_from_scores(scores, exclude_sorted, k);
}

namespace {

MetricsReport evaluate_impl(const BackboneParams& p,
                            const std::vector<Mat>& projected,
                            const InteractionDataset& ds,
                            const std::vector<std::vector<ItemIndex>>& relevant,
                            int k, ExcludeMode exclude, int num_threads,
                            bool keep_per_user) {
  if (k < 1) throw ConfigError("evaluate_topk: K must be >= 1");
  const int num_users = ds.num_users();

  // Valid positives per user, needed for train+valid exclusion.
  std::vector<std::vector<ItemIndex>> valid_pos;
  if (exclude == ExcludeMode::train_valid) {
    valid_pos.assign(num_users, {});
    for (const auto& x : ds.interactions())
      if (x.tag == SplitTag::valid) valid_pos[x.user].push_back(x.item);
    for (auto& v : valid_pos) std::sort(v.begin(), v.end());
  }

  std::vector<UserMetrics> per_user(num_users);
  const int block = 256;
  for (int u0 = 0; u0 < num_users; u0 += block) {
    const int nb = std::min(block, num_users - u0);
    // Scores for the user block in one pass: S = U X^T + sum_m P^m Ebar^m^T.
    Mat S = p.user_embed.middleRows(u0, nb) * p.item_embed.transpose();
    for (int m = 0; m < p.num_modalities(); ++m)
      S.noalias() += p.user_pref[m].middleRows(u0, nb) * projected[m].transpose();
    parallel_for(static_cast<std::size_t>(nb), num_threads, [&](std::size_t r) {
      const UserIndex u = u0 + static_cast<UserIndex>(r);
      if (relevant[u].empty()) return;
      std::vector<ItemIndex> excl = ds.positives_train(u);
      if (exclude == ExcludeMode::train_valid) {
        std::vector<ItemIndex> merged(excl.size() + valid_pos[u].size());
        std::merge(excl.begin(), excl.end(), valid_pos[u].begin(),
                   valid_pos[u].end(), merged.begin());
        excl = std::move(merged);
      }
      const Vec scores = S.row(static_cast<Eigen::Index>(r)).transpose();
      per_user[u] = metrics_for_user(scores, excl, relevant[u], k);
    });
  }

  MetricsReport rep;
  rep.k = k;
  for (UserIndex u = 0; u < num_users; ++u) {
    if (!per_user[u].eligible) continue;
    ++rep.num_users;
    rep.recall += per_user[u].recall;
    rep.precision += per_user[u].precision;
    rep.ndcg += per_user[u].ndcg;
    if (keep_per_user) {
      rep.per_user_ids.push_back(u);
      rep.per_user_recall.push_back(per_user[u].recall);
    }
  }
  if (rep.num_users == 0)
    throw DataError("evaluate_topk: no user has a relevant item in this split");
  rep.recall /= rep.num_users;
  rep.precision /= rep.num_users;
  rep.ndcg /= rep.num_users;
  return rep;
}

}  // namespace

MetricsReport evaluate_topk(const BackboneParams& p,
                            const std::vector<Mat>& projected,
                            const InteractionDataset& ds, SplitTag split,
                            int k, ExcludeMode exclude, int num_threads,
                            bool keep_per_user) {
  if (split == SplitTag::valid && exclude == ExcludeMode::train_valid)
    throw ConfigError(
        "cannot exclude valid positives while evaluating the valid split");
  std::vector<std::vector<ItemIndex>> relevant(ds.num_users());
  for (const auto& x : ds.interactions())
    if (x.tag == split) relevant[x.user].push_back(x.item);
  for (auto& v : relevant) std::sort(v.begin(), v.end());
  return evaluate_impl(p, projected, ds, relevant, k, exclude, num_threads,
                       keep_per_user);
}

MetricsReport evaluate_topk_sets(const BackboneParams& p,
                                 const std::vector<Mat>& projected,
                                 const InteractionDataset& ds,
                                 const std::vector<std::vector<ItemIndex>>& relevant,
                                 int k, ExcludeMode exclude, int num_threads) {
  if (static_cast<int>(relevant.size()) != ds.num_users())
    throw ConfigError("evaluate_topk_sets: relevant size mismatch");
  return evaluate_impl(p, projected, ds, relevant, k, exclude, num_threads,
                       false);
}

}  // namespace modest
