#pragma once

#include <vector>

#include "modest/backbone.hpp"
#include "modest/common.hpp"
#include "modest/dataset.hpp"

namespace modest {

enum class ExcludeMode { train, train_valid };

ExcludeMode exclude_mode_from_name(const std::string& name);

struct MetricsReport {
  int k = 0;
  Real recall = 0.0;
  Real precision = 0.0;
  Real ndcg = 0.0;
  int num_users = 0;  // users with >= 1 relevant item
  std::vector<Real> per_user_recall;  // filled when keep_per_user set
  std::vector<UserIndex> per_user_ids;
};

// Top-K items for one user: score descending, ties by ascending item index,
// excluded items never returned. Truncates (with a warning) when fewer than K
// candidates remain.
std::vector<ItemIndex> rank_items(const BackboneParams& p,
                                  const std::vector<Mat>& projected,
                                  UserIndex user,
                                  const std::vector<ItemIndex>& exclude_sorted,
                                  int k);

// Full-ranking metrics over users with >= 1 relevant item in `split`.
// Candidates are all items minus the user's train positives (plus valid
// positives under ExcludeMode::train_valid). Throws DataError when no user is
// eligible.
MetricsReport evaluate_topk(const BackboneParams& p,
                            const std::vector<Mat>& projected,
                            const InteractionDataset& ds, SplitTag split,
                            int k = 20, ExcludeMode exclude = ExcludeMode::train,
                            int num_threads = 1, bool keep_per_user = false);

// Same metrics on a caller-supplied relevant set per user (used by the
// subset comparisons in the shift experiments). relevant[u] sorted ascending.
MetricsReport evaluate_topk_sets(const BackboneParams& p,
                                 const std::vector<Mat>& projected,
                                 const InteractionDataset& ds,
                                 const std::vector<std::vector<ItemIndex>>& relevant,
                                 int k, ExcludeMode exclude,
                                 int num_threads = 1);

}  // namespace modest
