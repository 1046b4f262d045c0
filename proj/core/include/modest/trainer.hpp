#pragma once

#include <functional>
#include <string>
#include <vector>

#include "modest/adam.hpp"
#include "modest/backbone.hpp"
#include "modest/common.hpp"
#include "modest/dataset.hpp"
#include "modest/eval.hpp"
#include "modest/hsic.hpp"
#include "modest/mask.hpp"

namespace modest {

// Per-item sample weights through the bounded parameterization
// w_i = sigmoid(logit_i) * w_max; logit 0 gives w = 1 exactly.
struct SampleWeights {
  Vec logits;
  Real w_max = 2.0;

  static SampleWeights ones(int num_items, Real w_max = 2.0) {
    SampleWeights sw;
    sw.logits = Vec::Zero(num_items);
    sw.w_max = w_max;
    return sw;
  }
  Real weight(ItemIndex i) const {
    return w_max / (1.0 + std::exp(-logits(i)));
  }
  Vec weights() const {
    return w_max * (1.0 + (-logits.array()).exp()).inverse();
  }
};

struct TrainConfig {
  Real lambda = 0.1;       // weight-update step multiplier
  int epochs_max = 200;
  int batch_size = 1024;
  Real lr_theta = 0.001;
  Real l2_reg = 1e-4;
  int patience = 10;
  std::uint64_t seed = 42;
  Real gamma = 0.1;        // anchor penalty toward w = 1
  Real w_max = 2.0;
  int inner_weight_steps = 1;  // T
  HsicMode hsic_mode = HsicMode::per_item;
  Real mask_temperature = 1.0;
  NegExclude neg_exclude = NegExclude::all;
  int num_threads = 1;
  int valid_k = 20;
  bool vanilla = false;    // plain weighted-BPR with w fixed at 1, no mask/HSIC machinery
  bool keep_masks = false; // retain per-epoch masks in the result

  void validate() const;
};

struct EpochReport {
  int epoch = 0;
  Real weighted_bpr_loss = 0.0;  // mean over batches, BPR term only
  Real total_loss = 0.0;         // BPR + L2
  Real hsic_loss = 0.0;          // post-update objective, 0 when phase skipped
  Real valid_recall = 0.0;
  Real valid_precision = 0.0;
  Real valid_ndcg = 0.0;
  Real wall_seconds = 0.0;       // stdout only, kept out of train_log.tsv
};

struct FitResult {
  BackboneParams params;         // best-validation checkpoint
  SampleWeights weights;         // state at the best epoch
  std::vector<EpochReport> reports;
  int best_epoch = 0;
  Real best_recall = 0.0;
  std::vector<TaskMask> epoch_masks;  // filled when keep_masks
};

// One pass over shuffled train triples with per-item weights fixed: Adam on
// all theta tensors, per-modality |grad W_m| row sums accumulated for the
// mask. Returns batch-mean losses.
BprBatchStats train_theta_epoch(BackboneParams& params,
                                const InteractionDataset& ds,
                                const FeatureStore& store,
                                const Vec& item_weights,
                                const TrainConfig& cfg, RngStream& sampling_rng,
                                std::vector<AdamMoments<Mat>>& mat_moments,
                                std::vector<AdamMoments<Vec>>& vec_moments,
                                long& adam_t, ImportanceAccumulator& mask_acc);

// T Adam steps on the logits of ws.items minimizing masked weighted HSIC
// plus the anchor penalty, step size lambda * lr_theta. Returns the objective
// after the last step.
Real update_weights(SampleWeights& sw, const HsicWorkspace& ws,
                    const TrainConfig& cfg, AdamMoments<Vec>& mom,
                    long& weight_t);

// Algorithm: alternate theta epochs and weight updates, validate Recall@K,
// keep the best checkpoint, stop after `patience` epochs without improvement.
FitResult fit(const InteractionDataset& ds, const FeatureStore& store,
              ModelKind kind, int embed_dim, int proj_dim,
              const TrainConfig& cfg,
              const std::function<void(const EpochReport&)>& on_epoch = {});

// Items with at least one training interaction, ascending.
std::vector<ItemIndex> train_interacted_items(const InteractionDataset& ds);

void save_train_log(const std::string& path,
                    const std::vector<EpochReport>& reports);
void save_sample_weights(const std::string& path, const SampleWeights& sw,
                         const InteractionDataset& ds);
// item_id -> weight, for items present in ds; missing items get weight 1.
Vec load_sample_weights(const std::string& path, const InteractionDataset& ds);

}  // namespace modest
