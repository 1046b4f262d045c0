#pragma once

#include <string>
#include <vector>

#include "modest/common.hpp"
#include "modest/dataset.hpp"
#include "modest/rng.hpp"

namespace modest {

enum class ModelKind { mf, vbpr };

ModelKind model_kind_from_name(const std::string& name);
const char* model_kind_name(ModelKind kind);

// Trainable state. For mf the modality vectors are empty.
struct BackboneParams {
  ModelKind kind = ModelKind::vbpr;
  Mat user_embed;                     // num_users x d
  Mat item_embed;                     // num_items x d
  std::vector<std::string> modalities;
  std::vector<Mat> W;                 // d' x d_m
  std::vector<Vec> b;                 // d'
  std::vector<Mat> user_pref;         // num_users x d'

  int num_users() const { return static_cast<int>(user_embed.rows()); }
  int num_items() const { return static_cast<int>(item_embed.rows()); }
  int embed_dim() const { return static_cast<int>(user_embed.cols()); }
  int proj_dim() const { return W.empty() ? 0 : static_cast<int>(W[0].rows()); }
  int num_modalities() const { return static_cast<int>(W.size()); }
};

// Gradient tensors matching BackboneParams shape for shape.
struct BackboneGrads {
  Mat user_embed;
  Mat item_embed;
  std::vector<Mat> W;
  std::vector<Vec> b;
  std::vector<Mat> user_pref;

  void zero_like(const BackboneParams& p);
};

// Xavier-uniform init on every matrix, b_m = 0. Draw order is fixed:
// user_embed, item_embed, then per modality W, user_pref.
BackboneParams init_backbone(ModelKind kind, int num_users, int num_items,
                             int embed_dim, int proj_dim,
                             const FeatureStore& store, RngStream& rng);

// ebar^m = E^m W_m^T + 1 b_m^T for every modality; empty for mf.
std::vector<Mat> project_features(const BackboneParams& p,
                                  const FeatureStore& store);

// mf: x_u . x_i ; vbpr adds sum_m p_u^m . ebar_i^m.
Real score_pair(const BackboneParams& p, const std::vector<Mat>& projected,
                UserIndex u, ItemIndex i);

// Scores of every item for one user as a length-num_items vector.
Vec score_all_items(const BackboneParams& p, const std::vector<Mat>& projected,
                    UserIndex u);

struct BprBatchStats {
  Real weighted_bpr = 0.0;  // mean-reduced weighted BPR term
  Real reg = 0.0;           // L2 term
  Real total() const { return weighted_bpr + reg; }
};

// Loss and analytic gradients over triples[begin,end). item_weights is
// per-item (length num_items); the positive item's weight scales its triple.
// grads must be zeroed by the caller (zero_like) and is accumulated into.
// When mask_accum is non-null, per-modality row sums of |dW_m| from the pure
// BPR term (no regularizer) are added to (*mask_accum)[m].
BprBatchStats bpr_batch_loss_and_grad(const BackboneParams& p,
                                      const FeatureStore& store,
                                      const std::vector<TrainTriple>& triples,
                                      std::size_t begin, std::size_t end,
                                      const Vec& item_weights, Real l2_reg,
                                      BackboneGrads& grads,
                                      std::vector<Vec>* mask_accum,
                                      int num_threads = 1);

// Loss only (same convention), for finite-difference checks.
Real bpr_batch_loss(const BackboneParams& p, const FeatureStore& store,
                    const std::vector<TrainTriple>& triples, std::size_t begin,
                    std::size_t end, const Vec& item_weights, Real l2_reg);

// Checkpoint: magic MDCK, u32 version, u32 model tag, shape headers, then
// tensors as little-endian f32 in declaration order.
void save_checkpoint(const std::string& path, const BackboneParams& p);
BackboneParams load_checkpoint(const std::string& path);

}  // namespace modest
