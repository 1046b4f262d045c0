#pragma once

#include <string>
#include <vector>

#include "modest/common.hpp"
#include "modest/dataset.hpp"
#include "modest/rng.hpp"

namespace modest {

// Two-layer MLP over randomly projected modality pairs that estimates the
// probability a (e^m1, e^m2) pair belongs to the same item.
struct MatchClassifier {
  std::vector<Mat> proj;  // per modality d_p x d_m, frozen after init
  Mat W1;                 // hidden x (2 d_p)
  Vec b1;                 // hidden
  Vec W2;                 // hidden
  Real b2 = 0.0;
  int m1 = 0, m2 = 1;     // modality pair the classifier was built on

  // Forward pass on raw feature vectors.
  Real prob(const Vec& e1, const Vec& e2) const;
};

struct MatchTrainReport {
  std::vector<Real> epoch_loss;
  Real final_accuracy = 0.0;
  bool diverged = false;
};

MatchClassifier init_match_classifier(const std::vector<int>& feature_dims,
                                      int proj_dim, int hidden, RngStream& rng);

// Logistic loss and parameter gradients for one already-projected pair
// (x = [p1; p2]); gradient outputs optional. Exposed for gradient checks.
Real match_pair_loss_and_grad(const MatchClassifier& clf, const Vec& p1,
                              const Vec& p2, Real label, Mat* dW1, Vec* db1,
                              Vec* dW2, Real* db2);

// Logistic loss on matched pairs vs one mismatched negative per positive per
// epoch (resampled fresh), hand-derived backprop, plain SGD over the first
// two modalities.
MatchClassifier train_match_classifier(const FeatureStore& store,
                                       const std::vector<ItemIndex>& items,
                                       int epochs, std::uint64_t seed,
                                       MatchTrainReport* report = nullptr,
                                       int proj_dim = 128, int hidden = 64,
                                       Real lr = 0.05);

Real estimate_match_prob(const MatchClassifier& clf, const FeatureStore& store,
                         ItemIndex item);

enum class OodMode { lowest, highest };

OodMode ood_mode_from_name(const std::string& name);

// Keeps only test interactions whose item falls in the selected fraction by
// match probability (ties by ascending item index); other test rows become
// `dropped`. Train/valid rows untouched. Classifier is trained internally on
// train-split items.
InteractionDataset build_ood_split(const InteractionDataset& ds,
                                   const FeatureStore& store, Real fraction,
                                   OodMode mode, std::uint64_t seed,
                                   int classifier_epochs = 30);

// As above but with caller-supplied per-item probabilities (index-aligned).
InteractionDataset build_ood_split_from_probs(const InteractionDataset& ds,
                                              const std::vector<Real>& probs,
                                              Real fraction, OodMode mode);

// Per-dataset per-user re-split at the given ratios, then union with
// namespaced ids ("A:" / "B:" prefixes). Features concatenated, zero-padded
// per modality when dims differ.
InteractionDataset mix_datasets(const InteractionDataset& a,
                                const InteractionDataset& b,
                                const std::array<Real, 3>& ratios_a,
                                const std::array<Real, 3>& ratios_b,
                                std::uint64_t seed);
FeatureStore mix_feature_stores(const FeatureStore& a, const FeatureStore& b,
                                const InteractionDataset& mixed,
                                const InteractionDataset& dsa,
                                const InteractionDataset& dsb);

struct SyntheticSpec {
  int num_users = 2000;
  int num_items = 1000;
  std::vector<int> feature_dims = {32, 32};  // one entry per modality
  int causal_modality = 0;
  Real rho_train = 0.9;
  Real rho_test = 0.0;
  int interactions_per_user = 15;
  std::uint64_t seed = 42;
  int latent_dim = 8;
  Real test_item_fraction = 0.25;   // tail share of items drawn under rho_test
  Real test_inter_fraction = 0.1;   // share of each user's interactions tagged test
  Real causal_noise = 0.8;          // feature noise sigma on the causal modality
  Real spurious_noise = 0.1;        // on the others

  void validate() const;
};

struct SyntheticData {
  InteractionDataset ds;
  FeatureStore store;
  std::vector<ItemIndex> test_regime_items;  // items drawn under rho_test
  std::vector<Real> item_rho;                // realized per-item correlation
  Mat z_causal, z_spurious;                  // latent factors, num_items x k
};

// Correlated-modality generator: latent causal/spurious item factors with
// per-regime correlation (plus per-item jitter), linear feature lifts with
// asymmetric modality noise, user tastes over the causal factor only.
// Train/valid interactions come from Gumbel top-k over all items; test
// interactions only touch the test-regime tail, so shifting rho_test moves
// the test distribution while train/valid stay put. Deterministic given spec.
SyntheticData gen_synthetic(const SyntheticSpec& spec);

}  // namespace modest
