#pragma once

#include "modest/common.hpp"
#include "modest/rng.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace modest {

enum class SplitTag : std::uint8_t { train = 0, valid = 1, test = 2, dropped = 3 };

const char* split_tag_name(SplitTag tag);
SplitTag split_tag_from_name(const std::string& name);

struct Interaction {
  UserIndex user;
  ItemIndex item;
  SplitTag tag = SplitTag::train;
};

// Which of a user's positives a negative sample must avoid: only the train
// portion, or every known positive (train+valid+test).
enum class NegExclude { train_only, all };

// Users, items and their observed interactions, with contiguous zero-based
// indices assigned in first-appearance order. Immutable after load; the
// per-user positive lists are rebuilt by finalize() whenever a loader or
// split routine changes the interaction list.
class InteractionDataset {
 public:
  int num_users() const { return static_cast<int>(user_ids_.size()); }
  int num_items() const { return static_cast<int>(item_ids_.size()); }
  const std::vector<Interaction>& interactions() const { return interactions_; }

  const std::string& user_id(UserIndex u) const { return user_ids_[u]; }
  const std::string& item_id(ItemIndex i) const { return item_ids_[i]; }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  // -1 when the id is unknown.
  ItemIndex item_index(const std::string& id) const;
  UserIndex user_index(const std::string& id) const;

  // Sorted positive item lists per user. "all" spans every non-dropped tag.
  const std::vector<ItemIndex>& positives_all(UserIndex u) const {
    return positives_all_[u];
  }
  const std::vector<ItemIndex>& positives_train(UserIndex u) const {
    return positives_train_[u];
  }
  bool is_positive(UserIndex u, ItemIndex i, NegExclude mode) const;

  int count_tag(SplitTag tag) const;

  // Construction surface used by loaders, splitters and generators.
  UserIndex intern_user(const std::string& id);
  ItemIndex intern_item(const std::string& id);
  void add_interaction(UserIndex u, ItemIndex i, SplitTag tag = SplitTag::train);
  void set_tag(std::size_t interaction_idx, SplitTag tag);
  void finalize();

 private:
  std::vector<Interaction> interactions_;
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, UserIndex> user_index_;
  std::unordered_map<std::string, ItemIndex> item_index_;
  std::vector<std::vector<ItemIndex>> positives_all_;
  std::vector<std::vector<ItemIndex>> positives_train_;
};

struct TrainTriple {
  UserIndex user;
  ItemIndex pos_item;
  ItemIndex neg_item;
};

// Per-modality raw item features, rows aligned with item indices.
struct FeatureStore {
  std::vector<std::string> modalities;
  std::vector<Mat> features;  // per modality: num_items x d_m

  int num_modalities() const { return static_cast<int>(modalities.size()); }
  int dim(int m) const { return static_cast<int>(features[m].cols()); }
  int modality_index(const std::string& name) const;
  void validate(int num_items) const;
};

enum class DedupPolicy { warn, error };

// Two-column `user_id<TAB>item_id` TSV. All interactions start tagged train.
InteractionDataset load_interactions(const std::string& path,
                                     DedupPolicy dedup = DedupPolicy::warn);

// Three-column split TSV: `user_id<TAB>item_id<TAB>{train|valid|test|dropped}`.
InteractionDataset load_split_tsv(const std::string& path,
                                  DedupPolicy dedup = DedupPolicy::warn);

void save_split_tsv(const std::string& path, const InteractionDataset& ds);

// Per-user split at the given ratios (must sum to 1): train gets
// floor(r_train*k); a remainder of exactly 1 goes to valid; otherwise the
// remainder is divided between valid and test proportionally (floored) and
// the leftover interaction goes back to train. Every user keeps at least
// one train interaction.
InteractionDataset split_with_ratios(const InteractionDataset& ds,
                                     const std::array<Real, 3>& ratios,
                                     std::uint64_t seed);

// The standard random 80/10/10 split. Users with fewer than 3 interactions
// are skipped with a warning and assigned entirely to train.
InteractionDataset random_split(const InteractionDataset& ds, std::uint64_t seed);

// Uniform draw from the complement of the user's positives: rejection
// sampling capped at 100 tries, then a full scan.
ItemIndex sample_negative(const InteractionDataset& ds, UserIndex user,
                          RngStream& rng, NegExclude mode = NegExclude::all);

// One negative per train positive, shuffled. The trainer draws a fresh set
// every epoch.
std::vector<TrainTriple> sample_epoch_triples(const InteractionDataset& ds,
                                              RngStream& rng,
                                              NegExclude mode = NegExclude::all);

// Convenience k-core filter (drops users/items below k interactions until
// stable). Inputs are normally pre-filtered 5-core.
InteractionDataset min_core_filter(const InteractionDataset& ds, int k);

// Binary per-modality feature file: magic MDFT, u32 version=1, u32
// num_items, u32 d_m, then num_items*d_m little-endian f32, row-major.
// Row r holds the features of the item with index r.
Mat load_features_binary(const std::string& path);
void save_features_binary(const std::string& path, const Mat& features);

// TSV alternative: `item_id<TAB>v1<TAB>...<TAB>v_dm`, keyed by item id.
Mat load_features_tsv(const std::string& path, const InteractionDataset& ds);

// Writes split.tsv plus one features_<modality>.bin per modality into dir.
// Feature rows are permuted into the first-appearance order a subsequent
// load_split_tsv will assign, so binary rows stay aligned with item indices.
// Items without any interaction are dropped from the written files.
void save_dataset(const std::string& dir, const InteractionDataset& ds,
                  const FeatureStore& store);

}  // namespace modest
