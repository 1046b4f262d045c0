#include "modest/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "io_util.hpp"

namespace modest {

namespace {

// Splits a line on runs of tabs/spaces, trimming a trailing \r.
std::vector<std::string> split_fields(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == '\t' || line[i] == ' ')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != '\t' && line[j] != ' ') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

struct PairHash {
  std::size_t operator()(const std::pair<UserIndex, ItemIndex>& p) const {
    return std::hash<std::uint64_t>()(
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(p.first)) << 32) |
        static_cast<std::uint32_t>(p.second));
  }
};

}  // namespace

const char* split_tag_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::valid: return "valid";
    case SplitTag::test: return "test";
    case SplitTag::dropped: return "dropped";
  }
  return "?";
}

SplitTag split_tag_from_name(const std::string& name) {
  if (name == "train") return SplitTag::train;
  if (name == "valid") return SplitTag::valid;
  if (name == "test") return SplitTag::test;
  if (name == "dropped") return SplitTag::dropped;
  throw DataError("unknown split tag '" + name + "'");
}

ItemIndex InteractionDataset::item_index(const std::string& id) const {
  auto it = item_index_.find(id);
  return it == item_index_.end() ? -1 : it->second;
}

UserIndex InteractionDataset::user_index(const std::string& id) const {
  auto it = user_index_.find(id);
  return it == user_index_.end() ? -1 : it->second;
}

bool InteractionDataset::is_positive(UserIndex u, ItemIndex i,
                                     NegExclude mode) const {
  const auto& pos =
      mode == NegExclude::all ? positives_all_[u] : positives_train_[u];
  return std::binary_search(pos.begin(), pos.end(), i);
}

int InteractionDataset::count_tag(SplitTag tag) const {
  int n = 0;
  for (const auto& x : interactions_)
    if (x.tag == tag) ++n;
  return n;
}

UserIndex InteractionDataset::intern_user(const std::string& id) {
  auto it = user_index_.find(id);
  if (it != user_index_.end()) return it->second;
  const auto idx = static_cast<UserIndex>(user_ids_.size());
  user_index_.emplace(id, idx);
  user_ids_.push_back(id);
  return idx;
}

ItemIndex InteractionDataset::intern_item(const std::string& id) {
  auto it = item_index_.find(id);
  if (it != item_index_.end()) return it->second;
  const auto idx = static_cast<ItemIndex>(item_ids_.size());
  item_index_.emplace(id, idx);
  item_ids_.push_back(id);
  return idx;
}

void InteractionDataset::add_interaction(UserIndex u, ItemIndex i, SplitTag tag) {
  interactions_.push_back({u, i, tag});
}

void InteractionDataset::set_tag(std::size_t interaction_idx, SplitTag tag) {
  interactions_[interaction_idx].tag = tag;
}

void InteractionDataset::finalize() {
  positives_all_.assign(user_ids_.size(), {});
  positives_train_.assign(user_ids_.size(), {});
  for (const auto& x : interactions_) {
    if (x.tag == SplitTag::dropped) continue;
    positives_all_[x.user].push_back(x.item);
    if (x.tag == SplitTag::train) positives_train_[x.user].push_back(x.item);
  }
  for (auto& v : positives_all_) std::sort(v.begin(), v.end());
  for (auto& v : positives_train_) std::sort(v.begin(), v.end());
}

int FeatureStore::modality_index(const std::string& name) const {
  for (int m = 0; m < num_modalities(); ++m)
    if (modalities[m] == name) return m;
  return -1;
}

void FeatureStore::validate(int num_items) const {
  if (modalities.size() != features.size())
    throw DataError("feature store: modality/matrix count mismatch");
  for (int m = 0; m < num_modalities(); ++m) {
    if (features[m].rows() != num_items)
      throw DataError("feature store: modality '" + modalities[m] + "' has " +
                      std::to_string(features[m].rows()) + " rows, dataset has " +
                      std::to_string(num_items) + " items");
    if (!features[m].allFinite())
      throw DataError("feature store: modality '" + modalities[m] +
                      "' contains non-finite entries");
  }
}

namespace {

InteractionDataset load_tsv_impl(const std::string& path, DedupPolicy dedup,
                                 bool with_tags) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file: " + path);

  InteractionDataset ds;
  std::unordered_map<std::pair<UserIndex, ItemIndex>, bool, PairHash> seen;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dups = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    const std::size_t want = with_tags ? 3 : 2;
    if (fields.size() != want)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(want) + " fields, got " +
                      std::to_string(fields.size()));
    const UserIndex u = ds.intern_user(fields[0]);
    const ItemIndex i = ds.intern_item(fields[1]);
    const SplitTag tag =
        with_tags ? split_tag_from_name(fields[2]) : SplitTag::train;
    if (!seen.emplace(std::make_pair(u, i), true).second) {
      if (dedup == DedupPolicy::error)
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": duplicate interaction " + fields[0] + " " + fields[1]);
      ++dups;
      continue;
    }
    ds.add_interaction(u, i, tag);
  }
  if (ds.interactions().empty())
    throw DataError("empty dataset: " + path);
  if (dups > 0)
    std::cerr << "warning: dropped " << dups << " duplicate interactions from "
              << path << "\n";
  ds.finalize();
  return ds;
}

}  // namespace

InteractionDataset load_interactions(const std::string& path, DedupPolicy dedup) {
  return load_tsv_impl(path, dedup, /*with_tags=*/false);
}

InteractionDataset load_split_tsv(const std::string& path, DedupPolicy dedup) {
  return load_tsv_impl(path, dedup, /*with_tags=*/true);
}

void save_split_tsv(const std::string& path, const InteractionDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write split file: " + path);
  for (const auto& x : ds.interactions())
    out << ds.user_id(x.user) << '\t' << ds.item_id(x.item) << '\t'
        << split_tag_name(x.tag) << '\n';
}

namespace {

// floor with a nudge so that exactly-representable shares like 0.8*5 don't
// land one below the intended integer.
int floor_share(Real ratio, int k) {
  return static_cast<int>(std::floor(ratio * k + 1e-9));
}

// Counts per tag for one user under the documented rounding rule.
std::array<int, 3> split_counts(int k, const std::array<Real, 3>& ratios) {
  int train = floor_share(ratios[0], k);
  int rem = k - train;
  int valid = 0, test = 0;
  if (rem == 1) {
    valid = 1;
  } else if (rem >= 2) {
    const Real denom = ratios[1] + ratios[2];
    if (denom <= 0.0) {
      train += rem;
      rem = 0;
    } else {
      valid = floor_share(ratios[1] / denom, rem);
      test = floor_share(ratios[2] / denom, rem);
      train += rem - valid - test;
    }
  }
  if (train == 0 && k > 0) {
    if (test >= valid) --test; else --valid;
    ++train;
  }
  return {train, valid, test};
}

}  // namespace

InteractionDataset split_with_ratios(const InteractionDataset& ds,
                                     const std::array<Real, 3>& ratios,
                                     std::uint64_t seed) {
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");

  InteractionDataset out = ds;
  // Positions of each user's interactions, in file order.
  std::vector<std::vector<std::size_t>> by_user(ds.num_users());
  const auto& xs = ds.interactions();
  for (std::size_t p = 0; p < xs.size(); ++p)
    by_user[xs[p].user].push_back(p);

  RngStream rng(seed, "dataset");
  int skipped = 0;
  for (UserIndex u = 0; u < ds.num_users(); ++u) {
    auto& slots = by_user[u];
    const int k = static_cast<int>(slots.size());
    if (k == 0) continue;
    if (k < 3) {
      for (auto p : slots) out.set_tag(p, SplitTag::train);
      ++skipped;
      continue;
    }
    rng.shuffle(slots);
    const auto counts = split_counts(k, ratios);
    int pos = 0;
    for (int j = 0; j < counts[0]; ++j) out.set_tag(slots[pos++], SplitTag::train);
    for (int j = 0; j < counts[1]; ++j) out.set_tag(slots[pos++], SplitTag::valid);
    for (int j = 0; j < counts[2]; ++j) out.set_tag(slots[pos++], SplitTag::test);
  }
  if (skipped > 0)
    std::cerr << "warning: " << skipped
              << " users with <3 interactions assigned entirely to train\n";
  out.finalize();
  return out;
}

InteractionDataset random_split(const InteractionDataset& ds, std::uint64_t seed) {
  return split_with_ratios(ds, {0.8, 0.1, 0.1}, seed);
}

ItemIndex sample_negative(const InteractionDataset& ds, UserIndex user,
                          RngStream& rng, NegExclude mode) {
  const auto& pos = mode == NegExclude::all ? ds.positives_all(user)
                                            : ds.positives_train(user);
  const int n = ds.num_items();
  if (static_cast<int>(pos.size()) >= n)
    throw DataError("user " + ds.user_id(user) +
                    " interacted with every item; no negative exists");
  for (int attempt = 0; attempt < 100; ++attempt) {
    const auto j = static_cast<ItemIndex>(rng.uniform_index(n));
    if (!std::binary_search(pos.begin(), pos.end(), j)) return j;
  }
  // Dense user: enumerate the complement and pick uniformly.
  std::vector<ItemIndex> complement;
  complement.reserve(n - pos.size());
  for (ItemIndex j = 0; j < n; ++j)
    if (!std::binary_search(pos.begin(), pos.end(), j)) complement.push_back(j);
  return complement[rng.uniform_index(complement.size())];
}

std::vector<TrainTriple> sample_epoch_triples(const InteractionDataset& ds,
                                              RngStream& rng, NegExclude mode) {
  std::vector<TrainTriple> triples;
  for (const auto& x : ds.interactions()) {
    if (x.tag != SplitTag::train) continue;
    triples.push_back({x.user, x.item, sample_negative(ds, x.user, rng, mode)});
  }
  rng.shuffle(triples);
  return triples;
}

InteractionDataset min_core_filter(const InteractionDataset& ds, int k) {
  std::vector<Interaction> kept(ds.interactions().begin(),
                                ds.interactions().end());
  bool changed = true;
  while (changed) {
    std::vector<int> ucount(ds.num_users(), 0), icount(ds.num_items(), 0);
    for (const auto& x : kept) {
      ++ucount[x.user];
      ++icount[x.item];
    }
    std::vector<Interaction> next;
    next.reserve(kept.size());
    for (const auto& x : kept)
      if (ucount[x.user] >= k && icount[x.item] >= k) next.push_back(x);
    changed = next.size() != kept.size();
    kept.swap(next);
  }
  if (kept.empty()) throw DataError("min-core filter removed every interaction");

  InteractionDataset out;
  for (const auto& x : kept) {
    const UserIndex u = out.intern_user(ds.user_id(x.user));
    const ItemIndex i = out.intern_item(ds.item_id(x.item));
    out.add_interaction(u, i, x.tag);
  }
  out.finalize();
  return out;
}

namespace {

constexpr char kFeatureMagic[4] = {'M', 'D', 'F', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

}  // namespace

Mat load_features_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw DataError("bad magic in feature file: " + path);
  const std::uint32_t version = detail::read_u32(in, path);
  if (version != kFeatureVersion)
    throw DataError("unsupported feature file version " + std::to_string(version) +
                    ": " + path);
  const std::uint32_t rows = detail::read_u32(in, path);
  const std::uint32_t cols = detail::read_u32(in, path);
  Mat out = detail::read_f32_matrix(in, rows, cols, path);
  if (!out.allFinite())
    throw DataError("non-finite feature entries in " + path);
  return out;
}

void save_features_binary(const std::string& path, const Mat& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file: " + path);
  out.write(kFeatureMagic, 4);
  detail::write_u32(out, kFeatureVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(features.rows()));
  detail::write_u32(out, static_cast<std::uint32_t>(features.cols()));
  detail::write_f32_matrix(out, features);
}

Mat load_features_tsv(const std::string& path, const InteractionDataset& ds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file: " + path);
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = -1;
  Mat out;
  std::vector<bool> filled(ds.num_items(), false);
  std::size_t unknown = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (dim < 0) {
      dim = static_cast<Eigen::Index>(fields.size()) - 1;
      if (dim < 1)
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": feature row needs an id and at least one value");
      out = Mat::Zero(ds.num_items(), dim);
    }
    if (static_cast<Eigen::Index>(fields.size()) != dim + 1)
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": inconsistent feature dimension");
    const ItemIndex idx = ds.item_index(fields[0]);
    if (idx < 0) {
      ++unknown;
      continue;
    }
    for (Eigen::Index c = 0; c < dim; ++c) {
      std::size_t used = 0;
      Real v = 0.0;
      try {
        v = std::stod(fields[c + 1], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[c + 1].size())
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": malformed float '" + fields[c + 1] + "'");
      out(idx, c) = v;
    }
    filled[idx] = true;
  }
  for (ItemIndex i = 0; i < ds.num_items(); ++i)
    if (!filled[i])
      throw DataError(path + ": no feature row for item " + ds.item_id(i));
  if (unknown > 0)
    std::cerr << "warning: " << unknown << " feature rows in " << path
              << " refer to items absent from the dataset\n";
  if (!out.allFinite())
    throw DataError("non-finite feature entries in " + path);
  return out;
}

void save_dataset(const std::string& dir, const InteractionDataset& ds,
                  const FeatureStore& store) {
  std::filesystem::create_directories(dir);
  save_split_tsv(dir + "/split.tsv", ds);

  // First-appearance order the split file will induce on reload.
  std::vector<ItemIndex> new_index(ds.num_items(), -1);
  std::vector<ItemIndex> order;
  order.reserve(ds.num_items());
  for (const auto& x : ds.interactions()) {
    if (new_index[x.item] < 0) {
      new_index[x.item] = static_cast<ItemIndex>(order.size());
      order.push_back(x.item);
    }
  }
  if (static_cast<int>(order.size()) < ds.num_items())
    std::cerr << "warning: " << (ds.num_items() - order.size())
              << " items have no interactions; their feature rows were dropped\n";

  for (int m = 0; m < store.num_modalities(); ++m) {
    const Mat& src = store.features[m];
    Mat rows(static_cast<Eigen::Index>(order.size()), src.cols());
    for (std::size_t r = 0; r < order.size(); ++r)
      rows.row(static_cast<Eigen::Index>(r)) = src.row(order[r]);
    save_features_binary(dir + "/features_" + store.modalities[m] + ".bin", rows);
  }
}

}  // namespace modest
