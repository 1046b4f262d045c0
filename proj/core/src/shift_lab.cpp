#include "modest/shift_lab.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace modest {

namespace {

Real sigmoid(Real x) { return 1.0 / (1.0 + std::exp(-x)); }

Real logistic_loss(Real p, Real y) {
  // -(y ln p + (1-y) ln(1-p)) with a floor against log(0)
  const Real eps = 1e-12;
  return -(y * std::log(std::max(p, eps)) +
           (1.0 - y) * std::log(std::max(1.0 - p, eps)));
}

}  // namespace

Real MatchClassifier::prob(const Vec& e1, const Vec& e2) const {
  if (!e1.allFinite() || !e2.allFinite())
    throw DataError("match classifier: non-finite feature input");
  Vec x(proj[m1].rows() + proj[m2].rows());
  x.head(proj[m1].rows()) = proj[m1] * e1;
  x.tail(proj[m2].rows()) = proj[m2] * e2;
  const Vec h = (W1 * x + b1).array().tanh();
  return sigmoid(W2.dot(h) + b2);
}

MatchClassifier init_match_classifier(const std::vector<int>& feature_dims,
                                      int proj_dim, int hidden,
                                      RngStream& rng) {
  if (feature_dims.size() < 2)
    throw ConfigError("match classifier needs at least 2 modalities");
  MatchClassifier clf;
  const Real pscale = 1.0 / std::sqrt(static_cast<Real>(proj_dim));
  for (int d : feature_dims) {
    Mat P(proj_dim, d);
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      for (Eigen::Index j = 0; j < P.cols(); ++j)
        P(i, j) = rng.gaussian() * pscale;
    clf.proj.push_back(std::move(P));
  }
  const int in_dim = 2 * proj_dim;
  clf.W1.resize(hidden, in_dim);
  const Real r = std::sqrt(6.0 / static_cast<Real>(hidden + in_dim));
  for (Eigen::Index i = 0; i < clf.W1.rows(); ++i)
    for (Eigen::Index j = 0; j < clf.W1.cols(); ++j)
      clf.W1(i, j) = rng.uniform(-r, r);
  // Matched/mismatched classes are symmetric under x -> -x, and a zero-bias
  // tanh net is odd in x, so b1 = 0 is a saddle with no usable gradient;
  // random hidden biases break the symmetry.
  clf.b1.resize(hidden);
  for (int i = 0; i < hidden; ++i) clf.b1(i) = rng.uniform(-0.5, 0.5);
  clf.W2 = Vec::Zero(hidden);  // zero output layer: untrained prob is exactly 0.5
  clf.b2 = 0.0;
  return clf;
}

Real match_pair_loss_and_grad(const MatchClassifier& clf, const Vec& p1,
                              const Vec& p2, Real label, Mat* dW1, Vec* db1,
                              Vec* dW2, Real* db2) {
  Vec x(p1.size() + p2.size());
  x.head(p1.size()) = p1;
  x.tail(p2.size()) = p2;
  const Vec h = (clf.W1 * x + clf.b1).array().tanh();
  const Real p = sigmoid(clf.W2.dot(h) + clf.b2);
  if (dW1) {
    const Real dz = p - label;
    *dW2 = dz * h;
    *db2 = dz;
    const Vec dh = dz * clf.W2;
    const Vec dpre1 = dh.array() * (1.0 - h.array().square());
    *dW1 = dpre1 * x.transpose();
    *db1 = dpre1;
  }
  return logistic_loss(p, label);
}

MatchClassifier train_match_classifier(const FeatureStore& store,
                                       const std::vector<ItemIndex>& items,
                                       int epochs, std::uint64_t seed,
                                       MatchTrainReport* report, int proj_dim,
                                       int hidden, Real lr) {
  if (store.num_modalities() < 2)
    throw ConfigError("match classifier needs at least 2 modalities");
  if (items.size() < 10)
    throw DataError("match classifier needs at least 10 items");
  for (const auto& f : store.features)
    if (!f.allFinite())
      throw DataError("match classifier: non-finite features");

  RngStream rng(seed, "classifier");
  std::vector<int> dims;
  for (int m = 0; m < store.num_modalities(); ++m) dims.push_back(store.dim(m));
  MatchClassifier clf = init_match_classifier(dims, proj_dim, hidden, rng);

  const auto n = static_cast<Eigen::Index>(items.size());
  Mat P1(n, proj_dim), P2(n, proj_dim);
  for (Eigen::Index r = 0; r < n; ++r) {
    P1.row(r) = (clf.proj[clf.m1] * store.features[clf.m1].row(items[r]).transpose()).transpose();
    P2.row(r) = (clf.proj[clf.m2] * store.features[clf.m2].row(items[r]).transpose()).transpose();
  }

  Mat dW1;
  Vec db1, dW2;
  Real db2;
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  MatchTrainReport local;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    Real epoch_loss = 0.0;
    for (auto pos : order) {
      // matched pair
      epoch_loss += match_pair_loss_and_grad(clf, P1.row(pos).transpose(),
                                             P2.row(pos).transpose(), 1.0,
                                             &dW1, &db1, &dW2, &db2);
      clf.W1 -= lr * dW1;
      clf.b1 -= lr * db1;
      clf.W2 -= lr * dW2;
      clf.b2 -= lr * db2;
      // mismatched partner, fresh each time
      std::size_t j = rng.uniform_index(items.size() - 1);
      if (j >= pos) ++j;
      epoch_loss += match_pair_loss_and_grad(clf, P1.row(pos).transpose(),
                                             P2.row(j).transpose(), 0.0, &dW1,
                                             &db1, &dW2, &db2);
      clf.W1 -= lr * dW1;
      clf.b1 -= lr * db1;
      clf.W2 -= lr * dW2;
      clf.b2 -= lr * db2;
    }
    local.epoch_loss.push_back(epoch_loss / (2.0 * static_cast<Real>(n)));
  }

  int correct = 0;
  for (std::size_t pos = 0; pos < items.size(); ++pos) {
    if (match_pair_loss_and_grad(clf, P1.row(pos).transpose(),
                                 P2.row(pos).transpose(), 1.0, nullptr, nullptr,
                                 nullptr, nullptr) < std::log(2.0))
      ++correct;
    std::size_t j = rng.uniform_index(items.size() - 1);
    if (j >= pos) ++j;
    if (match_pair_loss_and_grad(clf, P1.row(pos).transpose(),
                                 P2.row(j).transpose(), 0.0, nullptr, nullptr,
                                 nullptr, nullptr) < std::log(2.0))
      ++correct;
  }
  local.final_accuracy = static_cast<Real>(correct) / (2.0 * static_cast<Real>(n));
  if (!local.epoch_loss.empty() &&
      local.epoch_loss.back() > local.epoch_loss.front()) {
    local.diverged = true;
    std::cerr << "warning: match classifier diverged (loss "
              << local.epoch_loss.front() << " -> " << local.epoch_loss.back()
              << ")\n";
  }
  if (report) *report = local;
  return clf;
}

Real estimate_match_prob(const MatchClassifier& clf, const FeatureStore& store,
                         ItemIndex item) {
  return clf.prob(store.features[clf.m1].row(item).transpose(),
                  store.features[clf.m2].row(item).transpose());
}

OodMode ood_mode_from_name(const std::string& name) {
  if (name == "lowest") return OodMode::lowest;
  if (name == "highest") return OodMode::highest;
  throw ConfigError("unknown ood mode '" + name + "'");
}

InteractionDataset build_ood_split_from_probs(const InteractionDataset& ds,
                                              const std::vector<Real>& probs,
                                              Real fraction, OodMode mode) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("ood fraction must be in (0, 1]");
  if (static_cast<int>(probs.size()) != ds.num_items())
    throw ConfigError("ood split: probability vector length mismatch");
  if (ds.count_tag(SplitTag::test) == 0)
    throw DataError("ood split: test split is empty");

  const int n_sel =
      static_cast<int>(std::floor(fraction * ds.num_items() + 1e-9));
  if (n_sel < 1) throw ConfigError("ood fraction selects no items");

  std::vector<ItemIndex> idx(ds.num_items());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](ItemIndex a, ItemIndex b) {
    if (probs[a] != probs[b])
      return mode == OodMode::lowest ? probs[a] < probs[b] : probs[a] > probs[b];
    return a < b;
  });
  std::vector<bool> selected(ds.num_items(), false);
  for (int r = 0; r < n_sel; ++r) selected[idx[r]] = true;

  InteractionDataset out = ds;
  const auto& xs = ds.interactions();
  for (std::size_t pidx = 0; pidx < xs.size(); ++pidx)
    if (xs[pidx].tag == SplitTag::test && !selected[xs[pidx].item])
      out.set_tag(pidx, SplitTag::dropped);
  out.finalize();
  if (out.count_tag(SplitTag::test) == 0)
    throw DataError("ood split: filter left no test interactions");
  return out;
}

InteractionDataset build_ood_split(const InteractionDataset& ds,
                                   const FeatureStore& store, Real fraction,
                                   OodMode mode, std::uint64_t seed,
                                   int classifier_epochs) {
  std::vector<bool> seen(ds.num_items(), false);
  for (const auto& x : ds.interactions())
    if (x.tag == SplitTag::train) seen[x.item] = true;
  std::vector<ItemIndex> train_items;
  for (ItemIndex i = 0; i < ds.num_items(); ++i)
    if (seen[i]) train_items.push_back(i);

  const MatchClassifier clf = train_match_classifier(
      store, train_items, classifier_epochs, seed);
  std::vector<Real> probs(ds.num_items());
  for (ItemIndex i = 0; i < ds.num_items(); ++i)
    probs[i] = estimate_match_prob(clf, store, i);
  return build_ood_split_from_probs(ds, probs, fraction, mode);
}

InteractionDataset mix_datasets(const InteractionDataset& a,
                                const InteractionDataset& b,
                                const std::array<Real, 3>& ratios_a,
                                const std::array<Real, 3>& ratios_b,
                                std::uint64_t seed) {
  const InteractionDataset sa = split_with_ratios(a, ratios_a, seed);
  InteractionDataset out;
  for (const auto& x : sa.interactions()) {
    const UserIndex u = out.intern_user("A:" + sa.user_id(x.user));
    const ItemIndex i = out.intern_item("A:" + sa.item_id(x.item));
    out.add_interaction(u, i, x.tag);
  }
  if (!b.interactions().empty()) {
    const InteractionDataset sb = split_with_ratios(b, ratios_b, seed + 1);
    for (const auto& x : sb.interactions()) {
      const UserIndex u = out.intern_user("B:" + sb.user_id(x.user));
      const ItemIndex i = out.intern_item("B:" + sb.item_id(x.item));
      out.add_interaction(u, i, x.tag);
    }
  }
  out.finalize();
  return out;
}

FeatureStore mix_feature_stores(const FeatureStore& a, const FeatureStore& b,
                                const InteractionDataset& mixed,
                                const InteractionDataset& dsa,
                                const InteractionDataset& dsb) {
  if (a.modalities != b.modalities)
    throw DataError("mix: modality lists differ between datasets");
  FeatureStore out;
  out.modalities = a.modalities;
  for (int m = 0; m < a.num_modalities(); ++m) {
    const int da = a.dim(m), db = b.dim(m);
    if (da != db)
      std::cerr << "warning: modality " << a.modalities[m]
                << " dims differ (" << da << " vs " << db
                << "); zero-padding the narrower side\n";
    const int d = std::max(da, db);
    Mat rows = Mat::Zero(mixed.num_items(), d);
    for (ItemIndex i = 0; i < mixed.num_items(); ++i) {
      const std::string& id = mixed.item_id(i);
      if (id.rfind("A:", 0) == 0) {
        const ItemIndex src = dsa.item_index(id.substr(2));
        if (src < 0) throw DataError("mix: unknown source item " + id);
        rows.row(i).head(da) = a.features[m].row(src);
      } else if (id.rfind("B:", 0) == 0) {
        const ItemIndex src = dsb.item_index(id.substr(2));
        if (src < 0) throw DataError("mix: unknown source item " + id);
        rows.row(i).head(db) = b.features[m].row(src);
      } else {
        throw DataError("mix: item id without namespace prefix: " + id);
      }
    }
    out.features.push_back(std::move(rows));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (num_users < 1) throw ConfigError("gen-synthetic: num_users must be >= 1");
  if (num_items < 4) throw ConfigError("gen-synthetic: num_items must be >= 4");
  if (feature_dims.size() < 2)
    throw ConfigError("gen-synthetic: need at least 2 modalities");
  for (int d : feature_dims)
    if (d < 1) throw ConfigError("gen-synthetic: feature dim must be >= 1");
  if (causal_modality < 0 ||
      causal_modality >= static_cast<int>(feature_dims.size()))
    throw ConfigError("gen-synthetic: causal modality out of range");
  if (rho_train < -1.0 || rho_train > 1.0 || rho_test < -1.0 || rho_test > 1.0)
    throw ConfigError("gen-synthetic: rho must be in [-1, 1]");
  if (interactions_per_user < 2)
    throw ConfigError("gen-synthetic: interactions_per_user must be >= 2");
  if (latent_dim < 1) throw ConfigError("gen-synthetic: latent_dim must be >= 1");
  if (test_item_fraction <= 0.0 || test_item_fraction >= 1.0)
    throw ConfigError("gen-synthetic: test_item_fraction must be in (0, 1)");
  if (test_inter_fraction < 0.0 || test_inter_fraction >= 1.0)
    throw ConfigError("gen-synthetic: test_inter_fraction must be in [0, 1)");
  if (causal_noise < 0.0 || spurious_noise < 0.0)
    throw ConfigError("gen-synthetic: noise sigmas must be >= 0");
}

namespace {

// Gumbel top-k over `pool` by util + noise, skipping anything in `taken`.
std::vector<ItemIndex> gumbel_topk(const std::vector<ItemIndex>& pool,
                                   const Vec& util, int k, RngStream& rng,
                                   const std::vector<bool>& taken) {
  std::vector<std::pair<Real, ItemIndex>> noisy;
  noisy.reserve(pool.size());
  for (ItemIndex i : pool) {
    const Real g = rng.gumbel();
    if (!taken[i]) noisy.push_back({util(i) + g, i});
  }
  if (static_cast<int>(noisy.size()) < k)
    throw DataError("gen-synthetic: candidate pool too small");
  std::partial_sort(noisy.begin(), noisy.begin() + k, noisy.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<ItemIndex> out;
  out.reserve(k);
  for (int r = 0; r < k; ++r) out.push_back(noisy[r].second);
  return out;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int n = spec.num_items;
  const int k = spec.latent_dim;
  const int M = static_cast<int>(spec.feature_dims.size());

  const int n_test_items =
      std::max(1, static_cast<int>(std::floor(spec.test_item_fraction * n + 1e-9)));
  const int first_test = n - n_test_items;

  SyntheticData data;
  data.z_causal.resize(n, k);
  data.z_spurious.resize(n, k);
  data.item_rho.resize(n);

  RngStream item_rng(spec.seed, "synthetic.items");
  for (int i = 0; i < n; ++i) {
    Vec zc(k), eta(k);
    for (int d = 0; d < k; ++d) zc(d) = item_rng.gaussian();
    for (int d = 0; d < k; ++d) eta(d) = item_rng.gaussian();
    const Real zeta = item_rng.uniform();
    const Real base = i >= first_test ? spec.rho_test : spec.rho_train;
    const Real rho = std::clamp(base * (0.5 + zeta), -1.0, 1.0);
    data.item_rho[i] = rho;
    data.z_causal.row(i) = zc.transpose();
    data.z_spurious.row(i) =
        (rho * zc + std::sqrt(1.0 - rho * rho) * eta).transpose();
    if (i >= first_test) data.test_regime_items.push_back(i);
  }

  RngStream lift_rng(spec.seed, "synthetic.lift");
  const Real ascale = 1.0 / std::sqrt(static_cast<Real>(k));
  std::vector<Mat> lifts;
  for (int m = 0; m < M; ++m) {
    Mat A(spec.feature_dims[m], k);
    for (Eigen::Index r = 0; r < A.rows(); ++r)
      for (Eigen::Index c = 0; c < A.cols(); ++c)
        A(r, c) = lift_rng.gaussian() * ascale;
    lifts.push_back(std::move(A));
  }
  data.store.modalities.clear();
  for (int m = 0; m < M; ++m) {
    data.store.modalities.push_back("mod" + std::to_string(m));
    const bool causal = m == spec.causal_modality;
    const Mat& Z = causal ? data.z_causal : data.z_spurious;
    const Real sigma = causal ? spec.causal_noise : spec.spurious_noise;
    Mat E = Z * lifts[m].transpose();
    for (Eigen::Index r = 0; r < E.rows(); ++r)
      for (Eigen::Index c = 0; c < E.cols(); ++c)
        E(r, c) += sigma * lift_rng.gaussian();
    data.store.features.push_back(std::move(E));
  }

  RngStream user_rng(spec.seed, "synthetic.users");
  Mat tastes(spec.num_users, k);
  for (int u = 0; u < spec.num_users; ++u)
    for (int d = 0; d < k; ++d) tastes(u, d) = user_rng.gaussian();

  // Intern everything up front so item indices match the generator's.
  for (int u = 0; u < spec.num_users; ++u)
    data.ds.intern_user("u" + std::to_string(u));
  for (int i = 0; i < n; ++i) data.ds.intern_item("i" + std::to_string(i));

  const int ipu = spec.interactions_per_user;
  const int k_test = std::min(
      n_test_items,
      static_cast<int>(std::floor(spec.test_inter_fraction * ipu + 0.5)));
  const int k_main = ipu - k_test;
  if (k_main < 2)
    throw ConfigError("gen-synthetic: too few train interactions per user");
  const int k_valid = std::max(1, k_main / 9);

  std::vector<ItemIndex> all_items(n), test_pool;
  std::iota(all_items.begin(), all_items.end(), 0);
  for (int i = first_test; i < n; ++i) test_pool.push_back(i);

  RngStream choice_rng(spec.seed, "synthetic.choice");
  std::vector<bool> taken(n, false);
  for (int u = 0; u < spec.num_users; ++u) {
    const Vec util = data.z_causal * tastes.row(u).transpose();
    std::fill(taken.begin(), taken.end(), false);
    auto main_sel = gumbel_topk(all_items, util, k_main, choice_rng, taken);
    choice_rng.shuffle(main_sel);
    for (int r = 0; r < k_main; ++r) {
      data.ds.add_interaction(u, main_sel[r],
                              r < k_valid ? SplitTag::valid : SplitTag::train);
      taken[main_sel[r]] = true;
    }
    if (k_test > 0) {
      const auto test_sel =
          gumbel_topk(test_pool, util, k_test, choice_rng, taken);
      for (ItemIndex i : test_sel) data.ds.add_interaction(u, i, SplitTag::test);
    }
  }
  data.ds.finalize();
  return data;
}

}  // namespace modest
