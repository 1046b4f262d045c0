#include "modest/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

namespace modest {

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (epochs_max < 1) throw ConfigError("epochs_max must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr_theta <= 0.0) throw ConfigError("lr_theta must be > 0");
  if (l2_reg < 0.0) throw ConfigError("l2_reg must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
  if (w_max <= 0.0) throw ConfigError("w_max must be > 0");
  if (inner_weight_steps < 0) throw ConfigError("inner_weight_steps must be >= 0");
  if (valid_k < 1) throw ConfigError("valid_k must be >= 1");
}

std::vector<ItemIndex> train_interacted_items(const InteractionDataset& ds) {
  std::vector<bool> seen(ds.num_items(), false);
  for (const auto& x : ds.interactions())
    if (x.tag == SplitTag::train) seen[x.item] = true;
  std::vector<ItemIndex> items;
  for (ItemIndex i = 0; i < ds.num_items(); ++i)
    if (seen[i]) items.push_back(i);
  return items;
}

BprBatchStats train_theta_epoch(BackboneParams& params,
                                const InteractionDataset& ds,
                                const FeatureStore& store,
                                const Vec& item_weights,
                                const TrainConfig& cfg, RngStream& sampling_rng,
                                std::vector<AdamMoments<Mat>>& mat_moments,
                                std::vector<AdamMoments<Vec>>& vec_moments,
                                long& adam_t, ImportanceAccumulator& mask_acc) {
  const auto triples = sample_epoch_triples(ds, sampling_rng, cfg.neg_exclude);
  if (triples.empty()) throw DataError("no training interactions");
  const int M = params.num_modalities();
  const AdamConfig adam{cfg.lr_theta, 0.9, 0.999, 1e-8};

  BackboneGrads grads;
  BprBatchStats epoch_stats;
  int num_batches = 0;
  for (std::size_t begin = 0; begin < triples.size();
       begin += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end =
        std::min(begin + static_cast<std::size_t>(cfg.batch_size), triples.size());
    grads.zero_like(params);
    std::vector<Vec>* acc = M > 0 ? &mask_acc.alpha : nullptr;
    const auto stats =
        bpr_batch_loss_and_grad(params, store, triples, begin, end, item_weights,
                                cfg.l2_reg, grads, acc, cfg.num_threads);
    if (!std::isfinite(stats.total()))
      throw NumericError("non-finite loss in batch " +
                         std::to_string(num_batches));
    if (M > 0) ++mask_acc.batches_seen;

    ++adam_t;
    adam_step(params.user_embed, grads.user_embed, mat_moments[0], adam_t, adam);
    adam_step(params.item_embed, grads.item_embed, mat_moments[1], adam_t, adam);
    for (int m = 0; m < M; ++m) {
      adam_step(params.W[m], grads.W[m], mat_moments[2 + 2 * m], adam_t, adam);
      adam_step(params.user_pref[m], grads.user_pref[m], mat_moments[3 + 2 * m],
                adam_t, adam);
      adam_step(params.b[m], grads.b[m], vec_moments[m], adam_t, adam);
    }
    epoch_stats.weighted_bpr += stats.weighted_bpr;
    epoch_stats.reg += stats.reg;
    ++num_batches;
  }
  epoch_stats.weighted_bpr /= num_batches;
  epoch_stats.reg /= num_batches;
  if (!params.user_embed.allFinite() || !params.item_embed.allFinite())
    throw NumericError("non-finite embeddings after epoch");
  return epoch_stats;
}

Real update_weights(SampleWeights& sw, const HsicWorkspace& ws,
                    const TrainConfig& cfg, AdamMoments<Vec>& mom,
                    long& weight_t) {
  const auto n = static_cast<Eigen::Index>(ws.items.size());
  Vec sub(n);
  for (Eigen::Index r = 0; r < n; ++r) sub(r) = sw.logits(ws.items[r]);

  const AdamConfig adam{cfg.lambda * cfg.lr_theta, 0.9, 0.999, 1e-8};
  Vec grad;
  for (int step = 0; step < cfg.inner_weight_steps; ++step) {
    hsic_loss_and_grad_logits(ws, sub, cfg.w_max, cfg.gamma, grad,
                              cfg.num_threads);
    if (!grad.allFinite())
      throw NumericError("non-finite weight gradient");
    ++weight_t;
    adam_step(sub, grad, mom, weight_t, adam);
  }
  for (Eigen::Index r = 0; r < n; ++r) sw.logits(ws.items[r]) = sub(r);

  // Post-update objective for reporting.
  Vec w(n);
  for (Eigen::Index r = 0; r < n; ++r)
    w(r) = cfg.w_max / (1.0 + std::exp(-sub(r)));
  Real obj = masked_weighted_hsic_loss(ws, w, cfg.num_threads);
  obj += cfg.gamma * (w.array() - 1.0).square().mean();
  return obj;
}

FitResult fit(const InteractionDataset& ds, const FeatureStore& store,
              ModelKind kind, int embed_dim, int proj_dim,
              const TrainConfig& cfg,
              const std::function<void(const EpochReport&)>& on_epoch) {
  cfg.validate();
  if (ds.count_tag(SplitTag::train) == 0)
    throw DataError("train split is empty");
  if (ds.count_tag(SplitTag::valid) == 0)
    throw DataError("valid split is empty; cannot early-stop");
  if (kind == ModelKind::vbpr) store.validate(ds.num_items());

  RngStream init_rng(cfg.seed, "init");
  RngStream sampling_rng(cfg.seed, "sampling");
  BackboneParams params = init_backbone(kind, ds.num_users(), ds.num_items(),
                                        embed_dim, proj_dim, store, init_rng);
  const int M = params.num_modalities();

  SampleWeights weights = SampleWeights::ones(ds.num_items(), cfg.w_max);
  const auto wi_items = train_interacted_items(ds);

  std::vector<AdamMoments<Mat>> mat_moments(2 + 2 * M);
  std::vector<AdamMoments<Vec>> vec_moments(M);
  AdamMoments<Vec> weight_mom;
  long adam_t = 0, weight_t = 0;
  ImportanceAccumulator mask_acc;

  FitResult result;
  result.params = params;
  result.weights = weights;
  int bad_epochs = 0;

  const bool weight_phase = !cfg.vanilla && kind == ModelKind::vbpr && M >= 2 &&
                            cfg.lambda > 0.0 && cfg.inner_weight_steps > 0;

  for (int epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    mask_acc.reset(M, params.proj_dim());

    BprBatchStats stats;
    try {
      stats = train_theta_epoch(params, ds, store, weights.weights(), cfg,
                                sampling_rng, mat_moments, vec_moments, adam_t,
                                mask_acc);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }

    EpochReport rep;
    rep.epoch = epoch;
    rep.weighted_bpr_loss = stats.weighted_bpr;
    rep.total_loss = stats.total();

    if (!cfg.vanilla && M > 0) {
      const TaskMask mask = make_mask(mask_acc, cfg.mask_temperature);
      if (cfg.keep_masks) result.epoch_masks.push_back(mask);
      if (weight_phase) {
        const auto projected = project_features(params, store);
        const auto ws = make_hsic_workspace(projected, mask.alpha_bar, wi_items,
                                            cfg.hsic_mode);
        rep.hsic_loss = update_weights(weights, ws, cfg, weight_mom, weight_t);
      }
    }

    const auto projected = project_features(params, store);
    const auto vrep = evaluate_topk(params, projected, ds, SplitTag::valid,
                                    cfg.valid_k, ExcludeMode::train,
                                    cfg.num_threads);
    rep.valid_recall = vrep.recall;
    rep.valid_precision = vrep.precision;
    rep.valid_ndcg = vrep.ndcg;
    rep.wall_seconds =
        std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
    result.reports.push_back(rep);
    if (on_epoch) on_epoch(rep);

    if (vrep.recall > result.best_recall || result.best_epoch == 0) {
      result.best_recall = vrep.recall;
      result.best_epoch = epoch;
      result.params = params;
      result.weights = weights;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) break;
    }
  }
  return result;
}

void save_train_log(const std::string& path,
                    const std::vector<EpochReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write train log: " + path);
  out << "epoch\tweighted_bpr_loss\ttotal_loss\thsic_loss\tvalid_recall\t"
         "valid_precision\tvalid_ndcg\n";
  char buf[512];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf),
                  "%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", r.epoch,
                  r.weighted_bpr_loss, r.total_loss, r.hsic_loss, r.valid_recall,
                  r.valid_precision, r.valid_ndcg);
    out << buf;
  }
}

void save_sample_weights(const std::string& path, const SampleWeights& sw,
                         const InteractionDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sample weights: " + path);
  char buf[128];
  for (ItemIndex i = 0; i < ds.num_items(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", sw.weight(i));
    out << ds.item_id(i) << '\t' << buf << '\n';
  }
}

Vec load_sample_weights(const std::string& path, const InteractionDataset& ds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sample weights: " + path);
  Vec w = Vec::Ones(ds.num_items());
  std::string id;
  Real val;
  while (in >> id >> val) {
    const ItemIndex idx = ds.item_index(id);
    if (idx >= 0) w(idx) = val;
  }
  return w;
}

}  // namespace modest
