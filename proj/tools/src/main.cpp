#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "modest/backbone.hpp"
#include "modest/dataset.hpp"
#include "modest/eval.hpp"
#include "modest/manifest.hpp"
#include "modest/shift_lab.hpp"
#include "modest/trainer.hpp"

namespace fs = std::filesystem;
using namespace modest;

namespace {

std::string fmt(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt4(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// "name=path" pairs from --features flags, order-preserving.
struct FeatureArgs {
  std::vector<std::string> raw;

  std::vector<std::pair<std::string, std::string>> parse() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : raw) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
        throw ConfigError("--features expects name=path, got '" + s + "'");
      out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return out;
  }
};

FeatureStore load_feature_store(const FeatureArgs& args,
                                const InteractionDataset& ds,
                                RunManifest& manifest) {
  FeatureStore store;
  for (const auto& [name, path] : args.parse()) {
    store.modalities.push_back(name);
    try {
      manifest.add_input(path);
      if (path.size() > 4 && path.substr(path.size() - 4) == ".tsv")
        store.features.push_back(load_features_tsv(path, ds));
      else
        store.features.push_back(load_features_binary(path));
    } catch (const DataError& e) {
      throw DataError("modality '" + name + "': " + e.what());
    }
  }
  store.validate(ds.num_items());
  return store;
}

// Reorders a store to the checkpoint's modality list.
FeatureStore align_to_checkpoint(const FeatureStore& store,
                                 const BackboneParams& params) {
  FeatureStore out;
  for (int m = 0; m < params.num_modalities(); ++m) {
    const int src = store.modality_index(params.modalities[m]);
    if (src < 0)
      throw DataError("checkpoint expects modality '" + params.modalities[m] +
                      "' which was not supplied via --features");
    if (store.dim(src) != static_cast<int>(params.W[m].cols()))
      throw DataError("modality '" + params.modalities[m] + "' has dim " +
                      std::to_string(store.dim(src)) + ", checkpoint expects " +
                      std::to_string(params.W[m].cols()));
    out.modalities.push_back(store.modalities[src]);
    out.features.push_back(store.features[src]);
  }
  return out;
}

void write_metrics_tsv(const std::string& path, const std::string& split_name,
                       const std::vector<MetricsReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "split\tk\trecall\tprecision\tndcg\tnum_users\n";
  for (const auto& r : reports)
    out << split_name << '\t' << r.k << '\t' << fmt(r.recall) << '\t'
        << fmt(r.precision) << '\t' << fmt(r.ndcg) << '\t' << r.num_users
        << '\n';
}

void print_metrics_table(const std::string& split_name,
                         const std::vector<MetricsReport>& reports) {
  std::printf("%-8s %6s %10s %10s %10s %8s\n", "split", "K", "recall",
              "precision", "ndcg", "users");
  for (const auto& r : reports)
    std::printf("%-8s %6d %10.6f %10.6f %10.6f %8d\n", split_name.c_str(), r.k,
                r.recall, r.precision, r.ndcg, r.num_users);
}

struct TrainArgs {
  std::string split_path;
  FeatureArgs features;
  std::string model = "vbpr";
  int embed_dim = 64;
  int proj_dim = 64;
  TrainConfig cfg;
  std::string hsic_mode = "per_item";
  std::string neg_exclude = "all";
  std::string out;
  bool dump_mask = false;
};

void add_train_options(CLI::App* sub, TrainArgs& a) {
  sub->add_option("--split", a.split_path, "tagged split TSV")->required();
  sub->add_option("--features", a.features.raw,
                  "modality features as name=path (MDFT .bin or .tsv)");
  sub->add_option("--model", a.model, "backbone: mf or vbpr")
      ->check(CLI::IsMember({"mf", "vbpr"}));
  sub->add_option("--embed-dim", a.embed_dim, "id-embedding dim d");
  sub->add_option("--proj-dim", a.proj_dim, "shared-space dim d'");
  sub->add_option("--lambda", a.cfg.lambda, "weight-update step multiplier");
  sub->add_option("--epochs", a.cfg.epochs_max, "max epochs");
  sub->add_option("--batch-size", a.cfg.batch_size, "BPR batch size");
  sub->add_option("--lr", a.cfg.lr_theta, "Adam learning rate");
  sub->add_option("--l2-reg", a.cfg.l2_reg, "L2 coefficient");
  sub->add_option("--patience", a.cfg.patience, "early-stop patience");
  sub->add_option("--gamma", a.cfg.gamma, "anchor penalty toward w=1");
  sub->add_option("--w-max", a.cfg.w_max, "weight upper bound");
  sub->add_option("--inner-steps", a.cfg.inner_weight_steps,
                  "weight-update steps per epoch (T)");
  sub->add_option("--hsic-mode", a.hsic_mode, "per_item or population")
      ->check(CLI::IsMember({"per_item", "population"}));
  sub->add_option("--mask-temperature", a.cfg.mask_temperature,
                  "softmax temperature for the task mask");
  sub->add_option("--neg-exclude", a.neg_exclude,
                  "negative sampling excludes train or all positives")
      ->check(CLI::IsMember({"train", "all"}));
  sub->add_option("--valid-k", a.cfg.valid_k, "validation cutoff K");
  sub->add_option("--seed", a.cfg.seed, "root seed");
  sub->add_option("--threads", a.cfg.num_threads, "worker threads");
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_flag("--dump-mask", a.dump_mask, "write per-epoch mask TSV");
  sub->add_flag("--vanilla", a.cfg.vanilla, "")->group("");
  sub->set_config("--config", "", "flat key=value config file");
}

std::map<std::string, std::string> train_config_map(const TrainArgs& a) {
  return {
      {"model", a.model},
      {"embed_dim", std::to_string(a.embed_dim)},
      {"proj_dim", std::to_string(a.proj_dim)},
      {"lambda", fmt(a.cfg.lambda)},
      {"epochs_max", std::to_string(a.cfg.epochs_max)},
      {"batch_size", std::to_string(a.cfg.batch_size)},
      {"lr_theta", fmt(a.cfg.lr_theta)},
      {"l2_reg", fmt(a.cfg.l2_reg)},
      {"patience", std::to_string(a.cfg.patience)},
      {"gamma", fmt(a.cfg.gamma)},
      {"w_max", fmt(a.cfg.w_max)},
      {"inner_weight_steps", std::to_string(a.cfg.inner_weight_steps)},
      {"hsic_mode", a.hsic_mode},
      {"mask_temperature", fmt(a.cfg.mask_temperature)},
      {"neg_exclude", a.neg_exclude},
      {"valid_k", std::to_string(a.cfg.valid_k)},
      {"vanilla", a.cfg.vanilla ? "true" : "false"},
      {"dump_mask", a.dump_mask ? "true" : "false"},
  };
}

// Shared by train and sweep-lambda: one fit plus artifact dump into dir.
FitResult run_training(const TrainArgs& a, const InteractionDataset& ds,
                       const FeatureStore& store, const std::string& dir,
                       RunManifest& manifest, bool echo) {
  TrainConfig cfg = a.cfg;
  cfg.hsic_mode = hsic_mode_from_name(a.hsic_mode);
  cfg.neg_exclude =
      a.neg_exclude == "train" ? NegExclude::train_only : NegExclude::all;
  cfg.keep_masks = a.dump_mask;
  const ModelKind kind = model_kind_from_name(a.model);

  const auto result = fit(ds, store, kind, a.embed_dim, a.proj_dim, cfg,
                          [&](const EpochReport& r) {
                            if (!echo) return;
                            std::printf(
                                "epoch %3d  bpr %.6f  hsic %.6f  R@%d %.4f  "
                                "(%.2fs)\n",
                                r.epoch, r.weighted_bpr_loss, r.hsic_loss,
                                cfg.valid_k, r.valid_recall, r.wall_seconds);
                          });

  fs::create_directories(dir);
  save_checkpoint(dir + "/checkpoint.mdck", result.params);
  save_train_log(dir + "/train_log.tsv", result.reports);
  save_sample_weights(dir + "/sample_weights.tsv", result.weights, ds);
  manifest.outputs.push_back("checkpoint.mdck");
  manifest.outputs.push_back("train_log.tsv");
  manifest.outputs.push_back("sample_weights.tsv");
  if (a.dump_mask) {
    std::ofstream mout(dir + "/mask.tsv", std::ios::binary);
    mout << "epoch\tmodality\tdim\talpha_bar\n";
    for (std::size_t e = 0; e < result.epoch_masks.size(); ++e)
      for (std::size_t m = 0; m < result.epoch_masks[e].alpha_bar.size(); ++m) {
        const Vec& ab = result.epoch_masks[e].alpha_bar[m];
        for (Eigen::Index d = 0; d < ab.size(); ++d)
          mout << (e + 1) << '\t' << store.modalities[m] << '\t' << d << '\t'
               << fmt(ab(d)) << '\n';
      }
    manifest.outputs.push_back("mask.tsv");
  }
  if (echo)
    std::printf("best epoch %d  valid R@%d %.4f\n", result.best_epoch,
                cfg.valid_k, result.best_recall);
  return result;
}

int cmd_gen_synthetic(const SyntheticSpec& spec, const std::string& out) {
  const auto data = gen_synthetic(spec);
  save_dataset(out, data.ds, data.store);

  std::ofstream rec(out + "/spec.toml", std::ios::binary);
  rec << "num_users = " << spec.num_users << "\n"
      << "num_items = " << spec.num_items << "\n"
      << "feature_dims = [";
  for (std::size_t m = 0; m < spec.feature_dims.size(); ++m)
    rec << (m ? ", " : "") << spec.feature_dims[m];
  rec << "]\n"
      << "causal_modality = " << spec.causal_modality << "\n"
      << "rho_train = " << fmt(spec.rho_train) << "\n"
      << "rho_test = " << fmt(spec.rho_test) << "\n"
      << "interactions_per_user = " << spec.interactions_per_user << "\n"
      << "latent_dim = " << spec.latent_dim << "\n"
      << "test_item_fraction = " << fmt(spec.test_item_fraction) << "\n"
      << "test_inter_fraction = " << fmt(spec.test_inter_fraction) << "\n"
      << "causal_noise = " << fmt(spec.causal_noise) << "\n"
      << "spurious_noise = " << fmt(spec.spurious_noise) << "\n"
      << "seed = " << spec.seed << "\n";

  RunManifest manifest;
  manifest.command = "gen-synthetic";
  manifest.tool_version = MODEST_VERSION;
  manifest.seed = spec.seed;
  manifest.config = {
      {"num_users", std::to_string(spec.num_users)},
      {"num_items", std::to_string(spec.num_items)},
      {"causal_modality", std::to_string(spec.causal_modality)},
      {"rho_train", fmt(spec.rho_train)},
      {"rho_test", fmt(spec.rho_test)},
      {"interactions_per_user", std::to_string(spec.interactions_per_user)},
      {"latent_dim", std::to_string(spec.latent_dim)},
      {"test_item_fraction", fmt(spec.test_item_fraction)},
      {"test_inter_fraction", fmt(spec.test_inter_fraction)},
      {"causal_noise", fmt(spec.causal_noise)},
      {"spurious_noise", fmt(spec.spurious_noise)},
  };
  for (std::size_t m = 0; m < spec.feature_dims.size(); ++m)
    manifest.config["feature_dim_mod" + std::to_string(m)] =
        std::to_string(spec.feature_dims[m]);
  manifest.outputs.push_back("split.tsv");
  for (std::size_t m = 0; m < spec.feature_dims.size(); ++m)
    manifest.outputs.push_back("features_mod" + std::to_string(m) + ".bin");
  manifest.outputs.push_back("spec.toml");
  manifest.write(out);

  std::printf("wrote %d users, %d items, %d interactions to %s\n",
              data.ds.num_users(), data.ds.num_items(),
              static_cast<int>(data.ds.interactions().size()), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modest: stable-learning multimodal recommendation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MODEST_VERSION);

  // gen-synthetic
  SyntheticSpec gspec;
  std::string g_out;
  auto* gen = app.add_subcommand("gen-synthetic",
                                 "generate a correlated-modality dataset");
  gen->add_option("--users", gspec.num_users, "number of users");
  gen->add_option("--items", gspec.num_items, "number of items");
  gen->add_option("--feature-dims", gspec.feature_dims,
                  "per-modality feature dims");
  gen->add_option("--causal", gspec.causal_modality, "causal modality index");
  gen->add_option("--rho-train", gspec.rho_train, "train-regime correlation");
  gen->add_option("--rho-test", gspec.rho_test, "test-regime correlation");
  gen->add_option("--ipu", gspec.interactions_per_user,
                  "interactions per user");
  gen->add_option("--latent-dim", gspec.latent_dim, "latent factor dim");
  gen->add_option("--test-item-fraction", gspec.test_item_fraction,
                  "tail share of items in the test regime");
  gen->add_option("--test-inter-fraction", gspec.test_inter_fraction,
                  "share of interactions tagged test");
  gen->add_option("--causal-noise", gspec.causal_noise,
                  "feature noise on the causal modality");
  gen->add_option("--spurious-noise", gspec.spurious_noise,
                  "feature noise on the other modalities");
  gen->add_option("--seed", gspec.seed, "root seed");
  gen->add_option("--out", g_out, "output directory")->required();

  // split
  std::string s_inter, s_out, s_dedup = "warn";
  std::vector<Real> s_ratios = {0.8, 0.1, 0.1};
  std::uint64_t s_seed = 42;
  int s_min_core = 0;
  auto* spl = app.add_subcommand("split", "random per-user split");
  spl->add_option("--interactions", s_inter, "user\\titem TSV")->required();
  spl->add_option("--ratios", s_ratios, "train valid test ratios")
      ->expected(3);
  spl->add_option("--min-core", s_min_core,
                  "drop users/items with fewer interactions (0 = off)");
  spl->add_option("--dedup", s_dedup, "duplicate policy")
      ->check(CLI::IsMember({"warn", "error"}));
  spl->add_option("--seed", s_seed, "root seed");
  spl->add_option("--out", s_out, "output directory")->required();

  // ood-split
  std::string o_split, o_out, o_mode = "lowest";
  FeatureArgs o_features;
  Real o_fraction = 0.2;
  std::uint64_t o_seed = 42;
  int o_clf_epochs = 30;
  auto* ood = app.add_subcommand("ood-split",
                                 "re-tag the test split by modality match");
  ood->add_option("--split", o_split, "tagged split TSV")->required();
  ood->add_option("--features", o_features.raw, "modality features name=path")
      ->required();
  ood->add_option("--fraction", o_fraction, "item fraction to keep");
  ood->add_option("--mode", o_mode, "keep lowest or highest match prob")
      ->check(CLI::IsMember({"lowest", "highest"}));
  ood->add_option("--classifier-epochs", o_clf_epochs, "classifier epochs");
  ood->add_option("--seed", o_seed, "root seed");
  ood->add_option("--out", o_out, "output directory")->required();

  // mix
  std::string m_a, m_b, m_out;
  FeatureArgs m_features_a, m_features_b;
  std::vector<Real> m_ratios_a = {0.8, 0.1, 0.1}, m_ratios_b = {0.8, 0.1, 0.1};
  std::uint64_t m_seed = 42;
  auto* mix = app.add_subcommand("mix", "mix two interaction datasets");
  mix->add_option("--a", m_a, "dataset A interactions TSV")->required();
  mix->add_option("--b", m_b, "dataset B interactions TSV")->required();
  mix->add_option("--features-a", m_features_a.raw, "A features name=path")
      ->required();
  mix->add_option("--features-b", m_features_b.raw, "B features name=path")
      ->required();
  mix->add_option("--ratios-a", m_ratios_a, "A split ratios")->expected(3);
  mix->add_option("--ratios-b", m_ratios_b, "B split ratios")->expected(3);
  mix->add_option("--seed", m_seed, "root seed");
  mix->add_option("--out", m_out, "output directory")->required();

  // train
  TrainArgs targs;
  auto* train = app.add_subcommand("train", "alternating training run");
  add_train_options(train, targs);

  // eval
  std::string e_split, e_ckpt, e_tag = "test", e_exclude = "train", e_out;
  FeatureArgs e_features;
  std::vector<int> e_ks = {10, 20};
  bool e_per_user = false;
  int e_threads = 1;
  auto* ev = app.add_subcommand("eval", "full-ranking top-K evaluation");
  ev->add_option("--split", e_split, "tagged split TSV")->required();
  ev->add_option("--checkpoint", e_ckpt, "MDCK checkpoint")->required();
  ev->add_option("--features", e_features.raw, "modality features name=path");
  ev->add_option("--split-tag", e_tag, "split to evaluate")
      ->check(CLI::IsMember({"valid", "test"}));
  ev->add_option("--k", e_ks, "cutoff list")
      ->check(CLI::PositiveNumber);
  ev->add_option("--exclude", e_exclude, "candidate exclusion")
      ->check(CLI::IsMember({"train", "train+valid"}));
  ev->add_flag("--per-user", e_per_user, "dump per-user recall rows");
  ev->add_option("--threads", e_threads, "worker threads");
  ev->add_option("--out", e_out, "output directory")->required();

  // sweep-lambda
  TrainArgs largs;
  std::vector<Real> l_lambdas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  auto* sweep = app.add_subcommand("sweep-lambda",
                                   "train once per lambda, consolidate metrics");
  add_train_options(sweep, largs);
  sweep->add_option("--lambdas", l_lambdas, "lambda grid");

  // weights-hist
  std::string w_file, w_out;
  Real w_max = 2.0;
  auto* hist = app.add_subcommand("weights-hist",
                                  "histogram of trained sample weights");
  hist->add_option("--weights", w_file, "sample_weights.tsv")->required();
  hist->add_option("--w-max", w_max, "histogram upper bound");
  hist->add_option("--out", w_out, "output directory")->required();

  try {
    app.parse(argc, argv);

    if (*gen) return cmd_gen_synthetic(gspec, g_out);

    if (*spl) {
      RunManifest manifest;
      manifest.command = "split";
      manifest.tool_version = MODEST_VERSION;
      manifest.seed = s_seed;
      manifest.add_input(s_inter);
      InteractionDataset ds = load_interactions(
          s_inter, s_dedup == "warn" ? DedupPolicy::warn : DedupPolicy::error);
      if (s_min_core > 0) ds = min_core_filter(ds, s_min_core);
      const auto tagged = split_with_ratios(
          ds, {s_ratios[0], s_ratios[1], s_ratios[2]}, s_seed);
      fs::create_directories(s_out);
      save_split_tsv(s_out + "/split.tsv", tagged);
      manifest.config = {{"ratios", fmt(s_ratios[0]) + "," + fmt(s_ratios[1]) +
                                        "," + fmt(s_ratios[2])},
                         {"min_core", std::to_string(s_min_core)},
                         {"dedup", s_dedup}};
      manifest.outputs.push_back("split.tsv");
      manifest.write(s_out);
      std::printf("split: %d train, %d valid, %d test\n",
                  tagged.count_tag(SplitTag::train),
                  tagged.count_tag(SplitTag::valid),
                  tagged.count_tag(SplitTag::test));
      return 0;
    }

    if (*ood) {
      RunManifest manifest;
      manifest.command = "ood-split";
      manifest.tool_version = MODEST_VERSION;
      manifest.seed = o_seed;
      manifest.add_input(o_split);
      const auto ds = load_split_tsv(o_split);
      const auto store = load_feature_store(o_features, ds, manifest);
      const auto tagged = build_ood_split(ds, store, o_fraction,
                                          ood_mode_from_name(o_mode), o_seed,
                                          o_clf_epochs);
      fs::create_directories(o_out);
      save_split_tsv(o_out + "/split.tsv", tagged);
      manifest.config = {{"fraction", fmt(o_fraction)},
                         {"mode", o_mode},
                         {"classifier_epochs", std::to_string(o_clf_epochs)}};
      manifest.outputs.push_back("split.tsv");
      manifest.write(o_out);
      std::printf("ood split: kept %d of %d test interactions\n",
                  tagged.count_tag(SplitTag::test),
                  ds.count_tag(SplitTag::test));
      return 0;
    }

    if (*mix) {
      RunManifest manifest;
      manifest.command = "mix";
      manifest.tool_version = MODEST_VERSION;
      manifest.seed = m_seed;
      manifest.add_input(m_a);
      manifest.add_input(m_b);
      const auto dsa = load_interactions(m_a);
      const auto dsb = load_interactions(m_b);
      const auto sa = load_feature_store(m_features_a, dsa, manifest);
      const auto sb = load_feature_store(m_features_b, dsb, manifest);
      const auto mixed = mix_datasets(
          dsa, dsb, {m_ratios_a[0], m_ratios_a[1], m_ratios_a[2]},
          {m_ratios_b[0], m_ratios_b[1], m_ratios_b[2]}, m_seed);
      const auto mstore = mix_feature_stores(sa, sb, mixed, dsa, dsb);
      save_dataset(m_out, mixed, mstore);
      manifest.config = {
          {"ratios_a", fmt(m_ratios_a[0]) + "," + fmt(m_ratios_a[1]) + "," +
                           fmt(m_ratios_a[2])},
          {"ratios_b", fmt(m_ratios_b[0]) + "," + fmt(m_ratios_b[1]) + "," +
                           fmt(m_ratios_b[2])}};
      manifest.outputs.push_back("split.tsv");
      for (const auto& name : mstore.modalities)
        manifest.outputs.push_back("features_" + name + ".bin");
      manifest.write(m_out);
      std::printf("mixed: %d users, %d items, %d interactions\n",
                  mixed.num_users(), mixed.num_items(),
                  static_cast<int>(mixed.interactions().size()));
      return 0;
    }

    if (*train) {
      RunManifest manifest;
      manifest.command = "train";
      manifest.tool_version = MODEST_VERSION;
      manifest.seed = targs.cfg.seed;
      manifest.add_input(targs.split_path);
      const auto ds = load_split_tsv(targs.split_path);
      FeatureStore store;
      if (targs.model == "vbpr") {
        if (targs.features.raw.empty())
          throw ConfigError("vbpr requires --features");
        store = load_feature_store(targs.features, ds, manifest);
      }
      manifest.config = train_config_map(targs);
      run_training(targs, ds, store, targs.out, manifest, true);
      manifest.write(targs.out);
      return 0;
    }

    if (*ev) {
      RunManifest manifest;
      manifest.command = "eval";
      manifest.tool_version = MODEST_VERSION;
      manifest.add_input(e_split);
      manifest.add_input(e_ckpt);
      const auto ds = load_split_tsv(e_split);
      const auto params = load_checkpoint(e_ckpt);
      if (params.num_items() != ds.num_items() ||
          params.num_users() != ds.num_users())
        throw DataError("checkpoint shape does not match the split (" +
                        std::to_string(params.num_users()) + "x" +
                        std::to_string(params.num_items()) + " vs " +
                        std::to_string(ds.num_users()) + "x" +
                        std::to_string(ds.num_items()) + ")");
      FeatureStore store;
      if (params.kind == ModelKind::vbpr) {
        if (e_features.raw.empty())
          throw DataError("vbpr checkpoint requires --features");
        store = align_to_checkpoint(load_feature_store(e_features, ds, manifest),
                                    params);
      }
      const auto projected = project_features(params, store);
      const SplitTag tag = split_tag_from_name(e_tag);
      const ExcludeMode excl = exclude_mode_from_name(e_exclude);
      std::vector<MetricsReport> reports;
      for (int k : e_ks)
        reports.push_back(evaluate_topk(params, projected, ds, tag, k, excl,
                                        e_threads, e_per_user));
      fs::create_directories(e_out);
      write_metrics_tsv(e_out + "/metrics.tsv", e_tag, reports);
      manifest.outputs.push_back("metrics.tsv");
      if (e_per_user) {
        std::ofstream pu(e_out + "/per_user.tsv", std::ios::binary);
        pu << "k\tuser_id\trecall\n";
        for (const auto& r : reports)
          for (std::size_t i = 0; i < r.per_user_ids.size(); ++i)
            pu << r.k << '\t' << ds.user_id(r.per_user_ids[i]) << '\t'
               << fmt(r.per_user_recall[i]) << '\n';
        manifest.outputs.push_back("per_user.tsv");
      }
      manifest.config = {{"split_tag", e_tag}, {"exclude", e_exclude}};
      manifest.write(e_out);
      print_metrics_table(e_tag, reports);
      return 0;
    }

    if (*sweep) {
      RunManifest manifest;
      manifest.command = "sweep-lambda";
      manifest.tool_version = MODEST_VERSION;
      manifest.seed = largs.cfg.seed;
      manifest.add_input(largs.split_path);
      const auto ds = load_split_tsv(largs.split_path);
      FeatureStore store;
      if (largs.model == "vbpr") {
        if (largs.features.raw.empty())
          throw ConfigError("vbpr requires --features");
        store = load_feature_store(largs.features, ds, manifest);
      }
      fs::create_directories(largs.out);
      std::ofstream sw(largs.out + "/sweep.tsv", std::ios::binary);
      sw << "lambda\tstatus\tbest_epoch\tvalid_recall\ttest_recall\t"
            "test_precision\ttest_ndcg\n";
      for (Real lam : l_lambdas) {
        TrainArgs run = largs;
        run.cfg.lambda = lam;
        char sub[64];
        std::snprintf(sub, sizeof(sub), "lambda_%g", lam);
        const std::string label = sub + 7;  // grid label, not a measured value
        const std::string dir = largs.out + "/" + sub;
        try {
          const auto result =
              run_training(run, ds, store, dir, manifest, false);
          const auto projected = project_features(result.params, store);
          const auto rep =
              evaluate_topk(result.params, projected, ds, SplitTag::test,
                            run.cfg.valid_k, ExcludeMode::train,
                            run.cfg.num_threads);
          sw << label << "\tok\t" << result.best_epoch << '\t'
             << fmt(result.best_recall) << '\t' << fmt(rep.recall) << '\t'
             << fmt(rep.precision) << '\t' << fmt(rep.ndcg) << '\n';
          std::printf("lambda %-5g  test R@%d %.4f\n", lam, run.cfg.valid_k,
                      rep.recall);
        } catch (const std::exception& e) {
          sw << label << "\tfailed\t0\t0\t0\t0\t0\n";
          std::fprintf(stderr, "lambda %g failed: %s\n", lam, e.what());
        }
      }
      manifest.config = train_config_map(largs);
      {
        std::string lams;
        for (std::size_t i = 0; i < l_lambdas.size(); ++i)
          lams += (i ? "," : "") + fmt(l_lambdas[i]);
        manifest.config["lambdas"] = lams;
      }
      manifest.outputs.push_back("sweep.tsv");
      manifest.write(largs.out);
      return 0;
    }

    if (*hist) {
      RunManifest manifest;
      manifest.command = "weights-hist";
      manifest.tool_version = MODEST_VERSION;
      manifest.add_input(w_file);
      std::ifstream in(w_file);
      if (!in) throw DataError("cannot open " + w_file);
      std::vector<Real> weights;
      std::string id;
      Real v;
      while (in >> id >> v) weights.push_back(v);
      if (weights.empty()) throw DataError("no weights in " + w_file);
      if (w_max <= 0.0) throw ConfigError("--w-max must be positive");
      const int bins = 20;
      std::vector<int> counts(bins, 0);
      for (Real w : weights) {
        int b = static_cast<int>(std::floor(w / w_max * bins));
        b = std::clamp(b, 0, bins - 1);
        ++counts[b];
      }
      fs::create_directories(w_out);
      std::ofstream out(w_out + "/hist.tsv", std::ios::binary);
      out << "bin_lo\tbin_hi\tcount\n";
      int peak = 1;
      for (int c : counts) peak = std::max(peak, c);
      for (int b = 0; b < bins; ++b) {
        const Real lo = w_max * b / bins, hi = w_max * (b + 1) / bins;
        out << fmt(lo) << '\t' << fmt(hi) << '\t' << counts[b] << '\n';
        const int stars = (counts[b] * 50 + peak - 1) / peak;
        std::printf("[%4.2f,%4.2f) %6d %s\n", lo, hi, counts[b],
                    std::string(counts[b] > 0 ? std::max(stars, 1) : 0, '#')
                        .c_str());
      }
      manifest.config = {{"w_max", fmt(w_max)}};
      manifest.outputs.push_back("hist.tsv");
      manifest.write(w_out);
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
