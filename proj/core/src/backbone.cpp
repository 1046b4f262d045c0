#include "modest/backbone.hpp"

#include <cmath>
#include <fstream>

#include "io_util.hpp"
#include "modest/parallel.hpp"

namespace modest {

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "mf") return ModelKind::mf;
  if (name == "vbpr") return ModelKind::vbpr;
  throw ConfigError("unknown model '" + name + "'");
}

const char* model_kind_name(ModelKind kind) {
  return kind == ModelKind::mf ? "mf" : "vbpr";
}

void BackboneGrads::zero_like(const BackboneParams& p) {
  user_embed = Mat::Zero(p.user_embed.rows(), p.user_embed.cols());
  item_embed = Mat::Zero(p.item_embed.rows(), p.item_embed.cols());
  W.resize(p.W.size());
  b.resize(p.b.size());
  user_pref.resize(p.user_pref.size());
  for (std::size_t m = 0; m < p.W.size(); ++m) {
    W[m] = Mat::Zero(p.W[m].rows(), p.W[m].cols());
    b[m] = Vec::Zero(p.b[m].size());
    user_pref[m] = Mat::Zero(p.user_pref[m].rows(), p.user_pref[m].cols());
  }
}

namespace {

// Xavier-uniform: U(-r, r) with r = sqrt(6 / (fan_in + fan_out)).
void xavier_fill(Mat& m, RngStream& rng) {
  const Real r = std::sqrt(6.0 / static_cast<Real>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rng.uniform(-r, r);
}

Real softplus(Real x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Real sigmoid(Real x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

BackboneParams init_backbone(ModelKind kind, int num_users, int num_items,
                             int embed_dim, int proj_dim,
                             const FeatureStore& store, RngStream& rng) {
  if (num_users < 1 || num_items < 1 || embed_dim < 1)
    throw ConfigError("init_backbone: empty dimensions");
  BackboneParams p;
  p.kind = kind;
  p.user_embed.resize(num_users, embed_dim);
  p.item_embed.resize(num_items, embed_dim);
  xavier_fill(p.user_embed, rng);
  xavier_fill(p.item_embed, rng);
  if (kind == ModelKind::vbpr) {
    if (store.num_modalities() == 0)
      throw ConfigError("vbpr needs at least one modality");
    if (proj_dim < 1) throw ConfigError("vbpr needs proj_dim >= 1");
    p.modalities = store.modalities;
    for (int m = 0; m < store.num_modalities(); ++m) {
      Mat W(proj_dim, store.dim(m));
      xavier_fill(W, rng);
      Mat pref(num_users, proj_dim);
      xavier_fill(pref, rng);
      p.W.push_back(std::move(W));
      p.b.push_back(Vec::Zero(proj_dim));
      p.user_pref.push_back(std::move(pref));
    }
  }
  return p;
}

std::vector<Mat> project_features(const BackboneParams& p,
                                  const FeatureStore& store) {
  std::vector<Mat> out;
  for (int m = 0; m < p.num_modalities(); ++m) {
    if (store.dim(m) != static_cast<int>(p.W[m].cols()))
      throw DataError("feature dim mismatch for modality " + p.modalities[m]);
    Mat e = store.features[m] * p.W[m].transpose();
    e.rowwise() += p.b[m].transpose();
    out.push_back(std::move(e));
  }
  return out;
}

Real score_pair(const BackboneParams& p, const std::vector<Mat>& projected,
                UserIndex u, ItemIndex i) {
  Real s = p.user_embed.row(u).dot(p.item_embed.row(i));
  for (int m = 0; m < p.num_modalities(); ++m)
    s += p.user_pref[m].row(u).dot(projected[m].row(i));
  return s;
}

Vec score_all_items(const BackboneParams& p, const std::vector<Mat>& projected,
                    UserIndex u) {
  Vec s = p.item_embed * p.user_embed.row(u).transpose();
  for (int m = 0; m < p.num_modalities(); ++m)
    s += projected[m] * p.user_pref[m].row(u).transpose();
  return s;
}

BprBatchStats bpr_batch_loss_and_grad(const BackboneParams& p,
                                      const FeatureStore& store,
                                      const std::vector<TrainTriple>& triples,
                                      std::size_t begin, std::size_t end,
                                      const Vec& item_weights, Real l2_reg,
                                      BackboneGrads& grads,
                                      std::vector<Vec>* mask_accum,
                                      int num_threads) {
  if (begin >= end) throw ConfigError("empty batch");
  const std::size_t B = end - begin;
  const Real invB = 1.0 / static_cast<Real>(B);
  const int M = p.num_modalities();

  // Phase 1: scores and projected item diffs, parallel over triples.
  std::vector<Mat> diff(M);  // diff[m].row(t) = ebar_i - ebar_j
  for (int m = 0; m < M; ++m)
    diff[m].resize(static_cast<Eigen::Index>(B), p.proj_dim());
  Vec scores(static_cast<Eigen::Index>(B));
  parallel_for(B, num_threads, [&](std::size_t t) {
    const auto& tr = triples[begin + t];
    Real s = p.user_embed.row(tr.user).dot(p.item_embed.row(tr.pos_item) -
                                           p.item_embed.row(tr.neg_item));
    for (int m = 0; m < M; ++m) {
      diff[m].row(static_cast<Eigen::Index>(t)) =
          (store.features[m].row(tr.pos_item) -
           store.features[m].row(tr.neg_item)) *
          p.W[m].transpose();
      s += p.user_pref[m].row(tr.user).dot(
          diff[m].row(static_cast<Eigen::Index>(t)));
    }
    scores(static_cast<Eigen::Index>(t)) = s;
  });

  // Phase 2: serial accumulation in triple order.
  BprBatchStats stats;
  std::vector<Mat> gW(M);  // pure BPR part, feeds the mask
  for (int m = 0; m < M; ++m) gW[m] = Mat::Zero(p.W[m].rows(), p.W[m].cols());
  const Real reg2 = 2.0 * l2_reg * invB;
  for (std::size_t t = 0; t < B; ++t) {
    const auto& tr = triples[begin + t];
    const Real w = item_weights(tr.pos_item);
    const Real s = scores(static_cast<Eigen::Index>(t));
    stats.weighted_bpr += w * softplus(-s) * invB;
    const Real g = -w * sigmoid(-s) * invB;

    grads.user_embed.row(tr.user) +=
        g * (p.item_embed.row(tr.pos_item) - p.item_embed.row(tr.neg_item)) +
        reg2 * p.user_embed.row(tr.user);
    grads.item_embed.row(tr.pos_item) +=
        g * p.user_embed.row(tr.user) + reg2 * p.item_embed.row(tr.pos_item);
    grads.item_embed.row(tr.neg_item) +=
        -g * p.user_embed.row(tr.user) + reg2 * p.item_embed.row(tr.neg_item);
    stats.reg += l2_reg * invB * (p.user_embed.row(tr.user).squaredNorm() +
                                  p.item_embed.row(tr.pos_item).squaredNorm() +
                                  p.item_embed.row(tr.neg_item).squaredNorm());

    for (int m = 0; m < M; ++m) {
      grads.user_pref[m].row(tr.user) +=
          g * diff[m].row(static_cast<Eigen::Index>(t)) +
          reg2 * p.user_pref[m].row(tr.user);
      gW[m].noalias() += g * p.user_pref[m].row(tr.user).transpose() *
                         (store.features[m].row(tr.pos_item) -
                          store.features[m].row(tr.neg_item));
      stats.reg += l2_reg * invB * p.user_pref[m].row(tr.user).squaredNorm();
    }
  }
  for (int m = 0; m < M; ++m) {
    if (mask_accum)
      (*mask_accum)[m] += gW[m].cwiseAbs().rowwise().sum();
    grads.W[m] += gW[m] + 2.0 * l2_reg * p.W[m];
    grads.b[m] += 2.0 * l2_reg * p.b[m];
    stats.reg += l2_reg * (p.W[m].squaredNorm() + p.b[m].squaredNorm());
  }
  return stats;
}

Real bpr_batch_loss(const BackboneParams& p, const FeatureStore& store,
                    const std::vector<TrainTriple>& triples, std::size_t begin,
                    std::size_t end, const Vec& item_weights, Real l2_reg) {
  if (begin >= end) throw ConfigError("empty batch");
  const std::size_t B = end - begin;
  const Real invB = 1.0 / static_cast<Real>(B);
  const int M = p.num_modalities();
  Real loss = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    const auto& tr = triples[t];
    Real s = p.user_embed.row(tr.user).dot(p.item_embed.row(tr.pos_item) -
                                           p.item_embed.row(tr.neg_item));
    Real pref_norm = 0.0;
    for (int m = 0; m < M; ++m) {
      const auto d = (store.features[m].row(tr.pos_item) -
                      store.features[m].row(tr.neg_item)) *
                     p.W[m].transpose();
      s += p.user_pref[m].row(tr.user).dot(d);
      pref_norm += p.user_pref[m].row(tr.user).squaredNorm();
    }
    loss += item_weights(tr.pos_item) * softplus(-s) * invB;
    loss += l2_reg * invB * (p.user_embed.row(tr.user).squaredNorm() +
                             p.item_embed.row(tr.pos_item).squaredNorm() +
                             p.item_embed.row(tr.neg_item).squaredNorm() +
                             pref_norm);
  }
  for (int m = 0; m < M; ++m)
    loss += l2_reg * (p.W[m].squaredNorm() + p.b[m].squaredNorm());
  return loss;
}

namespace {

constexpr char kCkptMagic[4] = {'M', 'D', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const BackboneParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kCkptMagic, 4);
  detail::write_u32(out, kCkptVersion);
  detail::write_u32(out, p.kind == ModelKind::mf ? 0u : 1u);
  detail::write_u32(out, static_cast<std::uint32_t>(p.num_users()));
  detail::write_u32(out, static_cast<std::uint32_t>(p.num_items()));
  detail::write_u32(out, static_cast<std::uint32_t>(p.embed_dim()));
  detail::write_u32(out, static_cast<std::uint32_t>(p.num_modalities()));
  detail::write_u32(out, static_cast<std::uint32_t>(p.proj_dim()));
  for (int m = 0; m < p.num_modalities(); ++m) {
    detail::write_u32(out, static_cast<std::uint32_t>(p.modalities[m].size()));
    out.write(p.modalities[m].data(),
              static_cast<std::streamsize>(p.modalities[m].size()));
    detail::write_u32(out, static_cast<std::uint32_t>(p.W[m].cols()));
  }
  detail::write_f32_matrix(out, p.user_embed);
  detail::write_f32_matrix(out, p.item_embed);
  for (int m = 0; m < p.num_modalities(); ++m) {
    detail::write_f32_matrix(out, p.W[m]);
    detail::write_f32_vec(out, p.b[m]);
    detail::write_f32_matrix(out, p.user_pref[m]);
  }
}

BackboneParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw DataError("bad magic in checkpoint: " + path);
  const std::uint32_t version = detail::read_u32(in, path);
  if (version != kCkptVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t tag = detail::read_u32(in, path);
  if (tag > 1) throw DataError("unknown model tag in checkpoint: " + path);
  BackboneParams p;
  p.kind = tag == 0 ? ModelKind::mf : ModelKind::vbpr;
  const std::uint32_t num_users = detail::read_u32(in, path);
  const std::uint32_t num_items = detail::read_u32(in, path);
  const std::uint32_t d = detail::read_u32(in, path);
  const std::uint32_t M = detail::read_u32(in, path);
  const std::uint32_t dp = detail::read_u32(in, path);
  std::vector<std::uint32_t> dims(M);
  for (std::uint32_t m = 0; m < M; ++m) {
    const std::uint32_t len = detail::read_u32(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), len))
      throw DataError("truncated checkpoint: " + path);
    p.modalities.push_back(name);
    dims[m] = detail::read_u32(in, path);
  }
  p.user_embed = detail::read_f32_matrix(in, num_users, d, path);
  p.item_embed = detail::read_f32_matrix(in, num_items, d, path);
  for (std::uint32_t m = 0; m < M; ++m) {
    p.W.push_back(detail::read_f32_matrix(in, dp, dims[m], path));
    p.b.push_back(detail::read_f32_vec(in, dp, path));
    p.user_pref.push_back(detail::read_f32_matrix(in, num_users, dp, path));
  }
  return p;
}

}  // namespace modest
