#include "modest/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "modest/parallel.hpp"

namespace modest {

namespace {

constexpr Real kNegTol = 1e-12;

Real clamp_hsic(Real h) {
  if (h >= 0.0) return h;
  if (h >= -kNegTol) return 0.0;
  throw NumericError("empirical HSIC came out negative: " + std::to_string(h));
}

// Squared pairwise differences D[a,b] = (u_a - u_b)^2.
Mat sq_diffs(const Vec& u) {
  const auto d = u.size();
  Mat D(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    D(a, a) = 0.0;
    for (Eigen::Index b = a + 1; b < d; ++b) {
      const Real diff = u(a) - u(b);
      D(a, b) = D(b, a) = diff * diff;
    }
  }
  return D;
}

// Double centering C = P K P with P = I - (1/d) 11^T, done via row/column
// mean subtraction.
Mat center(const Mat& K) {
  const Real total = K.mean();
  Vec row_mean = K.rowwise().mean();
  Mat C = K;
  C.colwise() -= row_mean;
  C.rowwise() -= row_mean.transpose();
  C.array() += total;
  return C;
}

Real sigmoid(Real x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Mat rbf_kernel(const Vec& u, Real sigma) {
  if (sigma <= 0.0) throw ConfigError("rbf_kernel: sigma must be positive");
  const Real inv = 1.0 / (sigma * sigma);
  Mat K = sq_diffs(u);
  K = (-inv * K.array()).exp();
  return K;
}

Real median_heuristic_sigma(const Vec& u) {
  const auto d = u.size();
  if (d < 2) throw ConfigError("median heuristic needs at least 2 entries");
  std::vector<Real> diffs;
  diffs.reserve(static_cast<std::size_t>(d) * (d - 1) / 2);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b)
      diffs.push_back(std::abs(u(a) - u(b)));
  std::sort(diffs.begin(), diffs.end());
  const std::size_t n = diffs.size();
  const Real med = (n % 2 == 1) ? diffs[n / 2]
                                : 0.5 * (diffs[n / 2 - 1] + diffs[n / 2]);
  return med > 0.0 ? med : 1.0;
}

Real empirical_hsic(const Vec& u, const Vec& v, Real sigma_u, Real sigma_v) {
  if (u.size() != v.size())
    throw ConfigError("empirical_hsic: size mismatch");
  const auto d = u.size();
  if (d < 2) throw ConfigError("empirical_hsic: needs at least 2 entries");
  const Mat Cu = center(rbf_kernel(u, sigma_u));
  const Mat Cv = center(rbf_kernel(v, sigma_v));
  const Real scale = 1.0 / (static_cast<Real>(d - 1) * static_cast<Real>(d - 1));
  return clamp_hsic(scale * (Cu.array() * Cv.array()).sum());
}

Real empirical_hsic(const Vec& u, const Vec& v) {
  return empirical_hsic(u, v, median_heuristic_sigma(u), median_heuristic_sigma(v));
}

HsicMode hsic_mode_from_name(const std::string& name) {
  if (name == "per_item") return HsicMode::per_item;
  if (name == "population") return HsicMode::population;
  throw ConfigError("unknown hsic mode '" + name + "'");
}

namespace {

Real median_of(std::vector<Real>& vals) {
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  const Real med =
      (n % 2 == 1) ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
  return med > 0.0 ? med : 1.0;
}

}  // namespace

HsicWorkspace make_hsic_workspace(const std::vector<Mat>& projected,
                                  const std::vector<Vec>& mask,
                                  const std::vector<ItemIndex>& items,
                                  HsicMode mode) {
  if (projected.size() != mask.size())
    throw ConfigError("hsic workspace: modality count mismatch");
  HsicWorkspace ws;
  ws.mode = mode;
  ws.items = items;
  const auto n = static_cast<Eigen::Index>(items.size());
  for (std::size_t m = 0; m < projected.size(); ++m) {
    const Mat& E = projected[m];
    if (mask[m].size() != E.cols())
      throw ConfigError("hsic workspace: mask length mismatch");
    Mat masked(n, E.cols());
    for (Eigen::Index r = 0; r < n; ++r)
      masked.row(r) = E.row(items[r]).array() * mask[m].transpose().array();
    Vec sigma;
    if (mode == HsicMode::per_item) {
      sigma.resize(n);
      for (Eigen::Index r = 0; r < n; ++r)
        sigma(r) = median_heuristic_sigma(masked.row(r).transpose());
    }
    ws.masked.push_back(std::move(masked));
    ws.sigma.push_back(std::move(sigma));
  }
  if (mode == HsicMode::population) {
    if (n < 2)
      throw ConfigError("population hsic needs at least 2 subset items");
    ws.pop_sigma.resize(static_cast<Eigen::Index>(ws.masked.size()));
    for (std::size_t m = 0; m < ws.masked.size(); ++m) {
      std::vector<Real> dists;
      dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
      for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = a + 1; b < n; ++b)
          dists.push_back((ws.masked[m].row(a) - ws.masked[m].row(b)).norm());
      ws.pop_sigma(static_cast<Eigen::Index>(m)) = median_of(dists);
    }
  }
  return ws;
}

namespace {

// Per-item HSIC summed over unordered modality pairs at weight w, with the
// option of also accumulating d(sum)/dw. Sigmas are the frozen per-row ones.
Real item_hsic(const HsicWorkspace& ws, Eigen::Index r, Real w, Real* dsum_dw) {
  const int M = static_cast<int>(ws.masked.size());
  const auto d = ws.masked[0].cols();
  const Real scale =
      1.0 / (static_cast<Real>(d - 1) * static_cast<Real>(d - 1));
  const Real w2 = w * w;

  std::vector<Mat> D(M), K(M), C(M);
  for (int m = 0; m < M; ++m) {
    D[m] = sq_diffs(ws.masked[m].row(r).transpose());
    const Real inv = 1.0 / (ws.sigma[m](r) * ws.sigma[m](r));
    K[m] = (-w2 * inv * D[m].array()).exp();
    C[m] = center(K[m]);
  }

  Real loss = 0.0;
  for (int m1 = 0; m1 < M; ++m1) {
    for (int m2 = m1 + 1; m2 < M; ++m2) {
      loss += clamp_hsic(scale * (C[m1].array() * C[m2].array()).sum());
      if (dsum_dw) {
        const Real inv1 = 1.0 / (ws.sigma[m1](r) * ws.sigma[m1](r));
        const Real inv2 = 1.0 / (ws.sigma[m2](r) * ws.sigma[m2](r));
        // dK[a,b]/dw = K[a,b] * (-2 w D[a,b] / sigma^2)
        const Real t1 =
            (K[m1].array() * D[m1].array() * C[m2].array()).sum() * (-2.0 * w * inv1);
        const Real t2 =
            (K[m2].array() * D[m2].array() * C[m1].array()).sum() * (-2.0 * w * inv2);
        *dsum_dw += scale * (t1 + t2);
      }
    }
  }
  return loss;
}

// Population variant: subset items are the kernel samples. Serial on
// purpose (global coupling across items); subsets are small when this mode
// is on. When grad is non-null, d(loss)/dw_i is accumulated into it.
Real population_hsic(const HsicWorkspace& ws, const Vec& weights, Vec* grad) {
  const auto n = static_cast<Eigen::Index>(ws.items.size());
  const int M = static_cast<int>(ws.masked.size());
  const Real scale =
      1.0 / (static_cast<Real>(n - 1) * static_cast<Real>(n - 1));

  std::vector<Mat> S(M), K(M), C(M);
  for (int m = 0; m < M; ++m) {
    S[m] = ws.masked[m] * ws.masked[m].transpose();
    const Real inv = 1.0 / (ws.pop_sigma(m) * ws.pop_sigma(m));
    Mat sq(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        sq(i, j) = weights(i) * weights(i) * S[m](i, i) +
                   weights(j) * weights(j) * S[m](j, j) -
                   2.0 * weights(i) * weights(j) * S[m](i, j);
    K[m] = (-inv * sq.array()).exp();
    C[m] = center(K[m]);
  }

  Real loss = 0.0;
  for (int m1 = 0; m1 < M; ++m1) {
    for (int m2 = m1 + 1; m2 < M; ++m2) {
      loss += clamp_hsic(scale * (C[m1].array() * C[m2].array()).sum());
      if (grad) {
        const Real inv1 = 1.0 / (ws.pop_sigma(m1) * ws.pop_sigma(m1));
        const Real inv2 = 1.0 / (ws.pop_sigma(m2) * ws.pop_sigma(m2));
        for (Eigen::Index i = 0; i < n; ++i) {
          Real acc = 0.0;
          for (Eigen::Index j = 0; j < n; ++j) {
            // d||w_i u_i - w_j u_j||^2 / dw_i = 2 (w_i S_ii - w_j S_ij)
            const Real g1 = weights(i) * S[m1](i, i) - weights(j) * S[m1](i, j);
            const Real g2 = weights(i) * S[m2](i, i) - weights(j) * S[m2](i, j);
            acc += -2.0 * inv1 * K[m1](i, j) * g1 * C[m2](i, j) +
                   -2.0 * inv2 * K[m2](i, j) * g2 * C[m1](i, j);
          }
          (*grad)(i) += 2.0 * scale * acc;
        }
      }
    }
  }
  return loss;
}

}  // namespace

Real masked_weighted_hsic_loss(const HsicWorkspace& ws, const Vec& weights,
                               int num_threads) {
  const auto n = static_cast<Eigen::Index>(ws.items.size());
  if (weights.size() != n)
    throw ConfigError("hsic loss: weight vector length mismatch");
  if (n == 0) {
    std::cerr << "warning: hsic loss over an empty item subset\n";
    return 0.0;
  }
  if (ws.masked.size() < 2) return 0.0;
  if (ws.mode == HsicMode::population)
    return population_hsic(ws, weights, nullptr);
  std::vector<Real> per_item(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), num_threads, [&](std::size_t r) {
    per_item[r] = item_hsic(ws, static_cast<Eigen::Index>(r), weights(r), nullptr);
  });
  Real loss = 0.0;
  for (auto v : per_item) loss += v;
  return loss;
}

Real hsic_loss_and_grad_logits(const HsicWorkspace& ws, const Vec& logits,
                               Real w_max, Real gamma, Vec& grad_logits,
                               int num_threads) {
  const auto n = static_cast<Eigen::Index>(ws.items.size());
  if (logits.size() != n)
    throw ConfigError("hsic grad: logit vector length mismatch");
  grad_logits = Vec::Zero(n);
  if (n == 0) return 0.0;
  const Real inv_n = 1.0 / static_cast<Real>(n);

  if (ws.mode == HsicMode::population) {
    Vec weights(n), sig(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      sig(r) = sigmoid(logits(r));
      weights(r) = sig(r) * w_max;
    }
    Vec grad_w = Vec::Zero(n);
    Real loss = ws.masked.size() >= 2 ? population_hsic(ws, weights, &grad_w) : 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const Real w = weights(r);
      loss += gamma * (w - 1.0) * (w - 1.0) * inv_n;
      grad_w(r) += 2.0 * gamma * (w - 1.0) * inv_n;
      grad_logits(r) = grad_w(r) * w_max * sig(r) * (1.0 - sig(r));
    }
    return loss;
  }

  std::vector<Real> per_item_loss(static_cast<std::size_t>(n), 0.0);
  std::vector<Real> per_item_grad(static_cast<std::size_t>(n), 0.0);

  parallel_for(static_cast<std::size_t>(n), num_threads, [&](std::size_t r) {
    const Real s = sigmoid(logits(static_cast<Eigen::Index>(r)));
    const Real w = s * w_max;
    Real dsum_dw = 0.0;
    Real loss = 0.0;
    if (ws.masked.size() >= 2)
      loss = item_hsic(ws, static_cast<Eigen::Index>(r), w, &dsum_dw);
    loss += gamma * (w - 1.0) * (w - 1.0) * inv_n;
    dsum_dw += 2.0 * gamma * (w - 1.0) * inv_n;
    per_item_loss[r] = loss;
    per_item_grad[r] = dsum_dw * w_max * s * (1.0 - s);
  });

  Real total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    total += per_item_loss[static_cast<std::size_t>(r)];
    grad_logits(r) = per_item_grad[static_cast<std::size_t>(r)];
  }
  return total;
}

}  // namespace modest
