#pragma once

#include <vector>

#include "modest/common.hpp"

namespace modest {

// RBF kernel matrix K[a,b] = exp(-(u_a - u_b)^2 / sigma^2) over the entries of
// a vector. Entries play the role of samples, so K is d' x d'.
Mat rbf_kernel(const Vec& u, Real sigma);

// Median of pairwise absolute differences |u_a - u_b| over unordered pairs,
// averaging the two middle values for an even pair count. Returns 1.0 when the
// median is zero (constant vector) so the kernel stays well defined.
Real median_heuristic_sigma(const Vec& u);

// Empirical HSIC between two equally long vectors treated as d' scalar
// samples: (d'-1)^-2 * tr(K_u P K_v P) with P = I - (1/d') 11^T. Sigmas are
// supplied by the caller. Tiny negative results (> -1e-12) from cancellation
// are clamped to zero; anything more negative throws NumericError.
Real empirical_hsic(const Vec& u, const Vec& v, Real sigma_u, Real sigma_v);

// Convenience overload using the median heuristic on each argument.
Real empirical_hsic(const Vec& u, const Vec& v);

// Whether HSIC treats the d' embedding dimensions of one item as samples
// (per_item) or the items of the subset as samples per dimension (population).
enum class HsicMode { per_item, population };

HsicMode hsic_mode_from_name(const std::string& name);

// Per-item, per-modality-pair state that stays fixed while weights move:
// masked projected features alpha^m .* e_i^m and the sigma computed from the
// unweighted masked vectors.
struct HsicWorkspace {
  HsicMode mode = HsicMode::per_item;
  // masked[m] row i = alpha^m .* ebar_i^m for items in `items` order.
  std::vector<Mat> masked;
  // per_item: sigma[m](r) = median-heuristic sigma for masked.row(r).
  std::vector<Vec> sigma;
  // population: one sigma per modality from pairwise row distances.
  Vec pop_sigma;
  std::vector<ItemIndex> items;  // subset, ascending
};

// Builds the workspace for a subset of items. `projected[m]` holds ebar^m as
// an num_items x d' matrix; `mask[m]` is the length-d' soft mask for modality
// m. Sigmas come from the masked but unweighted vectors and stay frozen over
// a weight-update phase.
HsicWorkspace make_hsic_workspace(const std::vector<Mat>& projected,
                                  const std::vector<Vec>& mask,
                                  const std::vector<ItemIndex>& items,
                                  HsicMode mode = HsicMode::per_item);

// Masked weighted HSIC loss with frozen sigmas. per_item: sum over subset
// items and unordered modality pairs of empirical_hsic over the d' entries of
// w_i * masked rows. population: one HSIC per modality pair with the subset
// items as kernel samples and rows scaled by their weights. `weights` is
// indexed by position in ws.items.
Real masked_weighted_hsic_loss(const HsicWorkspace& ws, const Vec& weights,
                               int num_threads = 1);

// Loss plus analytic gradient with respect to the weight logits.
// w_i = sigmoid(l_i) * w_max. Returns the loss; grad_logits gets
// dJ/dl aligned with ws.items. gamma adds the anchor penalty
// gamma * mean_i (w_i - 1)^2 to both loss and gradient.
Real hsic_loss_and_grad_logits(const HsicWorkspace& ws, const Vec& logits,
                               Real w_max, Real gamma, Vec& grad_logits,
                               int num_threads = 1);

}  // namespace modest
