#pragma once

#include <vector>

#include "modest/common.hpp"

namespace modest {

// Per-modality soft mask over the d' shared dimensions.
struct TaskMask {
  std::vector<Vec> alpha_bar;  // each length d', entries > 0, sum = d'
};

// Accumulates raw importance alpha_i = sum_batches sum_j |grad_Wm[i,j]| for
// one modality across an epoch.
struct ImportanceAccumulator {
  std::vector<Vec> alpha;  // per modality, length d'
  int batches_seen = 0;

  void reset(int num_modalities, int proj_dim);
  void add(int modality, const Mat& grad_Wm);
  // Convenience used by the batched gradient path.
  void add_rowsums(int modality, const Vec& abs_rowsums);
};

// alpha_bar = softmax(alpha / temperature) * d', max-subtracted.
Vec normalize_mask(const Vec& alpha, Real temperature = 1.0);

// Normalizes every modality; throws DataError when no batch was observed.
TaskMask make_mask(const ImportanceAccumulator& acc, Real temperature = 1.0);

// All-ones mask (used before the first epoch and by vanilla runs).
TaskMask uniform_mask(int num_modalities, int proj_dim);

}  // namespace modest
