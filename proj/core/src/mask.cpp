#include "modest/mask.hpp"

#include <cmath>

namespace modest {

void ImportanceAccumulator::reset(int num_modalities, int proj_dim) {
  alpha.assign(num_modalities, Vec::Zero(proj_dim));
  batches_seen = 0;
}

void ImportanceAccumulator::add(int modality, const Mat& grad_Wm) {
  if (modality == 0) ++batches_seen;
  alpha[modality] += grad_Wm.cwiseAbs().rowwise().sum();
}

void ImportanceAccumulator::add_rowsums(int modality, const Vec& abs_rowsums) {
  if (modality == 0) ++batches_seen;
  alpha[modality] += abs_rowsums;
}

Vec normalize_mask(const Vec& alpha, Real temperature) {
  if (!alpha.allFinite())
    throw NumericError("mask: non-finite importance accumulator");
  if (temperature <= 0.0) throw ConfigError("mask temperature must be positive");
  const Vec scaled = alpha / temperature;
  const Real mx = scaled.maxCoeff();
  Vec e = (scaled.array() - mx).exp();
  const Real total = e.sum();
  const auto d = static_cast<Real>(alpha.size());
  return e * (d / total);
}

TaskMask make_mask(const ImportanceAccumulator& acc, Real temperature) {
  if (acc.batches_seen == 0)
    throw DataError("mask undefined: no batch gradients accumulated");
  TaskMask mask;
  for (const auto& a : acc.alpha)
    mask.alpha_bar.push_back(normalize_mask(a, temperature));
  return mask;
}

TaskMask uniform_mask(int num_modalities, int proj_dim) {
  TaskMask mask;
  for (int m = 0; m < num_modalities; ++m)
    mask.alpha_bar.push_back(Vec::Ones(proj_dim));
  return mask;
}

}  // namespace modest
