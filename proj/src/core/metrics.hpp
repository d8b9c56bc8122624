#pragma once

#include <optional>
#include <string>
#include <vector>

#include "types.hpp"
#include "volume.hpp"

namespace quiz {

// Pair-matching loss: mean over points of the squared Euclidean norm of
// (d_pred + q - q_t). Mean (not sum) so the loss weight is batch-size
// independent. Optional gradient with respect to the predictions.
double l_pair_loss(const std::vector<Vec3>& d_pred, const std::vector<Vec3>& q,
                   const std::vector<Vec3>& q_t, std::vector<Vec3>* grad_pred = nullptr);

// Global normalized cross-correlation (Pearson) over flat arrays. The
// denominator is sqrt(var_a * var_b + eps) with eps = 1e-8 so zero-variance
// inputs yield 0 instead of NaN and gradients stay finite.
double ncc_global(const float* a, const float* b, int64_t n);
// Same value, also writing d ncc / d b[i] into grad_b (length n).
double ncc_global_grad(const float* a, const float* b, int64_t n, float* grad_b);

// window == 0 selects global mode; otherwise window must be odd and the
// result is the mean of per-window correlations over all centers whose
// window fits inside the volume (zero-variance windows contribute 0).
double ncc(const Volume& a, const Volume& b, int window = 0);

// L_trans = -NCC.
double l_trans(const Volume& reference, const Volume& warped_search, int window = 0);

struct LossReport {
  double l_pair = 0.0;
  double l_trans = 0.0;
  double alpha = 0.0;
  double total = 0.0;
};

LossReport total_loss(double lp, double lt, double alpha);

// Mean Euclidean distance between corresponding points, in the units of the
// inputs (mm for evaluation).
double tre(const std::vector<Vec3>& a_pts, const std::vector<Vec3>& b_pts);

// TRE normalized by the physical diagonal sqrt(w^2+h^2+d^2) of the image.
double rtre(double tre_val, const Vec3& extent_mm);

// Per-pair evaluation record. Serialized field names are part of the CLI
// contract: tre_mm, rtre, offset_mm, seconds_per_pair.
struct MetricsReport {
  std::string id;
  double tre_mm = 0.0;
  double rtre = 0.0;
  double seconds_per_pair = 0.0;
  // Present when the dataset carries a ground-truth shift.
  std::optional<double> offset_mm;
  std::optional<Vec3> offset_mm_axes;
  std::optional<Vec3> predicted_shift;
  std::optional<Vec3> true_shift;
  // TRE of the identity (zero-translation) predictor, for improvement checks.
  double tre_mm_baseline = 0.0;
};

}  // namespace quiz
