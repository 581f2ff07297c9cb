// SPDX-License-Identifier: Apache-2.0
//
// Training objectives with analytic gradients. Every loss returns its value
// and the gradient with respect to its prediction arguments.
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cramfuse/config.hpp"
#include "cramfuse/geometry.hpp"

namespace cramfuse {

inline constexpr double kProbClamp = 1e-7;

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;
};

struct HeatmapTarget {
  std::vector<double> values;
  double sigma = 1.0;
  /// Per box, the index of its closest contained point (x_c), or -1.
  std::vector<long> closest;
  /// Per point, the box attaining the maximum, or -1.
  std::vector<int> box_of;
};

/// h(x) = max over boxes containing x of exp(-(|x - c| - |x_c - c|) / sigma^2)
/// where x_c is the contained point nearest to c. Points in no box get 0.
/// Throws DomainError for sigma <= 0.
HeatmapTarget heatmap_gt(std::span<const Vec3> points, std::span<const Box3D> boxes, double sigma);

/// Mean focal loss over pixels; `labels` are 1 for foreground.
LossValue seg_focal_loss(std::span<const double> p, std::span<const std::uint8_t> labels, double gamma);

/// Mean squared error over pixels with valid != 0.
LossValue depth_l2_loss(std::span<const double> pred, std::span<const double> gt,
                        std::span<const std::uint8_t> valid);

/// Focal loss with positives at h_gt > 1 - epsilon_h, averaged over all
/// entries.
LossValue heatmap_focal_loss(std::span<const double> h_pred, std::span<const double> h_gt, double alpha,
                             double gamma, double epsilon_h);

/// Sum over entries of 0.5 e^2 / beta (|e| < beta) or |e| - 0.5 beta.
LossValue smooth_l1(std::span<const double> pred, std::span<const double> gt, double beta = 1.0);

struct HeadingTarget {
  int bin = 0;
  double residual = 0.0;  // in half bin widths
};

double heading_bin_width(int num_bins);
double heading_bin_center(int bin, int num_bins);
HeadingTarget encode_heading(double theta, int num_bins);

/// Cross-entropy over bins plus smooth L1 of the residual. The gradient has
/// num_bins logit entries followed by the residual entry.
LossValue heading_bin_loss(std::span<const double> bin_logits, double residual_pred, double theta_gt);

/// 1 - IoU of axis-aligned footprints in the ground-truth heading frame.
/// `pred` is (x, y, l, w); the gradient has the same layout.
LossValue iou_surrogate_loss(std::span<const double> pred, const Box3D& gt);

struct LossParts {
  double seg = 0.0;
  double depth = 0.0;
  double hm = 0.0;
  double box_smooth_l1 = 0.0;
  double box_bin = 0.0;
  double box_iou = 0.0;
};

struct LossWeights {
  double lambda_seg = 400.0;
  double lambda_depth = 20.0;
  double lambda_hm = 4.0;
};

struct LossReport {
  LossParts parts;
  double total = 0.0;
};

/// Weighted sum; the three box terms enter with unit weight. Throws
/// DomainError for a non-finite part.
LossReport total_loss(const LossParts& parts, const LossWeights& weights = {});
LossWeights weights_from(const PipelineConfig& cfg);

struct BoxLossTerms {
  double smooth_l1 = 0.0;
  double bin = 0.0;
  double iou = 0.0;
  std::vector<double> grad;  // d(sum of terms)/d(raw params)
};

/// Box terms for one cell. `raw` is the box head output: offsets (3), log
/// sizes (3), bin logits, residual. `anchor` is the voxel center.
BoxLossTerms box_loss(std::span<const double> raw, const Vec3& anchor, const Box3D& gt, int num_bins);

/// Regression targets (offsets, log sizes) of `gt` seen from `anchor`.
std::vector<double> box_regression_target(const Vec3& anchor, const Box3D& gt);

/// Largest relative error between `f(x).grad` and central differences,
/// with denominator max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<LossValue(std::span<const double>)>& f, std::span<const double> x,
                         double h = 1e-5);

}  // namespace cramfuse
