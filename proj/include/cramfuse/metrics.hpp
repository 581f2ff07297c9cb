// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "cramfuse/geometry.hpp"

namespace cramfuse {

/// IoU of the two heading-rotated BEV footprints. Zero-area boxes give 0.
double rotated_bev_iou(const Box3D& a, const Box3D& b);

struct EvalFrame {
  std::vector<Box3D> dets;
  std::vector<Box3D> gts;
};

struct RangeBucket {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

struct Match {
  int frame = 0;
  int det = 0;
  int gt = -1;  // -1 for a false positive
  double iou = 0.0;
};

struct BucketResult {
  RangeBucket bucket;
  double ap = 0.0;
  int num_gt = 0;
  int num_tp = 0;
  int num_fp = 0;
  std::vector<std::pair<double, double>> pr_curve;  // (precision, recall)
};

struct EvalResult {
  double iou_thresh = 0.5;
  std::vector<BucketResult> buckets;
  std::vector<Match> matches;  // in descending score order
};

/// Greedy matching in descending score order (ties broken by box
/// parameters, so input order never matters): each detection takes the
/// unmatched ground truth of its frame with the highest IoU >= iou_thresh.
/// A bucket counts ground truths whose center range lies in [lo, hi),
/// true positives matched to them, and unmatched detections whose own range
/// lies in the bucket. AP integrates the precision envelope over recall.
/// Throws DomainError unless iou_thresh lies in (0, 1].
EvalResult bev_ap(const std::vector<EvalFrame>& frames, double iou_thresh,
                  const std::vector<RangeBucket>& buckets = {RangeBucket{}});

/// Area under the all-point interpolated precision-recall curve. `tp_flags`
/// lists detections in descending score order.
double average_precision(const std::vector<bool>& tp_flags, int num_gt,
                         std::vector<std::pair<double, double>>* curve = nullptr);

/// Median wall time in milliseconds over `runs` calls after one warm-up.
/// Throws DomainError for runs < 1.
double latency_probe(const std::function<void()>& stage, int runs = 5);

}  // namespace cramfuse
