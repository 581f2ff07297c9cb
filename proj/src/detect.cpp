// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cramfuse/losses.hpp"
#include "cramfuse/metrics.hpp"

namespace cramfuse {

double decode_heading(std::span<const double> bin_logits, double residual) {
  if (bin_logits.empty()) throw ConfigError("decode_heading: no bins");
  const int nb = static_cast<int>(bin_logits.size());
  const int best = static_cast<int>(std::max_element(bin_logits.begin(), bin_logits.end()) - bin_logits.begin());
  return normalize_angle(heading_bin_center(best, nb) + residual * 0.5 * heading_bin_width(nb));
}

std::vector<Box3D> decode_boxes(const VoxelGrid& grid, const std::vector<CellOutput>& outputs, double tau_score,
                                int num_bins) {
  if (!(tau_score > 0.0 && tau_score < 1.0)) throw ConfigError("decode_boxes: tau_score must lie in (0, 1)");
  if (outputs.size() != grid.cells.size()) throw ConfigError("decode_boxes: one output per cell is required");
  std::vector<Box3D> boxes;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const CellOutput& o = outputs[i];
    if (!(o.heat > tau_score)) continue;
    if (o.box.size() != static_cast<std::size_t>(kBoxParams + num_bins + 1)) {
      throw ConfigError("decode_boxes: box output has the wrong width");
    }
    Box3D b;
    b.center = grid.cells[i].center + Vec3(o.box[0], o.box[1], o.box[2]);
    b.size = Vec3(std::exp(o.box[3]), std::exp(o.box[4]), std::exp(o.box[5]));
    b.heading = decode_heading(std::span<const double>(o.box).subspan(kBoxParams, num_bins), o.box[kBoxParams + num_bins]);
    b.score = o.heat;
    boxes.push_back(b);
  }
  return boxes;
}

std::vector<Box3D> nms_rotated(const std::vector<Box3D>& boxes, double iou_thresh, int max_out) {
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) throw DomainError("nms_rotated: iou_thresh must lie in (0, 1]");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  std::vector<Box3D> kept;
  for (std::size_t i : order) {
    if (static_cast<int>(kept.size()) >= max_out) break;
    bool keep = true;
    for (const Box3D& k : kept) {
      if (rotated_bev_iou(boxes[i], k) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(boxes[i]);
  }
  return kept;
}

}  // namespace cramfuse
