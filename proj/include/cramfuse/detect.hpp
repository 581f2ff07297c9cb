// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "cramfuse/voxel.hpp"

namespace cramfuse {

/// Center of the arg-max bin (lowest index on ties) plus residual times half
/// the bin width, wrapped to [-pi, pi).
double decode_heading(std::span<const double> bin_logits, double residual);

/// One box per cell with heat > tau_score, in cell order. Throws ConfigError
/// unless tau_score lies in (0, 1) and outputs align with the grid.
std::vector<Box3D> decode_boxes(const VoxelGrid& grid, const std::vector<CellOutput>& outputs, double tau_score,
                                int num_bins);

/// Greedy rotated NMS. Boxes are visited by descending score, ties in input
/// order; a box is dropped when its IoU with a kept box exceeds iou_thresh.
/// Throws DomainError unless iou_thresh lies in (0, 1].
std::vector<Box3D> nms_rotated(const std::vector<Box3D>& boxes, double iou_thresh, int max_out = 200);

}  // namespace cramfuse
