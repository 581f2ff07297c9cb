// SPDX-License-Identifier: Apache-2.0
//
// Dynamic voxelization and sparse neighborhood operators over occupied cells.
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "cramfuse/config.hpp"
#include "cramfuse/fusion.hpp"
#include "cramfuse/head.hpp"

namespace cramfuse {

using VoxelIndex = std::array<int, 3>;

struct VoxelCell {
  VoxelIndex index{};
  Vec3 center = Vec3::Zero();
  std::vector<double> feature;
  std::vector<std::size_t> members;  // ascending point indices
};

/// Occupied cells sorted by index. In pillar mode the z index is always 0 and
/// the cell center sits at the middle of the vertical range.
struct VoxelGrid {
  VoxelGridConfig config;
  int dim = 0;
  std::vector<VoxelCell> cells;

  /// Position of `index` in `cells`, if occupied.
  std::optional<std::size_t> find(const VoxelIndex& index) const;
};

/// Cell containing `p`, or nullopt outside the half-open region.
std::optional<VoxelIndex> voxel_index(const VoxelGridConfig& cfg, const Vec3& p);
Vec3 voxel_center(const VoxelGridConfig& cfg, const VoxelIndex& index);

/// Groups every in-region point into its cell; the cell feature is the mean
/// of its members' features (compensated summation in point order).
VoxelGrid voxelize_dynamic(const FusedCloud& cloud, const VoxelGridConfig& cfg, Exec exec = Exec::parallel);

/// feature <- own || mean of occupied cells within Chebyshev radius r ||
/// occupied count / (2r+1)^2. Neighbors are summed in lexicographic
/// (dx, dy, dz) order. Throws DomainError for r < 0.
VoxelGrid neighborhood_aggregate(const VoxelGrid& grid, int radius, Exec exec = Exec::parallel);

inline constexpr int kGeometryDim = 6;

/// For each cell of `query`, BEV statistics of the occupied (x, y) columns of
/// `source` within Chebyshev radius r: count / (2r+1)^2, mean offset / r and
/// second moments (xx, yy, xy) / r^2. All sums are exact integer sums.
/// Returns one kGeometryDim row per query cell. Throws DomainError for r < 1
/// or when the grids use different cell sizes or origins.
std::vector<std::array<double, kGeometryDim>> neighborhood_geometry(const VoxelGrid& query, const VoxelGrid& source,
                                                                    int radius);

inline constexpr int kBoxParams = 6;  // offsets (3), log sizes (3)

struct CellOutput {
  double heat = 0.0;
  std::vector<double> box;  // offsets, log sizes, bin logits, residual
};

/// sigmoid(heatmap_head) and raw box_head outputs for every cell. Throws
/// ConfigError if a head's input dim differs from the grid feature dim.
std::vector<CellOutput> apply_detection_head(const VoxelGrid& grid, const TinyHead& heatmap_head,
                                             const TinyHead& box_head, Exec exec = Exec::parallel);

}  // namespace cramfuse
