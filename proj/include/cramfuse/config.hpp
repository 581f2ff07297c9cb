// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cramfuse/common.hpp"

namespace cramfuse {

enum class VoxelMode { pillar, voxel3d };

struct VoxelGridConfig {
  Vec3 region_min = Vec3(-100.0, -100.0, -5.0);
  Vec3 region_max = Vec3(100.0, 100.0, 5.0);
  double voxel_size = 0.2;
  VoxelMode mode = VoxelMode::voxel3d;

  void validate() const;
};

/// Hyperparameters shared by every pipeline stage.
struct PipelineConfig {
  double tau = 0.15;  // foreground score cutoff
  int d = 16;         // feature dimension
  int s = 1;          // samples per side of the depth estimate
  double epsilon = 0.10;
  double p_drop = 0.2;
  double lambda_seg = 400.0;
  double lambda_depth = 20.0;
  double lambda_hm = 4.0;
  double sigma_h = 1.0;
  double epsilon_h = 0.2;
  double tau_hm = 0.2;
  double gamma_s = 2.0;
  double gamma_h = 2.0;
  double alpha_h = 4.0;
  int num_heading_bins = 12;
  VoxelGridConfig voxel;

  void validate() const;
};

std::string to_string(VoxelMode mode);
VoxelMode voxel_mode_from_string(const std::string& s);

}  // namespace cramfuse
