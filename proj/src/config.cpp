// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/config.hpp"

namespace cramfuse {

void VoxelGridConfig::validate() const {
  if (!(voxel_size > 0.0)) throw ConfigError("voxel_size must be positive");
  for (int k = 0; k < 3; ++k) {
    if (!(region_max[k] > region_min[k])) throw ConfigError("voxel region is empty");
  }
}

void PipelineConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (d < 4) throw ConfigError("d must be at least 4");
  if (s < 0) throw ConfigError("s must be nonnegative");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("p_drop must lie in [0, 1)");
  if (lambda_seg < 0.0 || lambda_depth < 0.0 || lambda_hm < 0.0) throw ConfigError("loss weights must be nonnegative");
  if (!(sigma_h > 0.0)) throw ConfigError("sigma_h must be positive");
  if (!(epsilon_h >= 0.0 && epsilon_h < 1.0)) throw ConfigError("epsilon_h must lie in [0, 1)");
  if (!(tau_hm >= 0.0 && tau_hm < 1.0)) throw ConfigError("tau_hm must lie in [0, 1)");
  if (gamma_s < 0.0 || gamma_h < 0.0 || alpha_h < 0.0) throw ConfigError("focal exponents must be nonnegative");
  if (num_heading_bins < 1) throw ConfigError("num_heading_bins must be positive");
  voxel.validate();
}

std::string to_string(VoxelMode mode) { return mode == VoxelMode::pillar ? "pillar" : "voxel3d"; }

VoxelMode voxel_mode_from_string(const std::string& s) {
  if (s == "pillar") return VoxelMode::pillar;
  if (s == "voxel3d") return VoxelMode::voxel3d;
  throw ConfigError("unknown voxel mode '" + s + "'");
}

}  // namespace cramfuse
