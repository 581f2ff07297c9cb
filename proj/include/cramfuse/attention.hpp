// SPDX-License-Identifier: Apache-2.0
//
// Ray-constrained cross-attention: a camera pixel's 3D location is chosen as
// a softmax-weighted combination of candidate points along its viewing ray,
// with radar features at those points acting as keys.
#pragma once

#include <vector>

#include <Eigen/Core>

#include "cramfuse/config.hpp"
#include "cramfuse/features.hpp"
#include "cramfuse/geometry.hpp"

namespace cramfuse {

struct RaySamples {
  std::vector<Vec3> locations;
  std::vector<double> depths;   // distance along the ray, ascending
  std::vector<double> offsets;  // depths[k] - center, exactly antisymmetric
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::Zero();
  double center = 0.0;
  int s = 0;
  double epsilon = 0.0;
};

struct AttentionResult {
  Vec3 location = Vec3::Zero();
  std::vector<double> weights;
};

inline constexpr double kMinSampleDepth = 0.1;

/// Depths d_est * (1 + epsilon * k) for k = -s..s, clamped below at 0.1 m.
/// Throws DomainError for d_est <= 0, s < 0 or epsilon <= 0.
RaySamples sample_along_ray(const PixelRay& ray, double d_est, int s, double epsilon);

/// Feature of the radar cell nearest to each sample in (x, y); zero outside
/// the radar extent. An empty `radar_fm` yields all-zero keys.
Eigen::MatrixXd gather_radar_features(const RaySamples& samples, const FeatureMap& radar_fm,
                                      const RadarModel& radar);

/// Scaled dot-product attention of one query against the sample keys.
/// When `samples` carries offsets, the attended point is
/// origin + (center + sum_k w_k offsets_k) direction, summed in symmetric
/// pairs so equal weights return the center exactly; otherwise it is
/// sum_k w_k locations_k. Throws ConfigError on dimension mismatch.
AttentionResult cross_attend(const Eigen::VectorXd& psi_c, const Eigen::MatrixXd& psi_r,
                             const RaySamples& samples);

struct CameraPoint {
  CellIndex pixel;
  Vec3 location = Vec3::Zero();
  double ray_depth = 0.0;  // estimated distance along the ray before refinement
  std::vector<double> feature;
};

/// For every pixel: ray, samples around the predicted depth, radar gather,
/// attention. `depth_map` holds camera-frame z. With `attend == false` the
/// location is the unrefined estimate.
std::vector<CameraPoint> refine_camera_points(const std::vector<CellIndex>& pixels, const DepthMap& depth_map,
                                              const FeatureMap& camera_fm, const FeatureMap& radar_fm,
                                              const CameraModel& cam, const RadarModel& radar,
                                              const PipelineConfig& config, bool attend = true,
                                              Exec exec = Exec::parallel);

}  // namespace cramfuse
