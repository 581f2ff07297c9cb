// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cramfuse {

RaySamples sample_along_ray(const PixelRay& ray, double d_est, int s, double epsilon) {
  if (!(d_est > 0.0)) throw DomainError("sample_along_ray: depth estimate must be positive");
  if (s < 0) throw DomainError("sample_along_ray: s must be nonnegative");
  if (!(epsilon > 0.0)) throw DomainError("sample_along_ray: epsilon must be positive");
  RaySamples out;
  out.s = s;
  out.epsilon = epsilon;
  out.origin = ray.origin;
  out.direction = ray.direction;
  out.center = d_est;
  for (int k = -s; k <= s; ++k) {
    double off = d_est * epsilon * k;
    if (d_est + off < kMinSampleDepth) off = kMinSampleDepth - d_est;
    const double t = d_est + off;
    out.offsets.push_back(off);
    out.depths.push_back(t);
    out.locations.push_back(ray.at(t));
  }
  return out;
}

Eigen::MatrixXd gather_radar_features(const RaySamples& samples, const FeatureMap& radar_fm,
                                      const RadarModel& radar) {
  const int n = static_cast<int>(samples.locations.size());
  Eigen::MatrixXd keys = Eigen::MatrixXd::Zero(n, std::max(radar_fm.dim(), 0));
  if (radar_fm.rows() == 0) return keys;
  for (int k = 0; k < n; ++k) {
    const Vec3& p = samples.locations[k];
    const auto cell = radar_point_to_cell(radar, p.x(), p.y());
    if (!cell || !(cell->row < radar_fm.rows() && cell->col < radar_fm.cols())) continue;
    const auto f = radar_fm.at(cell->row, cell->col);
    for (int j = 0; j < radar_fm.dim(); ++j) keys(k, j) = f[j];
  }
  return keys;
}

AttentionResult cross_attend(const Eigen::VectorXd& psi_c, const Eigen::MatrixXd& psi_r,
                             const RaySamples& samples) {
  const auto n = static_cast<Eigen::Index>(samples.locations.size());
  if (psi_r.rows() != n) throw ConfigError("cross_attend: one key per sample is required");
  if (psi_r.cols() != psi_c.size() || psi_c.size() == 0) {
    throw ConfigError("cross_attend: query has " + std::to_string(psi_c.size()) + " entries, keys have " +
                      std::to_string(psi_r.cols()));
  }
  const Eigen::VectorXd logits = (psi_r * psi_c) / std::sqrt(static_cast<double>(psi_c.size()));
  const double mx = logits.maxCoeff();
  AttentionResult out;
  out.weights.resize(n);
  double z = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.weights[k] = std::exp(logits[k] - mx);
    z += out.weights[k];
  }
  for (auto& w : out.weights) w /= z;
  if (samples.offsets.size() != static_cast<std::size_t>(n)) {
    for (Eigen::Index k = 0; k < n; ++k) out.location += out.weights[k] * samples.locations[k];
    return out;
  }
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index k = 0; k < n; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return samples.offsets[a] < samples.offsets[b]; });
  double shift = 0.0;
  for (Eigen::Index lo = 0, hi = n - 1; lo <= hi; ++lo, --hi) {
    const Eigen::Index a = order[lo], b = order[hi];
    shift += lo == hi ? out.weights[a] * samples.offsets[a]
                      : out.weights[a] * samples.offsets[a] + out.weights[b] * samples.offsets[b];
  }
  out.location = samples.origin + (samples.center + shift) * samples.direction;
  return out;
}

std::vector<CameraPoint> refine_camera_points(const std::vector<CellIndex>& pixels, const DepthMap& depth_map,
                                              const FeatureMap& camera_fm, const FeatureMap& radar_fm,
                                              const CameraModel& cam, const RadarModel& radar,
                                              const PipelineConfig& config, bool attend, Exec exec) {
  if (radar_fm.rows() > 0 && radar_fm.dim() != camera_fm.dim()) {
    throw ConfigError("refine_camera_points: camera and radar feature dims differ");
  }
  std::vector<CameraPoint> out(pixels.size());
  const Vec3 axis = cam.extrinsics.rotation.col(2);
  const auto body = [&](std::ptrdiff_t i) {
    const CellIndex px = pixels[i];
    const PixelRay ray = pixel_to_ray(cam, {static_cast<double>(px.col), static_cast<double>(px.row)});
    const double z = depth_map(px.row, px.col);
    const double t = z / ray.direction.dot(axis);
    CameraPoint& cp = out[i];
    cp.pixel = px;
    cp.ray_depth = t;
    cp.feature = feature_vector(camera_fm, px.row, px.col);
    if (!attend) {
      cp.location = ray.at(t);
      return;
    }
    const RaySamples samples = sample_along_ray(ray, t, config.s, config.epsilon);
    Eigen::MatrixXd keys = gather_radar_features(samples, radar_fm, radar);
    if (keys.cols() == 0) keys = Eigen::MatrixXd::Zero(keys.rows(), camera_fm.dim());
    const Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(cp.feature.data(), cp.feature.size());
    cp.location = cross_attend(q, keys, samples).location;
  };
  const auto n = static_cast<std::ptrdiff_t>(pixels.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
  }
  return out;
}

}  // namespace cramfuse
