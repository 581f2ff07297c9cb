// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic driving scenes and their camera / radar renderings.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cramfuse/common.hpp"
#include "cramfuse/geometry.hpp"

namespace cramfuse {

enum class WeatherTag { clear, noisy };

std::string to_string(WeatherTag tag);
WeatherTag weather_from_string(const std::string& s);

struct Bounds2D {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  bool operator==(const Bounds2D&) const = default;
};

struct Scene {
  std::vector<Box3D> boxes;
  WeatherTag weather = WeatherTag::clear;
  Bounds2D bounds;
};

/// Box placement ranges. Boxes are placed inside the camera's horizontal field
/// of view between `range_min` and `range_max` meters ahead.
struct SceneConfig {
  int min_boxes = 2;
  int max_boxes = 6;
  double range_min = 8.0;
  double range_max = 44.0;
  double lateral_fraction = 0.8;  // of the half field of view
  double length_min = 3.8, length_max = 5.0;
  double width_min = 1.6, width_max = 2.0;
  double height_min = 1.4, height_max = 1.9;
  double heading_jitter = 0.2;    // radians around lane direction 0 or pi
  double crossing_probability = 0.0;
  double min_gap = 0.6;           // meters between footprints
  int max_retries = 400;
  double noisy_probability = 0.0;

  void validate() const;
};

struct CameraRenderConfig {
  double fog_level = 0.5;        // intensity at infinite depth
  double fog_distance = 40.0;    // attenuation length (m)
  double albedo = 1.0;
  double albedo_jitter = 0.02;
  double ground_min = 0.05, ground_max = 0.25;
  double ground_tile = 0.5;      // texture cell size (m)
  double depth_valid_rate = 0.3;
};

struct RadarRenderConfig {
  double clutter_mean = 0.06;
  double clutter_speckle = 0.6;  // log-normal sigma of background speckle
  double box_intensity_min = 0.55, box_intensity_max = 0.9;
  double box_speckle = 0.25;     // log-normal sigma inside footprints
  double weak_probability = 0.15;
  double weak_intensity_min = 0.18, weak_intensity_max = 0.3;
  int ghost_min = 0, ghost_max = 2;
  double ghost_intensity_min = 0.5, ghost_intensity_max = 0.85;
};

/// Default sensor rig: forward camera at 1.6 m, BEV radar covering the field
/// of view out to 51.2 m.
CameraModel default_camera();
RadarModel default_radar();

struct SensorFrame {
  Image camera_image;  // [0,1]
  Image true_depth;    // camera-frame z in meters, 0 where no surface
  Mask depth_valid;
  Image radar_rf;      // [0,1]
};

struct CameraRendering {
  Image camera_image;
  Image true_depth;
  Mask depth_valid;
};

struct CorruptionSpec {
  double gaussian_sigma = 0.0;
  std::optional<double> rf_intensity_threshold;
  void validate() const;
};

struct RfCell {
  CellIndex cell;
  float intensity = 0.0f;
};

/// Deterministic in `seed`. Throws std::runtime_error if a non-overlapping
/// placement cannot be found within the retry budget.
Scene generate_scene(std::uint64_t seed, const SceneConfig& config, const CameraModel& cam,
                     const RadarModel& radar);

/// Ray-cast rendering: per-pixel nearest box hit, fogged flat shading on a
/// textured ground plane. `seed` drives the albedo jitter and the sparse
/// depth-validity subset.
CameraRendering render_camera(const Scene& scene, const CameraModel& cam,
                              const CameraRenderConfig& config, std::uint64_t seed,
                              Exec exec = Exec::parallel);

/// Nearest positive ray parameter at which `ray` hits `box`.
std::optional<double> ray_box_intersection(const PixelRay& ray, const Box3D& box);

Image render_radar(const Scene& scene, const RadarModel& radar, const RadarRenderConfig& config,
                   std::uint64_t seed);

/// Adds N(0, sigma^2) noise to the camera image and clips to [0,1].
SensorFrame corrupt_camera(const SensorFrame& frame, double sigma, std::uint64_t seed);

/// Cells with intensity strictly greater than `t`, row-major.
std::vector<RfCell> threshold_rf(const Image& radar_rf, double t);

/// Copy of `radar_rf` with every cell at or below `t` set to zero.
Image apply_rf_threshold(const Image& radar_rf, double t);

/// Foreground label masks derived from box annotations.
Mask camera_foreground_labels(const Scene& scene, const CameraModel& cam);
Mask radar_foreground_labels(const Scene& scene, const RadarModel& radar);

}  // namespace cramfuse
