// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace cramfuse {
namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double footprint_overlap(const Box3D& a, const Box3D& b) {
  const auto fa = a.footprint();
  const auto fb = b.footprint();
  const auto inter = clip_convex_polygon(fa, fb);
  return inter.size() < 3 ? 0.0 : polygon_area(inter);
}

// Deterministic texture value in [0,1) for a ground tile.
double tile_noise(long long ix, long long iy) {
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B1ULL ^
                                     (static_cast<std::uint64_t>(iy) << 32));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace

std::string to_string(WeatherTag tag) { return tag == WeatherTag::clear ? "clear" : "noisy"; }

WeatherTag weather_from_string(const std::string& s) {
  if (s == "clear") return WeatherTag::clear;
  if (s == "noisy") return WeatherTag::noisy;
  throw ConfigError("unknown weather tag '" + s + "'");
}

void SceneConfig::validate() const {
  if (min_boxes < 0 || max_boxes < min_boxes) throw ConfigError("scene: bad box count range");
  if (!(range_min > 0.0 && range_max > range_min)) throw ConfigError("scene: bad range");
  if (!(length_min > 0.0 && length_max >= length_min && width_min > 0.0 &&
        width_max >= width_min && height_min > 0.0 && height_max >= height_min)) {
    throw ConfigError("scene: box sizes must be positive ranges");
  }
  if (!(lateral_fraction > 0.0) || max_retries <= 0) throw ConfigError("scene: bad placement");
}

void CorruptionSpec::validate() const {
  if (!(gaussian_sigma >= 0.0)) throw ConfigError("corruption: sigma must be >= 0");
  if (rf_intensity_threshold && !(*rf_intensity_threshold >= 0.0 && *rf_intensity_threshold <= 1.0)) {
    throw ConfigError("corruption: rf threshold must lie in [0,1]");
  }
}

CameraModel default_camera() {
  CameraModel cam;
  cam.width = 256;
  cam.height = 128;
  cam.fx = 128.0;
  cam.fy = 128.0;
  cam.cx = 128.0;
  cam.cy = 56.0;
  cam.extrinsics = forward_camera_pose(Vec3(0.0, 0.0, 1.6), 0.0, 0.02);
  return cam;
}

RadarModel default_radar() {
  RadarModel r;
  r.x_min = 0.0;
  r.x_max = 51.2;
  r.y_min = -25.6;
  r.y_max = 25.6;
  r.cell_size = 0.2;
  r.sensor_height = 1.0;
  return r;
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& config, const CameraModel& cam,
                     const RadarModel& radar) {
  config.validate();
  std::mt19937_64 rng(child_seed(seed, 0));
  Scene scene;
  scene.bounds = {radar.x_min, radar.x_max, radar.y_min, radar.y_max};
  scene.weather = uniform(rng, 0.0, 1.0) < config.noisy_probability ? WeatherTag::noisy
                                                                      : WeatherTag::clear;
  const int count = std::uniform_int_distribution<int>(config.min_boxes, config.max_boxes)(rng);
  // Half field of view as a lateral slope y/x.
  const double slope = (cam.width - cam.cx) / cam.fx * config.lateral_fraction;

  for (int placed = 0; placed < count; ++placed) {
    bool ok = false;
    for (int attempt = 0; attempt < config.max_retries && !ok; ++attempt) {
      Box3D b;
      const double x = uniform(rng, config.range_min, config.range_max);
      const double y = uniform(rng, -slope * x, slope * x);
      b.size = Vec3(uniform(rng, config.length_min, config.length_max),
                    uniform(rng, config.width_min, config.width_max),
                    uniform(rng, config.height_min, config.height_max));
      const bool crossing = uniform(rng, 0.0, 1.0) < config.crossing_probability;
      const double lane = uniform(rng, 0.0, 1.0) < 0.5 ? 0.0 : kPi;
      const double base = crossing ? lane + 0.5 * kPi : lane;
      b.heading = normalize_angle(base + uniform(rng, -config.heading_jitter, config.heading_jitter));
      b.center = Vec3(x, y, 0.5 * b.height());

      bool inside = true;
      for (const auto& c : b.footprint()) {
        if (!radar.contains_xy(c.x(), c.y())) inside = false;
      }
      if (!inside) continue;
      Box3D grown = b;
      grown.size.x() += config.min_gap;
      grown.size.y() += config.min_gap;
      bool clear = true;
      for (const auto& other : scene.boxes) {
        if (footprint_overlap(grown, other) > 0.0) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      scene.boxes.push_back(b);
      ok = true;
    }
    if (!ok) {
      throw std::runtime_error("generate_scene: could not place box " + std::to_string(placed) +
                               " after " + std::to_string(config.max_retries) + " attempts");
    }
  }
  return scene;
}

std::optional<double> ray_box_intersection(const PixelRay& ray, const Box3D& box) {
  // Slab test in the box frame.
  const Mat3 rt = rotation_z(-box.heading);
  const Vec3 o = rt * (ray.origin - box.center);
  const Vec3 d = rt * ray.direction;
  const Vec3 half = 0.5 * box.size;
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (std::abs(o[k]) > half[k]) return std::nullopt;
      continue;
    }
    double a = (-half[k] - o[k]) / d[k];
    double b = (half[k] - o[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::nullopt;
  }
  if (t1 <= 0.0) return std::nullopt;
  return t0 > 0.0 ? t0 : t1;
}

CameraRendering render_camera(const Scene& scene, const CameraModel& cam,
                              const CameraRenderConfig& config, std::uint64_t seed, Exec exec) {
  cam.validate();
  const int h = cam.height, w = cam.width;
  CameraRendering out{Image(h, w, 0.0f), Image(h, w, 0.0f), Mask(h, w, 0)};

  std::vector<double> albedo(scene.boxes.size());
  {
    std::mt19937_64 rng(child_seed(seed, 1));
    for (auto& a : albedo) a = config.albedo + uniform(rng, -config.albedo_jitter, config.albedo_jitter);
  }
  const Vec3 axis = cam.extrinsics.rotation.col(2);
  const double fog = config.fog_level;

#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const PixelRay ray = pixel_to_ray(cam, Pixel{static_cast<double>(c), static_cast<double>(r)});
      const double cos_axis = ray.direction.dot(axis);
      double best_t = std::numeric_limits<double>::infinity();
      int best = -1;
      for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
        if (auto t = ray_box_intersection(ray, scene.boxes[i]); t && *t < best_t) {
          best_t = *t;
          best = static_cast<int>(i);
        }
      }
      double intensity = fog;
      if (best >= 0) {
        const double z = best_t * cos_axis;
        const double att = std::exp(-z / config.fog_distance);
        intensity = fog + (albedo[best] - fog) * att;
        out.true_depth(r, c) = static_cast<float>(z);
      } else if (ray.direction.z() < 0.0) {
        const double t = -ray.origin.z() / ray.direction.z();
        const Vec3 g = ray.at(t);
        const double tex = config.ground_min + (config.ground_max - config.ground_min) *
                                                   tile_noise(static_cast<long long>(std::floor(g.x() / config.ground_tile)),
                                                              static_cast<long long>(std::floor(g.y() / config.ground_tile)));
        const double att = std::exp(-(t * cos_axis) / config.fog_distance);
        intensity = fog + (tex - fog) * att;
      }
      out.camera_image(r, c) = static_cast<float>(std::clamp(intensity, 0.0, 1.0));
    }
  }

  // Sparse supervision subset, drawn serially in row-major order.
  std::mt19937_64 rng(child_seed(seed, 2));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (out.true_depth(r, c) > 0.0f) {
        out.depth_valid(r, c) = u01(rng) < config.depth_valid_rate ? 1 : 0;
      }
    }
  }
  return out;
}

Image render_radar(const Scene& scene, const RadarModel& radar, const RadarRenderConfig& config,
                   std::uint64_t seed) {
  radar.validate();
  const int rows = radar.rows(), cols = radar.cols();
  Image rf(rows, cols, 0.0f);
  std::mt19937_64 rng(child_seed(seed, 3));

  // Per-object mean response, then ghosts (object-like returns with no object).
  struct Target {
    Box3D footprint;
    double mean;
  };
  std::vector<Target> targets;
  for (const auto& b : scene.boxes) {
    const bool weak = uniform(rng, 0.0, 1.0) < config.weak_probability;
    const double mean = weak ? uniform(rng, config.weak_intensity_min, config.weak_intensity_max)
                             : uniform(rng, config.box_intensity_min, config.box_intensity_max);
    targets.push_back({b, mean});
  }
  const int ghosts = config.ghost_max > 0
                         ? std::uniform_int_distribution<int>(config.ghost_min, config.ghost_max)(rng)
                         : 0;
  for (int g = 0; g < ghosts; ++g) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Box3D ghost;
      const double x = uniform(rng, 8.0, radar.x_max - 6.0);
      const double y = uniform(rng, -0.7 * x, 0.7 * x);
      ghost.center = Vec3(x, y, 0.0);
      ghost.size = Vec3(uniform(rng, 3.8, 5.0), uniform(rng, 1.6, 2.0), 1.0);
      ghost.heading = normalize_angle((uniform(rng, 0.0, 1.0) < 0.5 ? 0.0 : kPi) + uniform(rng, -0.2, 0.2));
      bool ok = radar.contains_xy(x - 3.0, y - 3.0) && radar.contains_xy(x + 3.0, y + 3.0);
      for (const auto& b : scene.boxes) {
        if ((b.center.head<2>() - ghost.center.head<2>()).norm() < 7.0) ok = false;
      }
      if (!ok) continue;
      targets.push_back({ghost, uniform(rng, config.ghost_intensity_min, config.ghost_intensity_max)});
      break;
    }
  }

  std::lognormal_distribution<double> clutter(0.0, config.clutter_speckle);
  std::lognormal_distribution<double> speckle(0.0, config.box_speckle);
  // Normalizes the log-normal mean to 1.
  const double clutter_norm = std::exp(-0.5 * config.clutter_speckle * config.clutter_speckle);
  const double speckle_norm = std::exp(-0.5 * config.box_speckle * config.box_speckle);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Vec3 p = radar_cell_to_point(radar, {r, c});
      double value = config.clutter_mean > 0.0 ? config.clutter_mean * clutter(rng) * clutter_norm : 0.0;
      for (const auto& t : targets) {
        if (t.footprint.contains_xy(p.x(), p.y())) {
          value = std::max(value, t.mean * speckle(rng) * speckle_norm);
        }
      }
      rf(r, c) = static_cast<float>(std::clamp(value, 0.0, 1.0));
    }
  }
  return rf;
}

SensorFrame corrupt_camera(const SensorFrame& frame, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("corrupt_camera: sigma must be >= 0");
  SensorFrame out = frame;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(child_seed(seed, 4));
  std::normal_distribution<double> noise(0.0, sigma);
  for (float& v : out.camera_image.values()) {
    v = static_cast<float>(std::clamp(static_cast<double>(v) + noise(rng), 0.0, 1.0));
  }
  return out;
}

std::vector<RfCell> threshold_rf(const Image& radar_rf, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("threshold_rf: t must lie in [0,1]");
  std::vector<RfCell> out;
  for (int r = 0; r < radar_rf.rows(); ++r) {
    for (int c = 0; c < radar_rf.cols(); ++c) {
      const float v = radar_rf(r, c);
      if (static_cast<double>(v) > t) out.push_back({{r, c}, v});
    }
  }
  return out;
}

Image apply_rf_threshold(const Image& radar_rf, double t) {
  Image out(radar_rf.rows(), radar_rf.cols(), 0.0f);
  for (const auto& cell : threshold_rf(radar_rf, t)) out(cell.cell.row, cell.cell.col) = cell.intensity;
  return out;
}

Mask camera_foreground_labels(const Scene& scene, const CameraModel& cam) {
  Mask labels(cam.height, cam.width, 0);
  for (const auto& box : scene.boxes) {
    const auto hull = project_box_to_image(cam, box);
    if (!hull || hull->size() < 3) continue;
    double u0 = 1e300, u1 = -1e300, v0 = 1e300, v1 = -1e300;
    for (const auto& p : *hull) {
      u0 = std::min(u0, p.x());
      u1 = std::max(u1, p.x());
      v0 = std::min(v0, p.y());
      v1 = std::max(v1, p.y());
    }
    const int c0 = std::max(0, static_cast<int>(std::floor(u0)));
    const int c1 = std::min(cam.width - 1, static_cast<int>(std::ceil(u1)));
    const int r0 = std::max(0, static_cast<int>(std::floor(v0)));
    const int r1 = std::min(cam.height - 1, static_cast<int>(std::ceil(v1)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (polygon_contains(*hull, Eigen::Vector2d(c, r))) labels(r, c) = 1;
      }
    }
  }
  return labels;
}

Mask radar_foreground_labels(const Scene& scene, const RadarModel& radar) {
  Mask labels(radar.rows(), radar.cols(), 0);
  for (const auto& box : scene.boxes) {
    for (int r = 0; r < radar.rows(); ++r) {
      const double x = radar.x_min + (r + 0.5) * radar.cell_size;
      if (std::abs(x - box.center.x()) > box.length() + box.width()) continue;
      for (int c = 0; c < radar.cols(); ++c) {
        const double y = radar.y_min + (c + 0.5) * radar.cell_size;
        if (box.contains_xy(x, y)) labels(r, c) = 1;
      }
    }
  }
  return labels;
}

}  // namespace cramfuse
