// SPDX-License-Identifier: Apache-2.0
//
// Sensor models, coordinate frames and the two 3D augmentations.
//
// Frames: the world frame is the ego frame at capture time (x forward,
// y left, z up). The camera frame is x right, y down, z along the optical
// axis. Pixel coordinates are (u, v) = (column, row) with the pixel center at
// integer coordinates.
#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "cramfuse/common.hpp"

namespace cramfuse {

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }

  /// Orthonormal with determinant +1 (tolerance 1e-9).
  bool valid() const;
};

/// Rotation about +z by `angle` radians.
Mat3 rotation_z(double angle);

/// Extrinsics for a camera at `position` looking along world +x, with
/// `pitch` (radians, positive looks down) and `yaw` about world z.
RigidTransform forward_camera_pose(const Vec3& position, double yaw = 0.0, double pitch = 0.0);

struct Pixel {
  double u = 0.0;  // column
  double v = 0.0;  // row
};

struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  RigidTransform extrinsics;  // camera -> world
  int width = 0;
  int height = 0;

  /// Throws ConfigError if any invariant is violated.
  void validate() const;
  bool in_bounds(const Pixel& px) const {
    return px.u >= 0.0 && px.v >= 0.0 && px.u < width && px.v < height;
  }
  Vec3 center() const { return extrinsics.translation; }
};

/// BEV radar image geometry. Row index grows with world x, column index with
/// world y. Cells map to their geometric centers.
struct RadarModel {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  double cell_size = 0.0;
  double sensor_height = 0.0;
  RigidTransform pose;

  void validate() const;
  int rows() const;
  int cols() const;
  bool contains_xy(double x, double y) const {
    return x >= x_min && x < x_max && y >= y_min && y < y_max;
  }
};

struct PixelRay {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit length
  Vec3 at(double t) const { return origin + t * direction; }
};

/// Oriented 3D box. `size` is (length, width, height); length lies along the
/// heading direction in the ground plane. `heading` is normalized to [-pi, pi).
struct Box3D {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double heading = 0.0;
  double score = 1.0;
  int category = 0;

  double length() const { return size.x(); }
  double width() const { return size.y(); }
  double height() const { return size.z(); }

  /// The 8 corners; bottom face first, counter-clockwise seen from above.
  std::vector<Vec3> corners() const;
  /// BEV footprint corners, counter-clockwise.
  std::vector<Eigen::Vector2d> footprint() const;
  bool contains(const Vec3& p) const;
  bool contains_xy(double x, double y) const;
};

/// Ray from the camera center through `px`. Throws DomainError outside the
/// image.
PixelRay pixel_to_ray(const CameraModel& cam, const Pixel& px);

/// World point seen at `px` whose camera-frame z equals `depth`.
/// Throws DomainError if depth <= 0.
Vec3 project_pixel_depth(const CameraModel& cam, const Pixel& px, double depth);

struct PixelDepth {
  Pixel px;
  double depth = 0.0;
};

/// Projects a world point. Returns nullopt when the point is not in front of
/// the camera (camera-frame z <= 0).
std::optional<PixelDepth> world_to_pixel(const CameraModel& cam, const Vec3& p);

/// World point at the center of radar cell `cell`, elevated to the sensor
/// height. Throws DomainError outside the grid.
Vec3 radar_cell_to_point(const RadarModel& radar, const CellIndex& cell);

/// Nearest radar cell to world (x, y), or nullopt outside the extent.
std::optional<CellIndex> radar_point_to_cell(const RadarModel& radar, double x, double y);

/// Convex hull of the projected corners that lie in front of the camera.
/// Corners behind the camera are dropped. Returns nullopt if none is visible.
std::optional<std::vector<Eigen::Vector2d>> project_box_to_image(const CameraModel& cam,
                                                                 const Box3D& box);

/// Convex hull (counter-clockwise, collinear points removed).
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts);

/// Signed area (positive for counter-clockwise order).
double polygon_area(std::span<const Eigen::Vector2d> poly);

/// Clips convex polygon `subject` against convex polygon `clip` (both
/// counter-clockwise).
std::vector<Eigen::Vector2d> clip_convex_polygon(std::span<const Eigen::Vector2d> subject,
                                                 std::span<const Eigen::Vector2d> clip);

/// Point-in-convex-polygon test (boundary counts as inside).
bool polygon_contains(std::span<const Eigen::Vector2d> poly, const Eigen::Vector2d& p);

/// Reflects across the world x-axis (y -> -y); headings are negated.
void augment_flip_x(std::vector<Vec3>& points, std::vector<Box3D>& boxes);

/// Rotates points and boxes about world z; headings are incremented.
void augment_rotate_z(std::vector<Vec3>& points, std::vector<Box3D>& boxes, double angle);

}  // namespace cramfuse
