// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

namespace cramfuse {

bool RigidTransform::valid() const {
  const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() < 1e-9 && rotation.determinant() > 0.0 &&
         translation.allFinite();
}

Mat3 rotation_z(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

RigidTransform forward_camera_pose(const Vec3& position, double yaw, double pitch) {
  Mat3 base;
  // Columns are the camera x (right), y (down), z (forward) axes in world.
  base << 0.0, 0.0, 1.0,
         -1.0, 0.0, 0.0,
          0.0, -1.0, 0.0;
  const Mat3 tilt = Eigen::AngleAxisd(-pitch, Vec3::UnitX()).toRotationMatrix();
  RigidTransform t;
  t.rotation = rotation_z(yaw) * base * tilt;
  t.translation = position;
  return t;
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw ConfigError("camera: principal point outside the image");
  }
  if (!extrinsics.valid()) throw ConfigError("camera: extrinsic rotation is not orthonormal");
}

void RadarModel::validate() const {
  if (!(cell_size > 0.0)) throw ConfigError("radar: cell_size must be positive");
  if (!(x_max > x_min) || !(y_max > y_min)) throw ConfigError("radar: degenerate extent");
  const double nr = (x_max - x_min) / cell_size;
  const double nc = (y_max - y_min) / cell_size;
  if (std::abs(nr - std::round(nr)) > 1e-6 || std::abs(nc - std::round(nc)) > 1e-6) {
    throw ConfigError("radar: extent is not a whole number of cells");
  }
  if (!pose.valid()) throw ConfigError("radar: pose rotation is not orthonormal");
}

int RadarModel::rows() const {
  return static_cast<int>(std::llround((x_max - x_min) / cell_size));
}
int RadarModel::cols() const {
  return static_cast<int>(std::llround((y_max - y_min) / cell_size));
}

std::vector<Vec3> Box3D::corners() const {
  const Mat3 r = rotation_z(heading);
  const double hl = 0.5 * length(), hw = 0.5 * width(), hh = 0.5 * height();
  static constexpr double sx[4] = {1, -1, -1, 1};
  static constexpr double sy[4] = {1, 1, -1, -1};
  std::vector<Vec3> out;
  out.reserve(8);
  for (double sz : {-1.0, 1.0}) {
    for (int i = 0; i < 4; ++i) {
      out.push_back(center + r * Vec3(sx[i] * hl, sy[i] * hw, sz * hh));
    }
  }
  return out;
}

std::vector<Eigen::Vector2d> Box3D::footprint() const {
  const double c = std::cos(heading), s = std::sin(heading);
  const double hl = 0.5 * length(), hw = 0.5 * width();
  std::vector<Eigen::Vector2d> out;
  out.reserve(4);
  // Counter-clockwise: (+l,-w), (+l,+w), (-l,+w), (-l,-w).
  static constexpr double sx[4] = {1, 1, -1, -1};
  static constexpr double sy[4] = {-1, 1, 1, -1};
  for (int i = 0; i < 4; ++i) {
    const double lx = sx[i] * hl, ly = sy[i] * hw;
    out.emplace_back(center.x() + c * lx - s * ly, center.y() + s * lx + c * ly);
  }
  return out;
}

bool Box3D::contains(const Vec3& p) const {
  if (std::abs(p.z() - center.z()) > 0.5 * height()) return false;
  return contains_xy(p.x(), p.y());
}

bool Box3D::contains_xy(double x, double y) const {
  const double c = std::cos(heading), s = std::sin(heading);
  const double dx = x - center.x(), dy = y - center.y();
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * length() && std::abs(ly) <= 0.5 * width();
}

PixelRay pixel_to_ray(const CameraModel& cam, const Pixel& px) {
  if (!cam.in_bounds(px)) throw DomainError("pixel_to_ray: pixel outside the image");
  const Vec3 dir_cam((px.u - cam.cx) / cam.fx, (px.v - cam.cy) / cam.fy, 1.0);
  PixelRay ray;
  ray.origin = cam.extrinsics.translation;
  ray.direction = (cam.extrinsics.rotation * dir_cam).normalized();
  return ray;
}

Vec3 project_pixel_depth(const CameraModel& cam, const Pixel& px, double depth) {
  if (!(depth > 0.0)) throw DomainError("project_pixel_depth: depth must be positive");
  const Vec3 p_cam((px.u - cam.cx) / cam.fx * depth, (px.v - cam.cy) / cam.fy * depth, depth);
  return cam.extrinsics.apply(p_cam);
}

std::optional<PixelDepth> world_to_pixel(const CameraModel& cam, const Vec3& p) {
  const Vec3 q = cam.extrinsics.apply_inverse(p);
  if (!(q.z() > 0.0)) return std::nullopt;
  PixelDepth out;
  out.px.u = cam.fx * q.x() / q.z() + cam.cx;
  out.px.v = cam.fy * q.y() / q.z() + cam.cy;
  out.depth = q.z();
  return out;
}

Vec3 radar_cell_to_point(const RadarModel& radar, const CellIndex& cell) {
  if (cell.row < 0 || cell.col < 0 || cell.row >= radar.rows() || cell.col >= radar.cols()) {
    throw DomainError("radar_cell_to_point: cell outside the grid");
  }
  return {radar.x_min + (cell.row + 0.5) * radar.cell_size,
          radar.y_min + (cell.col + 0.5) * radar.cell_size, radar.sensor_height};
}

std::optional<CellIndex> radar_point_to_cell(const RadarModel& radar, double x, double y) {
  if (!radar.contains_xy(x, y)) return std::nullopt;
  // ceil(.)-1 resolves points equidistant from two centers to the lower index.
  const auto nearest = [](double offset, double cell, int n) {
    int i = static_cast<int>(std::ceil(offset / cell)) - 1;
    return std::clamp(i, 0, n - 1);
  };
  return CellIndex{nearest(x - radar.x_min, radar.cell_size, radar.rows()),
                   nearest(y - radar.y_min, radar.cell_size, radar.cols())};
}

std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

double polygon_area(std::span<const Eigen::Vector2d> poly) {
  const std::size_t n = poly.size();
  double a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

std::vector<Eigen::Vector2d> clip_convex_polygon(std::span<const Eigen::Vector2d> subject,
                                                 std::span<const Eigen::Vector2d> clip) {
  std::vector<Eigen::Vector2d> out(subject.begin(), subject.end());
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Eigen::Vector2d a = clip[e];
    const Eigen::Vector2d b = clip[(e + 1) % m];
    const auto side = [&](const Eigen::Vector2d& p) {
      return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    };
    std::vector<Eigen::Vector2d> in;
    in.swap(out);
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& p = in[i];
      const Eigen::Vector2d& q = in[(i + 1) % n];
      const double sp = side(p), sq = side(q);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
  }
  return out;
}

bool polygon_contains(std::span<const Eigen::Vector2d> poly, const Eigen::Vector2d& p) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    const double cr = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    if (cr < 0.0) return false;
  }
  return true;
}

std::optional<std::vector<Eigen::Vector2d>> project_box_to_image(const CameraModel& cam,
                                                                 const Box3D& box) {
  std::vector<Eigen::Vector2d> projected;
  for (const Vec3& c : box.corners()) {
    if (auto pd = world_to_pixel(cam, c)) projected.emplace_back(pd->px.u, pd->px.v);
  }
  if (projected.empty()) return std::nullopt;
  return convex_hull(std::move(projected));
}

void augment_flip_x(std::vector<Vec3>& points, std::vector<Box3D>& boxes) {
  for (auto& p : points) p.y() = -p.y();
  for (auto& b : boxes) {
    b.center.y() = -b.center.y();
    b.heading = normalize_angle(-b.heading);
  }
}

void augment_rotate_z(std::vector<Vec3>& points, std::vector<Box3D>& boxes, double angle) {
  const Mat3 r = rotation_z(angle);
  for (auto& p : points) p = r * p;
  for (auto& b : boxes) {
    b.center = r * b.center;
    b.heading = normalize_angle(b.heading + angle);
  }
}

}  // namespace cramfuse
