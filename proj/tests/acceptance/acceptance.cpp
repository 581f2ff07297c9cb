// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cramfuse/attention.hpp"
#include "cramfuse/experiment.hpp"
#include "cramfuse/fusion.hpp"
#include "cramfuse/losses.hpp"
#include "cramfuse/metrics.hpp"
#include "cramfuse/scene.hpp"
#include "cramfuse/voxel.hpp"
#include "oracles.hpp"

using namespace cramfuse;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// ---------------------------------------------------------------- gradients

using Objective = std::function<LossValue(std::span<const double>)>;

// Gradients smaller than this are compared in absolute terms; central
// differences cannot resolve them relative to roundoff.
constexpr double kGradFloor = 1e-6;

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
}

// Worst central-difference relative error over the coordinates of x.
double fd_error(const Objective& f, std::vector<double> x, double h = 1e-6) {
  const auto g = f(x).grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x).value;
    x[i] = x0 - h;
    const double dn = f(x).value;
    x[i] = x0;
    const double num = (up - dn) / (2 * h);
    worst = std::max(worst, relative_error(g[i], num));
  }
  return worst;
}

struct BoxInstance {
  Box3D gt;
  Vec3 anchor;
  std::vector<double> raw;
};

// Distance of a box-head output from the nondifferentiable sets of the box
// terms: overlap edges of the IoU surrogate, the smooth-L1 knee, and the
// residual knee of the bin loss.
double box_kink_distance(const BoxInstance& b, int bins) {
  const Box3D& gt = b.gt;
  const auto& raw = b.raw;
  const double c = std::cos(gt.heading), s = std::sin(gt.heading);
  const double dx = b.anchor.x() + raw[0] - gt.center.x(), dy = b.anchor.y() + raw[1] - gt.center.y();
  const double pu = c * dx + s * dy, pv = -s * dx + c * dy;
  const double l = std::exp(raw[3]), w = std::exp(raw[4]);
  double dist = 1e9;
  for (double e : {pu + l / 2 - gt.length() / 2, pu - l / 2 + gt.length() / 2, pv + w / 2 - gt.width() / 2,
                   pv - w / 2 + gt.width() / 2}) {
    dist = std::min(dist, std::abs(e));
  }
  const auto tgt = box_regression_target(b.anchor, gt);
  for (int k = 0; k < 6; ++k) dist = std::min(dist, std::abs(std::abs(raw[k] - tgt[k]) - 1.0));
  const double res = raw[6 + bins] - encode_heading(gt.heading, bins).residual;
  return std::min(dist, std::abs(std::abs(res) - 1.0));
}

BoxInstance random_box_instance(std::mt19937_64& rng, int bins) {
  std::uniform_real_distribution<double> u(-1, 1);
  for (;;) {
    BoxInstance b;
    b.gt = oracle::box(10 + u(rng), u(rng), 4 + u(rng), 1.8 + 0.3 * u(rng), kPi * u(rng));
    b.anchor = b.gt.center + Vec3(0.8 * u(rng), 0.8 * u(rng), 0.2 * u(rng));
    b.raw = uniform(rng, 7 + bins, -1, 1);
    b.raw[3] = std::log(b.gt.length()) + 0.2 * u(rng);
    b.raw[4] = std::log(b.gt.width()) + 0.2 * u(rng);
    if (box_kink_distance(b, bins) > 1e-3) return b;
  }
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kInstances = 100, kBins = 12;
  std::map<std::string, double> worst;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1, 1);
  const LossWeights lw;

  for (int i = 0; i < kInstances; ++i) {
    // Segmentation focal loss.
    std::vector<std::uint8_t> labels(8);
    for (auto& v : labels) v = rng() & 1;
    worst["seg_focal"] = std::max(worst["seg_focal"], fd_error([&](std::span<const double> x) {
      return seg_focal_loss(x, labels, 2.0);
    }, uniform(rng, 8, 0.02, 0.98)));

    // Depth L2 over valid pixels.
    const auto gt_depth = uniform(rng, 8, 2, 50);
    std::vector<std::uint8_t> valid(8);
    for (auto& v : valid) v = (rng() % 3) != 0;
    worst["depth_l2"] = std::max(worst["depth_l2"], fd_error([&](std::span<const double> x) {
      return depth_l2_loss(x, gt_depth, valid);
    }, uniform(rng, 8, 2, 50)));

    // Heatmap focal loss with both positive and negative entries.
    auto h_gt = uniform(rng, 8, 0, 1);
    h_gt[0] = 1.0;
    worst["heatmap_focal"] = std::max(worst["heatmap_focal"], fd_error([&](std::span<const double> x) {
      return heatmap_focal_loss(x, h_gt, 4, 2, 0.2);
    }, uniform(rng, 8, 0.02, 0.98)));

    // Smooth L1 away from the knee.
    const auto sl_gt = uniform(rng, 6, -2, 2);
    auto sl_pred = uniform(rng, 6, -2, 2);
    for (std::size_t k = 0; k < sl_pred.size(); ++k) {
      while (std::abs(std::abs(sl_pred[k] - sl_gt[k]) - 1.0) < 1e-3) sl_pred[k] += 0.01;
    }
    worst["smooth_l1"] = std::max(worst["smooth_l1"], fd_error([&](std::span<const double> x) {
      return smooth_l1(x, sl_gt);
    }, sl_pred));

    // Heading bin loss: logits and residual together.
    const double theta = kPi * u(rng);
    const double res_target = encode_heading(theta, kBins).residual;
    auto bin_x = uniform(rng, kBins + 1, -2, 2);
    while (std::abs(std::abs(bin_x[kBins] - res_target) - 1.0) < 1e-3) bin_x[kBins] += 0.01;
    worst["bin"] = std::max(worst["bin"], fd_error([&](std::span<const double> x) {
      return heading_bin_loss(x.first(kBins), x[kBins], theta);
    }, bin_x));

    // IoU surrogate away from the overlap edges.
    const Box3D gt = oracle::box(10 + u(rng), u(rng), 4 + u(rng), 1.8 + 0.3 * u(rng), kPi * u(rng));
    std::vector<double> iou_x;
    for (;;) {
      const double c = std::cos(gt.heading), s = std::sin(gt.heading);
      const double px = gt.center.x() + 0.8 * u(rng), py = gt.center.y() + 0.8 * u(rng);
      const double l = gt.length() * (1 + 0.3 * u(rng)), w = gt.width() * (1 + 0.3 * u(rng));
      const double du = c * (px - gt.center.x()) + s * (py - gt.center.y());
      const double dv = -s * (px - gt.center.x()) + c * (py - gt.center.y());
      double dist = 1e9;
      for (double e : {du + l / 2 - gt.length() / 2, du - l / 2 + gt.length() / 2, dv + w / 2 - gt.width() / 2,
                       dv - w / 2 + gt.width() / 2}) {
        dist = std::min(dist, std::abs(e));
      }
      if (dist > 1e-3) {
        iou_x = {px, py, l, w};
        break;
      }
    }
    worst["iou"] = std::max(worst["iou"], fd_error([&](std::span<const double> x) {
      return iou_surrogate_loss(x, gt);
    }, iou_x));

    // Weighted composite over every prediction the objective touches.
    const BoxInstance bi = random_box_instance(rng, kBins);
    const auto p_seg = uniform(rng, 8, 0.02, 0.98), p_depth = uniform(rng, 8, 2, 50);
    const auto p_hm = uniform(rng, 8, 0.02, 0.98);
    std::vector<double> x = p_seg;
    x.insert(x.end(), p_depth.begin(), p_depth.end());
    x.insert(x.end(), p_hm.begin(), p_hm.end());
    x.insert(x.end(), bi.raw.begin(), bi.raw.end());
    // The weighted sum is linear in its parts, so the perturbed parts are
    // differenced before weighting; differencing the full sum would lose the
    // small heatmap gradients to cancellation against the large depth term.
    const auto parts = [&](std::span<const double> v, std::vector<double>* grad) {
      const auto seg = seg_focal_loss(v.subspan(0, 8), labels, 2.0);
      const auto dep = depth_l2_loss(v.subspan(8, 8), gt_depth, valid);
      const auto hm = heatmap_focal_loss(v.subspan(16, 8), h_gt, 4, 2, 0.2);
      const auto box = box_loss(v.subspan(24), bi.anchor, bi.gt, kBins);
      if (grad) {
        for (double g : seg.grad) grad->push_back(lw.lambda_seg * g);
        for (double g : dep.grad) grad->push_back(lw.lambda_depth * g);
        for (double g : hm.grad) grad->push_back(lw.lambda_hm * g);
        for (double g : box.grad) grad->push_back(g);
      }
      return LossParts{seg.value, dep.value, hm.value, box.smooth_l1, box.bin, box.iou};
    };
    std::vector<double> grad;
    parts(x, &grad);
    const double h = 1e-6;
    for (std::size_t k = 0; k < x.size(); ++k) {
      std::vector<double> up = x, dn = x;
      up[k] += h;
      dn[k] -= h;
      const LossParts a = parts(up, nullptr), b = parts(dn, nullptr);
      const LossParts diff{a.seg - b.seg, a.depth - b.depth, a.hm - b.hm, a.box_smooth_l1 - b.box_smooth_l1,
                           a.box_bin - b.box_bin, a.box_iou - b.box_iou};
      worst["composite"] = std::max(worst["composite"], relative_error(grad[k], total_loss(diff, lw).total / (2 * h)));
    }
  }

  const double secs = seconds_since(t0);
  bool pass = secs < 30.0;
  std::string detail;
  for (const auto& [name, err] : worst) {
    const double tol = name == "iou" ? 1e-3 : 1e-4;
    pass &= err < tol;
    detail += fmt("%s %.2e, ", name.c_str(), err);
  }
  detail += fmt("%d instances each, %.1f s", kInstances, secs);
  return {pass, detail};
}

// ---------------------------------------------------------------- attention

Outcome criterion_attention_contracts() {
  constexpr int kTrials = 10000;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> n(0, 1);
  double worst_sum = 0.0, worst_perm = 0.0, worst_shift = 0.0;
  int out_of_range = 0, uniform_miss = 0, negative = 0;
  for (int t = 0; t < kTrials; ++t) {
    const int d = 1 + static_cast<int>(rng() % 24), s = static_cast<int>(rng() % 5);
    const double eps = 0.01 + 0.17 * u(rng), d_est = 0.5 + 80 * u(rng);
    const double scale = std::pow(10.0, 3 * u(rng) - 1);  // logits up to ~1e3
    Vec3 dir(n(rng), n(rng), n(rng));
    dir.normalize();
    const PixelRay ray{Vec3(n(rng), n(rng), 1 + n(rng)), dir};
    const RaySamples samples = sample_along_ray(ray, d_est, s, eps);
    const int m = 2 * s + 1;
    Eigen::MatrixXd keys(m, d);
    Eigen::VectorXd q(d);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < d; ++b) keys(a, b) = scale * n(rng);
    for (int b = 0; b < d; ++b) q(b) = n(rng);

    const auto r = cross_attend(q, keys, samples);
    double sum = 0.0;
    for (double w : r.weights) sum += w, negative += w < 0.0;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    const double depth = (r.location - ray.origin).dot(dir);
    const double lo = d_est * (1 - eps * s), hi = d_est * (1 + eps * s), slack = 1e-9 * hi;
    out_of_range += depth < lo - slack || depth > hi + slack;

    const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(m, d, n(rng));
    const double uniform_depth = (cross_attend(q, flat, samples).location - ray.origin).dot(dir);
    uniform_miss += std::abs(uniform_depth - d_est) > 1e-12 * d_est;

    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    RaySamples ps = samples;
    Eigen::MatrixXd pk(m, d);
    for (int a = 0; a < m; ++a) {
      ps.locations[a] = samples.locations[perm[a]];
      ps.depths[a] = samples.depths[perm[a]];
      ps.offsets[a] = samples.offsets[perm[a]];
      pk.row(a) = keys.row(perm[a]);
    }
    worst_perm = std::max(worst_perm, (cross_attend(q, pk, ps).location - r.location).norm());

    Eigen::RowVectorXd c(d);
    for (int b = 0; b < d; ++b) c(b) = n(rng);
    const auto shifted = cross_attend(q, keys.rowwise() + c, samples);
    for (int a = 0; a < m; ++a) worst_shift = std::max(worst_shift, std::abs(shifted.weights[a] - r.weights[a]));
  }
  const bool pass = worst_sum <= 1e-9 && negative == 0 && out_of_range == 0 && uniform_miss == 0 &&
                    worst_perm <= 1e-12 && worst_shift <= 1e-9;
  return {pass, fmt("%d instances: |sum w - 1| max %.1e, negative %d, depth outside band %d, uniform-key misses %d, "
                    "permutation drift %.1e, key-shift drift %.1e",
                    kTrials, worst_sum, negative, out_of_range, uniform_miss, worst_perm, worst_shift)};
}

Outcome criterion_attention_efficacy() {
  constexpr int kTrials = 500;
  constexpr double kBias = 1.08, kPeakSigma = 0.5, kPeakAmp = 0.8;
  const CameraModel cam = default_camera();
  const RadarModel radar = default_radar();
  const PipelineConfig cfg = default_pipeline_config();
  const Vec3 axis = cam.extrinsics.rotation.col(2);
  SceneConfig one;
  one.min_boxes = one.max_boxes = 1;
  int closer = 0;
  double mean_before = 0.0, mean_after = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    const std::uint64_t seed = child_seed(303, static_cast<std::uint64_t>(t));
    std::mt19937_64 rng(seed);
    const Scene scene = generate_scene(seed, one, cam, radar);
    const CameraRendering view = render_camera(scene, cam, CameraRenderConfig{}, child_seed(seed, 1));

    // A pixel on the box surface and its analytic range along the ray.
    std::vector<std::pair<CellIndex, double>> hits;
    for (int r = 0; r < cam.height; ++r) {
      for (int c = 0; c < cam.width; ++c) {
        const auto hit = ray_box_intersection(pixel_to_ray(cam, {double(c), double(r)}), scene.boxes[0]);
        if (hit) hits.push_back({{r, c}, *hit});
      }
    }
    const auto [px, range] = hits[rng() % hits.size()];
    const PixelRay ray = pixel_to_ray(cam, {double(px.col), double(px.row)});
    const Vec3 target = ray.at(range);

    // Background clutter plus a Gaussian return centered on the surface point.
    Scene empty;
    empty.bounds = scene.bounds;
    Image rf = render_radar(empty, radar, RadarRenderConfig{}, child_seed(seed, 2));
    for (int r = 0; r < radar.rows(); ++r) {
      for (int c = 0; c < radar.cols(); ++c) {
        const Vec3 p = radar_cell_to_point(radar, {r, c});
        const double d2 = std::pow(p.x() - target.x(), 2) + std::pow(p.y() - target.y(), 2);
        rf(r, c) = std::min(1.0f, rf(r, c) + static_cast<float>(kPeakAmp * std::exp(-d2 / (2 * kPeakSigma * kPeakSigma))));
      }
    }

    DepthMap depth(cam.height, cam.width, 1.0);
    depth(px.row, px.col) = kBias * range * ray.direction.dot(axis);
    const auto out = refine_camera_points({px}, depth, extract_features(view.camera_image, cfg.d),
                                          extract_features(rf, cfg.d), cam, radar, cfg);
    const double refined = (out[0].location - ray.origin).dot(ray.direction);
    const double before = std::abs(out[0].ray_depth - range), after = std::abs(refined - range);
    closer += after < before;
    mean_before += before / kTrials;
    mean_after += after / kTrials;
  }
  const double rate = static_cast<double>(closer) / kTrials;
  return {rate >= 0.95, fmt("refined depth closer to truth in %d/%d trials (%.1f%%), mean error %.3f m -> %.3f m",
                            closer, kTrials, 100 * rate, mean_before, mean_after)};
}

// ---------------------------------------------------------------- dropout

Outcome criterion_dropout() {
  constexpr int kTrials = 100000;
  constexpr double kP = 0.2;
  std::vector<Vec3> cp = {{5, 0, 0}, {6, 1, 0}}, rp = {{7, 0, 0}, {8, -1, 0}};
  const std::vector<std::vector<double>> cf = {{0.5, 0.25}, {0.75, 1}}, rf = {{-0.5, 0.3}, {0.2, 0.9}};
  const FusedCloud cloud = fuse(cp, cf, rp, rf);
  int both = 0, cam = 0, rad = 0, mismatch = 0;
  for (int t = 0; t < kTrials; ++t) {
    const auto seed = static_cast<std::uint64_t>(t);
    const auto out = sensor_dropout(cloud, kP, seed, DropoutLocation::point_feature);
    bool cam_zero = true, rad_zero = true;
    for (std::size_t i = 0; i < out.cloud.size(); ++i) {
      const auto row = out.cloud.row(i);
      const bool zero = row[0] == 0.0 && row[1] == 0.0;
      (out.cloud.source[i] == Modality::camera ? cam_zero : rad_zero) &= zero;
    }
    both += cam_zero && rad_zero;
    const DropTarget drawn = draw_dropout(kP, seed).dropped;
    const DropTarget seen = cam_zero ? DropTarget::camera : rad_zero ? DropTarget::radar : DropTarget::none;
    mismatch += drawn != seen;
    cam += drawn == DropTarget::camera;
    rad += drawn == DropTarget::radar;
  }
  const double mean = kTrials * kP / 2, sd = std::sqrt(kTrials * (kP / 2) * (1 - kP / 2));
  const bool pass = both == 0 && mismatch == 0 && std::abs(cam - mean) <= 3 * sd && std::abs(rad - mean) <= 3 * sd;
  return {pass, fmt("%d trials: both dropped %d, draw/apply mismatches %d, camera %d, radar %d "
                    "(expected %.0f +- %.0f)",
                    kTrials, both, mismatch, cam, rad, mean, 3 * sd)};
}

// ---------------------------------------------------------------- voxels

FusedCloud random_cloud(std::mt19937_64& rng, int n, const Vec3& lo, const Vec3& hi, int d) {
  std::uniform_real_distribution<double> u(0, 1), f(-1, 1);
  std::vector<Vec3> cp, rp;
  std::vector<std::vector<double>> cf, rf;
  for (int i = 0; i < n; ++i) {
    const Vec3 p = lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(hi - lo);
    std::vector<double> v(d);
    for (auto& x : v) x = f(rng);
    (i % 3 ? cp : rp).push_back(p);
    (i % 3 ? cf : rf).push_back(v);
  }
  return fuse(cp, cf, rp, rf);
}

// Aggregate computed by scanning a dense occupancy array.
std::vector<std::vector<double>> dense_aggregate(const VoxelGrid& g, int r, int side) {
  std::vector<const VoxelCell*> dense(static_cast<std::size_t>(side) * side * side, nullptr);
  const auto at = [&](int x, int y, int z) -> const VoxelCell*& {
    return dense[(static_cast<std::size_t>(x) * side + y) * side + z];
  };
  for (const auto& c : g.cells) at(c.index[0], c.index[1], c.index[2]) = &c;
  const int rz = g.config.mode == VoxelMode::pillar ? 0 : r;
  std::vector<std::vector<double>> out;
  for (const auto& c : g.cells) {
    std::vector<double> sum(g.dim, 0.0);
    int count = 0;
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -rz; dz <= rz; ++dz) {
          const int x = c.index[0] + dx, y = c.index[1] + dy, z = c.index[2] + dz;
          if (x < 0 || y < 0 || z < 0 || x >= side || y >= side || z >= side || !at(x, y, z)) continue;
          ++count;
          for (int k = 0; k < g.dim; ++k) sum[k] += at(x, y, z)->feature[k];
        }
      }
    }
    std::vector<double> row = c.feature;
    for (int k = 0; k < g.dim; ++k) row.push_back(sum[k] / count);
    row.push_back(count / ((2.0 * r + 1) * (2.0 * r + 1)));
    out.push_back(row);
  }
  return out;
}

Outcome criterion_voxels() {
  std::mt19937_64 rng(505);
  VoxelGridConfig cfg;
  cfg.voxel_size = 0.5;
  const FusedCloud cloud = random_cloud(rng, 4000, Vec3(-110, -20, -6), Vec3(110, 20, 6), 3);
  const VoxelGrid base = voxelize_dynamic(cloud, cfg);

  std::size_t inside = 0, members = 0;
  for (const auto& p : cloud.points) {
    inside += (p.array() >= cfg.region_min.array()).all() && (p.array() < cfg.region_max.array()).all();
  }
  for (const auto& c : base.cells) members += c.members.size();

  int set_mismatch = 0;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> perm(cloud.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    FusedCloud shuffled;
    shuffled.dim = cloud.dim;
    for (auto i : perm) shuffled.push(cloud.points[i], cloud.row(i), cloud.source[i]);
    const VoxelGrid g = voxelize_dynamic(shuffled, cfg);
    if (g.cells.size() != base.cells.size()) {
      ++set_mismatch;
      continue;
    }
    for (std::size_t k = 0; k < g.cells.size(); ++k) {
      set_mismatch += g.cells[k].index != base.cells[k].index || g.cells[k].center != base.cells[k].center ||
                      g.cells[k].members.size() != base.cells[k].members.size();
      for (int j = 0; j < g.dim; ++j) worst = std::max(worst, std::abs(g.cells[k].feature[j] - base.cells[k].feature[j]));
    }
  }

  // Dense comparison inside a 50^3 region.
  int dense_mismatch = 0;
  std::size_t dense_cells = 0;
  for (auto mode : {VoxelMode::voxel3d, VoxelMode::pillar}) {
    VoxelGridConfig small;
    small.region_min = Vec3(0, 0, 0);
    small.region_max = Vec3(10, 10, 10);
    small.voxel_size = 0.2;
    small.mode = mode;
    const VoxelGrid g = voxelize_dynamic(random_cloud(rng, 6000, small.region_min, small.region_max, 2), small);
    for (int r : {1, 2, 3}) {
      const VoxelGrid agg = neighborhood_aggregate(g, r);
      const auto ref = dense_aggregate(g, r, 50);
      dense_cells += ref.size();
      for (std::size_t k = 0; k < ref.size(); ++k) dense_mismatch += agg.cells[k].feature != ref[k];
    }
  }
  const bool pass = set_mismatch == 0 && worst <= 1e-12 && members == inside && dense_mismatch == 0;
  return {pass, fmt("100 shuffles: cell-set mismatches %d, max feature drift %.1e; points %zu in region, %zu assigned; "
                    "dense aggregate mismatches %d of %zu cells",
                    set_mismatch, worst, inside, members, dense_mismatch, dense_cells)};
}

// ---------------------------------------------------------------- metrics

Outcome criterion_metrics() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(-1, 1), v(0, 1);
  double worst_iou = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Box3D a = oracle::box(u(rng), u(rng), 2 + u(rng), 1.5 + u(rng) / 2, kPi * u(rng));
    const Box3D b = oracle::box(u(rng), u(rng), 2 + u(rng), 1.5 + u(rng) / 2, kPi * u(rng));
    worst_iou = std::max(worst_iou, std::abs(rotated_bev_iou(a, b) - oracle::monte_carlo_iou(a, b, 1000000, rng)));
  }
  const double third = rotated_bev_iou(oracle::box(0, 0, 1, 1, 0), oracle::box(0.5, 0, 1, 1, 0));

  int ap_mismatch = 0, ap_checked = 0;
  double worst_ap = 0.0;
  for (int trial = 0; trial < 5000; ++trial) {
    const int ng = 1 + static_cast<int>(rng() % 3), nd = static_cast<int>(rng() % 5);
    std::vector<Box3D> gts, dets;
    for (int g = 0; g < ng; ++g) gts.push_back(oracle::box(10 + 3 * g, 0, 2, 1, 0));
    for (int d = 0; d < nd; ++d) {
      const int near = static_cast<int>(rng() % ng);
      dets.push_back(oracle::box(10 + 3 * near + 2.4 * v(rng) - 1.2, 0.6 * v(rng) - 0.3, 2, 1, 0, v(rng)));
    }
    const double expect = oracle::exhaustive_ap(dets, gts, 0.5);
    if (expect < 0.0) {
      ++ap_mismatch;
      continue;
    }
    ++ap_checked;
    const double got = bev_ap({{dets, gts}}, 0.5).buckets[0].ap;
    worst_ap = std::max(worst_ap, std::abs(got - expect));
    ap_mismatch += std::abs(got - expect) > 1e-12;
  }
  const bool pass = worst_iou <= 2e-3 && std::abs(third - 1.0 / 3.0) <= 1e-12 && ap_mismatch == 0;
  return {pass, fmt("IoU vs Monte Carlo over 1000 pairs max %.2e; offset squares %.15f; AP vs exhaustive "
                    "%d instances, %d mismatches, max diff %.1e",
                    worst_iou, third, ap_checked, ap_mismatch, worst_ap)};
}

// ---------------------------------------------------------------- end to end

struct Models {
  Dataset train, test;
  ExperimentConfig cfg;
  double fusion_train_seconds = 0.0;
  Model fusion;  // attention on, dropout on
  Model camera_only, radar_only;
  std::optional<Model> att_plain, plain_drop, plain_plain;
};

Models& models() {
  static std::optional<Models> m;
  if (!m) {
    m.emplace();
    m->cfg = config_from_json(nlohmann::json::object());
    const Dataset data = experiment_dataset(m->cfg);
    m->train = split_view(data, "train");
    m->test = split_view(data, "test");
    const auto t0 = std::chrono::steady_clock::now();
    const Model base = train_stage1(m->cfg, m->train);
    m->fusion = train_variant(base, m->cfg, m->train, SensorMode::fusion, true, true);
    m->fusion_train_seconds = seconds_since(t0);
    m->camera_only = train_variant(base, m->cfg, m->train, SensorMode::camera_only, true, true);
    m->radar_only = train_variant(base, m->cfg, m->train, SensorMode::radar_only, true, true);
    m->att_plain = train_variant(base, m->cfg, m->train, SensorMode::fusion, true, false);
    m->plain_drop = train_variant(base, m->cfg, m->train, SensorMode::fusion, false, true);
    m->plain_plain = train_variant(base, m->cfg, m->train, SensorMode::fusion, false, false);
  }
  return *m;
}

Outcome criterion_end_to_end() {
  Models& m = models();
  const double fusion = evaluate(m.fusion, m.test, 0.5).ap();
  const double cam = evaluate(m.camera_only, m.test, 0.5).ap();
  const double rad = evaluate(m.radar_only, m.test, 0.5).ap();
  const bool pass = m.fusion_train_seconds <= 300.0 && fusion >= 0.60 && fusion >= cam && fusion >= rad;
  return {pass, fmt("%zu train / %zu test frames; fusion AP %.4f (trained in %.1f s), camera-only %.4f, radar-only %.4f",
                    m.train.samples.size(), m.test.samples.size(), fusion, m.fusion_train_seconds, cam, rad)};
}

Outcome criterion_ablations() {
  Models& m = models();
  const auto noisy = [](double sigma) { return [sigma](const Sample& s) { return noisy_camera(s, sigma); }; };
  const double sigma = m.cfg.noise_sigma;
  const double ap_tt = evaluate(m.fusion, m.test, 0.5, noisy(sigma)).ap();
  const double ap_tf = evaluate(*m.att_plain, m.test, 0.5, noisy(sigma)).ap();
  const double ap_ft = evaluate(*m.plain_drop, m.test, 0.5, noisy(sigma)).ap();
  const double ap_ff = evaluate(*m.plain_plain, m.test, 0.5, noisy(sigma)).ap();
  const bool attention_ok = ap_tt >= ap_ft && ap_tf >= ap_ff;
  const bool dropout_ok = ap_tt >= ap_tf && ap_ft >= ap_ff;
  std::string detail = fmt("noisy grid (att,drop) 11 %.4f 10 %.4f 01 %.4f 00 %.4f: attention %s, dropout %s; ", ap_tt,
                           ap_tf, ap_ft, ap_ff, attention_ok ? "ok" : "VIOLATED", dropout_ok ? "ok" : "VIOLATED");

  bool rf_ok = true;
  double prev = 2.0, ap0 = 0.0, ap_last = 0.0;
  detail += "rf";
  for (double t : m.cfg.rf_thresholds) {
    const double ap = evaluate(m.fusion, m.test, 0.5, [t](const Sample& s) {
                        SensorFrame f = s.frame;
                        f.radar_rf = apply_rf_threshold(f.radar_rf, t);
                        return f;
                      }).ap();
    detail += fmt(" %.1f:%.4f", t, ap);
    rf_ok &= ap <= prev;
    prev = ap;
    if (t == m.cfg.rf_thresholds.front()) ap0 = ap;
    ap_last = ap;
  }
  rf_ok &= ap_last < ap0;
  detail += fmt(" %s; ", rf_ok ? "ok" : "VIOLATED");

  bool gap_ok = true;
  detail += "gap";
  for (double s : {0.05, 0.1, 0.2, 0.4}) {
    const double gap = evaluate(m.fusion, m.test, 0.5, noisy(s)).ap() - evaluate(*m.att_plain, m.test, 0.5, noisy(s)).ap();
    detail += fmt(" %.2f:%+.4f", s, gap);
    gap_ok &= gap >= 0.0;
  }
  detail += fmt(" %s; ", gap_ok ? "ok" : "VIOLATED");

  bool tau_ok = true;
  std::size_t prev_points = std::numeric_limits<std::size_t>::max();
  detail += "points";
  for (double tau : m.cfg.tau_list) {
    Model t = m.fusion;
    t.config.tau = tau;
    std::size_t points = 0;
    for (const auto& s : m.test.samples) {
      const Stage1 s1 = run_stage1(t, s.frame);
      const FrameCloud fc = build_cloud(t, s1, m.test.camera, m.test.radar);
      points += fc.camera_points + fc.radar_points;
    }
    detail += fmt(" %.2f:%zu", tau, points);
    tau_ok &= points < prev_points;
    prev_points = points;
  }
  detail += fmt(" %s", tau_ok ? "ok" : "VIOLATED");
  return {attention_ok && dropout_ok && rf_ok && gap_ok && tau_ok, detail};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

Outcome criterion_determinism() {
  const auto root = std::filesystem::temp_directory_path() / "cramfuse_acceptance";
  std::filesystem::remove_all(root);
  std::vector<std::filesystem::path> dirs = {root / "a", root / "b"};
  for (const auto& dir : dirs) {
    ExperimentConfig cfg = config_from_json(nlohmann::json::object());
    cfg.out_dir = dir;
    cmd_run(cfg);
  }
  std::string detail;
  bool pass = true;
  for (const char* name : {"detections.json", "eval.csv", "bev.svg"}) {
    const std::string a = slurp(dirs[0] / name), b = slurp(dirs[1] / name);
    const bool same = !a.empty() && a == b;
    pass &= same;
    detail += fmt("%s %s (%zu bytes) ", name, same ? "identical" : "DIFFERS", a.size());
  }
  pass &= std::filesystem::exists(dirs[0] / "timing.json") && std::filesystem::exists(dirs[1] / "timing.json");
  std::filesystem::remove_all(root);
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"gradient suite", criterion_gradients},
      {"attention contracts", criterion_attention_contracts},
      {"attention efficacy", criterion_attention_efficacy},
      {"dropout contracts", criterion_dropout},
      {"voxelization", criterion_voxels},
      {"metric oracles", criterion_metrics},
      {"end-to-end detection", criterion_end_to_end},
      {"ablation trends", criterion_ablations},
      {"determinism", criterion_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d %s: %s [%.1f s] %s\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL", seconds_since(t0),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
