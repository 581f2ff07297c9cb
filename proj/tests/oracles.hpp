// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations shared by the unit and acceptance
// tests. None of these call into the library code they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "cramfuse/geometry.hpp"
#include "cramfuse/voxel.hpp"

namespace oracle {

using cramfuse::Box3D;
using cramfuse::Vec3;

inline Box3D box(double x, double y, double l, double w, double heading, double score = 1.0) {
  Box3D b;
  b.center = Vec3(x, y, 0.8);
  b.size = Vec3(l, w, 1.6);
  b.heading = heading;
  b.score = score;
  return b;
}

inline bool inside_bev(const Box3D& b, double x, double y) {
  const double c = std::cos(b.heading), s = std::sin(b.heading);
  const double dx = x - b.center.x(), dy = y - b.center.y();
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  return std::abs(u) <= 0.5 * b.length() && std::abs(v) <= 0.5 * b.width();
}

/// Stratified Monte-Carlo IoU over the bounding square of both boxes.
inline double monte_carlo_iou(const Box3D& a, const Box3D& b, int samples, std::mt19937_64& rng) {
  const double ra = 0.5 * std::hypot(a.length(), a.width()), rb = 0.5 * std::hypot(b.length(), b.width());
  const double x0 = std::min(a.center.x() - ra, b.center.x() - rb), x1 = std::max(a.center.x() + ra, b.center.x() + rb);
  const double y0 = std::min(a.center.y() - ra, b.center.y() - rb), y1 = std::max(a.center.y() + ra, b.center.y() + rb);
  const int side = static_cast<int>(std::sqrt(static_cast<double>(samples)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long in_a = 0, in_b = 0, both = 0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double x = x0 + (x1 - x0) * (i + u(rng)) / side, y = y0 + (y1 - y0) * (j + u(rng)) / side;
      const bool pa = inside_bev(a, x, y), pb = inside_bev(b, x, y);
      in_a += pa, in_b += pb, both += pa && pb;
    }
  }
  const double uni = static_cast<double>(in_a + in_b - both);
  return uni > 0 ? both / uni : 0.0;
}

/// Axis-aligned BEV IoU in closed form.
inline double axis_aligned_iou(const Box3D& a, const Box3D& b) {
  const double ix = std::max(0.0, std::min(a.center.x() + a.length() / 2, b.center.x() + b.length() / 2) -
                                      std::max(a.center.x() - a.length() / 2, b.center.x() - b.length() / 2));
  const double iy = std::max(0.0, std::min(a.center.y() + a.width() / 2, b.center.y() + b.width() / 2) -
                                      std::max(a.center.y() - a.width() / 2, b.center.y() - b.width() / 2));
  const double inter = ix * iy;
  return inter / (a.length() * a.width() + b.length() * b.width() - inter);
}

/// Single-frame AP for axis-aligned boxes with distinct scores. Enumerates
/// every partial assignment of detections to ground truths, keeps the one
/// that matches each detection (in descending score) to the best still-free
/// overlapping ground truth, and integrates interpolated precision over each
/// recall step.
inline double exhaustive_ap(const std::vector<Box3D>& dets, const std::vector<Box3D>& gts, double thr) {
  if (gts.empty()) return 0.0;
  std::vector<int> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return dets[a].score > dets[b].score; });
  std::vector<std::vector<int>> valid;
  std::vector<int> cur(dets.size(), -1);
  std::function<void(std::size_t, std::vector<bool>&)> rec = [&](std::size_t k, std::vector<bool>& used) {
    if (k == order.size()) {
      valid.push_back(cur);
      return;
    }
    const int d = order[k];
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = axis_aligned_iou(dets[d], gts[g]);
      if (!used[g] && iou >= thr && iou > best_iou) best = static_cast<int>(g), best_iou = iou;
    }
    for (int g = -1; g < static_cast<int>(gts.size()); ++g) {
      if (g >= 0 && (used[g] || axis_aligned_iou(dets[d], gts[g]) < thr)) continue;
      if (g != best) continue;
      cur[d] = g;
      if (g >= 0) used[g] = true;
      rec(k + 1, used);
      if (g >= 0) used[g] = false;
      cur[d] = -1;
    }
  };
  std::vector<bool> used(gts.size(), false);
  rec(0, used);
  if (valid.size() != 1) return -1.0;
  std::vector<double> prec, recall;
  int tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    tp += valid[0][order[k]] >= 0;
    prec.push_back(static_cast<double>(tp) / (k + 1));
    recall.push_back(static_cast<double>(tp) / gts.size());
  }
  double ap = 0.0;
  for (int level = 1; level <= tp; ++level) {
    const double r = static_cast<double>(level) / gts.size();
    double pmax = 0.0;
    for (std::size_t k = 0; k < prec.size(); ++k) {
      if (recall[k] >= r - 1e-15) pmax = std::max(pmax, prec[k]);
    }
    ap += pmax / gts.size();
  }
  return ap;
}

/// Dense scan of the (2r+1)^3 (or (2r+1)^2 in pillar mode) neighborhood of
/// every occupied cell. Returns per-cell [mean neighbor feature, count].
inline std::vector<std::vector<double>> dense_neighborhood(const cramfuse::VoxelGrid& g, int r, bool pillar) {
  std::map<cramfuse::VoxelIndex, const cramfuse::VoxelCell*> occ;
  for (const auto& c : g.cells) occ[c.index] = &c;
  const double norm = (2.0 * r + 1) * (2.0 * r + 1);
  std::vector<std::vector<double>> out;
  for (const auto& c : g.cells) {
    std::vector<double> sum(g.dim, 0.0);
    int n = 0;
    const int rz = pillar ? 0 : r;
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -rz; dz <= rz; ++dz) {
          const auto it = occ.find({c.index[0] + dx, c.index[1] + dy, c.index[2] + dz});
          if (it == occ.end()) continue;
          ++n;
          for (int k = 0; k < g.dim; ++k) sum[k] += it->second->feature[k];
        }
      }
    }
    std::vector<double> row = c.feature;
    for (int k = 0; k < g.dim; ++k) row.push_back(sum[k] / n);
    row.push_back(n / norm);
    out.push_back(row);
  }
  return out;
}

}  // namespace oracle
