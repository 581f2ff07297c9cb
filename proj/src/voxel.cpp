// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cramfuse {

std::optional<std::size_t> VoxelGrid::find(const VoxelIndex& index) const {
  const auto it = std::lower_bound(cells.begin(), cells.end(), index,
                                   [](const VoxelCell& c, const VoxelIndex& k) { return c.index < k; });
  if (it == cells.end() || it->index != index) return std::nullopt;
  return static_cast<std::size_t>(it - cells.begin());
}

std::optional<VoxelIndex> voxel_index(const VoxelGridConfig& cfg, const Vec3& p) {
  VoxelIndex idx{};
  for (int k = 0; k < 3; ++k) {
    if (!(p[k] >= cfg.region_min[k] && p[k] < cfg.region_max[k])) return std::nullopt;
    idx[k] = static_cast<int>(std::floor((p[k] - cfg.region_min[k]) / cfg.voxel_size));
  }
  if (cfg.mode == VoxelMode::pillar) idx[2] = 0;
  return idx;
}

Vec3 voxel_center(const VoxelGridConfig& cfg, const VoxelIndex& index) {
  Vec3 c;
  for (int k = 0; k < 3; ++k) c[k] = cfg.region_min[k] + (index[k] + 0.5) * cfg.voxel_size;
  if (cfg.mode == VoxelMode::pillar) c.z() = 0.5 * (cfg.region_min.z() + cfg.region_max.z());
  return c;
}

VoxelGrid voxelize_dynamic(const FusedCloud& cloud, const VoxelGridConfig& cfg, Exec exec) {
  cfg.validate();
  const auto n = static_cast<std::ptrdiff_t>(cloud.size());
  std::vector<std::optional<VoxelIndex>> idx(n);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) idx[i] = voxel_index(cfg, cloud.points[i]);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) idx[i] = voxel_index(cfg, cloud.points[i]);
  }
  std::vector<std::pair<VoxelIndex, std::size_t>> keyed;
  keyed.reserve(n);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (idx[i]) keyed.emplace_back(*idx[i], static_cast<std::size_t>(i));
  }
  std::sort(keyed.begin(), keyed.end());

  VoxelGrid grid;
  grid.config = cfg;
  grid.dim = cloud.dim;
  for (std::size_t i = 0; i < keyed.size();) {
    std::size_t j = i;
    VoxelCell cell;
    cell.index = keyed[i].first;
    cell.center = voxel_center(cfg, cell.index);
    while (j < keyed.size() && keyed[j].first == cell.index) cell.members.push_back(keyed[j++].second);
    grid.cells.push_back(std::move(cell));
    i = j;
  }
  const auto ncell = static_cast<std::ptrdiff_t>(grid.cells.size());
  const auto mean = [&](std::ptrdiff_t c) {
    VoxelCell& cell = grid.cells[c];
    cell.feature.assign(cloud.dim, 0.0);
    for (int k = 0; k < cloud.dim; ++k) {
      CompensatedSum acc;
      for (std::size_t m : cell.members) acc.add(cloud.row(m)[k]);
      cell.feature[k] = acc.value() / static_cast<double>(cell.members.size());
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < ncell; ++c) mean(c);
  } else {
    for (std::ptrdiff_t c = 0; c < ncell; ++c) mean(c);
  }
  return grid;
}

namespace {

// Maps occupied voxel indices to cell positions. Dense over the padded
// bounding box when that fits in memory, binary search otherwise.
class CellLookup {
 public:
  CellLookup(const VoxelGrid& grid, int pad) : grid_(grid) {
    if (grid.cells.empty()) return;
    lo_ = hi_ = grid.cells.front().index;
    for (const auto& c : grid.cells) {
      for (int k = 0; k < 3; ++k) {
        lo_[k] = std::min(lo_[k], c.index[k]);
        hi_[k] = std::max(hi_[k], c.index[k]);
      }
    }
    long long vol = 1;
    for (int k = 0; k < 3; ++k) {
      lo_[k] -= pad;
      hi_[k] += pad;
      ext_[k] = hi_[k] - lo_[k] + 1;
      vol *= ext_[k];
    }
    if (vol <= (1LL << 24)) {
      dense_.assign(static_cast<std::size_t>(vol), -1);
      for (std::size_t i = 0; i < grid.cells.size(); ++i) dense_[flat(grid.cells[i].index)] = static_cast<int>(i);
    }
  }

  int operator()(const VoxelIndex& v) const {
    if (grid_.cells.empty()) return -1;
    if (!dense_.empty()) {
      for (int k = 0; k < 3; ++k) {
        if (v[k] < lo_[k] || v[k] > hi_[k]) return -1;
      }
      return dense_[flat(v)];
    }
    const auto pos = grid_.find(v);
    return pos ? static_cast<int>(*pos) : -1;
  }

 private:
  std::size_t flat(const VoxelIndex& v) const {
    return (static_cast<std::size_t>(v[0] - lo_[0]) * ext_[1] + (v[1] - lo_[1])) * ext_[2] + (v[2] - lo_[2]);
  }

  const VoxelGrid& grid_;
  VoxelIndex lo_{}, hi_{}, ext_{};
  std::vector<int> dense_;
};

}  // namespace

VoxelGrid neighborhood_aggregate(const VoxelGrid& grid, int radius, Exec exec) {
  if (radius < 0) throw DomainError("neighborhood_aggregate: radius must be nonnegative");
  const CellLookup lookup(grid, radius);
  const int rz = grid.config.mode == VoxelMode::pillar ? 0 : radius;
  const double norm = static_cast<double>((2 * radius + 1) * (2 * radius + 1));
  VoxelGrid out;
  out.config = grid.config;
  out.dim = 2 * grid.dim + 1;
  out.cells.resize(grid.cells.size());
  const auto body = [&](std::ptrdiff_t i) {
    const VoxelCell& cell = grid.cells[i];
    std::vector<double> sum(grid.dim, 0.0);
    int count = 0;
    for (int dx = -radius; dx <= radius; ++dx) {
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dz = -rz; dz <= rz; ++dz) {
          const int j = lookup({cell.index[0] + dx, cell.index[1] + dy, cell.index[2] + dz});
          if (j < 0) continue;
          ++count;
          const auto& f = grid.cells[j].feature;
          for (int k = 0; k < grid.dim; ++k) sum[k] += f[k];
        }
      }
    }
    VoxelCell& o = out.cells[i];
    o.index = cell.index;
    o.center = cell.center;
    o.members = cell.members;
    o.feature = cell.feature;
    for (int k = 0; k < grid.dim; ++k) o.feature.push_back(sum[k] / count);
    o.feature.push_back(count / norm);
  };
  const auto n = static_cast<std::ptrdiff_t>(grid.cells.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
  }
  return out;
}

std::vector<std::array<double, kGeometryDim>> neighborhood_geometry(const VoxelGrid& query, const VoxelGrid& source,
                                                                    int radius) {
  if (radius < 1) throw DomainError("neighborhood_geometry: radius must be at least 1");
  if (query.config.voxel_size != source.config.voxel_size ||
      query.config.region_min.head<2>() != source.config.region_min.head<2>()) {
    throw DomainError("neighborhood_geometry: grids are not aligned");
  }
  std::vector<std::array<double, kGeometryDim>> out(query.cells.size());
  if (query.cells.empty() || source.cells.empty()) {
    for (auto& row : out) row.fill(0.0);
    return out;
  }
  int x0 = query.cells.front().index[0], x1 = x0, y0 = query.cells.front().index[1], y1 = y0;
  for (const auto* g : {&query, &source}) {
    for (const auto& c : g->cells) {
      x0 = std::min(x0, c.index[0]);
      x1 = std::max(x1, c.index[0]);
      y0 = std::min(y0, c.index[1]);
      y1 = std::max(y1, c.index[1]);
    }
  }
  const int w = x1 - x0 + 1, h = y1 - y0 + 1;
  // Column occupancy, then 2D prefix sums of 1, x, y, x^2, y^2, xy.
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(w) * h, 0);
  for (const auto& c : source.cells) occ[static_cast<std::size_t>(c.index[0] - x0) * h + (c.index[1] - y0)] = 1;
  const std::size_t stride = h + 1;
  std::vector<std::array<long long, 6>> pre(static_cast<std::size_t>(w + 1) * stride, std::array<long long, 6>{});
  for (int i = 0; i < w; ++i) {
    std::array<long long, 6> row{};
    for (int j = 0; j < h; ++j) {
      if (occ[static_cast<std::size_t>(i) * h + j]) {
        const long long x = i, y = j;
        row[0] += 1;
        row[1] += x;
        row[2] += y;
        row[3] += x * x;
        row[4] += y * y;
        row[5] += x * y;
      }
      auto& dst = pre[(i + 1) * stride + (j + 1)];
      const auto& up = pre[i * stride + (j + 1)];
      for (int k = 0; k < 6; ++k) dst[k] = up[k] + row[k];
    }
  }
  const double norm = static_cast<double>((2 * radius + 1) * (2 * radius + 1));
  const double r = radius, r2 = static_cast<double>(radius) * radius;
  for (std::size_t q = 0; q < query.cells.size(); ++q) {
    const long long cx = query.cells[q].index[0] - x0, cy = query.cells[q].index[1] - y0;
    const int a0 = static_cast<int>(std::max<long long>(0, cx - radius));
    const int a1 = static_cast<int>(std::min<long long>(w - 1, cx + radius));
    const int b0 = static_cast<int>(std::max<long long>(0, cy - radius));
    const int b1 = static_cast<int>(std::min<long long>(h - 1, cy + radius));
    std::array<long long, 6> s{};
    for (int k = 0; k < 6; ++k) {
      s[k] = pre[(a1 + 1) * stride + (b1 + 1)][k] - pre[a0 * stride + (b1 + 1)][k] -
             pre[(a1 + 1) * stride + b0][k] + pre[a0 * stride + b0][k];
    }
    auto& o = out[q];
    o.fill(0.0);
    const long long n = s[0];
    if (n == 0) continue;
    // Offsets relative to the query cell: sum(x - cx) = Sx - n cx, etc.
    const long long sx = s[1] - n * cx, sy = s[2] - n * cy;
    const long long sxx = s[3] - 2 * cx * s[1] + n * cx * cx;
    const long long syy = s[4] - 2 * cy * s[2] + n * cy * cy;
    const long long sxy = s[5] - cx * s[2] - cy * s[1] + n * cx * cy;
    const double dn = static_cast<double>(n);
    o[0] = dn / norm;
    o[1] = static_cast<double>(sx) / dn / r;
    o[2] = static_cast<double>(sy) / dn / r;
    o[3] = static_cast<double>(sxx) / dn / r2;
    o[4] = static_cast<double>(syy) / dn / r2;
    o[5] = static_cast<double>(sxy) / dn / r2;
  }
  return out;
}

std::vector<CellOutput> apply_detection_head(const VoxelGrid& grid, const TinyHead& heatmap_head,
                                             const TinyHead& box_head, Exec exec) {
  if (heatmap_head.in_dim() != grid.dim || box_head.in_dim() != grid.dim || heatmap_head.out_dim() != 1) {
    throw ConfigError("apply_detection_head: heads expect " + std::to_string(heatmap_head.in_dim()) +
                      " inputs, grid features have " + std::to_string(grid.dim));
  }
  std::vector<CellOutput> out(grid.cells.size());
  const auto body = [&](std::ptrdiff_t i) {
    double y = 0.0;
    heatmap_head.forward(grid.cells[i].feature, {&y, 1});
    out[i].heat = sigmoid(y);
    out[i].box.assign(box_head.out_dim(), 0.0);
    box_head.forward(grid.cells[i].feature, out[i].box);
  };
  const auto n = static_cast<std::ptrdiff_t>(grid.cells.size());
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
  }
  return out;
}

}  // namespace cramfuse
