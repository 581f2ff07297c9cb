// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/fusion.hpp"

#include <algorithm>
#include <random>

namespace cramfuse {

void FusedCloud::push(const Vec3& p, std::span<const double> coded, Modality m) {
  if (dim == 0) dim = static_cast<int>(coded.size());
  if (coded.size() != static_cast<std::size_t>(dim)) throw ConfigError("FusedCloud: row width mismatch");
  points.push_back(p);
  features.insert(features.end(), coded.begin(), coded.end());
  source.push_back(m);
}

FusedCloud fuse(std::span<const Vec3> camera_pts, std::span<const std::vector<double>> camera_feats,
                std::span<const Vec3> radar_pts, std::span<const std::vector<double>> radar_feats) {
  if (camera_pts.size() != camera_feats.size() || radar_pts.size() != radar_feats.size()) {
    throw ConfigError("fuse: point and feature counts differ");
  }
  std::size_t d = 0;
  bool have_d = false;
  for (const auto* feats : {&camera_feats, &radar_feats}) {
    for (const auto& f : *feats) {
      if (!have_d) {
        d = f.size();
        have_d = true;
      } else if (f.size() != d) {
        throw ConfigError("fuse: feature dimensions differ");
      }
    }
  }
  FusedCloud out;
  out.dim = have_d ? static_cast<int>(d) + 2 : 0;
  for (std::size_t i = 0; i < camera_pts.size(); ++i) {
    out.push(camera_pts[i], append_modality_code(camera_feats[i], Modality::camera), Modality::camera);
  }
  for (std::size_t i = 0; i < radar_pts.size(); ++i) {
    out.push(radar_pts[i], append_modality_code(radar_feats[i], Modality::radar), Modality::radar);
  }
  return out;
}

std::string to_string(DropoutLocation loc) {
  switch (loc) {
    case DropoutLocation::normal: return "normal";
    case DropoutLocation::input: return "input";
    case DropoutLocation::point_cloud: return "point_cloud";
    case DropoutLocation::point_feature: return "point_feature";
  }
  return "point_feature";
}

DropoutLocation dropout_location_from_string(const std::string& s) {
  if (s == "normal") return DropoutLocation::normal;
  if (s == "input") return DropoutLocation::input;
  if (s == "point_cloud") return DropoutLocation::point_cloud;
  if (s == "point_feature") return DropoutLocation::point_feature;
  throw ConfigError("unknown dropout location '" + s + "'");
}

std::string to_string(DropTarget t) {
  switch (t) {
    case DropTarget::none: return "none";
    case DropTarget::camera: return "camera";
    case DropTarget::radar: return "radar";
  }
  return "none";
}

DropoutDecision decide_dropout(double r1, double r2, double p_drop) {
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw DomainError("decide_dropout: p_drop must lie in [0, 1]");
  DropoutDecision d{r1, r2, DropTarget::none};
  if (r1 < p_drop) d.dropped = r2 >= 0.5 ? DropTarget::camera : DropTarget::radar;
  return d;
}

DropoutDecision draw_dropout(double p_drop, std::uint64_t seed) {
  std::mt19937_64 rng(child_seed(seed, 5));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r1 = u(rng);
  const double r2 = u(rng);
  return decide_dropout(r1, r2, p_drop);
}

void mask_modality_features(FusedCloud& cloud, DropTarget target) {
  if (target == DropTarget::none) return;
  const Modality m = target == DropTarget::camera ? Modality::camera : Modality::radar;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.source[i] != m) continue;
    auto r = cloud.row(i);
    std::fill(r.begin(), r.end() - 2, 0.0);
  }
}

void clear_modality_codes(FusedCloud& cloud) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto r = cloud.row(i);
    r[r.size() - 2] = 0.0;
    r[r.size() - 1] = 0.0;
  }
}

DropoutOutcome apply_dropout(const FusedCloud& cloud, const DropoutDecision& decision, double p_drop,
                             std::uint64_t seed, DropoutLocation location) {
  DropoutOutcome out{cloud, decision, DropTarget::none};
  switch (location) {
    case DropoutLocation::point_feature:
      mask_modality_features(out.cloud, decision.dropped);
      break;
    case DropoutLocation::point_cloud: {
      if (decision.dropped == DropTarget::none) break;
      const Modality m = decision.dropped == DropTarget::camera ? Modality::camera : Modality::radar;
      FusedCloud kept;
      kept.dim = cloud.dim;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.source[i] != m) kept.push(cloud.points[i], cloud.row(i), cloud.source[i]);
      }
      out.cloud = std::move(kept);
      break;
    }
    case DropoutLocation::input:
      out.zero_input = decision.dropped;
      break;
    case DropoutLocation::normal: {
      out.decision.dropped = DropTarget::none;
      if (p_drop <= 0.0) break;
      std::mt19937_64 rng(child_seed(seed, 6));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t i = 0; i < out.cloud.size(); ++i) {
        if (u(rng) < p_drop) {
          auto r = out.cloud.row(i);
          std::fill(r.begin(), r.end() - 2, 0.0);
        }
      }
      break;
    }
  }
  return out;
}

DropoutOutcome sensor_dropout(const FusedCloud& cloud, double p_drop, std::uint64_t seed,
                              DropoutLocation location) {
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("sensor_dropout: p_drop must lie in [0, 1)");
  return apply_dropout(cloud, draw_dropout(p_drop, seed), p_drop, seed, location);
}

}  // namespace cramfuse
