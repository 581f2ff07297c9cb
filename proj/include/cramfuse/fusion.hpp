// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cramfuse/features.hpp"

namespace cramfuse {

/// Joint point cloud. Row i of `features` spans
/// [i * dim, (i + 1) * dim); the last two entries are the modality code.
struct FusedCloud {
  int dim = 0;  // d + 2
  std::vector<Vec3> points;
  std::vector<double> features;
  std::vector<Modality> source;

  std::size_t size() const noexcept { return points.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, static_cast<std::size_t>(dim)};
  }
  std::span<double> row(std::size_t i) { return {features.data() + i * dim, static_cast<std::size_t>(dim)}; }
  void push(const Vec3& p, std::span<const double> coded, Modality m);
};

/// Camera rows first, then radar rows, each with its modality code.
/// `camera_feats` and `radar_feats` hold one d-vector per point. Throws
/// ConfigError when the feature dims differ or counts disagree.
FusedCloud fuse(std::span<const Vec3> camera_pts, std::span<const std::vector<double>> camera_feats,
                std::span<const Vec3> radar_pts, std::span<const std::vector<double>> radar_feats);

enum class DropTarget { none, camera, radar };
enum class DropoutLocation { normal, input, point_cloud, point_feature };

std::string to_string(DropoutLocation loc);
/// Throws ConfigError for unknown tags.
DropoutLocation dropout_location_from_string(const std::string& s);
std::string to_string(DropTarget t);

struct DropoutDecision {
  double r1 = 1.0;
  double r2 = 0.0;
  DropTarget dropped = DropTarget::none;
};

/// Camera is dropped iff r1 < p and r2 >= 0.5; radar iff r1 < p and r2 < 0.5.
DropoutDecision decide_dropout(double r1, double r2, double p_drop);

/// Draws (r1, r2) from `seed` and applies decide_dropout.
DropoutDecision draw_dropout(double p_drop, std::uint64_t seed);

struct DropoutOutcome {
  FusedCloud cloud;
  DropoutDecision decision;
  /// Modality whose raw image must be zeroed before the first stage
  /// (input location only).
  DropTarget zero_input = DropTarget::none;
};

/// Applies a drawn decision to `cloud` at `location`. For `input` the cloud
/// is returned unchanged and `zero_input` names the image to blank. For
/// `normal` every point is zeroed independently with probability p_drop.
DropoutOutcome apply_dropout(const FusedCloud& cloud, const DropoutDecision& decision, double p_drop,
                             std::uint64_t seed, DropoutLocation location);

/// draw_dropout followed by apply_dropout. Throws ConfigError unless
/// p_drop lies in [0, 1).
DropoutOutcome sensor_dropout(const FusedCloud& cloud, double p_drop, std::uint64_t seed,
                              DropoutLocation location);

/// Zeroes the d feature entries of rows from `target`, keeping the code.
void mask_modality_features(FusedCloud& cloud, DropTarget target);

/// Zeroes the two code entries of every row.
void clear_modality_codes(FusedCloud& cloud);

}  // namespace cramfuse
