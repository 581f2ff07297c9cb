// SPDX-License-Identifier: Apache-2.0
//
// Gradient-descent training of the model heads.
//
// Training runs in two phases. The first fits the three per-pixel heads on
// fixed pixel pools drawn from every frame. The second freezes them, builds
// the per-cell detection features of every frame once, and fits the heatmap
// and box heads on those cached cells. With sensor dropout enabled, each
// frame is cached in three versions (intact, camera dropped, radar dropped)
// and every step picks one per frame from a fresh dropout draw.
#pragma once

#include <cstdint>
#include <vector>

#include "cramfuse/dataset.hpp"
#include "cramfuse/fusion.hpp"
#include "cramfuse/losses.hpp"
#include "cramfuse/pipeline.hpp"

namespace cramfuse {

struct TrainConfig {
  int stage1_steps = 300;
  int stage2_steps = 400;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int batch = 4;              // frames per step
  double clip_norm = 1.0;     // per-head gradient norm bound; 0 disables
  bool dropout = false;
  DropoutLocation dropout_location = DropoutLocation::point_feature;
  int camera_pool = 1200;     // pixels per frame, a third from the foreground
  int radar_pool = 1200;
  int depth_pool = 400;
  int max_negative_cells = 1500;  // per cached frame version

  void validate() const;
};

struct TrainResult {
  /// Total loss per step over both phases. Terms of the phase not being
  /// optimized enter as constants: detection terms of the first phase are
  /// those of the initial detection heads on intact frames, and first-phase
  /// terms during the second phase are their final full-pool values.
  std::vector<double> trace;
  LossParts final_parts;
};

/// Trains `model` in place on every sample of `data`. Throws ConfigError
/// for an empty dataset and DomainError naming the step if the loss becomes
/// non-finite.
TrainResult fit(Model& model, const Dataset& data, const TrainConfig& config);

/// Samples of `data` whose split equals `split`.
Dataset split_view(const Dataset& data, const std::string& split);

/// Mean of the valid true depths over all samples (camera-frame z).
double mean_valid_depth(const Dataset& data);

/// Gradient-norm clipping followed by a momentum step:
/// v <- mu v + g; theta <- theta - lr v.
void sgd_momentum_step(std::span<double> params, std::span<double> velocity, std::span<double> grad, double lr,
                       double momentum, double clip_norm);

}  // namespace cramfuse
