// SPDX-License-Identifier: Apache-2.0
//
// Handcrafted 2D features and the per-pixel heads of the first stage.
#pragma once

#include <span>
#include <vector>

#include "cramfuse/common.hpp"
#include "cramfuse/head.hpp"

namespace cramfuse {

/// H x W x d feature tensor, pixel-major (the d values of a pixel are
/// contiguous).
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int rows, int cols, int d)
      : rows_(rows), cols_(cols), d_(d), data_(static_cast<std::size_t>(rows) * cols * d, 0.0f) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int dim() const noexcept { return d_; }

  std::span<float> at(int r, int c) {
    return {data_.data() + (static_cast<std::size_t>(r) * cols_ + c) * d_, static_cast<std::size_t>(d_)};
  }
  std::span<const float> at(int r, int c) const {
    return {data_.data() + (static_cast<std::size_t>(r) * cols_ + c) * d_, static_cast<std::size_t>(d_)};
  }
  std::vector<float>& storage() noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }

  bool operator==(const FeatureMap&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  int d_ = 0;
  std::vector<float> data_;
};

using ScoreMap = Grid2D<double>;
using DepthMap = Grid2D<double>;

inline constexpr int kNumBaseChannels = 16;
inline constexpr double kMinDepth = 0.5;

/// Channels: intensity, x and y gradients, radius-1 mean and variance,
/// means at radii 2/4/8/16, variances at radii 2/4/8, gradients of the
/// radius-2 and radius-4 means. Each channel is scaled by a fixed factor so a
/// flat black image gives all zeros, then clipped to [-1, 1]. Channels beyond the first
/// 16 are zero; d < 16 truncates. Throws ConfigError for d < 4.
FeatureMap extract_features(const Image& image, int d, Exec exec = Exec::parallel);

/// Copies the d features of pixel (r, c) into a double vector.
std::vector<double> feature_vector(const FeatureMap& fm, int r, int c);

/// Sigmoid of `head` at every pixel.
ScoreMap score_foreground(const FeatureMap& fm, const TinyHead& head, Exec exec = Exec::parallel);

/// softplus(head) + 0.5 m at every pixel.
DepthMap predict_depth(const FeatureMap& fm, const TinyHead& head, Exec exec = Exec::parallel);

/// Pixels with score > tau in row-major order. Throws ConfigError unless
/// tau lies in (0, 1).
std::vector<CellIndex> select_foreground(const ScoreMap& scores, double tau);

enum class Modality { camera, radar };

/// v || (1, 0) for camera, v || (0, 1) for radar.
std::vector<double> append_modality_code(std::span<const double> features, Modality modality);

}  // namespace cramfuse
