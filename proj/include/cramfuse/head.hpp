// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cramfuse/common.hpp"
#include "cramfuse/dataset.hpp"

namespace cramfuse {

/// Small trainable map: affine, or affine -> tanh -> affine.
///
/// Parameters live in one flat vector so optimizers can treat every head
/// uniformly. Layout: [W1 (hidden x in), b1, W2 (out x hidden), b2], or
/// [W (out x in), b] without a hidden layer. Matrices are row-major.
class TinyHead {
 public:
  TinyHead() = default;
  /// `hidden == 0` gives a single affine layer. All parameters start at zero.
  TinyHead(int in_dim, int hidden, int out_dim);

  /// Glorot-style uniform initialization for weights, zero biases.
  static TinyHead random(int in_dim, int hidden, int out_dim, std::uint64_t seed, double gain = 1.0);

  int in_dim() const noexcept { return in_; }
  int hidden_dim() const noexcept { return hidden_; }
  int out_dim() const noexcept { return out_; }
  std::size_t num_params() const noexcept { return params_.size(); }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  /// Bias of the output layer.
  std::span<double> output_bias() noexcept;
  /// Weight matrix of the first layer.
  std::span<double> first_weights() noexcept;

  /// `y` must have out_dim() entries. Throws ConfigError on size mismatch.
  void forward(std::span<const double> x, std::span<double> y) const;

  /// Adds dL/dparams into `grad` (num_params() entries). Writes dL/dx into
  /// `dx` when it is non-empty.
  void backward(std::span<const double> x, std::span<const double> dy, std::span<double> grad,
                std::span<double> dx = {}) const;

  std::vector<GridRecord> to_records() const;
  static TinyHead from_records(std::span<const GridRecord> records, const std::string& origin);

  bool operator==(const TinyHead&) const = default;

 private:
  void check_input(std::size_t n) const;

  int in_ = 0;
  int hidden_ = 0;
  int out_ = 0;
  std::vector<double> params_;
};

std::vector<double> head_forward(const TinyHead& head, std::span<const double> x);

struct HeadGradient {
  std::vector<double> params;
  std::vector<double> input;
};

HeadGradient head_backward(const TinyHead& head, std::span<const double> x,
                           std::span<const double> dy);

}  // namespace cramfuse
