// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cramfuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Raised when an argument lies outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised for inconsistent configuration or dimension mismatches.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a file cannot be decoded. `where()` names file and byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Execution policy for kernels that have an OpenMP path and a serial path.
enum class Exec { serial, parallel };

/// Dense row-major 2D grid.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw ConfigError("Grid2D: negative dimensions");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  bool contains(int r, int c) const noexcept {
    return r >= 0 && c >= 0 && r < rows_ && c < cols_;
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool operator==(const Grid2D&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using Image = Grid2D<float>;
using Mask = Grid2D<std::uint8_t>;

/// Cell coordinates in a grid (row, col).
struct CellIndex {
  int row = 0;
  int col = 0;
  auto operator<=>(const CellIndex&) const = default;
};

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into [-pi, pi).
double normalize_angle(double theta);

/// SplitMix64 finalizer; the mixing step behind every derived seed.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Child seed for stream `index` of `seed`. Distinct indices give independent
/// streams; the mapping is a pure function so it can be reproduced anywhere.
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Numerically stable logistic function.
inline double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace cramfuse
