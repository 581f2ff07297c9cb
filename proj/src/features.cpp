// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/features.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace cramfuse {
namespace {

// Summed-area table with a zero border row and column.
class Integral {
 public:
  Integral(const Image& img, bool squared) : rows_(img.rows()), cols_(img.cols()) {
    sum_.assign(static_cast<std::size_t>(rows_ + 1) * (cols_ + 1), 0.0);
    for (int r = 0; r < rows_; ++r) {
      double row = 0.0;
      for (int c = 0; c < cols_; ++c) {
        const double v = img(r, c);
        row += squared ? v * v : v;
        sum_[idx(r + 1, c + 1)] = sum_[idx(r, c + 1)] + row;
      }
    }
  }

  // Mean over the window of radius `rad` clipped to the image.
  double mean(int r, int c, int rad) const {
    const int r0 = std::max(0, r - rad), r1 = std::min(rows_ - 1, r + rad);
    const int c0 = std::max(0, c - rad), c1 = std::min(cols_ - 1, c + rad);
    const double s = sum_[idx(r1 + 1, c1 + 1)] - sum_[idx(r0, c1 + 1)] - sum_[idx(r1 + 1, c0)] +
                     sum_[idx(r0, c0)];
    return s / static_cast<double>((r1 - r0 + 1) * (c1 - c0 + 1));
  }

 private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * (cols_ + 1) + c; }
  int rows_, cols_;
  std::vector<double> sum_;
};

float clip_unit(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

template <typename F>
void for_rows(int rows, Exec exec, F&& body) {
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) body(r);
  } else {
    for (int r = 0; r < rows; ++r) body(r);
  }
}

// Central difference with replicated borders.
double diff_x(const Grid2D<double>& g, int r, int c) {
  const int a = std::max(0, c - 1), b = std::min(g.cols() - 1, c + 1);
  return 0.5 * (g(r, b) - g(r, a));
}
double diff_y(const Grid2D<double>& g, int r, int c) {
  const int a = std::max(0, r - 1), b = std::min(g.rows() - 1, r + 1);
  return 0.5 * (g(b, c) - g(a, c));
}

}  // namespace

FeatureMap extract_features(const Image& image, int d, Exec exec) {
  if (d < 4) throw ConfigError("extract_features: d must be at least 4, got " + std::to_string(d));
  const int rows = image.rows(), cols = image.cols();
  FeatureMap fm(rows, cols, d);
  if (rows == 0 || cols == 0) return fm;

  const Integral s1(image, false), s2(image, true);
  Grid2D<double> base(rows, cols), m2(rows, cols), m4(rows, cols);
  for_rows(rows, exec, [&](int r) {
    for (int c = 0; c < cols; ++c) {
      base(r, c) = image(r, c);
      m2(r, c) = s1.mean(r, c, 2);
      m4(r, c) = s1.mean(r, c, 4);
    }
  });

  const int n = std::min(d, kNumBaseChannels);
  for_rows(rows, exec, [&](int r) {
    std::array<double, kNumBaseChannels> ch{};
    for (int c = 0; c < cols; ++c) {
      const auto var = [&](int rad) {
        const double m = s1.mean(r, c, rad);
        return std::max(0.0, s2.mean(r, c, rad) - m * m);
      };
      ch[0] = base(r, c);
      ch[1] = 2.0 * diff_x(base, r, c);
      ch[2] = 2.0 * diff_y(base, r, c);
      ch[3] = s1.mean(r, c, 1);
      ch[4] = 8.0 * var(1);
      ch[5] = m2(r, c);
      ch[6] = m4(r, c);
      ch[7] = s1.mean(r, c, 8);
      ch[8] = s1.mean(r, c, 16);
      ch[9] = 8.0 * var(2);
      ch[10] = 8.0 * var(4);
      ch[11] = 8.0 * var(8);
      ch[12] = 2.0 * diff_x(m2, r, c);
      ch[13] = 2.0 * diff_y(m2, r, c);
      ch[14] = 2.0 * diff_x(m4, r, c);
      ch[15] = 2.0 * diff_y(m4, r, c);
      auto out = fm.at(r, c);
      for (int k = 0; k < n; ++k) out[k] = clip_unit(ch[k]);
    }
  });
  return fm;
}

std::vector<double> feature_vector(const FeatureMap& fm, int r, int c) {
  const auto f = fm.at(r, c);
  return {f.begin(), f.end()};
}

namespace {

template <typename Map>
Grid2D<double> map_head(const FeatureMap& fm, const TinyHead& head, Exec exec, Map&& post) {
  if (head.in_dim() != fm.dim() || head.out_dim() != 1) {
    throw ConfigError("head expects " + std::to_string(head.in_dim()) + " inputs and 1 output; features have " +
                      std::to_string(fm.dim()));
  }
  Grid2D<double> out(fm.rows(), fm.cols());
  for_rows(fm.rows(), exec, [&](int r) {
    std::vector<double> x(fm.dim());
    double y = 0.0;
    for (int c = 0; c < fm.cols(); ++c) {
      const auto f = fm.at(r, c);
      std::copy(f.begin(), f.end(), x.begin());
      head.forward(x, {&y, 1});
      out(r, c) = post(y);
    }
  });
  return out;
}

}  // namespace

ScoreMap score_foreground(const FeatureMap& fm, const TinyHead& head, Exec exec) {
  return map_head(fm, head, exec, [](double y) { return sigmoid(y); });
}

DepthMap predict_depth(const FeatureMap& fm, const TinyHead& head, Exec exec) {
  return map_head(fm, head, exec, [](double y) { return softplus(y) + kMinDepth; });
}

std::vector<CellIndex> select_foreground(const ScoreMap& scores, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("select_foreground: tau must lie in (0, 1)");
  std::vector<CellIndex> out;
  for (int r = 0; r < scores.rows(); ++r) {
    for (int c = 0; c < scores.cols(); ++c) {
      if (scores(r, c) > tau) out.push_back({r, c});
    }
  }
  return out;
}

std::vector<double> append_modality_code(std::span<const double> features, Modality modality) {
  std::vector<double> out(features.begin(), features.end());
  out.push_back(modality == Modality::camera ? 1.0 : 0.0);
  out.push_back(modality == Modality::camera ? 0.0 : 1.0);
  return out;
}

}  // namespace cramfuse
