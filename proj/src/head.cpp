// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/head.hpp"

#include <cmath>
#include <random>
#include <string>

namespace cramfuse {

TinyHead::TinyHead(int in_dim, int hidden, int out_dim) : in_(in_dim), hidden_(hidden), out_(out_dim) {
  if (in_dim <= 0 || out_dim <= 0 || hidden < 0) throw ConfigError("TinyHead: bad dimensions");
  const std::size_t n = hidden > 0
                            ? static_cast<std::size_t>(hidden) * (in_dim + 1) +
                                  static_cast<std::size_t>(out_dim) * (hidden + 1)
                            : static_cast<std::size_t>(out_dim) * (in_dim + 1);
  params_.assign(n, 0.0);
}

TinyHead TinyHead::random(int in_dim, int hidden, int out_dim, std::uint64_t seed, double gain) {
  TinyHead h(in_dim, hidden, out_dim);
  std::mt19937_64 rng(seed);
  const auto fill = [&](std::size_t offset, int rows, int cols) {
    const double a = gain * std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) h.params_[offset + i] = u(rng);
  };
  if (hidden > 0) {
    fill(0, hidden, in_dim);
    fill(static_cast<std::size_t>(hidden) * (in_dim + 1), out_dim, hidden);
  } else {
    fill(0, out_dim, in_dim);
  }
  return h;
}

std::span<double> TinyHead::output_bias() noexcept {
  return std::span<double>(params_).subspan(params_.size() - out_, out_);
}

std::span<double> TinyHead::first_weights() noexcept {
  const int rows = hidden_ > 0 ? hidden_ : out_;
  return std::span<double>(params_).subspan(0, static_cast<std::size_t>(rows) * in_);
}

void TinyHead::check_input(std::size_t n) const {
  if (n != static_cast<std::size_t>(in_)) {
    throw ConfigError("TinyHead: input has " + std::to_string(n) + " entries, expected " +
                      std::to_string(in_));
  }
}

void TinyHead::forward(std::span<const double> x, std::span<double> y) const {
  check_input(x.size());
  if (y.size() != static_cast<std::size_t>(out_)) throw ConfigError("TinyHead: output size mismatch");
  const double* p = params_.data();
  if (hidden_ == 0) {
    const double* b = p + static_cast<std::size_t>(out_) * in_;
    for (int o = 0; o < out_; ++o) {
      double acc = b[o];
      const double* w = p + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
    return;
  }
  double hbuf[256];
  std::vector<double> hvec;
  double* hid = hbuf;
  if (hidden_ > 256) {
    hvec.resize(hidden_);
    hid = hvec.data();
  }
  const double* b1 = p + static_cast<std::size_t>(hidden_) * in_;
  for (int j = 0; j < hidden_; ++j) {
    double acc = b1[j];
    const double* w = p + static_cast<std::size_t>(j) * in_;
    for (int i = 0; i < in_; ++i) acc += w[i] * x[i];
    hid[j] = std::tanh(acc);
  }
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + static_cast<std::size_t>(out_) * hidden_;
  for (int o = 0; o < out_; ++o) {
    double acc = b2[o];
    const double* w = w2 + static_cast<std::size_t>(o) * hidden_;
    for (int j = 0; j < hidden_; ++j) acc += w[j] * hid[j];
    y[o] = acc;
  }
}

void TinyHead::backward(std::span<const double> x, std::span<const double> dy, std::span<double> grad,
                        std::span<double> dx) const {
  check_input(x.size());
  if (dy.size() != static_cast<std::size_t>(out_) || grad.size() != params_.size()) {
    throw ConfigError("TinyHead: gradient size mismatch");
  }
  if (!dx.empty() && dx.size() != static_cast<std::size_t>(in_)) throw ConfigError("TinyHead: dx size mismatch");
  const double* p = params_.data();
  double* g = grad.data();
  if (hidden_ == 0) {
    double* gb = g + static_cast<std::size_t>(out_) * in_;
    for (int o = 0; o < out_; ++o) {
      double* gw = g + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) gw[i] += dy[o] * x[i];
      gb[o] += dy[o];
    }
    if (!dx.empty()) {
      for (int i = 0; i < in_; ++i) {
        double acc = 0.0;
        for (int o = 0; o < out_; ++o) acc += p[static_cast<std::size_t>(o) * in_ + i] * dy[o];
        dx[i] = acc;
      }
    }
    return;
  }
  std::vector<double> hid(hidden_), dh(hidden_, 0.0);
  const double* b1 = p + static_cast<std::size_t>(hidden_) * in_;
  for (int j = 0; j < hidden_; ++j) {
    double acc = b1[j];
    const double* w = p + static_cast<std::size_t>(j) * in_;
    for (int i = 0; i < in_; ++i) acc += w[i] * x[i];
    hid[j] = std::tanh(acc);
  }
  const double* w2 = b1 + hidden_;
  const std::size_t w2_off = static_cast<std::size_t>(hidden_) * (in_ + 1);
  double* gw2 = g + w2_off;
  double* gb2 = gw2 + static_cast<std::size_t>(out_) * hidden_;
  for (int o = 0; o < out_; ++o) {
    const double d = dy[o];
    const double* w = w2 + static_cast<std::size_t>(o) * hidden_;
    double* gw = gw2 + static_cast<std::size_t>(o) * hidden_;
    for (int j = 0; j < hidden_; ++j) {
      gw[j] += d * hid[j];
      dh[j] += d * w[j];
    }
    gb2[o] += d;
  }
  double* gb1 = g + static_cast<std::size_t>(hidden_) * in_;
  for (int j = 0; j < hidden_; ++j) {
    const double da = dh[j] * (1.0 - hid[j] * hid[j]);
    dh[j] = da;
    double* gw = g + static_cast<std::size_t>(j) * in_;
    for (int i = 0; i < in_; ++i) gw[i] += da * x[i];
    gb1[j] += da;
  }
  if (!dx.empty()) {
    for (int i = 0; i < in_; ++i) {
      double acc = 0.0;
      for (int j = 0; j < hidden_; ++j) acc += p[static_cast<std::size_t>(j) * in_ + i] * dh[j];
      dx[i] = acc;
    }
  }
}

std::vector<GridRecord> TinyHead::to_records() const {
  std::vector<GridRecord> recs;
  GridRecord shape;
  shape.dims = {3};
  shape.data = {static_cast<float>(in_), static_cast<float>(hidden_), static_cast<float>(out_)};
  recs.push_back(shape);
  const auto push = [&](std::size_t offset, int rows, int cols) {
    GridRecord r;
    r.dims = {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)};
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) {
      r.data.push_back(static_cast<float>(params_[offset + i]));
    }
    recs.push_back(std::move(r));
  };
  if (hidden_ > 0) {
    push(0, hidden_, in_);
    push(static_cast<std::size_t>(hidden_) * in_, hidden_, 1);
    const std::size_t off2 = static_cast<std::size_t>(hidden_) * (in_ + 1);
    push(off2, out_, hidden_);
    push(off2 + static_cast<std::size_t>(out_) * hidden_, out_, 1);
  } else {
    push(0, out_, in_);
    push(static_cast<std::size_t>(out_) * in_, out_, 1);
  }
  return recs;
}

TinyHead TinyHead::from_records(std::span<const GridRecord> records, const std::string& origin) {
  if (records.empty() || records[0].dims != std::vector<std::uint32_t>{3}) {
    throw ParseError(origin, "missing head shape record");
  }
  const auto& s = records[0].data;
  TinyHead h;
  try {
    h = TinyHead(static_cast<int>(s[0]), static_cast<int>(s[1]), static_cast<int>(s[2]));
  } catch (const ConfigError& e) {
    throw ParseError(origin, e.what());
  }
  const std::size_t expected_records = h.hidden_ > 0 ? 5 : 3;
  if (records.size() != expected_records) throw ParseError(origin, "wrong number of head records");
  std::size_t at = 0;
  for (std::size_t r = 1; r < records.size(); ++r) {
    for (float v : records[r].data) {
      if (at >= h.params_.size()) throw ParseError(origin, "too many head parameters");
      h.params_[at++] = v;
    }
  }
  if (at != h.params_.size()) throw ParseError(origin, "too few head parameters");
  return h;
}

std::vector<double> head_forward(const TinyHead& head, std::span<const double> x) {
  std::vector<double> y(head.out_dim());
  head.forward(x, y);
  return y;
}

HeadGradient head_backward(const TinyHead& head, std::span<const double> x,
                           std::span<const double> dy) {
  HeadGradient g{std::vector<double>(head.num_params(), 0.0),
                 std::vector<double>(head.in_dim(), 0.0)};
  head.backward(x, dy, g.params, g.input);
  return g;
}

}  // namespace cramfuse
