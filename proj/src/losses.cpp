// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cramfuse {
namespace {

// Clamped probability and whether the clamp was active.
std::pair<double, bool> clamp_prob(double p) {
  const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return {c, c != p};
}

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ConfigError(std::string(what) + ": argument sizes differ");
}

}  // namespace

HeatmapTarget heatmap_gt(std::span<const Vec3> points, std::span<const Box3D> boxes, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("heatmap_gt: sigma must be positive");
  HeatmapTarget t;
  t.sigma = sigma;
  t.values.assign(points.size(), 0.0);
  t.closest.assign(boxes.size(), -1);
  t.box_of.assign(points.size(), -1);
  const double s2 = sigma * sigma;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const Box3D& box = boxes[b];
    std::vector<std::size_t> inside;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!box.contains(points[i])) continue;
      inside.push_back(i);
      const double dist = (points[i] - box.center).norm();
      if (dist < best) {
        best = dist;
        t.closest[b] = static_cast<long>(i);
      }
    }
    for (std::size_t i : inside) {
      const double h = std::exp(-((points[i] - box.center).norm() - best) / s2);
      if (h > t.values[i]) {
        t.values[i] = h;
        t.box_of[i] = static_cast<int>(b);
      }
    }
  }
  return t;
}

LossValue seg_focal_loss(std::span<const double> p, std::span<const std::uint8_t> labels, double gamma) {
  check_sizes(p.size(), labels.size(), "seg_focal_loss");
  LossValue out;
  out.grad.assign(p.size(), 0.0);
  if (p.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto [q, clamped] = clamp_prob(p[i]);
    double term, dterm;
    if (labels[i]) {
      const double a = std::pow(1.0 - q, gamma);
      term = a * std::log(q);
      dterm = -gamma * std::pow(1.0 - q, gamma - 1.0) * std::log(q) + a / q;
    } else {
      const double a = std::pow(q, gamma);
      term = a * std::log(1.0 - q);
      dterm = gamma * std::pow(q, gamma - 1.0) * std::log(1.0 - q) - a / (1.0 - q);
    }
    acc += term;
    out.grad[i] = clamped ? 0.0 : -dterm * inv_n;
  }
  out.value = -acc * inv_n;
  return out;
}

LossValue depth_l2_loss(std::span<const double> pred, std::span<const double> gt,
                        std::span<const std::uint8_t> valid) {
  check_sizes(pred.size(), gt.size(), "depth_l2_loss");
  check_sizes(pred.size(), valid.size(), "depth_l2_loss");
  LossValue out;
  out.grad.assign(pred.size(), 0.0);
  std::size_t n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  if (n == 0) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    const double e = pred[i] - gt[i];
    acc += e * e;
    out.grad[i] = 2.0 * e / static_cast<double>(n);
  }
  out.value = acc / static_cast<double>(n);
  return out;
}

LossValue heatmap_focal_loss(std::span<const double> h_pred, std::span<const double> h_gt, double alpha,
                             double gamma, double epsilon_h) {
  check_sizes(h_pred.size(), h_gt.size(), "heatmap_focal_loss");
  LossValue out;
  out.grad.assign(h_pred.size(), 0.0);
  if (h_pred.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(h_pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < h_pred.size(); ++i) {
    const auto [q, clamped] = clamp_prob(h_pred[i]);
    double term, dterm;
    if (h_gt[i] > 1.0 - epsilon_h) {
      const double a = std::pow(1.0 - q, gamma);
      term = a * std::log(q);
      dterm = -gamma * std::pow(1.0 - q, gamma - 1.0) * std::log(q) + a / q;
    } else {
      const double w = std::pow(1.0 - h_gt[i], alpha);
      const double a = std::pow(q, gamma);
      term = w * a * std::log(1.0 - q);
      dterm = w * (gamma * std::pow(q, gamma - 1.0) * std::log(1.0 - q) - a / (1.0 - q));
    }
    acc += term;
    out.grad[i] = clamped ? 0.0 : -dterm * inv_n;
  }
  out.value = -acc * inv_n;
  return out;
}

LossValue smooth_l1(std::span<const double> pred, std::span<const double> gt, double beta) {
  check_sizes(pred.size(), gt.size(), "smooth_l1");
  if (!(beta > 0.0)) throw DomainError("smooth_l1: beta must be positive");
  LossValue out;
  out.grad.assign(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - gt[i];
    if (std::abs(e) < beta) {
      out.value += 0.5 * e * e / beta;
      out.grad[i] = e / beta;
    } else {
      out.value += std::abs(e) - 0.5 * beta;
      out.grad[i] = e > 0.0 ? 1.0 : -1.0;
    }
  }
  return out;
}

double heading_bin_width(int num_bins) { return 2.0 * kPi / num_bins; }

double heading_bin_center(int bin, int num_bins) { return -kPi + (bin + 0.5) * heading_bin_width(num_bins); }

HeadingTarget encode_heading(double theta, int num_bins) {
  if (num_bins < 1) throw DomainError("encode_heading: need at least one bin");
  const double t = normalize_angle(theta);
  const double w = heading_bin_width(num_bins);
  const int bin = std::clamp(static_cast<int>(std::floor((t + kPi) / w)), 0, num_bins - 1);
  return {bin, (t - heading_bin_center(bin, num_bins)) / (0.5 * w)};
}

LossValue heading_bin_loss(std::span<const double> bin_logits, double residual_pred, double theta_gt) {
  const int nb = static_cast<int>(bin_logits.size());
  if (nb < 1) throw ConfigError("heading_bin_loss: no bins");
  const HeadingTarget tgt = encode_heading(theta_gt, nb);
  LossValue out;
  out.grad.assign(nb + 1, 0.0);
  const double mx = *std::max_element(bin_logits.begin(), bin_logits.end());
  double z = 0.0;
  for (double l : bin_logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  out.value = lse - bin_logits[tgt.bin];
  for (int b = 0; b < nb; ++b) out.grad[b] = std::exp(bin_logits[b] - lse) - (b == tgt.bin ? 1.0 : 0.0);
  const double p = residual_pred, g = tgt.residual;
  const LossValue r = smooth_l1({&p, 1}, {&g, 1});
  out.value += r.value;
  out.grad[nb] = r.grad[0];
  return out;
}

LossValue iou_surrogate_loss(std::span<const double> pred, const Box3D& gt) {
  if (pred.size() != 4) throw ConfigError("iou_surrogate_loss: expected (x, y, l, w)");
  const double l = pred[2], w = pred[3];
  if (!(l > 0.0 && w > 0.0)) throw DomainError("iou_surrogate_loss: sizes must be positive");
  const double c = std::cos(gt.heading), s = std::sin(gt.heading);
  const double dx = pred[0] - gt.center.x(), dy = pred[1] - gt.center.y();
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  const double hl = 0.5 * gt.length(), hw = 0.5 * gt.width();

  struct Span {
    double len, d_center, d_size;
  };
  const auto overlap = [](double m, double half, double gt_half) {
    const double hi = std::min(m + 0.5 * half, gt_half);
    const double lo = std::max(m - 0.5 * half, -gt_half);
    if (hi <= lo) return Span{0.0, 0.0, 0.0};
    const double hi_c = m + 0.5 * half < gt_half ? 1.0 : 0.0;
    const double lo_c = m - 0.5 * half > -gt_half ? 1.0 : 0.0;
    return Span{hi - lo, hi_c - lo_c, 0.5 * hi_c + 0.5 * lo_c};
  };
  const Span ox = overlap(u, l, hl), oy = overlap(v, w, hw);
  const double inter = ox.len * oy.len;
  const double uni = l * w + gt.length() * gt.width() - inter;
  LossValue out;
  out.grad.assign(4, 0.0);
  out.value = 1.0 - inter / uni;
  if (inter <= 0.0) return out;
  const double d_inter = (uni + inter) / (uni * uni);  // d IoU / d inter
  const double d_union = -inter / (uni * uni);         // d IoU / d (l w)
  const double gu = -d_inter * oy.len * ox.d_center;
  const double gv = -d_inter * ox.len * oy.d_center;
  out.grad[0] = c * gu - s * gv;
  out.grad[1] = s * gu + c * gv;
  out.grad[2] = -(d_inter * oy.len * ox.d_size + d_union * w);
  out.grad[3] = -(d_inter * ox.len * oy.d_size + d_union * l);
  return out;
}

LossReport total_loss(const LossParts& parts, const LossWeights& weights) {
  for (double v : {parts.seg, parts.depth, parts.hm, parts.box_smooth_l1, parts.box_bin, parts.box_iou}) {
    if (!std::isfinite(v)) throw DomainError("total_loss: non-finite loss part");
  }
  LossReport r;
  r.parts = parts;
  r.total = weights.lambda_seg * parts.seg + weights.lambda_depth * parts.depth + weights.lambda_hm * parts.hm +
            parts.box_smooth_l1 + parts.box_bin + parts.box_iou;
  return r;
}

LossWeights weights_from(const PipelineConfig& cfg) { return {cfg.lambda_seg, cfg.lambda_depth, cfg.lambda_hm}; }

std::vector<double> box_regression_target(const Vec3& anchor, const Box3D& gt) {
  return {gt.center.x() - anchor.x(), gt.center.y() - anchor.y(), gt.center.z() - anchor.z(),
          std::log(gt.length()),      std::log(gt.width()),       std::log(gt.height())};
}

BoxLossTerms box_loss(std::span<const double> raw, const Vec3& anchor, const Box3D& gt, int num_bins) {
  const std::size_t expected = 6 + static_cast<std::size_t>(num_bins) + 1;
  if (raw.size() != expected) throw ConfigError("box_loss: expected " + std::to_string(expected) + " outputs");
  BoxLossTerms t;
  t.grad.assign(expected, 0.0);
  const auto target = box_regression_target(anchor, gt);
  const LossValue sl = smooth_l1(raw.subspan(0, 6), target);
  t.smooth_l1 = sl.value;
  for (int k = 0; k < 6; ++k) t.grad[k] += sl.grad[k];

  const LossValue hb = heading_bin_loss(raw.subspan(6, num_bins), raw[6 + num_bins], gt.heading);
  t.bin = hb.value;
  for (int k = 0; k <= num_bins; ++k) t.grad[6 + k] += hb.grad[k];

  const double l = std::exp(raw[3]), w = std::exp(raw[4]);
  const double pred[4] = {anchor.x() + raw[0], anchor.y() + raw[1], l, w};
  const LossValue iou = iou_surrogate_loss(pred, gt);
  t.iou = iou.value;
  t.grad[0] += iou.grad[0];
  t.grad[1] += iou.grad[1];
  t.grad[3] += iou.grad[2] * l;
  t.grad[4] += iou.grad[3] * w;
  return t;
}

double finite_diff_check(const std::function<LossValue(std::span<const double>)>& f, std::span<const double> x,
                         double h) {
  const LossValue base = f(x);
  if (base.grad.size() != x.size()) throw ConfigError("finite_diff_check: gradient size differs from input");
  std::vector<double> xp(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = xp[i];
    xp[i] = keep + h;
    const double fp = f(xp).value;
    xp[i] = keep - h;
    const double fm = f(xp).value;
    xp[i] = keep;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(base.grad[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(base.grad[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace cramfuse
