// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <tuple>

namespace cramfuse {

double rotated_bev_iou(const Box3D& a, const Box3D& b) {
  const double area_a = a.length() * a.width(), area_b = b.length() * b.width();
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const auto pa = a.footprint(), pb = b.footprint();
  const auto clipped = clip_convex_polygon(pa, pb);
  const double inter = clipped.size() < 3 ? 0.0 : std::abs(polygon_area(clipped));
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double average_precision(const std::vector<bool>& tp_flags, int num_gt,
                         std::vector<std::pair<double, double>>* curve) {
  if (curve) curve->clear();
  if (num_gt <= 0) return 0.0;
  std::vector<double> prec, rec;
  int tp = 0;
  for (std::size_t i = 0; i < tp_flags.size(); ++i) {
    tp += tp_flags[i] ? 1 : 0;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    rec.push_back(static_cast<double>(tp) / num_gt);
  }
  if (curve) {
    for (std::size_t i = 0; i < prec.size(); ++i) curve->emplace_back(prec[i], rec[i]);
  }
  for (std::size_t i = prec.size(); i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0, last_r = 0.0;
  for (std::size_t i = 0; i < prec.size(); ++i) {
    ap += (rec[i] - last_r) * prec[i];
    last_r = rec[i];
  }
  return ap;
}

namespace {

auto box_key(const Box3D& b) {
  return std::make_tuple(-b.score, b.center.x(), b.center.y(), b.center.z(), b.size.x(), b.size.y(), b.size.z(),
                         b.heading);
}

double bev_range(const Box3D& b) { return std::hypot(b.center.x(), b.center.y()); }

bool in_bucket(const RangeBucket& k, double r) { return r >= k.lo && r < k.hi; }

}  // namespace

EvalResult bev_ap(const std::vector<EvalFrame>& frames, double iou_thresh, const std::vector<RangeBucket>& buckets) {
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) throw DomainError("bev_ap: iou_thresh must lie in (0, 1]");
  struct Ref {
    int frame, det;
  };
  std::vector<Ref> order;
  for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
    for (int d = 0; d < static_cast<int>(frames[f].dets.size()); ++d) order.push_back({f, d});
  }
  std::sort(order.begin(), order.end(), [&](const Ref& a, const Ref& b) {
    const auto ka = box_key(frames[a.frame].dets[a.det]);
    const auto kb = box_key(frames[b.frame].dets[b.det]);
    if (ka != kb) return ka < kb;
    return std::tie(a.frame, a.det) < std::tie(b.frame, b.det);
  });

  EvalResult res;
  res.iou_thresh = iou_thresh;
  std::vector<std::vector<bool>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) taken[f].assign(frames[f].gts.size(), false);
  for (const Ref& r : order) {
    const EvalFrame& fr = frames[r.frame];
    Match m{r.frame, r.det, -1, 0.0};
    for (int g = 0; g < static_cast<int>(fr.gts.size()); ++g) {
      if (taken[r.frame][g]) continue;
      const double iou = rotated_bev_iou(fr.dets[r.det], fr.gts[g]);
      if (iou >= iou_thresh && iou > m.iou) {
        m.gt = g;
        m.iou = iou;
      }
    }
    if (m.gt >= 0) taken[r.frame][m.gt] = true;
    res.matches.push_back(m);
  }

  for (const RangeBucket& k : buckets) {
    BucketResult br;
    br.bucket = k;
    for (const auto& fr : frames) {
      for (const auto& g : fr.gts) br.num_gt += in_bucket(k, bev_range(g)) ? 1 : 0;
    }
    std::vector<bool> flags;
    for (const Match& m : res.matches) {
      const EvalFrame& fr = frames[m.frame];
      if (m.gt >= 0) {
        if (in_bucket(k, bev_range(fr.gts[m.gt]))) {
          flags.push_back(true);
          ++br.num_tp;
        }
      } else if (in_bucket(k, bev_range(fr.dets[m.det]))) {
        flags.push_back(false);
        ++br.num_fp;
      }
    }
    br.ap = average_precision(flags, br.num_gt, &br.pr_curve);
    res.buckets.push_back(std::move(br));
  }
  return res;
}

double latency_probe(const std::function<void()>& stage, int runs) {
  if (runs < 1) throw DomainError("latency_probe: runs must be positive");
  using clock = std::chrono::steady_clock;
  stage();
  std::vector<double> ms;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = clock::now();
    stage();
    ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  return runs % 2 ? ms[runs / 2] : 0.5 * (ms[runs / 2 - 1] + ms[runs / 2]);
}

}  // namespace cramfuse
