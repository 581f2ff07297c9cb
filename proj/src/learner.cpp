// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace cramfuse {

void TrainConfig::validate() const {
  if (stage1_steps < 0 || stage2_steps < 0) throw ConfigError("steps must be nonnegative");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch < 1) throw ConfigError("batch must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be nonnegative");
  if (camera_pool < 0 || radar_pool < 0 || depth_pool < 0 || max_negative_cells < 0) {
    throw ConfigError("pool sizes must be nonnegative");
  }
}

Dataset split_view(const Dataset& data, const std::string& split) {
  Dataset out;
  out.seed = data.seed;
  out.camera = data.camera;
  out.radar = data.radar;
  for (const auto& s : data.samples) {
    if (s.split == split) out.samples.push_back(s);
  }
  return out;
}

double mean_valid_depth(const Dataset& data) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : data.samples) {
    const auto& valid = s.frame.depth_valid.storage();
    const auto& depth = s.frame.true_depth.storage();
    for (std::size_t i = 0; i < valid.size(); ++i) {
      if (valid[i]) {
        sum += depth[i];
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 20.0;
}

void sgd_momentum_step(std::span<double> params, std::span<double> velocity, std::span<double> grad, double lr,
                       double momentum, double clip_norm) {
  if (params.size() != velocity.size() || params.size() != grad.size()) {
    throw ConfigError("sgd_momentum_step: size mismatch");
  }
  double norm2 = 0.0;
  for (double g : grad) norm2 += g * g;
  const double norm = std::sqrt(norm2);
  const double scale = clip_norm > 0.0 && norm > clip_norm ? clip_norm / norm : 1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + scale * grad[i];
    params[i] -= lr * velocity[i];
  }
}

namespace {

// Fixed per-pixel training examples for one head.
struct Pool {
  int d = 0;
  std::vector<float> x;
  std::vector<std::uint8_t> label;
  std::vector<double> target;
  std::vector<std::size_t> frame_begin;  // one entry per frame, plus the end

  std::size_t size() const { return label.size(); }
  std::span<const float> row(std::size_t i) const { return {x.data() + i * d, static_cast<std::size_t>(d)}; }
};

void pool_add(Pool& p, const FeatureMap& fm, const CellIndex& c, std::uint8_t label, double target) {
  const auto f = fm.at(c.row, c.col);
  p.x.insert(p.x.end(), f.begin(), f.end());
  p.label.push_back(label);
  p.target.push_back(target);
}

// `n` pixels: a third drawn from `fg` (when nonempty), the rest uniformly.
std::vector<CellIndex> draw_pixels(const Mask& labels, int n, std::mt19937_64& rng) {
  std::vector<CellIndex> fg;
  for (int r = 0; r < labels.rows(); ++r) {
    for (int c = 0; c < labels.cols(); ++c) {
      if (labels(r, c)) fg.push_back({r, c});
    }
  }
  std::vector<CellIndex> out;
  const int n_fg = fg.empty() ? 0 : n / 3;
  std::uniform_int_distribution<std::size_t> pick_fg(0, fg.empty() ? 0 : fg.size() - 1);
  for (int i = 0; i < n_fg; ++i) out.push_back(fg[pick_fg(rng)]);
  std::uniform_int_distribution<int> pr(0, labels.rows() - 1), pc(0, labels.cols() - 1);
  for (int i = n_fg; i < n; ++i) {
    const int r = pr(rng);
    out.push_back({r, pc(rng)});
  }
  return out;
}

struct Stage1Pools {
  Pool camera, radar, depth;
};

Stage1Pools build_pools(const Model& model, const Dataset& data, const TrainConfig& cfg) {
  Stage1Pools p;
  const int d = model.config.d;
  p.camera.d = p.radar.d = p.depth.d = d;
  const bool use_cam = model.mode != SensorMode::radar_only;
  const bool use_rad = model.mode != SensorMode::camera_only;
  for (std::size_t f = 0; f < data.samples.size(); ++f) {
    const Sample& s = data.samples[f];
    p.camera.frame_begin.push_back(p.camera.size());
    p.radar.frame_begin.push_back(p.radar.size());
    p.depth.frame_begin.push_back(p.depth.size());
    std::mt19937_64 rng(child_seed(cfg.seed, 1000 + f));
    if (use_cam) {
      const FeatureMap fm = extract_features(s.frame.camera_image, d);
      const Mask labels = camera_foreground_labels(s.scene, data.camera);
      for (const auto& c : draw_pixels(labels, cfg.camera_pool, rng)) pool_add(p.camera, fm, c, labels(c.row, c.col), 0.0);
      std::vector<CellIndex> valid;
      for (int r = 0; r < s.frame.depth_valid.rows(); ++r) {
        for (int c = 0; c < s.frame.depth_valid.cols(); ++c) {
          if (s.frame.depth_valid(r, c)) valid.push_back({r, c});
        }
      }
      std::shuffle(valid.begin(), valid.end(), rng);
      valid.resize(std::min<std::size_t>(valid.size(), cfg.depth_pool));
      std::sort(valid.begin(), valid.end());
      for (const auto& c : valid) pool_add(p.depth, fm, c, 1, s.frame.true_depth(c.row, c.col));
    }
    if (use_rad) {
      const FeatureMap fm = extract_features(s.frame.radar_rf, d);
      const Mask labels = radar_foreground_labels(s.scene, data.radar);
      for (const auto& c : draw_pixels(labels, cfg.radar_pool, rng)) pool_add(p.radar, fm, c, labels(c.row, c.col), 0.0);
    }
  }
  for (Pool* q : {&p.camera, &p.radar, &p.depth}) q->frame_begin.push_back(q->size());
  return p;
}

std::vector<std::size_t> pool_rows(const Pool& p, const std::vector<std::size_t>& frames) {
  std::vector<std::size_t> rows;
  for (std::size_t f : frames) {
    for (std::size_t i = p.frame_begin[f]; i < p.frame_begin[f + 1]; ++i) rows.push_back(i);
  }
  return rows;
}

// Segmentation focal loss of `head` on the given rows; accumulates
// weight * gradient into `grad` when non-null.
double seg_pass(const TinyHead& head, const Pool& pool, const std::vector<std::size_t>& rows, double gamma,
                double weight, std::vector<double>* grad) {
  if (rows.empty()) return 0.0;
  std::vector<double> x(pool.d), p(rows.size());
  std::vector<std::uint8_t> labels(rows.size());
  std::vector<double> y(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = pool.row(rows[k]);
    std::copy(r.begin(), r.end(), x.begin());
    head.forward(x, {&y[k], 1});
    p[k] = sigmoid(y[k]);
    labels[k] = pool.label[rows[k]];
  }
  const LossValue l = seg_focal_loss(p, labels, gamma);
  if (grad) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double dy = weight * l.grad[k] * p[k] * (1.0 - p[k]);
      if (dy == 0.0) continue;
      const auto r = pool.row(rows[k]);
      std::copy(r.begin(), r.end(), x.begin());
      head.backward(x, {&dy, 1}, *grad);
    }
  }
  return l.value;
}

double depth_pass(const TinyHead& head, const Pool& pool, const std::vector<std::size_t>& rows, double weight,
                  std::vector<double>* grad) {
  if (rows.empty()) return 0.0;
  std::vector<double> x(pool.d), pred(rows.size()), gt(rows.size()), y(rows.size());
  const std::vector<std::uint8_t> valid(rows.size(), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = pool.row(rows[k]);
    std::copy(r.begin(), r.end(), x.begin());
    head.forward(x, {&y[k], 1});
    pred[k] = softplus(y[k]) + kMinDepth;
    gt[k] = pool.target[rows[k]];
  }
  const LossValue l = depth_l2_loss(pred, gt, valid);
  if (grad) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double dy = weight * l.grad[k] * sigmoid(y[k]);
      const auto r = pool.row(rows[k]);
      std::copy(r.begin(), r.end(), x.begin());
      head.backward(x, {&dy, 1}, *grad);
    }
  }
  return l.value;
}

struct Stage1Eval {
  double seg = 0.0;
  double depth = 0.0;
};

// Seg is the mean over the modalities the model uses.
Stage1Eval stage1_pass(Model& m, const Stage1Pools& pools, const std::vector<std::size_t>& frames,
                       std::vector<double>* g_cam, std::vector<double>* g_rad, std::vector<double>* g_depth) {
  const PipelineConfig& c = m.config;
  const bool use_cam = m.mode != SensorMode::radar_only;
  const bool use_rad = m.mode != SensorMode::camera_only;
  const double n_seg = (use_cam ? 1.0 : 0.0) + (use_rad ? 1.0 : 0.0);
  Stage1Eval e;
  if (use_cam) {
    e.seg += seg_pass(m.camera_seg, pools.camera, pool_rows(pools.camera, frames), c.gamma_s, c.lambda_seg / n_seg, g_cam) / n_seg;
    e.depth = depth_pass(m.camera_depth, pools.depth, pool_rows(pools.depth, frames), c.lambda_depth, g_depth);
  }
  if (use_rad) {
    e.seg += seg_pass(m.radar_seg, pools.radar, pool_rows(pools.radar, frames), c.gamma_s, c.lambda_seg / n_seg, g_rad) / n_seg;
  }
  return e;
}

// Detection cells of one frame version.
struct CachedFrame {
  int dim = 0;
  std::vector<float> x;
  std::vector<double> heat;
  std::vector<int> box;  // index into gts, -1 when no box attains the heat
  std::vector<Vec3> anchor;
  std::vector<Box3D> gts;

  std::size_t size() const { return heat.size(); }
};

CachedFrame cache_frame(const Model& m, const FusedCloud& cloud, const std::vector<Box3D>& gts,
                        int max_negative, std::uint64_t seed) {
  const VoxelGrid grid = detection_features(m, cloud);
  const HeatmapTarget ht = heatmap_gt(cloud.points, gts, m.config.sigma_h);
  std::vector<std::size_t> keep, negatives;
  std::vector<double> heat(grid.cells.size(), 0.0);
  std::vector<int> box(grid.cells.size(), -1);
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    for (std::size_t p : grid.cells[i].members) {
      if (ht.values[p] > heat[i]) {
        heat[i] = ht.values[p];
        box[i] = ht.box_of[p];
      }
    }
    (heat[i] > 0.0 ? keep : negatives).push_back(i);
  }
  if (static_cast<int>(negatives.size()) > max_negative) {
    std::mt19937_64 rng(seed);
    std::shuffle(negatives.begin(), negatives.end(), rng);
    negatives.resize(max_negative);
  }
  keep.insert(keep.end(), negatives.begin(), negatives.end());
  std::sort(keep.begin(), keep.end());
  CachedFrame cf;
  cf.dim = grid.dim;
  cf.gts = gts;
  for (std::size_t i : keep) {
    const auto& f = grid.cells[i].feature;
    cf.x.insert(cf.x.end(), f.begin(), f.end());
    cf.heat.push_back(heat[i]);
    cf.box.push_back(box[i]);
    cf.anchor.push_back(grid.cells[i].center);
  }
  return cf;
}

// Cached versions per frame: [intact, camera dropped, radar dropped] with
// dropout, [intact] without.
std::vector<std::vector<CachedFrame>> build_cache(const Model& m, const Dataset& data, const TrainConfig& cfg) {
  std::vector<std::vector<CachedFrame>> cache(data.samples.size());
  const bool versions = cfg.dropout && m.mode == SensorMode::fusion;
  for (std::size_t f = 0; f < data.samples.size(); ++f) {
    const Sample& s = data.samples[f];
    const std::uint64_t fs = child_seed(cfg.seed, 3000 + f);
    const Stage1 s1 = run_stage1(m, s.frame);
    const FusedCloud cloud = build_cloud(m, s1, data.camera, data.radar).cloud;
    cache[f].push_back(cache_frame(m, cloud, s.scene.boxes, cfg.max_negative_cells, fs));
    if (!versions) continue;
    for (DropTarget t : {DropTarget::camera, DropTarget::radar}) {
      const DropoutDecision dec{0.0, t == DropTarget::camera ? 1.0 : 0.0, t};
      const std::uint64_t vs = child_seed(fs, t == DropTarget::camera ? 1 : 2);
      FusedCloud variant;
      if (cfg.dropout_location == DropoutLocation::input) {
        const Stage1 z = run_stage1(m, s.frame, t);
        variant = build_cloud(m, z, data.camera, data.radar).cloud;
      } else {
        variant = apply_dropout(cloud, dec, m.config.p_drop, vs, cfg.dropout_location).cloud;
      }
      cache[f].push_back(cache_frame(m, variant, s.scene.boxes, cfg.max_negative_cells, vs));
    }
  }
  return cache;
}

struct DetectionEval {
  double hm = 0.0;
  double smooth_l1 = 0.0;
  double bin = 0.0;
  double iou = 0.0;
};

// Heatmap loss averaged over frames, box terms over cells with heat > tau_hm.
DetectionEval detection_pass(const Model& m, const std::vector<const CachedFrame*>& frames,
                             std::vector<double>* g_hm, std::vector<double>* g_box) {
  const PipelineConfig& c = m.config;
  DetectionEval e;
  if (frames.empty()) return e;
  std::size_t positives = 0;
  for (const CachedFrame* f : frames) {
    for (std::size_t i = 0; i < f->size(); ++i) positives += (f->heat[i] > c.tau_hm && f->box[i] >= 0) ? 1 : 0;
  }
  const double inv_frames = 1.0 / static_cast<double>(frames.size());
  const double inv_pos = positives ? 1.0 / static_cast<double>(positives) : 0.0;
  const int nb = c.num_heading_bins;
  for (const CachedFrame* f : frames) {
    const std::size_t n = f->size();
    if (n == 0) continue;
    std::vector<double> x(f->dim), logits(n), h(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(f->x.begin() + i * f->dim, f->x.begin() + (i + 1) * f->dim, x.begin());
      m.heatmap.forward(x, {&logits[i], 1});
      h[i] = sigmoid(logits[i]);
    }
    const LossValue hl = heatmap_focal_loss(h, f->heat, c.alpha_h, c.gamma_h, c.epsilon_h);
    e.hm += hl.value * inv_frames;
    std::vector<double> raw(m.box.out_dim());
    for (std::size_t i = 0; i < n; ++i) {
      const bool pos = f->heat[i] > c.tau_hm && f->box[i] >= 0;
      const double dz = c.lambda_hm * inv_frames * hl.grad[i] * h[i] * (1.0 - h[i]);
      if (!pos && (!g_hm || dz == 0.0)) continue;
      std::copy(f->x.begin() + i * f->dim, f->x.begin() + (i + 1) * f->dim, x.begin());
      if (g_hm && dz != 0.0) m.heatmap.backward(x, {&dz, 1}, *g_hm);
      if (!pos) continue;
      m.box.forward(x, raw);
      const BoxLossTerms bt = box_loss(raw, f->anchor[i], f->gts[f->box[i]], nb);
      e.smooth_l1 += bt.smooth_l1 * inv_pos;
      e.bin += bt.bin * inv_pos;
      e.iou += bt.iou * inv_pos;
      if (g_box) {
        std::vector<double> dy(bt.grad);
        for (double& v : dy) v *= inv_pos;
        m.box.backward(x, dy, *g_box);
      }
    }
  }
  return e;
}

std::vector<std::size_t> draw_batch(std::size_t n, int batch, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (static_cast<std::size_t>(batch) >= n) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(batch);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double checked(double v, int step) {
  if (!std::isfinite(v)) throw DomainError("fit: loss became non-finite at step " + std::to_string(step));
  return v;
}

}  // namespace

TrainResult fit(Model& model, const Dataset& data, const TrainConfig& config) {
  config.validate();
  model.config.validate();
  if (data.samples.empty()) throw ConfigError("fit: dataset is empty");
  const PipelineConfig& c = model.config;
  const std::size_t nf = data.samples.size();
  TrainResult res;
  std::vector<std::size_t> all(nf);
  std::iota(all.begin(), all.end(), std::size_t{0});

  const Stage1Pools pools = build_pools(model, data, config);
  std::vector<double> s1_part;
  {
    std::vector<double> v_cam(model.camera_seg.num_params(), 0.0), v_rad(model.radar_seg.num_params(), 0.0),
        v_dep(model.camera_depth.num_params(), 0.0);
    for (int step = 0; step < config.stage1_steps; ++step) {
      const auto frames = draw_batch(nf, config.batch, child_seed(config.seed, 2000 + step));
      std::vector<double> g_cam(v_cam.size(), 0.0), g_rad(v_rad.size(), 0.0), g_dep(v_dep.size(), 0.0);
      const Stage1Eval e = stage1_pass(model, pools, frames, &g_cam, &g_rad, &g_dep);
      s1_part.push_back(checked(c.lambda_seg * e.seg + c.lambda_depth * e.depth, step));
      const double lr = config.learning_rate, mu = config.momentum, clip = config.clip_norm;
      sgd_momentum_step(model.camera_seg.params(), v_cam, g_cam, lr, mu, clip);
      sgd_momentum_step(model.radar_seg.params(), v_rad, g_rad, lr, mu, clip);
      sgd_momentum_step(model.camera_depth.params(), v_dep, g_dep, lr, mu, clip);
    }
  }
  const Stage1Eval s1_final = stage1_pass(model, pools, all, nullptr, nullptr, nullptr);
  res.final_parts.seg = s1_final.seg;
  res.final_parts.depth = s1_final.depth;
  const double s1_const = c.lambda_seg * s1_final.seg + c.lambda_depth * s1_final.depth;

  if (config.stage2_steps == 0) {
    res.trace = s1_part;
    return res;
  }

  const auto cache = build_cache(model, data, config);
  std::vector<const CachedFrame*> intact;
  for (const auto& versions : cache) intact.push_back(&versions.front());
  const auto det_total = [&](const DetectionEval& e) {
    return c.lambda_hm * e.hm + e.smooth_l1 + e.bin + e.iou;
  };
  const double det_initial = det_total(detection_pass(model, intact, nullptr, nullptr));
  for (double v : s1_part) res.trace.push_back(v + det_initial);

  std::vector<double> v_hm(model.heatmap.num_params(), 0.0), v_box(model.box.num_params(), 0.0);
  for (int step = 0; step < config.stage2_steps; ++step) {
    const auto frames = draw_batch(nf, config.batch, child_seed(config.seed, 4000 + step));
    std::vector<const CachedFrame*> batch;
    for (std::size_t f : frames) {
      std::size_t version = 0;
      if (cache[f].size() == 3) {
        const DropoutDecision dec = draw_dropout(c.p_drop, child_seed(config.seed, 5000 + step * nf + f));
        version = dec.dropped == DropTarget::camera ? 1 : dec.dropped == DropTarget::radar ? 2 : 0;
      }
      batch.push_back(&cache[f][version]);
    }
    std::vector<double> g_hm(v_hm.size(), 0.0), g_box(v_box.size(), 0.0);
    const DetectionEval e = detection_pass(model, batch, &g_hm, &g_box);
    res.trace.push_back(checked(s1_const + det_total(e), config.stage1_steps + step));
    sgd_momentum_step(model.heatmap.params(), v_hm, g_hm, config.learning_rate, config.momentum, config.clip_norm);
    sgd_momentum_step(model.box.params(), v_box, g_box, config.learning_rate, config.momentum, config.clip_norm);
  }
  const DetectionEval fe = detection_pass(model, intact, nullptr, nullptr);
  res.final_parts.hm = fe.hm;
  res.final_parts.box_smooth_l1 = fe.smooth_l1;
  res.final_parts.box_bin = fe.bin;
  res.final_parts.box_iou = fe.iou;
  return res;
}

}  // namespace cramfuse
