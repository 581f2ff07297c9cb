// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cramfuse/svg.hpp"

namespace cramfuse {

using nlohmann::json;

void ExperimentConfig::validate() const {
  pipeline.validate();
  detector.validate();
  train.validate();
  synth.scene.validate();
  if (n_train < 0 || n_test < 0) throw ConfigError("n_train and n_test must be nonnegative");
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) throw ConfigError("iou_thresh must lie in (0, 1]");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
  for (double t : tau_list) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("tau_list entries must lie in (0, 1)");
  }
  for (double t : rf_thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("rf_thresholds entries must lie in [0, 1]");
  }
  for (double s : sigma_list) {
    if (s < 0.0) throw ConfigError("sigma_list entries must be nonnegative");
  }
}

json default_config_json() {
  const ExperimentConfig c;
  const PipelineConfig& p = c.pipeline;
  const DetectorSettings& d = c.detector;
  const TrainConfig& t = c.train;
  const SynthConfig& s = c.synth;
  return {
      {"mode", to_string(c.mode)},
      {"attention", c.attention},
      {"dropout", c.dropout},
      {"dropout_location", to_string(c.dropout_location)},
      {"modality_code", c.modality_code},
      {"seed", c.seed},
      {"n_train", c.n_train},
      {"n_test", c.n_test},
      {"dataset", c.dataset.string()},
      {"out_dir", c.out_dir.string()},
      {"model", c.model.string()},
      {"iou_thresh", c.iou_thresh},
      {"noise_sigma", c.noise_sigma},
      {"tau_list", c.tau_list},
      {"rf_thresholds", c.rf_thresholds},
      {"sigma_list", c.sigma_list},
      {"epsilon_grid", c.epsilon_grid},
      {"s_grid", c.s_grid},
      {"p_drop_grid", c.p_drop_grid},
      {"modality_code_grid", c.modality_code_grid},
      {"pipeline",
       {{"tau", p.tau},
        {"d", p.d},
        {"s", p.s},
        {"epsilon", p.epsilon},
        {"p_drop", p.p_drop},
        {"lambda_seg", p.lambda_seg},
        {"lambda_depth", p.lambda_depth},
        {"lambda_hm", p.lambda_hm},
        {"sigma_h", p.sigma_h},
        {"epsilon_h", p.epsilon_h},
        {"tau_hm", p.tau_hm},
        {"gamma_s", p.gamma_s},
        {"gamma_h", p.gamma_h},
        {"alpha_h", p.alpha_h},
        {"num_heading_bins", p.num_heading_bins},
        {"voxel_size", p.voxel.voxel_size},
        {"voxel_mode", to_string(p.voxel.mode)}}},
      {"detector",
       {{"aggregate_radii", d.aggregate_radii},
        {"geometry_radii", d.geometry_radii},
        {"modality_geometry_radius", d.modality_geometry_radius},
        {"stage1_hidden", d.stage1_hidden},
        {"stage2_hidden", d.stage2_hidden},
        {"tau_score", d.tau_score},
        {"nms_iou", d.nms_iou},
        {"max_out", d.max_out}}},
      {"train",
       {{"stage1_steps", t.stage1_steps},
        {"stage2_steps", t.stage2_steps},
        {"learning_rate", t.learning_rate},
        {"momentum", t.momentum},
        {"batch", t.batch},
        {"clip_norm", t.clip_norm},
        {"camera_pool", t.camera_pool},
        {"radar_pool", t.radar_pool},
        {"depth_pool", t.depth_pool},
        {"max_negative_cells", t.max_negative_cells}}},
      {"scene",
       {{"min_boxes", s.scene.min_boxes},
        {"max_boxes", s.scene.max_boxes},
        {"range_min", s.scene.range_min},
        {"range_max", s.scene.range_max}}},
      {"radar_render",
       {{"clutter_mean", s.radar_render.clutter_mean},
        {"weak_probability", s.radar_render.weak_probability},
        {"ghost_max", s.radar_render.ghost_max}}},
  };
}

namespace {

void merge_known(json& base, const json& over, const std::string& prefix) {
  if (!over.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " key '" + prefix + "'") + " must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_known(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  json m = default_config_json();
  merge_known(m, j, "");
  ExperimentConfig c;
  try {
    c.mode = sensor_mode_from_string(m.at("mode"));
    c.attention = m.at("attention");
    c.dropout = m.at("dropout");
    c.dropout_location = dropout_location_from_string(m.at("dropout_location"));
    c.modality_code = m.at("modality_code");
    c.seed = m.at("seed");
    c.n_train = m.at("n_train");
    c.n_test = m.at("n_test");
    c.dataset = m.at("dataset").get<std::string>();
    c.out_dir = m.at("out_dir").get<std::string>();
    c.model = m.at("model").get<std::string>();
    c.iou_thresh = m.at("iou_thresh");
    c.noise_sigma = m.at("noise_sigma");
    c.tau_list = m.at("tau_list").get<std::vector<double>>();
    c.rf_thresholds = m.at("rf_thresholds").get<std::vector<double>>();
    c.sigma_list = m.at("sigma_list").get<std::vector<double>>();
    c.epsilon_grid = m.at("epsilon_grid").get<std::vector<double>>();
    c.s_grid = m.at("s_grid").get<std::vector<int>>();
    c.p_drop_grid = m.at("p_drop_grid").get<std::vector<double>>();
    c.modality_code_grid = m.at("modality_code_grid").get<std::vector<int>>();
    const json& p = m.at("pipeline");
    PipelineConfig& pc = c.pipeline;
    pc.tau = p.at("tau");
    pc.d = p.at("d");
    pc.s = p.at("s");
    pc.epsilon = p.at("epsilon");
    pc.p_drop = p.at("p_drop");
    pc.lambda_seg = p.at("lambda_seg");
    pc.lambda_depth = p.at("lambda_depth");
    pc.lambda_hm = p.at("lambda_hm");
    pc.sigma_h = p.at("sigma_h");
    pc.epsilon_h = p.at("epsilon_h");
    pc.tau_hm = p.at("tau_hm");
    pc.gamma_s = p.at("gamma_s");
    pc.gamma_h = p.at("gamma_h");
    pc.alpha_h = p.at("alpha_h");
    pc.num_heading_bins = p.at("num_heading_bins");
    pc.voxel.voxel_size = p.at("voxel_size");
    pc.voxel.mode = voxel_mode_from_string(p.at("voxel_mode"));
    const json& d = m.at("detector");
    DetectorSettings& dc = c.detector;
    dc.aggregate_radii = d.at("aggregate_radii").get<std::vector<int>>();
    dc.geometry_radii = d.at("geometry_radii").get<std::vector<int>>();
    dc.modality_geometry_radius = d.at("modality_geometry_radius");
    dc.stage1_hidden = d.at("stage1_hidden");
    dc.stage2_hidden = d.at("stage2_hidden");
    dc.tau_score = d.at("tau_score");
    dc.nms_iou = d.at("nms_iou");
    dc.max_out = d.at("max_out");
    const json& t = m.at("train");
    TrainConfig& tc = c.train;
    tc.stage1_steps = t.at("stage1_steps");
    tc.stage2_steps = t.at("stage2_steps");
    tc.learning_rate = t.at("learning_rate");
    tc.momentum = t.at("momentum");
    tc.batch = t.at("batch");
    tc.clip_norm = t.at("clip_norm");
    tc.camera_pool = t.at("camera_pool");
    tc.radar_pool = t.at("radar_pool");
    tc.depth_pool = t.at("depth_pool");
    tc.max_negative_cells = t.at("max_negative_cells");
    const json& s = m.at("scene");
    c.synth.scene.min_boxes = s.at("min_boxes");
    c.synth.scene.max_boxes = s.at("max_boxes");
    c.synth.scene.range_min = s.at("range_min");
    c.synth.scene.range_max = s.at("range_max");
    const json& r = m.at("radar_render");
    c.synth.radar_render.clutter_mean = r.at("clutter_mean");
    c.synth.radar_render.weak_probability = r.at("weak_probability");
    c.synth.radar_render.ghost_max = r.at("ghost_max");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* slot = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
    if (!slot->is_object()) *slot = json::object();
    if (dot == std::string::npos) {
      (*slot)[part] = value;
      return;
    }
    slot = &(*slot)[part];
    start = dot + 1;
  }
}

Dataset experiment_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset.empty()) return load_dataset(cfg.dataset);
  return synthesize_dataset(cfg.seed, cfg.n_train, cfg.n_test, cfg.synth);
}

std::vector<RangeBucket> default_buckets() {
  const double inf = std::numeric_limits<double>::infinity();
  return {{0.0, inf}, {0.0, 30.0}, {30.0, 50.0}, {50.0, inf}};
}

EvalSummary evaluate(const Model& model, const Dataset& data, double iou_thresh,
                     const std::function<SensorFrame(const Sample&)>& transform) {
  EvalSummary out;
  std::vector<EvalFrame> frames;
  for (const Sample& s : data.samples) {
    const FrameResult r = transform ? detect_frame(model, transform(s), data.camera, data.radar)
                                    : detect_frame(model, s.frame, data.camera, data.radar);
    out.camera_points += r.camera_points;
    out.radar_points += r.radar_points;
    out.detections.push_back(r.boxes);
    frames.push_back({r.boxes, s.scene.boxes});
  }
  out.result = bev_ap(frames, iou_thresh, default_buckets());
  return out;
}

Model train_stage1(const ExperimentConfig& cfg, const Dataset& train) {
  Model m = make_model(cfg.pipeline, cfg.detector, child_seed(cfg.seed, 50), mean_valid_depth(train));
  TrainConfig tc = cfg.train;
  tc.stage2_steps = 0;
  tc.seed = child_seed(cfg.seed, 51);
  fit(m, train, tc);
  return m;
}

Model train_variant(const Model& base, const ExperimentConfig& cfg, const Dataset& train, SensorMode mode,
                    bool attention, bool dropout, bool modality_code) {
  Model m = base;
  m.mode = mode;
  m.attention = attention;
  m.modality_code = modality_code;
  TrainConfig tc = cfg.train;
  tc.stage1_steps = 0;
  tc.dropout = dropout;
  tc.dropout_location = cfg.dropout_location;
  tc.seed = child_seed(cfg.seed, 52);
  fit(m, train, tc);
  return m;
}

Model train_model(const ExperimentConfig& cfg, const Dataset& train) {
  const Model base = train_stage1(cfg, train);
  return train_variant(base, cfg, train, cfg.mode, cfg.attention, cfg.dropout, cfg.modality_code);
}

void cmd_synth(std::uint64_t seed, int n_train, int n_test, const SynthConfig& synth,
               const std::filesystem::path& dir) {
  save_dataset(synthesize_dataset(seed, n_train, n_test, synth), dir);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json box_json(const Box3D& b) {
  return {{"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"size", {b.size.x(), b.size.y(), b.size.z()}},
          {"heading", b.heading},
          {"score", b.score}};
}

Model load_or_train(const ExperimentConfig& cfg, const Dataset& train) {
  if (!cfg.model.empty()) return load_model(cfg.model.string());
  return train_model(cfg, train);
}

}  // namespace

SensorFrame noisy_camera(const Sample& s, double sigma) {
  return corrupt_camera(s.frame, sigma, child_seed(s.seed, 900));
}

std::string detections_json(const EvalSummary& eval, const Dataset& test) {
  json frames = json::array();
  for (std::size_t i = 0; i < test.samples.size() && i < eval.detections.size(); ++i) {
    json dets = json::array();
    for (const auto& b : eval.detections[i]) dets.push_back(box_json(b));
    frames.push_back({{"id", test.samples[i].id}, {"detections", dets}});
  }
  return json{{"frames", frames}}.dump(2) + "\n";
}

std::string eval_csv(const EvalResult& r) {
  std::ostringstream o;
  o << "bucket_lo,bucket_hi,num_gt,num_tp,num_fp,ap\n";
  for (const auto& b : r.buckets) {
    o << fmt(b.bucket.lo) << "," << (std::isinf(b.bucket.hi) ? std::string("inf") : fmt(b.bucket.hi)) << ","
      << b.num_gt << "," << b.num_tp << "," << b.num_fp << "," << fmt(b.ap) << "\n";
  }
  return o.str();
}

RunOutcome cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = experiment_dataset(cfg);
  const Dataset train = split_view(data, "train"), test = split_view(data, "test");
  if (test.samples.empty()) throw ConfigError("run: the dataset has no test samples");
  const Model model = load_or_train(cfg, train);
  const auto t1 = std::chrono::steady_clock::now();
  RunOutcome out;
  out.eval = evaluate(model, test, cfg.iou_thresh);
  const auto t2 = std::chrono::steady_clock::now();
  out.seconds = std::chrono::duration<double>(t2 - t0).count();
  write_text(cfg.out_dir / "detections.json", detections_json(out.eval, test));
  write_text(cfg.out_dir / "eval.csv", eval_csv(out.eval.result));
  const RadarModel& r = test.radar;
  write_text(cfg.out_dir / "bev.svg",
             bev_svg(test.samples.front().scene.boxes, out.eval.detections.front(), r.x_min, r.x_max, r.y_min, r.y_max));
  const json timing = {{"train_seconds", std::chrono::duration<double>(t1 - t0).count()},
                       {"eval_seconds", std::chrono::duration<double>(t2 - t1).count()}};
  write_text(cfg.out_dir / "timing.json", timing.dump(2) + "\n");
  return out;
}

Model cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = experiment_dataset(cfg);
  const Model m = train_model(cfg, split_view(data, "train"));
  std::filesystem::create_directories(cfg.out_dir);
  save_model(m, (cfg.out_dir / "model.crmh").string());
  return m;
}

std::vector<ThresholdRow> cmd_ablate_threshold(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = experiment_dataset(cfg);
  const Dataset train = split_view(data, "train"), test = split_view(data, "test");
  const Model model = load_or_train(cfg, train);
  std::vector<ThresholdRow> rows;
  for (double tau : cfg.tau_list) {
    Model m = model;
    m.config.tau = tau;
    const EvalSummary e = evaluate(m, test, cfg.iou_thresh);
    ThresholdRow row{tau, e.camera_points + e.radar_points, e.ap(), 0.0};
    if (!test.samples.empty()) {
      const Sample& s = test.samples.front();
      row.latency_ms = latency_probe([&] { detect_frame(m, s.frame, test.camera, test.radar, Exec::serial); });
    }
    rows.push_back(row);
  }
  std::ostringstream o;
  o << "tau,points,ap,latency_ms\n";
  PlotSeries pts{"points (x1000)", {}, {}}, ap{"AP", {}, {}}, lat{"latency (s)", {}, {}};
  for (const auto& r : rows) {
    o << fmt(r.tau) << "," << r.points << "," << fmt(r.ap) << "," << fmt(r.latency_ms) << "\n";
    pts.xs.push_back(r.tau), pts.ys.push_back(r.points / 1000.0);
    ap.xs.push_back(r.tau), ap.ys.push_back(r.ap);
    lat.xs.push_back(r.tau), lat.ys.push_back(r.latency_ms / 1000.0);
  }
  write_text(cfg.out_dir / "threshold.csv", o.str());
  write_text(cfg.out_dir / "threshold.svg", line_plot_svg("Foreground threshold sweep", "tau", "value", {pts, ap, lat}));
  return rows;
}

std::vector<FusionRow> cmd_ablate_fusion(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = experiment_dataset(cfg);
  const Dataset train = split_view(data, "train"), test = split_view(data, "test");
  const Model base = train_stage1(cfg, train);
  std::vector<FusionRow> rows;
  for (bool att : {false, true}) {
    for (bool drop : {false, true}) {
      const Model m = train_variant(base, cfg, train, SensorMode::fusion, att, drop, cfg.modality_code);
      FusionRow row{att, drop, evaluate(m, test, cfg.iou_thresh).ap(), 0.0};
      row.ap_noisy = evaluate(m, test, cfg.iou_thresh, [&](const Sample& s) { return noisy_camera(s, cfg.noise_sigma); }).ap();
      rows.push_back(row);
    }
  }
  std::ostringstream o;
  o << "attention,dropout,ap_clean,ap_noisy\n";
  for (const auto& r : rows) o << r.attention << "," << r.dropout << "," << fmt(r.ap_clean) << "," << fmt(r.ap_noisy) << "\n";
  write_text(cfg.out_dir / "fusion.csv", o.str());
  return rows;
}

std::vector<RfRow> cmd_ablate_rf_threshold(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = experiment_dataset(cfg);
  const Dataset train = split_view(data, "train"), test = split_view(data, "test");
  const Model model = load_or_train(cfg, train);
  std::vector<RfRow> rows;
  for (double t : cfg.rf_thresholds) {
    RfRow row{t, 0, 0.0};
    for (const auto& s : test.samples) row.points += threshold_rf(s.frame.radar_rf, t).size();
    row.ap = evaluate(model, test, cfg.iou_thresh, [&](const Sample& s) {
               SensorFrame f = s.frame;
               f.radar_rf = apply_rf_threshold(f.radar_rf, t);
               return f;
             }).ap();
    rows.push_back(row);
  }
  std::ostringstream o;
  o << "t,points,ap\n";
  PlotSeries ap{"AP", {}, {}};
  for (const auto& r : rows) {
    o << fmt(r.t) << "," << r.points << "," << fmt(r.ap) << "\n";
    ap.xs.push_back(r.t), ap.ys.push_back(r.ap);
  }
  write_text(cfg.out_dir / "rf_threshold.csv", o.str());
  write_text(cfg.out_dir / "rf_threshold.svg", line_plot_svg("RF intensity threshold", "t", "BEV AP", {ap}));
  return rows;
}

std::vector<RobustnessRow> cmd_robustness(const ExperimentConfig& cfg, const std::filesystem::path& dropout_model,
                                          const std::filesystem::path& plain_model) {
  cfg.validate();
  const Dataset data = experiment_dataset(cfg);
  const Dataset train = split_view(data, "train"), test = split_view(data, "test");
  Model with, without;
  if (!dropout_model.empty() || !plain_model.empty()) {
    if (dropout_model.empty() || plain_model.empty()) throw ConfigError("robustness: both model files are required");
    with = load_model(dropout_model.string());
    without = load_model(plain_model.string());
  } else {
    const Model base = train_stage1(cfg, train);
    with = train_variant(base, cfg, train, SensorMode::fusion, cfg.attention, true, cfg.modality_code);
    without = train_variant(base, cfg, train, SensorMode::fusion, cfg.attention, false, cfg.modality_code);
  }
  std::vector<RobustnessRow> rows;
  for (double sigma : cfg.sigma_list) {
    const auto tf = [&](const Sample& s) { return noisy_camera(s, sigma); };
    rows.push_back({sigma, evaluate(with, test, cfg.iou_thresh, tf).ap(), evaluate(without, test, cfg.iou_thresh, tf).ap()});
  }
  std::ostringstream o;
  o << "sigma,ap_dropout,ap_no_dropout,gap\n";
  PlotSeries a{"with dropout", {}, {}}, b{"without dropout", {}, {}};
  for (const auto& r : rows) {
    o << fmt(r.sigma) << "," << fmt(r.ap_dropout) << "," << fmt(r.ap_no_dropout) << "," << fmt(r.gap()) << "\n";
    a.xs.push_back(r.sigma), a.ys.push_back(r.ap_dropout);
    b.xs.push_back(r.sigma), b.ys.push_back(r.ap_no_dropout);
  }
  write_text(cfg.out_dir / "robustness.csv", o.str());
  write_text(cfg.out_dir / "robustness.svg", line_plot_svg("Camera noise robustness", "noise sigma", "BEV AP", {a, b}));
  return rows;
}

std::vector<HparamRow> cmd_ablate_hparams(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset data = experiment_dataset(cfg);
  const Dataset train = split_view(data, "train"), test = split_view(data, "test");
  const Model base = train_stage1(cfg, train);
  std::vector<HparamRow> rows;
  const auto run = [&](const std::string& name, double value, ExperimentConfig c, bool code) {
    Model b = base;
    b.config = c.pipeline;
    const Model m = train_variant(b, c, train, SensorMode::fusion, c.attention, c.dropout, code);
    rows.push_back({name, value, evaluate(m, test, c.iou_thresh).ap()});
  };
  for (double e : cfg.epsilon_grid) {
    ExperimentConfig c = cfg;
    c.pipeline.epsilon = e;
    run("epsilon", e, c, cfg.modality_code);
  }
  for (int s : cfg.s_grid) {
    ExperimentConfig c = cfg;
    c.pipeline.s = s;
    run("s", s, c, cfg.modality_code);
  }
  for (double p : cfg.p_drop_grid) {
    ExperimentConfig c = cfg;
    c.pipeline.p_drop = p;
    run("p_drop", p, c, cfg.modality_code);
  }
  for (int code : cfg.modality_code_grid) run("modality_code", code, cfg, code != 0);
  std::ostringstream o;
  o << "param,value,ap\n";
  for (const auto& r : rows) o << r.param << "," << fmt(r.value) << "," << fmt(r.ap) << "\n";
  write_text(cfg.out_dir / "hparams.csv", o.str());
  return rows;
}

}  // namespace cramfuse
