// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/pipeline.hpp"

#include <fstream>

#include <json.hpp>

#include "cramfuse/dataset.hpp"

namespace cramfuse {

std::string to_string(SensorMode m) {
  switch (m) {
    case SensorMode::fusion: return "fusion";
    case SensorMode::camera_only: return "camera_only";
    case SensorMode::radar_only: return "radar_only";
  }
  return "fusion";
}

SensorMode sensor_mode_from_string(const std::string& s) {
  if (s == "fusion") return SensorMode::fusion;
  if (s == "camera_only") return SensorMode::camera_only;
  if (s == "radar_only") return SensorMode::radar_only;
  throw ConfigError("unknown mode '" + s + "'");
}

void DetectorSettings::validate() const {
  for (int r : aggregate_radii) {
    if (r < 0) throw ConfigError("aggregate radii must be nonnegative");
  }
  for (int r : geometry_radii) {
    if (r < 1) throw ConfigError("geometry radii must be positive");
  }
  if (modality_geometry_radius < 1) throw ConfigError("modality_geometry_radius must be positive");
  if (stage1_hidden < 0 || stage2_hidden < 0) throw ConfigError("hidden sizes must be nonnegative");
  if (!(tau_score > 0.0 && tau_score < 1.0)) throw ConfigError("tau_score must lie in (0, 1)");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ConfigError("nms_iou must lie in (0, 1]");
  if (max_out < 1) throw ConfigError("max_out must be positive");
}

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  c.voxel.mode = VoxelMode::pillar;
  return c;
}

int detection_feature_dim(const PipelineConfig& config, const DetectorSettings& detector) {
  const int c = config.d + 2;
  return c + static_cast<int>(detector.aggregate_radii.size()) * (c + 1) +
         kGeometryDim * static_cast<int>(detector.geometry_radii.size() + 2);
}

Model make_model(const PipelineConfig& config, const DetectorSettings& detector, std::uint64_t seed,
                 double initial_depth) {
  config.validate();
  detector.validate();
  Model m;
  m.config = config;
  m.detector = detector;
  const int d = config.d, h1 = detector.stage1_hidden, h2 = detector.stage2_hidden;
  const int fd = detection_feature_dim(config, detector);
  m.camera_seg = TinyHead::random(d, h1, 1, child_seed(seed, 10));
  m.camera_depth = TinyHead::random(d, h1, 1, child_seed(seed, 11));
  m.radar_seg = TinyHead::random(d, h1, 1, child_seed(seed, 12));
  m.heatmap = TinyHead::random(fd, h2, 1, child_seed(seed, 13));
  m.box = TinyHead::random(fd, h2, kBoxParams + config.num_heading_bins + 1, child_seed(seed, 14), 0.1);
  // Inverse softplus so the untrained depth head predicts initial_depth.
  const double y = std::max(initial_depth - kMinDepth, 1e-3);
  m.camera_depth.output_bias()[0] = y > 30.0 ? y : std::log(std::expm1(y));
  m.heatmap.output_bias()[0] = -2.0;
  return m;
}

Stage1 run_stage1(const Model& model, const SensorFrame& frame, DropTarget zero_input, Exec exec) {
  Stage1 s;
  const int d = model.config.d;
  if (model.mode != SensorMode::radar_only) {
    Image img = frame.camera_image;
    if (zero_input == DropTarget::camera) std::fill(img.storage().begin(), img.storage().end(), 0.0f);
    s.camera_fm = extract_features(img, d, exec);
    s.camera_scores = score_foreground(s.camera_fm, model.camera_seg, exec);
    s.depth = predict_depth(s.camera_fm, model.camera_depth, exec);
  }
  if (model.mode != SensorMode::camera_only) {
    Image rf = frame.radar_rf;
    if (zero_input == DropTarget::radar) std::fill(rf.storage().begin(), rf.storage().end(), 0.0f);
    s.radar_fm = extract_features(rf, d, exec);
    s.radar_scores = score_foreground(s.radar_fm, model.radar_seg, exec);
  }
  return s;
}

FrameCloud build_cloud(const Model& model, const Stage1& s1, const CameraModel& cam, const RadarModel& radar,
                       Exec exec) {
  std::vector<Vec3> cam_pts, rad_pts;
  std::vector<std::vector<double>> cam_feats, rad_feats;
  if (model.mode != SensorMode::radar_only) {
    const auto pixels = select_foreground(s1.camera_scores, model.config.tau);
    const auto points = refine_camera_points(pixels, s1.depth, s1.camera_fm, s1.radar_fm, cam, radar, model.config,
                                             model.attention, exec);
    for (const auto& p : points) {
      cam_pts.push_back(p.location);
      cam_feats.push_back(p.feature);
    }
  }
  if (model.mode != SensorMode::camera_only) {
    for (const CellIndex& c : select_foreground(s1.radar_scores, model.config.tau)) {
      rad_pts.push_back(radar_cell_to_point(radar, c));
      rad_feats.push_back(feature_vector(s1.radar_fm, c.row, c.col));
    }
  }
  FrameCloud fc;
  fc.camera_points = cam_pts.size();
  fc.radar_points = rad_pts.size();
  fc.cloud = fuse(cam_pts, cam_feats, rad_pts, rad_feats);
  if (fc.cloud.dim == 0) fc.cloud.dim = model.config.d + 2;
  if (!model.modality_code) clear_modality_codes(fc.cloud);
  return fc;
}

namespace {

FusedCloud subset(const FusedCloud& cloud, Modality m) {
  FusedCloud out;
  out.dim = cloud.dim;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.source[i] == m) out.push(cloud.points[i], cloud.row(i), m);
  }
  return out;
}

}  // namespace

VoxelGrid detection_features(const Model& model, const FusedCloud& cloud, Exec exec) {
  const DetectorSettings& det = model.detector;
  const VoxelGrid grid = voxelize_dynamic(cloud, model.config.voxel, exec);
  const int c = grid.dim;
  VoxelGrid out;
  out.config = grid.config;
  out.dim = detection_feature_dim(model.config, det);
  out.cells = grid.cells;
  for (int r : det.aggregate_radii) {
    const VoxelGrid agg = neighborhood_aggregate(grid, r, exec);
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
      const auto& f = agg.cells[i].feature;
      out.cells[i].feature.insert(out.cells[i].feature.end(), f.begin() + c, f.end());
    }
  }
  const auto append = [&](const std::vector<std::array<double, kGeometryDim>>& g) {
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
      out.cells[i].feature.insert(out.cells[i].feature.end(), g[i].begin(), g[i].end());
    }
  };
  for (int r : det.geometry_radii) append(neighborhood_geometry(grid, grid, r));
  const int rm = det.modality_geometry_radius;
  if (model.modality_code) {
    append(neighborhood_geometry(grid, voxelize_dynamic(subset(cloud, Modality::camera), grid.config, exec), rm));
    append(neighborhood_geometry(grid, voxelize_dynamic(subset(cloud, Modality::radar), grid.config, exec), rm));
  } else {
    const auto g = neighborhood_geometry(grid, grid, rm);
    append(g);
    append(g);
  }
  return out;
}

FrameResult detect_frame(const Model& model, const SensorFrame& frame, const CameraModel& cam,
                         const RadarModel& radar, Exec exec) {
  const Stage1 s1 = run_stage1(model, frame, DropTarget::none, exec);
  const FrameCloud fc = build_cloud(model, s1, cam, radar, exec);
  const VoxelGrid grid = detection_features(model, fc.cloud, exec);
  const auto outputs = apply_detection_head(grid, model.heatmap, model.box, exec);
  const auto boxes = decode_boxes(grid, outputs, model.detector.tau_score, model.config.num_heading_bins);
  FrameResult r;
  r.boxes = nms_rotated(boxes, model.detector.nms_iou, model.detector.max_out);
  r.camera_points = fc.camera_points;
  r.radar_points = fc.radar_points;
  return r;
}

namespace {

nlohmann::json model_meta(const Model& m) {
  const PipelineConfig& c = m.config;
  const DetectorSettings& d = m.detector;
  return {{"format", "cramfuse-model"},
          {"version", 1},
          {"mode", to_string(m.mode)},
          {"attention", m.attention},
          {"modality_code", m.modality_code},
          {"pipeline",
           {{"tau", c.tau},         {"d", c.d},
            {"s", c.s},             {"epsilon", c.epsilon},
            {"p_drop", c.p_drop},   {"lambda_seg", c.lambda_seg},
            {"lambda_depth", c.lambda_depth}, {"lambda_hm", c.lambda_hm},
            {"sigma_h", c.sigma_h}, {"epsilon_h", c.epsilon_h},
            {"tau_hm", c.tau_hm},   {"gamma_s", c.gamma_s},
            {"gamma_h", c.gamma_h}, {"alpha_h", c.alpha_h},
            {"num_heading_bins", c.num_heading_bins},
            {"voxel_size", c.voxel.voxel_size}, {"voxel_mode", to_string(c.voxel.mode)},
            {"region_min", {c.voxel.region_min.x(), c.voxel.region_min.y(), c.voxel.region_min.z()}},
            {"region_max", {c.voxel.region_max.x(), c.voxel.region_max.y(), c.voxel.region_max.z()}}}},
          {"detector",
           {{"aggregate_radii", d.aggregate_radii},
            {"geometry_radii", d.geometry_radii},
            {"modality_geometry_radius", d.modality_geometry_radius},
            {"stage1_hidden", d.stage1_hidden},
            {"stage2_hidden", d.stage2_hidden},
            {"tau_score", d.tau_score},
            {"nms_iou", d.nms_iou},
            {"max_out", d.max_out}}}};
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::vector<GridRecord> recs;
  for (const TinyHead* h : {&model.camera_seg, &model.camera_depth, &model.radar_seg, &model.heatmap, &model.box}) {
    const auto r = h->to_records();
    recs.insert(recs.end(), r.begin(), r.end());
  }
  write_grid_file(path, kHeadMagic, recs);
  std::ofstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot write " + path + ".json");
  meta << model_meta(model).dump(2) << "\n";
}

Model load_model(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw ParseError(path + ".json", "cannot open model metadata");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ".json @ byte " + std::to_string(e.byte), e.what());
  }
  Model m;
  try {
    if (j.at("format") != "cramfuse-model") throw ParseError(path + ".json", "not a model file");
    m.mode = sensor_mode_from_string(j.at("mode"));
    m.attention = j.at("attention");
    m.modality_code = j.at("modality_code");
    const auto& p = j.at("pipeline");
    PipelineConfig& c = m.config;
    c.tau = p.at("tau");
    c.d = p.at("d");
    c.s = p.at("s");
    c.epsilon = p.at("epsilon");
    c.p_drop = p.at("p_drop");
    c.lambda_seg = p.at("lambda_seg");
    c.lambda_depth = p.at("lambda_depth");
    c.lambda_hm = p.at("lambda_hm");
    c.sigma_h = p.at("sigma_h");
    c.epsilon_h = p.at("epsilon_h");
    c.tau_hm = p.at("tau_hm");
    c.gamma_s = p.at("gamma_s");
    c.gamma_h = p.at("gamma_h");
    c.alpha_h = p.at("alpha_h");
    c.num_heading_bins = p.at("num_heading_bins");
    c.voxel.voxel_size = p.at("voxel_size");
    c.voxel.mode = voxel_mode_from_string(p.at("voxel_mode"));
    for (int k = 0; k < 3; ++k) {
      c.voxel.region_min[k] = p.at("region_min").at(k);
      c.voxel.region_max[k] = p.at("region_max").at(k);
    }
    const auto& d = j.at("detector");
    DetectorSettings& s = m.detector;
    s.aggregate_radii = d.at("aggregate_radii").get<std::vector<int>>();
    s.geometry_radii = d.at("geometry_radii").get<std::vector<int>>();
    s.modality_geometry_radius = d.at("modality_geometry_radius");
    s.stage1_hidden = d.at("stage1_hidden");
    s.stage2_hidden = d.at("stage2_hidden");
    s.tau_score = d.at("tau_score");
    s.nms_iou = d.at("nms_iou");
    s.max_out = d.at("max_out");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ".json", e.what());
  }
  const auto recs = read_grid_file(path, kHeadMagic);
  std::size_t at = 0;
  for (TinyHead* h : {&m.camera_seg, &m.camera_depth, &m.radar_seg, &m.heatmap, &m.box}) {
    if (at >= recs.size()) throw ParseError(path, "missing head records");
    const int n = recs[at].data.size() == 3 && recs[at].data[1] > 0.0f ? 5 : 3;
    if (at + n > recs.size()) throw ParseError(path, "truncated head records");
    *h = TinyHead::from_records(std::span<const GridRecord>(recs).subspan(at, n), path);
    at += n;
  }
  if (at != recs.size()) throw ParseError(path, "trailing head records");
  return m;
}

}  // namespace cramfuse
