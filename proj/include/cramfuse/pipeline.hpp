// SPDX-License-Identifier: Apache-2.0
//
// Per-frame detector: 2D features and foreground selection, camera point
// lifting with ray attention, fusion, voxel features and box decoding.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cramfuse/attention.hpp"
#include "cramfuse/config.hpp"
#include "cramfuse/detect.hpp"
#include "cramfuse/features.hpp"
#include "cramfuse/fusion.hpp"
#include "cramfuse/scene.hpp"
#include "cramfuse/voxel.hpp"

namespace cramfuse {

enum class SensorMode { fusion, camera_only, radar_only };

std::string to_string(SensorMode m);
SensorMode sensor_mode_from_string(const std::string& s);

/// Structure of the voxel feature stack and of box decoding.
struct DetectorSettings {
  std::vector<int> aggregate_radii = {1, 3};
  std::vector<int> geometry_radii = {4, 10};
  int modality_geometry_radius = 10;
  int stage1_hidden = 16;
  int stage2_hidden = 32;
  double tau_score = 0.1;
  double nms_iou = 0.2;
  int max_out = 200;

  void validate() const;
};

struct Model {
  PipelineConfig config;
  DetectorSettings detector;
  SensorMode mode = SensorMode::fusion;
  bool attention = true;
  bool modality_code = true;
  TinyHead camera_seg;
  TinyHead camera_depth;
  TinyHead radar_seg;
  TinyHead heatmap;
  TinyHead box;
};

/// Pipeline config with pillar voxels, the layout the detector is built on.
PipelineConfig default_pipeline_config();

/// Width of the per-cell detection feature.
int detection_feature_dim(const PipelineConfig& config, const DetectorSettings& detector);

/// Randomly initialized heads; the depth head's output bias starts at
/// `initial_depth`.
Model make_model(const PipelineConfig& config, const DetectorSettings& detector, std::uint64_t seed,
                 double initial_depth = 20.0);

struct Stage1 {
  FeatureMap camera_fm;
  FeatureMap radar_fm;
  ScoreMap camera_scores;
  ScoreMap radar_scores;
  DepthMap depth;
};

/// `zero_input` blanks one sensor image before feature extraction.
/// Streams the mode does not use are left empty.
Stage1 run_stage1(const Model& model, const SensorFrame& frame, DropTarget zero_input = DropTarget::none,
                  Exec exec = Exec::parallel);

struct FrameCloud {
  FusedCloud cloud;
  std::size_t camera_points = 0;
  std::size_t radar_points = 0;
};

/// Foreground selection, camera lifting (with attention if enabled) and
/// fusion. Modality codes are zeroed when the model disables them.
FrameCloud build_cloud(const Model& model, const Stage1& s1, const CameraModel& cam, const RadarModel& radar,
                       Exec exec = Exec::parallel);

/// Voxelizes the cloud and stacks own features, neighborhood aggregates,
/// and BEV geometry of all, camera and radar cells.
VoxelGrid detection_features(const Model& model, const FusedCloud& cloud, Exec exec = Exec::parallel);

struct FrameResult {
  std::vector<Box3D> boxes;
  std::size_t camera_points = 0;
  std::size_t radar_points = 0;
};

FrameResult detect_frame(const Model& model, const SensorFrame& frame, const CameraModel& cam,
                         const RadarModel& radar, Exec exec = Exec::parallel);

/// Model files: one CRMH file with the five heads in order, plus JSON
/// metadata next to it.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace cramfuse
