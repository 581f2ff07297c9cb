// SPDX-License-Identifier: Apache-2.0
//
// Experiment runners behind the CLI verbs. Each command is deterministic in
// its seeds; only latency columns and timing files vary between runs.
//
// CSV schemas (header line first, one row per sweep point):
//   eval.csv            bucket_lo,bucket_hi,num_gt,num_tp,num_fp,ap
//   threshold.csv       tau,points,ap,latency_ms
//   fusion.csv          attention,dropout,ap_clean,ap_noisy
//   rf_threshold.csv    t,points,ap
//   robustness.csv      sigma,ap_dropout,ap_no_dropout,gap
//   hparams.csv         param,value,ap
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cramfuse/dataset.hpp"
#include "cramfuse/learner.hpp"
#include "cramfuse/metrics.hpp"
#include "cramfuse/pipeline.hpp"

namespace cramfuse {

struct ExperimentConfig {
  SensorMode mode = SensorMode::fusion;
  bool attention = true;
  bool dropout = true;
  DropoutLocation dropout_location = DropoutLocation::point_feature;
  bool modality_code = true;
  PipelineConfig pipeline = default_pipeline_config();
  DetectorSettings detector;
  TrainConfig train;
  SynthConfig synth;
  std::uint64_t seed = 7;
  int n_train = 50;
  int n_test = 20;
  std::filesystem::path dataset;  // empty: synthesize in memory
  std::filesystem::path out_dir = "out";
  std::filesystem::path model;    // empty: train
  double iou_thresh = 0.5;
  double noise_sigma = 0.2;
  std::vector<double> tau_list = {0.05, 0.1, 0.15, 0.25, 0.4, 0.6, 0.8};
  std::vector<double> rf_thresholds = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> sigma_list = {0.0, 0.05, 0.1, 0.2, 0.4};
  std::vector<double> epsilon_grid = {0.05, 0.1, 0.2};
  std::vector<int> s_grid = {1, 2};
  std::vector<double> p_drop_grid = {0.1, 0.2, 0.4};
  std::vector<int> modality_code_grid = {1, 0};

  void validate() const;
};

/// Defaults as JSON, in the schema read by config_from_json.
nlohmann::json default_config_json();

/// Missing keys keep their defaults. Throws ConfigError for unknown keys
/// or invalid values.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Applies "dotted.key=value"; the value is parsed as JSON when possible and
/// taken as a string otherwise. Throws ConfigError for malformed input.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Loads the dataset named by the config, or synthesizes it.
Dataset experiment_dataset(const ExperimentConfig& cfg);

struct EvalSummary {
  EvalResult result;
  std::vector<std::vector<Box3D>> detections;  // per test frame
  std::size_t camera_points = 0;
  std::size_t radar_points = 0;
  double ap() const { return result.buckets.empty() ? 0.0 : result.buckets.front().ap; }
};

std::vector<RangeBucket> default_buckets();

/// The sample's camera image with seeded Gaussian noise of std `sigma`.
SensorFrame noisy_camera(const Sample& s, double sigma);

/// Runs the detector on every sample after `transform` (identity when
/// empty) and scores against the scene boxes.
EvalSummary evaluate(const Model& model, const Dataset& data, double iou_thresh,
                     const std::function<SensorFrame(const Sample&)>& transform = {});

/// Stage-1 heads trained on `train`, with untrained detection heads.
Model train_stage1(const ExperimentConfig& cfg, const Dataset& train);

/// Copy of `base` configured as a variant and with its detection heads
/// trained (stage-1 heads stay fixed).
Model train_variant(const Model& base, const ExperimentConfig& cfg, const Dataset& train, SensorMode mode,
                    bool attention, bool dropout, bool modality_code = true);

/// Full training per the config.
Model train_model(const ExperimentConfig& cfg, const Dataset& train);

void cmd_synth(std::uint64_t seed, int n_train, int n_test, const SynthConfig& synth,
               const std::filesystem::path& dir);

struct RunOutcome {
  EvalSummary eval;
  double seconds = 0.0;
};

/// Trains (or loads) the configured model, evaluates the test split and
/// writes detections.json, eval.csv, bev.svg and timing.json.
RunOutcome cmd_run(const ExperimentConfig& cfg);

/// Trains and saves the configured model to out_dir/model.crmh.
Model cmd_train(const ExperimentConfig& cfg);

struct ThresholdRow {
  double tau = 0.0;
  std::size_t points = 0;
  double ap = 0.0;
  double latency_ms = 0.0;
};
std::vector<ThresholdRow> cmd_ablate_threshold(const ExperimentConfig& cfg);

struct FusionRow {
  bool attention = false;
  bool dropout = false;
  double ap_clean = 0.0;
  double ap_noisy = 0.0;
};
std::vector<FusionRow> cmd_ablate_fusion(const ExperimentConfig& cfg);

struct RfRow {
  double t = 0.0;
  std::size_t points = 0;
  double ap = 0.0;
};
std::vector<RfRow> cmd_ablate_rf_threshold(const ExperimentConfig& cfg);

struct RobustnessRow {
  double sigma = 0.0;
  double ap_dropout = 0.0;
  double ap_no_dropout = 0.0;
  double gap() const { return ap_dropout - ap_no_dropout; }
};
/// Uses `dropout_model` / `plain_model` when both paths are set, otherwise
/// trains both.
std::vector<RobustnessRow> cmd_robustness(const ExperimentConfig& cfg, const std::filesystem::path& dropout_model = {},
                                          const std::filesystem::path& plain_model = {});

struct HparamRow {
  std::string param;
  double value = 0.0;
  double ap = 0.0;
};
std::vector<HparamRow> cmd_ablate_hparams(const ExperimentConfig& cfg);

/// Writers used by the commands; exposed for tests.
std::string detections_json(const EvalSummary& eval, const Dataset& test);
std::string eval_csv(const EvalResult& r);

}  // namespace cramfuse
