// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "cramfuse/experiment.hpp"
#include "cramfuse/learner.hpp"
#include "cramfuse/losses.hpp"

using namespace cramfuse;

namespace {

const Dataset& toy() {
  static const Dataset d = [] {
    SynthConfig cfg;
    return synthesize_dataset(17, 2, 1, cfg);
  }();
  return d;
}

TrainConfig quick(int s1, int s2) {
  TrainConfig t;
  t.stage1_steps = s1;
  t.stage2_steps = s2;
  t.camera_pool = 300;
  t.radar_pool = 300;
  t.depth_pool = 100;
  t.max_negative_cells = 300;
  t.batch = 2;
  return t;
}

Model fresh(const Dataset& d) {
  return make_model(default_pipeline_config(), DetectorSettings{}, 3, mean_valid_depth(d));
}

}  // namespace

TEST(Learner, ZeroStepsLeaveHeadsUnchanged) {
  const Dataset train = split_view(toy(), "train");
  Model m = fresh(train);
  const Model before = m;
  const auto r = fit(m, train, quick(0, 0));
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(m.camera_seg, before.camera_seg);
  EXPECT_EQ(m.heatmap, before.heatmap);
}

TEST(Learner, ZeroLearningRateGivesConstantTrace) {
  const Dataset train = split_view(toy(), "train");
  Model m = fresh(train);
  TrainConfig t = quick(5, 5);
  t.learning_rate = 0.0;
  const auto r = fit(m, train, t);
  ASSERT_EQ(r.trace.size(), 10u);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_DOUBLE_EQ(r.trace[i], r.trace[0]);
  for (std::size_t i = 6; i < 10; ++i) EXPECT_DOUBLE_EQ(r.trace[i], r.trace[5]);
}

TEST(Learner, ToyRunHalvesLoss) {
  const Dataset train = split_view(toy(), "train");
  Model m = fresh(train);
  const auto r = fit(m, train, quick(250, 250));
  ASSERT_EQ(r.trace.size(), 500u);
  EXPECT_LT(r.trace.back(), 0.5 * r.trace.front());
}

TEST(Learner, DeterministicInSeed) {
  const Dataset train = split_view(toy(), "train");
  Model a = fresh(train), b = fresh(train);
  EXPECT_EQ(fit(a, train, quick(10, 10)).trace, fit(b, train, quick(10, 10)).trace);
  EXPECT_EQ(a.box, b.box);
}

TEST(Learner, SmallStepDecreasesSmoothLoss) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    TinyHead h = TinyHead::random(6, 5, 1, 100 + trial);
    std::vector<std::vector<double>> xs(30, std::vector<double>(6));
    std::vector<std::uint8_t> ys(30);
    for (auto& x : xs)
      for (auto& v : x) v = n(rng);
    for (auto& y : ys) y = rng() & 1;
    const auto loss = [&](const TinyHead& head, std::vector<double>* grad) {
      std::vector<double> p(30);
      for (int i = 0; i < 30; ++i) p[i] = sigmoid(head_forward(head, xs[i])[0]);
      const auto l = seg_focal_loss(p, ys, 2.0);
      if (grad) {
        grad->assign(head.num_params(), 0.0);
        for (int i = 0; i < 30; ++i) {
          const double dz = l.grad[i] * p[i] * (1 - p[i]);
          const auto g = head_backward(head, xs[i], std::span(&dz, 1));
          for (std::size_t k = 0; k < g.params.size(); ++k) (*grad)[k] += g.params[k];
        }
      }
      return l.value;
    };
    std::vector<double> g, v(h.num_params(), 0.0);
    const double before = loss(h, &g);
    sgd_momentum_step(h.params(), v, g, 1e-4, 0.9, 1e9);
    EXPECT_LT(loss(h, nullptr), before);
  }
}

TEST(Model, SaveLoadRoundTrip) {
  const Model m = make_model(default_pipeline_config(), DetectorSettings{}, 5, 20.0);
  const auto path = (std::filesystem::temp_directory_path() / "cramfuse_model.crmh").string();
  save_model(m, path);
  const Model l = load_model(path);
  for (std::size_t i = 0; i < m.box.num_params(); ++i) EXPECT_EQ(l.box.params()[i], static_cast<float>(m.box.params()[i]));
  const auto again = path + ".again";
  save_model(l, again);
  EXPECT_EQ(load_model(again).box, l.box);
  EXPECT_EQ(l.config.tau, m.config.tau);
  EXPECT_THROW(load_model(path + ".missing"), std::exception);
}

TEST(Model, FeatureDimension) {
  EXPECT_EQ(detection_feature_dim(default_pipeline_config(), DetectorSettings{}), 80);
}

TEST(Pipeline, BlankCameraGivesNoCameraDetections) {
  const Dataset train = split_view(toy(), "train");
  Model m = fresh(train);
  fit(m, train, quick(60, 60));
  m.mode = SensorMode::camera_only;
  const Dataset test = split_view(toy(), "test");
  const auto e = evaluate(m, test, 0.5, [](const Sample& s) {
    SensorFrame f = s.frame;
    f.camera_image = Image(f.camera_image.rows(), f.camera_image.cols(), 0.0f);
    return f;
  });
  EXPECT_LT(e.ap(), 0.05);
}

TEST(Pipeline, ThresholdNesting) {
  const Dataset train = split_view(toy(), "train");
  Model m = fresh(train);
  fit(m, train, quick(60, 0));
  const Sample& s = train.samples[0];
  std::size_t last = std::numeric_limits<std::size_t>::max();
  for (double tau : {0.05, 0.15, 0.4, 0.8, 1 - 1e-6}) {
    m.config.tau = tau;
    const Stage1 s1 = run_stage1(m, s.frame);
    const std::size_t n = select_foreground(s1.camera_scores, tau).size();
    EXPECT_LE(n, last);
    last = n;
  }
  EXPECT_EQ(last, 0u);
}

TEST(Config, DefaultsRoundTripAndUnknownKeys) {
  const ExperimentConfig c = config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.pipeline.tau, 0.15);
  EXPECT_EQ(c.pipeline.lambda_seg, 400.0);
  EXPECT_EQ(c.pipeline.num_heading_bins, 12);
  EXPECT_THROW(config_from_json({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(config_from_json({{"pipeline", {{"tau", 1.5}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"mode", "sonar"}}), ConfigError);
}

TEST(Config, DottedOverrides) {
  nlohmann::json j = nlohmann::json::object();
  apply_override(j, "pipeline.epsilon=0.05");
  apply_override(j, "mode=radar_only");
  apply_override(j, "attention=false");
  const ExperimentConfig c = config_from_json(j);
  EXPECT_EQ(c.pipeline.epsilon, 0.05);
  EXPECT_EQ(c.mode, SensorMode::radar_only);
  EXPECT_FALSE(c.attention);
  EXPECT_THROW(apply_override(j, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(j, "a..b=1"), ConfigError);
}

TEST(Writers, EvalCsvFormat) {
  EvalResult r;
  r.buckets.push_back({RangeBucket{}, 0.5, 2, 1, 1, {}});
  EXPECT_EQ(eval_csv(r), "bucket_lo,bucket_hi,num_gt,num_tp,num_fp,ap\n0.000000,inf,2,1,1,0.500000\n");
}
