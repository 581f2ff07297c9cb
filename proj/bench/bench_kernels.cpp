// SPDX-License-Identifier: Apache-2.0
//
// Parallel vs serial timings of the OpenMP kernels. The argument selects the
// execution path: 0 serial, 1 parallel.
#include <benchmark/benchmark.h>

#include <random>

#include "cramfuse/attention.hpp"
#include "cramfuse/dataset.hpp"
#include "cramfuse/pipeline.hpp"
#include "cramfuse/voxel.hpp"

using namespace cramfuse;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

struct Fixture {
  Dataset data = synthesize_dataset(11, 1, 0, SynthConfig{});
  PipelineConfig config = default_pipeline_config();
  FeatureMap camera_fm = extract_features(data.samples[0].frame.camera_image, config.d);
  FeatureMap radar_fm = extract_features(data.samples[0].frame.radar_rf, config.d);
  FusedCloud cloud;
  std::vector<CellIndex> pixels;

  Fixture() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1), f(-1, 1);
    std::vector<Vec3> pts;
    std::vector<std::vector<double>> feats;
    for (int i = 0; i < 200000; ++i) {
      pts.emplace_back(50 * u(rng), 50 * u(rng) - 25, 2 * u(rng));
      std::vector<double> v(config.d);
      for (auto& x : v) x = f(rng);
      feats.push_back(v);
    }
    cloud = fuse(pts, feats, {}, {});
    const auto& cam = data.camera;
    for (int r = 0; r < cam.height; r += 2)
      for (int c = 0; c < cam.width; c += 2) pixels.push_back({r, c});
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_ExtractFeatures(benchmark::State& state) {
  const auto& fx = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_features(fx.data.samples[0].frame.camera_image, fx.config.d, exec_of(state)));
  }
}

void BM_RenderCamera(benchmark::State& state) {
  const auto& fx = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        render_camera(fx.data.samples[0].scene, fx.data.camera, CameraRenderConfig{}, 3, exec_of(state)));
  }
}

void BM_RefineCameraPoints(benchmark::State& state) {
  const auto& fx = fixture();
  const DepthMap depth(fx.data.camera.height, fx.data.camera.width, 20.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(refine_camera_points(fx.pixels, depth, fx.camera_fm, fx.radar_fm, fx.data.camera,
                                                  fx.data.radar, fx.config, true, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(fx.pixels.size()));
}

void BM_Voxelize(benchmark::State& state) {
  const auto& fx = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(voxelize_dynamic(fx.cloud, fx.config.voxel, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(fx.cloud.size()));
}

void BM_NeighborhoodAggregate(benchmark::State& state) {
  const auto& fx = fixture();
  const VoxelGrid grid = voxelize_dynamic(fx.cloud, fx.config.voxel);
  for (auto _ : state) benchmark::DoNotOptimize(neighborhood_aggregate(grid, 3, exec_of(state)));
}

void BM_DetectFrame(benchmark::State& state) {
  const auto& fx = fixture();
  Model model = make_model(fx.config, DetectorSettings{}, 1);
  model.config.tau = 0.6;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        detect_frame(model, fx.data.samples[0].frame, fx.data.camera, fx.data.radar, exec_of(state)));
  }
}

}  // namespace

BENCHMARK(BM_ExtractFeatures)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderCamera)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RefineCameraPoints)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Voxelize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NeighborhoodAggregate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DetectFrame)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
