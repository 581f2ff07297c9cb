// SPDX-License-Identifier: Apache-2.0
//
// On-disk dataset: `index.json` (scene metadata, sensor models, seeds) next to
// one binary grid file per frame channel. Grid files are little-endian:
//
//   magic[4] ("CRMF")  u32 ndims  u32 dims[ndims]  f32 data[prod(dims)]
//
// Trained heads reuse the same layout with the magic "CRMH".
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cramfuse/scene.hpp"

namespace cramfuse {

inline constexpr std::array<char, 4> kFrameMagic = {'C', 'R', 'M', 'F'};
inline constexpr std::array<char, 4> kHeadMagic = {'C', 'R', 'M', 'H'};

struct GridRecord {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
  bool operator==(const GridRecord&) const = default;
};

/// Appends one record to `out`.
void encode_grid(std::vector<char>& out, const std::array<char, 4>& magic, const GridRecord& rec);

/// Decodes consecutive records from `bytes`. `origin` names the source in
/// error messages. Throws ParseError on malformed or truncated input.
std::vector<GridRecord> decode_grids(std::span<const char> bytes, const std::array<char, 4>& magic,
                                     const std::string& origin);

void write_grid_file(const std::filesystem::path& path, const std::array<char, 4>& magic,
                     std::span<const GridRecord> records);
std::vector<GridRecord> read_grid_file(const std::filesystem::path& path,
                                       const std::array<char, 4>& magic);

struct Sample {
  std::string id;
  std::string split;  // "train" or "test"
  std::uint64_t seed = 0;
  Scene scene;
  SensorFrame frame;
};

struct Dataset {
  std::uint64_t seed = 0;
  CameraModel camera;
  RadarModel radar;
  std::vector<Sample> samples;
};

struct SynthConfig {
  SceneConfig scene;
  CameraRenderConfig camera_render;
  RadarRenderConfig radar_render;
  CameraModel camera = default_camera();
  RadarModel radar = default_radar();
};

/// Scene `i` uses child_seed(seed, i); the first `n_train` samples are the
/// training split, the remaining `n_test` the test split.
Dataset synthesize_dataset(std::uint64_t seed, int n_train, int n_test, const SynthConfig& config);

/// Renders a single sample for the given sample seed.
Sample synthesize_sample(std::uint64_t sample_seed, const std::string& id, const std::string& split,
                         const SynthConfig& config);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

bool datasets_equal(const Dataset& a, const Dataset& b);

}  // namespace cramfuse
