// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cramfuse {
namespace {

using nlohmann::json;

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const char> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

std::string at_byte(const std::string& origin, std::size_t offset) {
  return origin + " @ byte " + std::to_string(offset);
}

json transform_to_json(const RigidTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  return {{"rotation", rot},
          {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

RigidTransform transform_from_json(const json& j) {
  RigidTransform t;
  const auto& rot = j.at("rotation");
  if (rot.size() != 9) throw ConfigError("rotation must have 9 entries");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot.at(3 * r + c).get<double>();
  const auto& tr = j.at("translation");
  t.translation = Vec3(tr.at(0).get<double>(), tr.at(1).get<double>(), tr.at(2).get<double>());
  return t;
}

json camera_to_json(const CameraModel& c) {
  return {{"fx", c.fx},         {"fy", c.fy},          {"cx", c.cx},
          {"cy", c.cy},         {"width", c.width},    {"height", c.height},
          {"extrinsics", transform_to_json(c.extrinsics)}};
}

CameraModel camera_from_json(const json& j) {
  CameraModel c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.extrinsics = transform_from_json(j.at("extrinsics"));
  return c;
}

json radar_to_json(const RadarModel& r) {
  return {{"x_min", r.x_min},         {"x_max", r.x_max},
          {"y_min", r.y_min},         {"y_max", r.y_max},
          {"cell_size", r.cell_size}, {"sensor_height", r.sensor_height},
          {"pose", transform_to_json(r.pose)}};
}

RadarModel radar_from_json(const json& j) {
  RadarModel r;
  r.x_min = j.at("x_min").get<double>();
  r.x_max = j.at("x_max").get<double>();
  r.y_min = j.at("y_min").get<double>();
  r.y_max = j.at("y_max").get<double>();
  r.cell_size = j.at("cell_size").get<double>();
  r.sensor_height = j.at("sensor_height").get<double>();
  r.pose = transform_from_json(j.at("pose"));
  return r;
}

json box_to_json(const Box3D& b) {
  return {{"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"size", {b.size.x(), b.size.y(), b.size.z()}},
          {"heading", b.heading},
          {"score", b.score},
          {"category", b.category}};
}

Box3D box_from_json(const json& j) {
  Box3D b;
  const auto& c = j.at("center");
  const auto& s = j.at("size");
  b.center = Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
  b.size = Vec3(s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>());
  b.heading = j.at("heading").get<double>();
  b.score = j.at("score").get<double>();
  b.category = j.at("category").get<int>();
  return b;
}

template <typename T>
GridRecord to_record(const Grid2D<T>& g) {
  GridRecord rec;
  rec.dims = {static_cast<std::uint32_t>(g.rows()), static_cast<std::uint32_t>(g.cols())};
  rec.data.reserve(g.size());
  for (const T& v : g.values()) rec.data.push_back(static_cast<float>(v));
  return rec;
}

template <typename T>
Grid2D<T> from_record(const GridRecord& rec, const std::string& origin) {
  if (rec.dims.size() != 2) throw ParseError(origin, "expected a 2D grid");
  Grid2D<T> g(static_cast<int>(rec.dims[0]), static_cast<int>(rec.dims[1]));
  for (std::size_t i = 0; i < rec.data.size(); ++i) g.storage()[i] = static_cast<T>(rec.data[i]);
  return g;
}

template <typename T>
Grid2D<T> read_single_grid(const std::filesystem::path& path) {
  const auto recs = read_grid_file(path, kFrameMagic);
  if (recs.size() != 1) throw ParseError(path.string(), "expected exactly one grid record");
  return from_record<T>(recs.front(), path.string());
}

}  // namespace

void encode_grid(std::vector<char>& out, const std::array<char, 4>& magic, const GridRecord& rec) {
  out.insert(out.end(), magic.begin(), magic.end());
  put_u32(out, static_cast<std::uint32_t>(rec.dims.size()));
  std::size_t n = 1;
  for (auto d : rec.dims) {
    put_u32(out, d);
    n *= d;
  }
  if (n != rec.data.size()) throw ConfigError("encode_grid: dims do not match data size");
  for (float f : rec.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<GridRecord> decode_grids(std::span<const char> bytes, const std::array<char, 4>& magic,
                                     const std::string& origin) {
  std::vector<GridRecord> out;
  std::size_t at = 0;
  const auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - at < n) {
      throw ParseError(at_byte(origin, at), std::string("truncated ") + what);
    }
  };
  if (bytes.empty()) throw ParseError(at_byte(origin, 0), "empty file");
  while (at < bytes.size()) {
    need(4, "magic");
    if (std::memcmp(bytes.data() + at, magic.data(), 4) != 0) {
      throw ParseError(at_byte(origin, at), "bad magic, expected '" + std::string(magic.data(), 4) + "'");
    }
    at += 4;
    need(4, "dimension count");
    const std::uint32_t nd = get_u32(bytes, at);
    at += 4;
    if (nd == 0 || nd > 8) throw ParseError(at_byte(origin, at - 4), "unsupported dimension count " + std::to_string(nd));
    GridRecord rec;
    std::uint64_t count = 1;
    for (std::uint32_t k = 0; k < nd; ++k) {
      need(4, "dimension");
      rec.dims.push_back(get_u32(bytes, at));
      count *= rec.dims.back();
      at += 4;
    }
    if (count > (bytes.size() - at) / 4) {
      throw ParseError(at_byte(origin, at), "truncated data: need " + std::to_string(count) + " floats");
    }
    rec.data.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      rec.data[i] = std::bit_cast<float>(get_u32(bytes, at));
      at += 4;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_grid_file(const std::filesystem::path& path, const std::array<char, 4>& magic,
                     std::span<const GridRecord> records) {
  std::vector<char> bytes;
  for (const auto& r : records) encode_grid(bytes, magic, r);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<GridRecord> read_grid_file(const std::filesystem::path& path,
                                       const std::array<char, 4>& magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(path.string(), "cannot open file");
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_grids(bytes, magic, path.string());
}

Sample synthesize_sample(std::uint64_t sample_seed, const std::string& id, const std::string& split,
                         const SynthConfig& config) {
  Sample s;
  s.id = id;
  s.split = split;
  s.seed = sample_seed;
  s.scene = generate_scene(sample_seed, config.scene, config.camera, config.radar);
  auto cam = render_camera(s.scene, config.camera, config.camera_render, child_seed(sample_seed, 1));
  s.frame.camera_image = std::move(cam.camera_image);
  s.frame.true_depth = std::move(cam.true_depth);
  s.frame.depth_valid = std::move(cam.depth_valid);
  s.frame.radar_rf = render_radar(s.scene, config.radar, config.radar_render, child_seed(sample_seed, 2));
  return s;
}

Dataset synthesize_dataset(std::uint64_t seed, int n_train, int n_test, const SynthConfig& config) {
  if (n_train < 0 || n_test < 0) throw ConfigError("synthesize_dataset: negative sample count");
  Dataset ds;
  ds.seed = seed;
  ds.camera = config.camera;
  ds.radar = config.radar;
  const int n = n_train + n_test;
  ds.samples.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "frame_%04d", i);
    ds.samples[i] = synthesize_sample(child_seed(seed, static_cast<std::uint64_t>(i)), id,
                                      i < n_train ? "train" : "test", config);
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json index;
  index["format"] = "cramfuse-dataset";
  index["version"] = 1;
  index["seed"] = dataset.seed;
  index["camera"] = camera_to_json(dataset.camera);
  index["radar"] = radar_to_json(dataset.radar);
  index["samples"] = json::array();
  for (const auto& s : dataset.samples) {
    json js;
    js["id"] = s.id;
    js["split"] = s.split;
    js["seed"] = s.seed;
    js["weather"] = to_string(s.scene.weather);
    js["bounds"] = {s.scene.bounds.x_min, s.scene.bounds.x_max, s.scene.bounds.y_min,
                    s.scene.bounds.y_max};
    js["boxes"] = json::array();
    for (const auto& b : s.scene.boxes) js["boxes"].push_back(box_to_json(b));
    const json files = {{"camera", s.id + "_camera.bin"},
                        {"depth", s.id + "_depth.bin"},
                        {"depth_valid", s.id + "_valid.bin"},
                        {"radar", s.id + "_radar.bin"}};
    js["files"] = files;
    const std::array<GridRecord, 1> cam{to_record(s.frame.camera_image)};
    const std::array<GridRecord, 1> depth{to_record(s.frame.true_depth)};
    const std::array<GridRecord, 1> valid{to_record(s.frame.depth_valid)};
    const std::array<GridRecord, 1> radar{to_record(s.frame.radar_rf)};
    write_grid_file(dir / files["camera"].get<std::string>(), kFrameMagic, cam);
    write_grid_file(dir / files["depth"].get<std::string>(), kFrameMagic, depth);
    write_grid_file(dir / files["depth_valid"].get<std::string>(), kFrameMagic, valid);
    write_grid_file(dir / files["radar"].get<std::string>(), kFrameMagic, radar);
    index["samples"].push_back(std::move(js));
  }
  std::ofstream f(dir / "index.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + (dir / "index.json").string() + "'");
  f << index.dump(1) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  std::ifstream f(index_path);
  if (!f) throw ParseError(index_path.string(), "cannot open file");
  json index;
  try {
    index = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(at_byte(index_path.string(), e.byte), e.what());
  }
  Dataset ds;
  try {
    if (index.at("format").get<std::string>() != "cramfuse-dataset") {
      throw ParseError(index_path.string(), "not a cramfuse dataset index");
    }
    ds.seed = index.at("seed").get<std::uint64_t>();
    ds.camera = camera_from_json(index.at("camera"));
    ds.radar = radar_from_json(index.at("radar"));
    for (const auto& js : index.at("samples")) {
      Sample s;
      s.id = js.at("id").get<std::string>();
      s.split = js.at("split").get<std::string>();
      s.seed = js.at("seed").get<std::uint64_t>();
      s.scene.weather = weather_from_string(js.at("weather").get<std::string>());
      const auto& b = js.at("bounds");
      s.scene.bounds = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                        b.at(3).get<double>()};
      for (const auto& jb : js.at("boxes")) s.scene.boxes.push_back(box_from_json(jb));
      const auto& files = js.at("files");
      s.frame.camera_image = read_single_grid<float>(dir / files.at("camera").get<std::string>());
      s.frame.true_depth = read_single_grid<float>(dir / files.at("depth").get<std::string>());
      s.frame.depth_valid = read_single_grid<std::uint8_t>(dir / files.at("depth_valid").get<std::string>());
      s.frame.radar_rf = read_single_grid<float>(dir / files.at("radar").get<std::string>());
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ParseError(index_path.string(), std::string("schema error: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(index_path.string(), std::string("invalid value: ") + e.what());
  }
  return ds;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  const auto same_box = [](const Box3D& x, const Box3D& y) {
    return x.center == y.center && x.size == y.size && x.heading == y.heading &&
           x.score == y.score && x.category == y.category;
  };
  const auto same_tf = [](const RigidTransform& x, const RigidTransform& y) {
    return x.rotation == y.rotation && x.translation == y.translation;
  };
  if (a.seed != b.seed || a.samples.size() != b.samples.size()) return false;
  const auto& ca = a.camera;
  const auto& cb = b.camera;
  if (ca.fx != cb.fx || ca.fy != cb.fy || ca.cx != cb.cx || ca.cy != cb.cy || ca.width != cb.width ||
      ca.height != cb.height || !same_tf(ca.extrinsics, cb.extrinsics)) {
    return false;
  }
  const auto& ra = a.radar;
  const auto& rb = b.radar;
  if (ra.x_min != rb.x_min || ra.x_max != rb.x_max || ra.y_min != rb.y_min || ra.y_max != rb.y_max ||
      ra.cell_size != rb.cell_size || ra.sensor_height != rb.sensor_height || !same_tf(ra.pose, rb.pose)) {
    return false;
  }
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto& x = a.samples[i];
    const auto& y = b.samples[i];
    if (x.id != y.id || x.split != y.split || x.seed != y.seed) return false;
    if (x.scene.weather != y.scene.weather || !(x.scene.bounds == y.scene.bounds)) return false;
    if (x.scene.boxes.size() != y.scene.boxes.size()) return false;
    for (std::size_t k = 0; k < x.scene.boxes.size(); ++k) {
      if (!same_box(x.scene.boxes[k], y.scene.boxes[k])) return false;
    }
    if (!(x.frame.camera_image == y.frame.camera_image) || !(x.frame.true_depth == y.frame.true_depth) ||
        !(x.frame.depth_valid == y.frame.depth_valid) || !(x.frame.radar_rf == y.frame.radar_rf)) {
      return false;
    }
  }
  return true;
}

}  // namespace cramfuse
