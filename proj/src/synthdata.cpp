// Copyright 2026 The coseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "coseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "coseg/png_io.hpp"

namespace coseg {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Sampling ranges, as fractions of min(H, W).
constexpr double kBloodRadiusMin = 0.09;
constexpr double kBloodRadiusMax = 0.15;
constexpr double kRingMin = 0.045;
constexpr double kRingMax = 0.085;
constexpr double kMaxEccentricity = 0.25;
constexpr double kMaxDrift = 0.04;
constexpr double kMinRingPixels = 2.0;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Blob {
  double cx, cy, rx, ry, intensity, dx, dy;
};

struct VolumeGeometry {
  double cx, cy, dx, dy;
  double blood_radius, ring, eccentricity, ecc_wobble;
  double blood_intensity, myo_intensity, background_intensity;
  double bias_amplitude, bias_angle;
  double noise_scale;
  std::vector<Blob> blobs;
  double texture_phase[3];
  double texture_freq[3];
};

double max_outer_fraction(double heart_scale) {
  return heart_scale * (kBloodRadiusMax * 1.1 * (1.0 + kMaxEccentricity) + kRingMax * 1.15);
}

VolumeGeometry sample_volume(const PhantomConfig& cfg, std::mt19937_64& rng) {
  const double s = std::min(cfg.height, cfg.width);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  VolumeGeometry g{};
  g.cx = cfg.width / 2.0 + uniform(-cfg.center_jitter, cfg.center_jitter) * s;
  g.cy = cfg.height / 2.0 + uniform(-cfg.center_jitter, cfg.center_jitter) * s;
  g.dx = uniform(-kMaxDrift, kMaxDrift) * s;
  g.dy = uniform(-kMaxDrift, kMaxDrift) * s;
  g.blood_radius = uniform(kBloodRadiusMin, kBloodRadiusMax) * s * cfg.heart_scale;
  g.ring = std::max(kMinRingPixels, uniform(kRingMin, kRingMax) * s * cfg.heart_scale);
  g.eccentricity = uniform(-0.15, 0.15);
  g.ecc_wobble = uniform(-0.1, 0.1);
  g.blood_intensity = uniform(0.7, 0.9);
  g.myo_intensity = uniform(0.4, 0.52);
  g.background_intensity = uniform(0.15, 0.3);
  g.bias_amplitude = uniform(0.0, 0.15);
  g.bias_angle = uniform(0.0, 2.0 * std::numbers::pi);
  g.noise_scale = uniform(0.7, 1.3);
  for (int i = 0; i < 3; ++i) {
    g.texture_phase[i] = uniform(0.0, 2.0 * std::numbers::pi);
    g.texture_freq[i] = uniform(1.0, 3.0);
  }

  const int num_blobs = 1 + static_cast<int>(u01(rng) * 3.0);
  const double heart_extent = max_outer_fraction(cfg.heart_scale) * s;
  for (int b = 0, tries = 0; b < num_blobs && tries < 200; ++tries) {
    Blob blob{};
    blob.rx = uniform(0.04, 0.1) * s;
    blob.ry = blob.rx * uniform(0.6, 1.4);
    blob.cx = uniform(blob.rx, cfg.width - blob.rx);
    blob.cy = uniform(blob.ry, cfg.height - blob.ry);
    blob.intensity = uniform(0.5, 0.9);
    blob.dx = uniform(-kMaxDrift, kMaxDrift) * s;
    blob.dy = uniform(-kMaxDrift, kMaxDrift) * s;
    const double reach = heart_extent + std::max(blob.rx, blob.ry) + 2.0 * kMaxDrift * s + 2.0;
    if (std::hypot(blob.cx - g.cx, blob.cy - g.cy) < reach) continue;
    g.blobs.push_back(blob);
    ++b;
  }
  return g;
}

void render_slice(const PhantomConfig& cfg, const VolumeGeometry& g, int index, std::mt19937_64& rng,
                  ImageSlice& slice, LabelMap& labels) {
  const double s = std::min(cfg.height, cfg.width);
  const double t = cfg.slices_per_volume > 1 ? static_cast<double>(index) / (cfg.slices_per_volume - 1) : 0.5;
  const double cx = g.cx + g.dx * (t - 0.5);
  const double cy = g.cy + g.dy * (t - 0.5);
  const double radius = g.blood_radius * (0.75 + 0.35 * std::sin(std::numbers::pi * t));
  const double ecc = g.eccentricity + g.ecc_wobble * (2.0 * t - 1.0);
  const double ax = radius * (1.0 + ecc);
  const double ay = radius * (1.0 - ecc);
  const double ring = g.ring * (0.85 + 0.3 * t);
  const double bias_cos = std::cos(g.bias_angle);
  const double bias_sin = std::sin(g.bias_angle);
  std::normal_distribution<double> noise(0.0, cfg.noise_std * g.noise_scale);

  slice.pixels = Grid<float>(cfg.height, cfg.width);
  labels.classes = Grid<std::uint8_t>(cfg.height, cfg.width);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const double px = x + 0.5 - cx;
      const double py = y + 0.5 - cy;
      const double inner = (px / ax) * (px / ax) + (py / ay) * (py / ay);
      const double outer = (px / (ax + ring)) * (px / (ax + ring)) + (py / (ay + ring)) * (py / (ay + ring));
      std::uint8_t cls = 0;
      double value = g.background_intensity;
      for (int k = 0; k < 3; ++k) {
        value += 0.04 * std::sin(g.texture_freq[k] * 2.0 * std::numbers::pi * (k == 1 ? x : y) / s +
                                 g.texture_phase[k] + (k == 2 ? 2.0 * std::numbers::pi * x / s : 0.0));
      }
      for (const Blob& blob : g.blobs) {
        const double bx = (x + 0.5 - blob.cx - blob.dx * (t - 0.5)) / blob.rx;
        const double by = (y + 0.5 - blob.cy - blob.dy * (t - 0.5)) / blob.ry;
        if (bx * bx + by * by <= 1.0) value = blob.intensity;
      }
      if (inner <= 1.0) {
        cls = 2;
        value = g.blood_intensity;
      } else if (outer <= 1.0) {
        cls = 1;
        value = g.myo_intensity;
      }
      value += g.bias_amplitude * (px * bias_cos + py * bias_sin) / s;
      value += noise(rng);
      value = std::clamp(value, 0.0, 1.0);
      // Quantized to the 16-bit storage grid so the on-disk round trip is exact.
      slice.pixels(y, x) = static_cast<float>(std::lround(value * 65535.0) / 65535.0);
      labels.classes(y, x) = cls;
    }
  }
}

std::string file_stem(const ImageSlice& s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%03d", s.index);
  return s.volume_id + buf;
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IOError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out << text;
}

}  // namespace

void PhantomConfig::validate() const {
  if (num_volumes < 2) throw ValidationError("phantom: num_volumes must be >= 2");
  if (slices_per_volume < 4) throw ValidationError("phantom: slices_per_volume must be >= 4");
  if (height < 16 || width < 16) throw ValidationError("phantom: height and width must be >= 16");
  if (height > 4096 || width > 4096) throw ValidationError("phantom: height and width must be <= 4096");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ValidationError("phantom: noise_std must be >= 0");
  if (!(heart_scale > 0.0) || !(center_jitter >= 0.0)) {
    throw ValidationError("phantom: heart_scale must be > 0 and center_jitter >= 0");
  }
  const double reach = max_outer_fraction(heart_scale) + center_jitter + kMaxDrift / 2.0;
  if (reach > 0.48) {
    throw ValidationError("phantom: geometry exceeds image bounds (heart reach " + std::to_string(reach) +
                          " of the field of view, limit 0.48)");
  }
}

std::size_t Dataset::index_of(const std::string& id) const {
  auto it = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(), id,
                             [](const auto& entry, const std::string& key) { return entry.first < key; });
  if (it == sorted_ids_.end() || it->first != id) throw ValidationError("unknown slice id " + id);
  return it->second;
}

bool Dataset::contains(const std::string& id) const {
  auto it = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(), id,
                             [](const auto& entry, const std::string& key) { return entry.first < key; });
  return it != sorted_ids_.end() && it->first == id;
}

std::vector<std::string> Dataset::volume_ids() const {
  std::vector<std::string> out;
  for (const auto& s : slices) {
    if (std::find(out.begin(), out.end(), s.volume_id) == out.end()) out.push_back(s.volume_id);
  }
  return out;
}

void Dataset::reindex() {
  sorted_ids_.clear();
  for (std::size_t i = 0; i < slices.size(); ++i) sorted_ids_.emplace_back(slices[i].id, i);
  std::sort(sorted_ids_.begin(), sorted_ids_.end());
  for (std::size_t i = 1; i < sorted_ids_.size(); ++i) {
    if (sorted_ids_[i].first == sorted_ids_[i - 1].first) {
      throw ValidationError("duplicate slice id " + sorted_ids_[i].first);
    }
  }
}

Dataset generate_phantom_dataset(const PhantomConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.name = "phantom-" + std::to_string(cfg.rng_seed);
  data.num_classes = 3;
  data.height = cfg.height;
  data.width = cfg.width;
  for (int v = 0; v < cfg.num_volumes; ++v) {
    std::mt19937_64 rng(mix_seed(cfg.rng_seed, static_cast<std::uint64_t>(v)));
    const VolumeGeometry geometry = sample_volume(cfg, rng);
    const std::string volume_id = "v" + std::to_string(v);
    bool seen[3] = {false, false, false};
    for (int i = 0; i < cfg.slices_per_volume; ++i) {
      ImageSlice slice{make_slice_id(volume_id, i), volume_id, i, {}};
      LabelMap labels{slice.id, {}, LabelSource::GroundTruth};
      render_slice(cfg, geometry, i, rng, slice, labels);
      for (auto c : labels.classes.values()) seen[c] = true;
      data.slices.push_back(std::move(slice));
      data.labels.push_back(std::move(labels));
    }
    if (!seen[0] || !seen[1] || !seen[2]) {
      throw ValidationError("phantom: volume " + volume_id + " does not contain all classes; enlarge the image");
    }
  }
  data.reindex();
  return data;
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "labels", ec);
  if (ec) throw IOError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["name"] = data.name;
  manifest["num_classes"] = data.num_classes;
  manifest["height"] = data.height;
  manifest["width"] = data.width;
  json entries = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ImageSlice& s = data.slices[i];
    const LabelMap& l = data.labels[i];
    if (!s.pixels.same_shape(data.height, data.width) || !l.classes.same_shape(data.height, data.width)) {
      throw ShapeError("slice " + s.id + " does not match the dataset shape");
    }
    const std::string stem = file_stem(s);
    Grid<std::uint16_t> quantized(data.height, data.width);
    for (std::size_t p = 0; p < quantized.size(); ++p) {
      quantized[p] = static_cast<std::uint16_t>(std::lround(std::clamp(s.pixels[p], 0.0f, 1.0f) * 65535.0));
    }
    png::write_file(dir / "images" / (stem + ".png"), png::encode_gray16(quantized));
    png::write_file(dir / "labels" / (stem + ".png"), png::encode_gray8(l.classes));
    entries.push_back({{"id", s.id},
                       {"volume_id", s.volume_id},
                       {"index", s.index},
                       {"image_file", "images/" + stem + ".png"},
                       {"label_file", "labels/" + stem + ".png"},
                       {"source", std::string(to_string(l.source))}});
  }
  manifest["slices"] = std::move(entries);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_file = dir / "manifest.json";
  if (!fs::is_directory(dir)) throw IOError("dataset directory " + dir.string() + " does not exist");
  if (!fs::exists(manifest_file)) throw IOError("missing " + manifest_file.string());
  const json manifest = read_json(manifest_file);

  Dataset data;
  try {
    data.name = manifest.at("name").get<std::string>();
    data.num_classes = manifest.at("num_classes").get<int>();
    data.height = manifest.at("height").get<int>();
    data.width = manifest.at("width").get<int>();
    if (data.num_classes < 2 || data.num_classes > 255 || data.height <= 0 || data.width <= 0) {
      throw FormatError(manifest_file.string() + ": invalid num_classes/height/width");
    }
    for (const auto& entry : manifest.at("slices")) {
      ImageSlice slice;
      slice.id = entry.at("id").get<std::string>();
      slice.volume_id = entry.at("volume_id").get<std::string>();
      slice.index = entry.at("index").get<int>();
      const fs::path image_file = dir / entry.at("image_file").get<std::string>();
      const fs::path label_file = dir / entry.at("label_file").get<std::string>();
      if (!fs::exists(image_file)) {
        throw FormatError("slice " + slice.id + ": image file " + image_file.string() + " is missing");
      }
      if (!fs::exists(label_file)) {
        throw FormatError("slice " + slice.id + ": label file " + label_file.string() + " is missing");
      }
      const png::DecodedGray image = png::decode_gray(png::read_file(image_file));
      const png::DecodedGray label = png::decode_gray(png::read_file(label_file));
      if (image.bit_depth != 16) throw FormatError(image_file.string() + ": expected a 16-bit image");
      if (label.bit_depth != 8) throw FormatError(label_file.string() + ": expected an 8-bit label map");
      if (!image.values.same_shape(data.height, data.width)) {
        throw FormatError(image_file.string() + ": shape differs from the manifest");
      }
      if (!label.values.same_shape(image.values.height(), image.values.width())) {
        throw FormatError(label_file.string() + ": label shape differs from image " + image_file.string());
      }
      slice.pixels = Grid<float>(data.height, data.width);
      for (std::size_t p = 0; p < slice.pixels.size(); ++p) {
        slice.pixels[p] = static_cast<float>(image.values[p] / 65535.0);
      }
      LabelMap labels{slice.id, Grid<std::uint8_t>(data.height, data.width),
                      label_source_from_string(entry.value("source", std::string("GROUND_TRUTH")))};
      for (std::size_t p = 0; p < labels.classes.size(); ++p) {
        if (label.values[p] >= data.num_classes) {
          throw FormatError(label_file.string() + ": class index out of range");
        }
        labels.classes[p] = static_cast<std::uint8_t>(label.values[p]);
      }
      data.slices.push_back(std::move(slice));
      data.labels.push_back(std::move(labels));
    }
  } catch (const json::exception& e) {
    throw FormatError(manifest_file.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(manifest_file.string() + ": " + e.what());
  }
  try {
    data.reindex();
  } catch (const ValidationError& e) {
    throw FormatError(manifest_file.string() + ": " + e.what());
  }
  return data;
}

PoolSplit split_pools(const Dataset& data, const std::vector<std::string>& base_volume_ids,
                      const std::vector<std::string>& holdout_volume_ids) {
  const std::vector<std::string> volumes = data.volume_ids();
  auto known = [&](const std::string& v) { return std::find(volumes.begin(), volumes.end(), v) != volumes.end(); };
  std::set<std::string> base(base_volume_ids.begin(), base_volume_ids.end());
  std::set<std::string> holdout(holdout_volume_ids.begin(), holdout_volume_ids.end());
  for (const auto& v : base) {
    if (!known(v)) throw ValidationError("unknown base volume " + v);
    if (holdout.count(v)) throw ValidationError("volume " + v + " is both base and holdout");
  }
  for (const auto& v : holdout) {
    if (!known(v)) throw ValidationError("unknown holdout volume " + v);
  }
  if (base.empty()) throw ValidationError("at least one base volume is required");

  PoolSplit split;
  for (const auto& s : data.slices) {
    if (base.count(s.volume_id)) {
      split.pool.labeled.insert(s.id);
    } else if (holdout.count(s.volume_id)) {
      split.test_ids.push_back(s.id);
    } else {
      split.pool.unlabeled.insert(s.id);
    }
  }
  std::sort(split.test_ids.begin(), split.test_ids.end());
  split.pool.check_invariants();
  return split;
}

void write_pools(const fs::path& file, const PoolSplit& split) {
  json out;
  out["labeled"] = split.pool.labeled;
  out["unlabeled"] = split.pool.unlabeled;
  out["test"] = split.test_ids;
  write_text(file, out.dump(2) + "\n");
}

PoolSplit read_pools(const fs::path& file) {
  const json in = read_json(file);
  PoolSplit split;
  try {
    for (const auto& id : in.at("labeled")) split.pool.labeled.insert(id.get<std::string>());
    for (const auto& id : in.at("unlabeled")) split.pool.unlabeled.insert(id.get<std::string>());
    for (const auto& id : in.at("test")) split.test_ids.push_back(id.get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  split.pool.check_invariants();
  for (const auto& id : split.test_ids) {
    if (split.pool.labeled.count(id) || split.pool.unlabeled.count(id)) {
      throw FormatError(file.string() + ": test id " + id + " also appears in the training pool");
    }
  }
  return split;
}

}  // namespace coseg
