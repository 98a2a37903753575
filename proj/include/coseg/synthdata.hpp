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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coseg/core_types.hpp"

namespace coseg {

/// Synthetic 3-class cardiac phantom: class 2 is a bright elliptical blood pool, class 1 a
/// myocardium ring around it, class 0 textured background with bright distractor blobs.
/// Geometry, contrast and bias field differ between volumes and drift smoothly along slices.
struct PhantomConfig {
  int num_volumes = 8;
  int slices_per_volume = 16;
  int height = 64;
  int width = 64;
  double noise_std = 0.08;
  std::uint64_t rng_seed = 0;
  /// Multiplies every radius; large values push the heart out of the field of view.
  double heart_scale = 1.0;
  /// Maximum offset of a volume's heart center from the image center, as a fraction of min(H,W).
  double center_jitter = 0.08;

  void validate() const;
};

struct Dataset {
  std::string name;
  int num_classes = 3;
  int height = 0;
  int width = 0;
  std::vector<ImageSlice> slices;
  std::vector<LabelMap> labels;  ///< labels[i] belongs to slices[i]

  std::size_t size() const noexcept { return slices.size(); }
  /// Throws ValidationError for unknown ids.
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const;
  const ImageSlice& slice(const std::string& id) const { return slices[index_of(id)]; }
  const LabelMap& label(const std::string& id) const { return labels[index_of(id)]; }
  /// Volume ids in order of first appearance.
  std::vector<std::string> volume_ids() const;
  /// Rebuilds the id lookup; call after mutating `slices`.
  void reindex();

 private:
  std::vector<std::pair<std::string, std::size_t>> sorted_ids_;
};

Dataset generate_phantom_dataset(const PhantomConfig& cfg);

/// Writes manifest.json, images/*.png (16-bit) and labels/*.png (8-bit class index).
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

struct PoolSplit {
  SamplePool pool;
  std::vector<std::string> test_ids;
};

/// Base volumes become the labeled set, holdout volumes the test set, everything else the pool.
PoolSplit split_pools(const Dataset& data, const std::vector<std::string>& base_volume_ids,
                      const std::vector<std::string>& holdout_volume_ids);

void write_pools(const std::filesystem::path& file, const PoolSplit& split);
PoolSplit read_pools(const std::filesystem::path& file);

}  // namespace coseg
