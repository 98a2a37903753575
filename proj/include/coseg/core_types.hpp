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
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coseg/errors.hpp"

namespace coseg {

/// Dense row-major H x W array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{}) : height_(height), width_(width), data_(checked_size(height, width), fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(int height, int width) const noexcept { return height_ == height && width_ == width; }

  T& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  static std::size_t checked_size(int height, int width) {
    if (height < 0 || width < 0) throw ShapeError("negative grid dimension");
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Patch realness probabilities emitted by the discriminator.
using ScoreMap = Grid<float>;

enum class LabelSource { GroundTruth, Expert, Pseudo };

std::string_view to_string(LabelSource source);
LabelSource label_source_from_string(std::string_view text);

/// "<volume>:<index>"
std::string make_slice_id(std::string_view volume_id, int index);

/// One 2D grayscale slice with intensities in [0,1].
struct ImageSlice {
  std::string id;
  std::string volume_id;
  int index = 0;
  Grid<float> pixels;

  int height() const noexcept { return pixels.height(); }
  int width() const noexcept { return pixels.width(); }
};

/// Throws ValidationError/ShapeError if the slice breaks its invariants.
void validate_slice(const ImageSlice& slice, int height, int width);

struct LabelMap {
  std::string slice_id;
  Grid<std::uint8_t> classes;
  LabelSource source = LabelSource::GroundTruth;

  int height() const noexcept { return classes.height(); }
  int width() const noexcept { return classes.width(); }
};

void validate_labels(const LabelMap& labels, int num_classes);

/// Per-class probabilities, channel-major C x H x W.
struct ProbMap {
  std::string slice_id;
  int num_classes = 0;
  int height = 0;
  int width = 0;
  std::vector<float> probs;

  ProbMap() = default;
  ProbMap(std::string id, int classes, int h, int w)
      : slice_id(std::move(id)),
        num_classes(classes),
        height(h),
        width(w),
        probs(static_cast<std::size_t>(classes) * h * w, 0.0f) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return probs[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return probs[c * plane() + static_cast<std::size_t>(y) * width + x]; }
};

/// Checks shape and that every pixel sums to one within `tolerance`.
void validate_probs(const ProbMap& probs, double tolerance = 1e-5);

ProbMap onehot_encode(const LabelMap& labels, int num_classes);

/// Ties resolve to the lowest class index.
LabelMap argmax_labels(const ProbMap& probs, LabelSource source = LabelSource::Pseudo);

/// Active-learning bookkeeping: labeled set S, unlabeled pool P, query history and
/// pseudo labels for members of P.
struct SamplePool {
  std::set<std::string> labeled;
  std::set<std::string> unlabeled;
  std::vector<std::vector<std::string>> queried_history;
  std::map<std::string, LabelMap> pseudo;

  std::size_t total() const noexcept { return labeled.size() + unlabeled.size(); }

  /// Moves `ids` from the pool into the labeled set and records them as one query.
  void record_query(const std::vector<std::string>& ids);

  /// Throws ValidationError naming the first broken invariant.
  void check_invariants() const;
};

}  // namespace coseg
