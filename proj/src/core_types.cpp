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

#include "coseg/core_types.hpp"

#include <cmath>

namespace coseg {

std::string_view to_string(LabelSource source) {
  switch (source) {
    case LabelSource::GroundTruth: return "GROUND_TRUTH";
    case LabelSource::Expert: return "EXPERT";
    case LabelSource::Pseudo: return "PSEUDO";
  }
  return "GROUND_TRUTH";
}

LabelSource label_source_from_string(std::string_view text) {
  if (text == "GROUND_TRUTH") return LabelSource::GroundTruth;
  if (text == "EXPERT") return LabelSource::Expert;
  if (text == "PSEUDO") return LabelSource::Pseudo;
  throw ValidationError("unknown label source '" + std::string(text) + "'");
}

std::string make_slice_id(std::string_view volume_id, int index) {
  return std::string(volume_id) + ":" + std::to_string(index);
}

void validate_slice(const ImageSlice& slice, int height, int width) {
  if (!slice.pixels.same_shape(height, width)) {
    throw ShapeError("slice " + slice.id + " is " + std::to_string(slice.height()) + "x" +
                     std::to_string(slice.width()) + ", expected " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  for (float v : slice.pixels.values()) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ValidationError("slice " + slice.id + " has intensity outside [0,1]");
    }
  }
}

void validate_labels(const LabelMap& labels, int num_classes) {
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      if (labels.classes(y, x) >= num_classes) {
        throw ValidationError("label map " + labels.slice_id + " has class " +
                              std::to_string(labels.classes(y, x)) + " at pixel (" + std::to_string(y) +
                              "," + std::to_string(x) + "), num_classes=" + std::to_string(num_classes));
      }
    }
  }
}

void validate_probs(const ProbMap& probs, double tolerance) {
  if (probs.num_classes <= 0 || probs.probs.size() != probs.num_classes * probs.plane()) {
    throw ShapeError("probability map " + probs.slice_id + " has inconsistent shape");
  }
  for (int y = 0; y < probs.height; ++y) {
    for (int x = 0; x < probs.width; ++x) {
      double sum = 0.0;
      for (int c = 0; c < probs.num_classes; ++c) {
        const float p = probs.at(c, y, x);
        if (!std::isfinite(p) || p < 0.0f || p > 1.0f) {
          throw ValidationError("probability map " + probs.slice_id + " has invalid value");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > tolerance) {
        throw ValidationError("probability map " + probs.slice_id + " does not sum to one");
      }
    }
  }
}

ProbMap onehot_encode(const LabelMap& labels, int num_classes) {
  if (num_classes <= 0) throw ValidationError("num_classes must be positive");
  validate_labels(labels, num_classes);
  ProbMap out(labels.slice_id, num_classes, labels.height(), labels.width());
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) out.at(labels.classes(y, x), y, x) = 1.0f;
  }
  return out;
}

LabelMap argmax_labels(const ProbMap& probs, LabelSource source) {
  if (probs.num_classes <= 0 || probs.probs.size() != probs.num_classes * probs.plane()) {
    throw ShapeError("probability map " + probs.slice_id + " has inconsistent shape");
  }
  LabelMap out{probs.slice_id, Grid<std::uint8_t>(probs.height, probs.width), source};
  for (int y = 0; y < probs.height; ++y) {
    for (int x = 0; x < probs.width; ++x) {
      int best = 0;
      float best_p = probs.at(0, y, x);
      if (std::isnan(best_p)) throw ValidationError("NaN in probability map " + probs.slice_id);
      for (int c = 1; c < probs.num_classes; ++c) {
        const float p = probs.at(c, y, x);
        if (std::isnan(p)) throw ValidationError("NaN in probability map " + probs.slice_id);
        if (p > best_p) {
          best_p = p;
          best = c;
        }
      }
      out.classes(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

void SamplePool::record_query(const std::vector<std::string>& ids) {
  std::set<std::string> distinct;
  for (const auto& id : ids) {
    if (!unlabeled.count(id)) throw ValidationError("queried id " + id + " is not in the unlabeled pool");
    if (!distinct.insert(id).second) throw ValidationError("queried id " + id + " appears twice");
  }
  for (const auto& id : ids) {
    unlabeled.erase(id);
    pseudo.erase(id);
    labeled.insert(id);
  }
  queried_history.push_back(ids);
}

void SamplePool::check_invariants() const {
  for (const auto& id : labeled) {
    if (unlabeled.count(id)) throw ValidationError("id " + id + " is both labeled and unlabeled");
  }
  std::set<std::string> seen;
  for (const auto& query : queried_history) {
    for (const auto& id : query) {
      if (!seen.insert(id).second) throw ValidationError("id " + id + " queried more than once");
      if (!labeled.count(id)) throw ValidationError("queried id " + id + " missing from labeled set");
    }
  }
  for (const auto& [id, map] : pseudo) {
    if (!unlabeled.count(id)) throw ValidationError("pseudo label for " + id + " outside the unlabeled pool");
    if (map.source != LabelSource::Pseudo) throw ValidationError("pseudo label for " + id + " has wrong source");
  }
}

}  // namespace coseg
