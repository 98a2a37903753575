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

#include <span>
#include <vector>

#include "coseg/core_types.hpp"
#include <json.hpp>

#include "coseg/net.hpp"

namespace coseg {

/// 2|A n B| / (|A| + |B|) over the masks of `class_id`; 1.0 when both masks are empty.
double dice_score(const LabelMap& pred, const LabelMap& gt, int class_id);

/// Mean Dice over the foreground classes 1..num_classes-1 of one slice.
double foreground_dice(const LabelMap& pred, const LabelMap& gt, int num_classes);

struct SegmentationMetrics {
  std::vector<double> per_class_dice;  ///< index = class id, averaged over slices
  double foreground_average = 0.0;     ///< mean over classes 1..C-1 (background excluded)
  std::size_t num_slices = 0;
};

nlohmann::ordered_json to_json(const SegmentationMetrics& m);

SegmentationMetrics evaluate_predictions(std::span<const LabelMap> predictions, std::span<const LabelMap> truth,
                                         int num_classes);

/// Slice-level Dice of the model's argmax predictions. Throws ValidationError on an empty set.
SegmentationMetrics evaluate_segmentation(const ModelState& model, std::span<const ImageSlice> slices,
                                          std::span<const LabelMap> truth);

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;  ///< two-sided, Student t with n-2 degrees of freedom
  std::size_t n = 0;
};

/// Throws ValidationError for fewer than 3 points or mismatched lengths and
/// DegenerateInputError when either input has zero variance.
Correlation pearson_correlation(std::span<const double> xs, std::span<const double> ys);

/// Pearson correlation of average ranks.
double spearman_correlation(std::span<const double> xs, std::span<const double> ys);

double median(std::vector<double> values);

}  // namespace coseg
