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
#include <utility>
#include <vector>

#include "coseg/core_types.hpp"
#include "coseg/net.hpp"

namespace coseg {

/// How a patch score map collapses to one slice-level confidence.
enum class ScoreReduction { Mean, Min };

std::string_view to_string(ScoreReduction reduction);
ScoreReduction score_reduction_from_string(std::string_view text);

struct ConfidenceRecord {
  std::string slice_id;
  double score = 0.0;
  int rank = 0;  ///< 0 = least confident
  bool selected = false;
};

double reduce_scores(const ScoreMap& scores, ScoreReduction reduction = ScoreReduction::Mean);

/// Slice-level confidence of the discriminator in a predicted segmentation.
double confidence_score(const nn::Discriminator<float>& discriminator, const ImageSlice& image, const ProbMap& seg,
                        ScoreReduction reduction = ScoreReduction::Mean);

/// 1 - score, nearest-neighbour upsampled from the patch grid to height x width.
Grid<float> uncertainty_map(const ScoreMap& scores, int height, int width);
Grid<float> uncertainty_map(const nn::Discriminator<float>& discriminator, const ImageSlice& image,
                            const ProbMap& seg);

/// 8-bit grayscale PNG, value = round(255 * u).
std::vector<std::uint8_t> uncertainty_png(const Grid<float>& map);

struct Selection {
  std::vector<std::string> query;         ///< ascending score
  std::vector<ConfidenceRecord> records;  ///< one per scored id, sorted by rank
};

/// Ranks ascending by score (ties by slice id) and marks the first min(budget, n) as queried.
Selection select_lowest(std::vector<std::pair<std::string, double>> scores, int budget);

/// Scores every member of the unlabeled pool with the current generator/discriminator and
/// selects the `budget` least confident ones.
Selection rank_and_select(const ModelState& model, std::span<const ImageSlice> pool_slices, int budget,
                          ScoreReduction reduction = ScoreReduction::Mean);

/// CSV header: slice_id,score,rank,selected
void write_ranking_csv(const std::filesystem::path& file, const Selection& selection);

}  // namespace coseg
