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

#include "coseg/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "coseg/png_io.hpp"
#include "coseg/trainer.hpp"

namespace coseg {

std::string_view to_string(ScoreReduction reduction) { return reduction == ScoreReduction::Min ? "min" : "mean"; }

ScoreReduction score_reduction_from_string(std::string_view text) {
  if (text == "mean") return ScoreReduction::Mean;
  if (text == "min") return ScoreReduction::Min;
  throw ValidationError("unknown score reduction '" + std::string(text) + "'");
}

double reduce_scores(const ScoreMap& scores, ScoreReduction reduction) {
  if (scores.empty()) throw ShapeError("empty score map");
  if (reduction == ScoreReduction::Min) {
    return *std::min_element(scores.values().begin(), scores.values().end());
  }
  double sum = 0.0;
  for (float s : scores.values()) sum += s;
  return sum / static_cast<double>(scores.size());
}

double confidence_score(const nn::Discriminator<float>& discriminator, const ImageSlice& image, const ProbMap& seg,
                        ScoreReduction reduction) {
  return reduce_scores(discriminator_forward(discriminator, image, seg), reduction);
}

Grid<float> uncertainty_map(const ScoreMap& scores, int height, int width) {
  if (scores.empty() || height % scores.height() != 0 || width % scores.width() != 0) {
    throw ShapeError("score map " + std::to_string(scores.height()) + "x" + std::to_string(scores.width()) +
                     " does not tile a " + std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  const int fy = height / scores.height();
  const int fx = width / scores.width();
  Grid<float> out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out(y, x) = std::clamp(1.0f - scores(y / fy, x / fx), 0.0f, 1.0f);
  }
  return out;
}

Grid<float> uncertainty_map(const nn::Discriminator<float>& discriminator, const ImageSlice& image,
                            const ProbMap& seg) {
  return uncertainty_map(discriminator_forward(discriminator, image, seg), image.height(), image.width());
}

std::vector<std::uint8_t> uncertainty_png(const Grid<float>& map) {
  Grid<std::uint8_t> bytes(map.height(), map.width());
  for (std::size_t i = 0; i < map.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map[i], 0.0f, 1.0f) * 255.0f));
  }
  return png::encode_gray8(bytes);
}

Selection select_lowest(std::vector<std::pair<std::string, double>> scores, int budget) {
  if (budget < 0) throw ValidationError("budget must be >= 0");
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  Selection out;
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(budget), scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.records.push_back({scores[i].first, scores[i].second, static_cast<int>(i), i < take});
    if (i < take) out.query.push_back(scores[i].first);
  }
  return out;
}

Selection rank_and_select(const ModelState& model, std::span<const ImageSlice> pool_slices, int budget,
                          ScoreReduction reduction) {
  std::vector<std::pair<std::string, double>> scores;
  scores.reserve(pool_slices.size());
  const auto predictions = predict_labels(model, pool_slices);
  for (std::size_t i = 0; i < pool_slices.size(); ++i) {
    scores.emplace_back(pool_slices[i].id,
                        confidence_score(model.discriminator, pool_slices[i], predictions[i].onehot(), reduction));
  }
  return select_lowest(std::move(scores), budget);
}

void write_ranking_csv(const std::filesystem::path& file, const Selection& selection) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out << "slice_id,score,rank,selected\n";
  out.precision(9);
  for (const auto& r : selection.records) {
    out << r.slice_id << ',' << r.score << ',' << r.rank << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

}  // namespace coseg
