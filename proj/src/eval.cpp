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

#include "coseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "coseg/trainer.hpp"

namespace coseg {

double dice_score(const LabelMap& pred, const LabelMap& gt, int class_id) {
  if (!pred.classes.same_shape(gt.height(), gt.width())) {
    throw ShapeError("dice: prediction " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                     " vs ground truth " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < gt.classes.size(); ++i) {
    const bool in_a = pred.classes[i] == class_id;
    const bool in_b = gt.classes[i] == class_id;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double foreground_dice(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  if (num_classes < 2) throw ValidationError("foreground dice needs at least 2 classes");
  double sum = 0.0;
  for (int c = 1; c < num_classes; ++c) sum += dice_score(pred, gt, c);
  return sum / (num_classes - 1);
}

nlohmann::ordered_json to_json(const SegmentationMetrics& m) {
  nlohmann::ordered_json j;
  j["per_class_dice"] = m.per_class_dice;
  j["foreground_average"] = m.foreground_average;
  j["num_slices"] = m.num_slices;
  return j;
}

SegmentationMetrics evaluate_predictions(std::span<const LabelMap> predictions, std::span<const LabelMap> truth,
                                         int num_classes) {
  if (predictions.empty()) throw ValidationError("evaluation set is empty");
  if (predictions.size() != truth.size()) throw ValidationError("prediction and ground-truth counts differ");
  SegmentationMetrics m;
  m.per_class_dice.assign(num_classes, 0.0);
  m.num_slices = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (int c = 0; c < num_classes; ++c) m.per_class_dice[c] += dice_score(predictions[i], truth[i], c);
  }
  for (double& d : m.per_class_dice) d /= static_cast<double>(m.num_slices);
  m.foreground_average =
      std::accumulate(m.per_class_dice.begin() + 1, m.per_class_dice.end(), 0.0) / (num_classes - 1);
  return m;
}

SegmentationMetrics evaluate_segmentation(const ModelState& model, std::span<const ImageSlice> slices,
                                          std::span<const LabelMap> truth) {
  if (slices.empty()) throw ValidationError("test set is empty");
  std::vector<LabelMap> predicted;
  for (auto& p : predict_labels(model, slices)) predicted.push_back(std::move(p.labels));
  return evaluate_predictions(predicted, truth, model.num_classes());
}

Correlation pearson_correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("pearson: inputs differ in length");
  const std::size_t n = xs.size();
  if (n < 3) throw ValidationError("pearson: need at least 3 points");
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateInputError("pearson: zero variance input");
  Correlation out;
  out.n = n;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  const double denom = 1.0 - out.r * out.r;
  if (denom <= 0.0) {
    out.p_value = 0.0;
  } else {
    const double t = std::abs(out.r) * std::sqrt(df / denom);
    boost::math::students_t dist(df);
    out.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> xs, std::span<const double> ys) {
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson_correlation(rx, ry).r;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace coseg
