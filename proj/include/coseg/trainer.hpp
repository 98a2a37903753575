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
#include <functional>
#include <span>
#include <vector>

#include "coseg/core_types.hpp"
#include "coseg/net.hpp"

namespace coseg {

enum class TrainMode { FromScratch, Incremental };

std::string_view to_string(TrainMode mode);
TrainMode train_mode_from_string(std::string_view text);

struct TrainConfig {
  int epochs = 40;
  int batch_size = 4;
  double learning_rate_g = 2e-4;
  double learning_rate_d = 2e-4;
  LossWeights loss_weights;
  TrainMode mode = TrainMode::FromScratch;
  std::uint64_t rng_seed = 0;
  /// Random flips, transposes and gamma applied to each training pair as it is drawn.
  bool augment = true;

  void validate() const;
};

/// Epoch means of the discriminator loss, the generator's adversarial loss and the
/// weighted segmentation loss.
struct EpochRecord {
  int epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double seg_loss = 0.0;
};

struct TrainingPair {
  ImageSlice image;
  LabelMap label;
};

struct TrainResult {
  ModelState state;
  std::vector<EpochRecord> history;
};

/// Segmentation weight of a training label: 1 for ground truth and expert labels,
/// w_pseudo for pseudo labels. The discriminator's "real" term uses the same weight.
double sample_weight(const LabelMap& label, const LossWeights& weights);

/// Alternating cGAN optimisation: per batch one discriminator step, then one generator
/// step on adversarial + lambda_seg * cross-entropy. Deterministic given cfg.rng_seed.
TrainResult train_model(ModelState state, std::span<const TrainingPair> training_set, const TrainConfig& cfg,
                        const std::function<void(const EpochRecord&)>& on_epoch = {});

struct Prediction {
  ProbMap probs;
  LabelMap labels;  ///< argmax of probs, source PSEUDO

  /// One-hot of `labels`: the segmentation the discriminator is shown.
  ProbMap onehot() const { return onehot_encode(labels, probs.num_classes); }
};

std::vector<Prediction> predict_labels(const ModelState& state, std::span<const ImageSlice> slices);

/// CSV header: epoch,d_loss,g_loss,seg_loss
void write_history_csv(const std::filesystem::path& file, std::span<const EpochRecord> history);

}  // namespace coseg
