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
#include <span>
#include <vector>

#include "coseg/core_types.hpp"
#include "coseg/nn.hpp"

namespace coseg {

/// Encoder-decoder generator with skip connections.
struct GeneratorConfig {
  int num_classes = 3;
  int base_channels = 16;
  int depth = 3;
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

/// Patch discriminator conditioned on the image; sees concat(image, segmentation).
struct DiscriminatorConfig {
  int base_channels = 16;
  int num_downsamples = 3;
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

struct LossWeights {
  double lambda_seg = 10.0;
  double w_pseudo = 1.0;
  /// Weight of the misaligned-label fake term in the discriminator step (0 disables it).
  double mismatch_weight = 1.0;

  void validate() const;
};

/// log() arguments are clamped to this value in every loss.
inline constexpr double kLogEpsilon = 1e-7;

namespace nn {

template <typename T>
class Generator {
 public:
  struct Workspace {
    std::vector<Tensor<T>> enc_out;
    std::vector<Buffer<T>> enc_col;
    std::vector<Tensor<T>> up;
    std::vector<Tensor<T>> cat;
    std::vector<Tensor<T>> dec_out;
    std::vector<Buffer<T>> dec_col;
    Buffer<T> head_col;
    Tensor<T> input;
    Tensor<T> probs;
  };

  explicit Generator(const GeneratorConfig& cfg);

  const GeneratorConfig& config() const noexcept { return cfg_; }
  std::size_t param_count() const noexcept { return params_.size(); }
  Buffer<T>& params() noexcept { return params_; }
  const Buffer<T>& params() const noexcept { return params_; }

  /// Re-draws parameters from config().rng_seed.
  void initialize();

  /// Throws ShapeError unless H and W are divisible by 2^depth.
  void check_input(int height, int width) const;

  /// image: 1 x H x W. Leaves per-pixel class probabilities in ws.probs.
  void forward(const Tensor<T>& image, Workspace& ws) const;

  /// dprobs: gradient w.r.t. ws.probs; accumulates into dparams.
  void backward(Workspace& ws, const Tensor<T>& dprobs, std::span<T> dparams) const;

 private:
  GeneratorConfig cfg_;
  std::vector<Conv2d<T>> enc_;
  std::vector<Conv2d<T>> dec_;
  Conv2d<T> head_;
  Buffer<T> params_;
};

template <typename T>
class Discriminator {
 public:
  static constexpr double kLeakySlope = 0.2;

  struct Workspace {
    Tensor<T> input;
    std::vector<Tensor<T>> out;
    std::vector<Buffer<T>> col;
    Buffer<T> final_col;
    Tensor<T> scores;
    std::vector<unsigned char> clamped;
  };

  Discriminator(const DiscriminatorConfig& cfg, int num_classes);

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t param_count() const noexcept { return params_.size(); }
  Buffer<T>& params() noexcept { return params_; }
  const Buffer<T>& params() const noexcept { return params_; }

  void initialize();
  int receptive_field() const noexcept;
  void check_input(int height, int width) const;

  /// image: 1 x H x W, seg: C x H x W. Patch probabilities land in ws.scores (1 x H/2^n x W/2^n),
  /// clamped to [eps, 1 - eps].
  void forward(const Tensor<T>& image, const Tensor<T>& seg, Workspace& ws) const;

  /// Accumulates into dparams unless empty; writes d(loss)/d(seg) when dseg is non-null.
  void backward(Workspace& ws, const Tensor<T>& dscores, std::span<T> dparams, Tensor<T>* dseg) const;

 private:
  DiscriminatorConfig cfg_;
  int num_classes_;
  std::vector<Conv2d<T>> down_;
  Conv2d<T> final_;
  Buffer<T> params_;
};

/// weight * mean over pixels of -log(max(p_target, eps)); gradient w.r.t. probs when grad != null.
template <typename T>
T segmentation_loss(const Tensor<T>& probs, const Grid<std::uint8_t>& target, T weight, Tensor<T>* grad);

/// real_weight * mean[-log real] + mean[-log(1 - fake)].
template <typename T>
T discriminator_loss(const Tensor<T>& real, const Tensor<T>& fake, T real_weight, Tensor<T>* grad_real,
                     Tensor<T>* grad_fake);

/// Non-saturating generator objective mean[-log fake].
template <typename T>
T generator_adversarial_loss(const Tensor<T>& fake, Tensor<T>* grad_fake);

template <typename T>
Tensor<T> to_tensor(const ImageSlice& slice);
template <typename T>
Tensor<T> to_tensor(const ProbMap& probs);
ProbMap to_probmap(const Tensor<float>& t, const std::string& slice_id);
ScoreMap to_scoremap(const Tensor<float>& t);

}  // namespace nn

/// Generator/discriminator pair; copies are independent.
struct ModelState {
  nn::Generator<float> generator;
  nn::Discriminator<float> discriminator;

  /// Parameters drawn from the seeds in both configs.
  static ModelState initialize(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg);
  int num_classes() const noexcept { return generator.config().num_classes; }
  bool operator==(const ModelState& other) const;
};

ProbMap generator_forward(const nn::Generator<float>& generator, const ImageSlice& image);
ScoreMap discriminator_forward(const nn::Discriminator<float>& discriminator, const ImageSlice& image,
                               const ProbMap& seg);

double segmentation_loss(const ProbMap& pred, const LabelMap& target, double weight);

struct AdversarialLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

/// Throws ValidationError unless every score lies in (0,1).
AdversarialLosses adversarial_losses(const ScoreMap& real_scores, const ScoreMap& fake_scores);

/// Binary layout (little endian): "COSEGCKP", u32 version, u32 header length, JSON header
/// (config echo, parameter counts), then float32 generator and discriminator parameters.
void save_checkpoint(const std::filesystem::path& file, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& file);

}  // namespace coseg
