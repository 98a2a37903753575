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

#include "coseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace coseg {
namespace {

class Adam {
 public:
  Adam(std::size_t size, double learning_rate, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0f), v_(size, 0.0f) {}

  void step(nn::Buffer<float>& params, const nn::Buffer<float>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    const float step = static_cast<float>(lr_ * std::sqrt(c2) / c1);
    const float b1 = static_cast<float>(beta1_);
    const float b2 = static_cast<float>(beta2_);
    const float eps = static_cast<float>(eps_ * std::sqrt(c2));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const float g = grads[i];
      m_[i] = b1 * m_[i] + (1.0f - b1) * g;
      v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
      params[i] -= step * m_[i] / (std::sqrt(v_[i]) + eps);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<float> m_, v_;
};

}  // namespace

std::string_view to_string(TrainMode mode) {
  return mode == TrainMode::Incremental ? "INCREMENTAL" : "FROM_SCRATCH";
}

TrainMode train_mode_from_string(std::string_view text) {
  if (text == "from_scratch" || text == "FROM_SCRATCH") return TrainMode::FromScratch;
  if (text == "incremental" || text == "INCREMENTAL") return TrainMode::Incremental;
  throw ValidationError("unknown training mode '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!(learning_rate_g > 0.0) || !std::isfinite(learning_rate_g) || !(learning_rate_d > 0.0) ||
      !std::isfinite(learning_rate_d)) {
    throw ValidationError("train: learning rates must be finite and > 0");
  }
  loss_weights.validate();
}

namespace {

// One-hot of `label` resampled under a scale about the image centre and a translation;
// uncovered pixels become background.
void warped_onehot(const LabelMap& label, int num_classes, double scale, double dy, double dx,
                   nn::Tensor<float>& out) {
  const int h = label.classes.height();
  const int w = label.classes.width();
  const double cy = h / 2.0;
  const double cx = w / 2.0;
  out.resize(num_classes, h, w);
  std::fill(out.data.begin(), out.data.end(), 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sy = static_cast<int>(std::floor(cy + (y + 0.5 - cy - dy) / scale));
      const int sx = static_cast<int>(std::floor(cx + (x + 0.5 - cx - dx) / scale));
      const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
      out.at(inside ? label.classes(sy, sx) : 0, y, x) = 1.0f;
    }
  }
}

// Argmax one-hot of a probability tensor (lowest class wins ties).
void harden(const nn::Tensor<float>& probs, nn::Tensor<float>& out) {
  out.resize(probs.channels, probs.height, probs.width);
  std::fill(out.data.begin(), out.data.end(), 0.0f);
  const std::size_t plane = probs.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    for (int c = 1; c < probs.channels; ++c) {
      if (probs.data[c * plane + p] > probs.data[best * plane + p]) best = c;
    }
    out.data[best * plane + p] = 1.0f;
  }
}

template <typename T>
Grid<T> dihedral(const Grid<T>& src, int code) {
  const bool transpose = (code & 4) && src.height() == src.width();
  const int h = transpose ? src.width() : src.height();
  const int w = transpose ? src.height() : src.width();
  Grid<T> out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int sy = transpose ? x : y;
      int sx = transpose ? y : x;
      if (code & 1) sx = src.width() - 1 - sx;
      if (code & 2) sy = src.height() - 1 - sy;
      out(y, x) = src(sy, sx);
    }
  }
  return out;
}

// Copies the foreground bounding box onto background, centred either anywhere or on one of
// the brightest background pixels of `image`.
void paste_copy(const LabelMap& label, const nn::Tensor<float>& image, int num_classes, std::mt19937_64& rng,
                nn::Tensor<float>& out) {
  const auto& g = label.classes;
  const int h = g.height();
  const int w = g.width();
  int y0 = h, y1 = -1, x0 = w, x1 = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (g(y, x) == 0) continue;
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  }
  warped_onehot(label, num_classes, 1.0, 0.0, 0.0, out);
  if (y1 < 0) return;
  const int bh = y1 - y0 + 1;
  const int bw = x1 - x0 + 1;
  int oy = 0, ox = 0;
  if (std::uniform_int_distribution<int>(0, 1)(rng) == 0) {
    oy = std::uniform_int_distribution<int>(0, std::max(0, h - bh))(rng) - y0;
    ox = std::uniform_int_distribution<int>(0, std::max(0, w - bw))(rng) - x0;
  } else {
    std::vector<std::pair<float, std::size_t>> background;
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (g[p] == 0) background.emplace_back(image.data[p], p);
    }
    if (background.empty()) return;
    const std::size_t top = std::max<std::size_t>(1, background.size() / 10);
    std::nth_element(background.begin(), background.begin() + (top - 1), background.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::size_t p = background[std::uniform_int_distribution<std::size_t>(0, top - 1)(rng)].second;
    oy = static_cast<int>(p) / w - (y0 + y1) / 2;
    ox = static_cast<int>(p) % w - (x0 + x1) / 2;
  }
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const int c = g(y, x);
      const int yy = y + oy, xx = x + ox;
      if (c == 0 || yy < 0 || yy >= h || xx < 0 || xx >= w || g(yy, xx) != 0) continue;
      out.at(0, yy, xx) = 0.0f;
      out.at(c, yy, xx) = 1.0f;
    }
  }
}

// Sets a disc centred on a random foreground pixel to background.
void erase_disc(const LabelMap& label, int num_classes, std::mt19937_64& rng, nn::Tensor<float>& out) {
  const auto& g = label.classes;
  warped_onehot(label, num_classes, 1.0, 0.0, 0.0, out);
  std::vector<std::size_t> fg;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (g[p] != 0) fg.push_back(p);
  }
  if (fg.empty()) return;
  const std::size_t centre = fg[std::uniform_int_distribution<std::size_t>(0, fg.size() - 1)(rng)];
  const int cy = static_cast<int>(centre) / g.width();
  const int cx = static_cast<int>(centre) % g.width();
  const double radius = std::uniform_real_distribution<double>(0.06, 0.15)(rng) * std::min(g.height(), g.width());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (std::hypot(y - cy, x - cx) > radius) continue;
      for (int c = 0; c < num_classes; ++c) out.at(c, y, x) = c == 0 ? 1.0f : 0.0f;
    }
  }
}

void misalign(const LabelMap& label, const nn::Tensor<float>& image, int num_classes, std::mt19937_64& rng,
              nn::Tensor<float>& out) {
  const double side = std::min(label.classes.height(), label.classes.width());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto signed_range = [&](double lo, double hi) {
    const double m = lo + (hi - lo) * u01(rng);
    return u01(rng) < 0.5 ? -m : m;
  };
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0:
      warped_onehot(label, num_classes, 1.0, signed_range(0.03, 0.1) * side, signed_range(0.03, 0.1) * side, out);
      break;
    case 1:
      warped_onehot(label, num_classes, 1.0 + signed_range(0.12, 0.3), 0.0, 0.0, out);
      break;
    case 2:
      paste_copy(label, image, num_classes, rng, out);
      break;
    default:
      erase_disc(label, num_classes, rng, out);
      break;
  }
}

}  // namespace

double sample_weight(const LabelMap& label, const LossWeights& weights) {
  return label.source == LabelSource::Pseudo ? weights.w_pseudo : 1.0;
}

TrainResult train_model(ModelState state, std::span<const TrainingPair> training_set, const TrainConfig& cfg,
                        const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (training_set.empty()) throw ValidationError("training set is empty");
  const int num_classes = state.num_classes();
  for (const auto& pair : training_set) {
    if (!pair.label.classes.same_shape(pair.image.height(), pair.image.width())) {
      throw ShapeError("label " + pair.label.slice_id + " does not match its image");
    }
    validate_labels(pair.label, num_classes);
    state.generator.check_input(pair.image.height(), pair.image.width());
    state.discriminator.check_input(pair.image.height(), pair.image.width());
  }

  using GenWs = nn::Generator<float>::Workspace;
  using DiscWs = nn::Discriminator<float>::Workspace;
  TrainResult result{std::move(state), {}};
  auto& gen = result.state.generator;
  auto& disc = result.state.discriminator;
  Adam adam_g(gen.param_count(), cfg.learning_rate_g);
  Adam adam_d(disc.param_count(), cfg.learning_rate_d);
  nn::Buffer<float> grad_g(gen.param_count());
  nn::Buffer<float> grad_d(disc.param_count());

  std::vector<float> weights;
  for (const auto& pair : training_set) {
    weights.push_back(static_cast<float>(sample_weight(pair.label, cfg.loss_weights)));
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<std::size_t> order(training_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<GenWs> gen_ws(batch);
  std::vector<nn::Tensor<float>> hard(batch), images(batch), onehots(batch);
  std::vector<LabelMap> labels(batch);
  std::uniform_int_distribution<int> pick_dihedral(0, 7);
  std::uniform_real_distribution<double> pick_log_gamma(std::log(0.7), std::log(1.4));
  DiscWs disc_ws;
  nn::Tensor<float> real_scores, grad_real, grad_fake, grad_seg_in, grad_seg, grad_probs, misaligned, unused;
  const float lambda = static_cast<float>(cfg.loss_weights.lambda_seg);
  const float mismatch = static_cast<float>(cfg.loss_weights.mismatch_weight);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_d = 0.0, sum_g = 0.0, sum_seg = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      const float inv = 1.0f / static_cast<float>(count);

      // Discriminator step.
      std::fill(grad_d.begin(), grad_d.end(), 0.0f);
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t i = order[start + b];
        const TrainingPair& pair = training_set[i];
        if (cfg.augment) {
          const int code = pick_dihedral(rng);
          const double gamma = std::exp(pick_log_gamma(rng));
          ImageSlice image = pair.image;
          image.pixels = dihedral(pair.image.pixels, code);
          for (float& v : image.pixels.values()) v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
          labels[b] = pair.label;
          labels[b].classes = dihedral(pair.label.classes, code);
          images[b] = nn::to_tensor<float>(image);
        } else {
          labels[b] = pair.label;
          images[b] = nn::to_tensor<float>(pair.image);
        }
        onehots[b] = nn::to_tensor<float>(onehot_encode(labels[b], num_classes));
        gen_ws[b].input = images[b];
        gen.forward(gen_ws[b].input, gen_ws[b]);
        harden(gen_ws[b].probs, hard[b]);
        disc.forward(images[b], onehots[b], disc_ws);
        real_scores = disc_ws.scores;
        DiscWs fake_ws;
        disc.forward(images[b], hard[b], fake_ws);
        sum_d += nn::discriminator_loss<float>(real_scores, fake_ws.scores, weights[i], &grad_real, &grad_fake);
        for (auto& g : grad_real.data) g *= inv;
        for (auto& g : grad_fake.data) g *= inv;
        disc.backward(disc_ws, grad_real, grad_d, nullptr);
        disc.backward(fake_ws, grad_fake, grad_d, nullptr);
        if (mismatch > 0.0f) {
          // A correctly shaped label that does not line up with the image counts as fake.
          misalign(labels[b], images[b], num_classes, rng, misaligned);
          disc.forward(images[b], misaligned, fake_ws);
          const float scale = mismatch * weights[i];
          sum_d += scale * nn::discriminator_loss<float>(fake_ws.scores, fake_ws.scores, 0.0f, &unused, &grad_fake);
          for (auto& g : grad_fake.data) g *= scale * inv;
          disc.backward(fake_ws, grad_fake, grad_d, nullptr);
        }
      }
      adam_d.step(disc.params(), grad_d);

      // Generator step against the updated discriminator.
      std::fill(grad_g.begin(), grad_g.end(), 0.0f);
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t i = order[start + b];
        // D sees the argmax map; its input gradient passes straight through to the probabilities.
        disc.forward(images[b], hard[b], disc_ws);
        sum_g += nn::generator_adversarial_loss<float>(disc_ws.scores, &grad_fake);
        disc.backward(disc_ws, grad_fake, {}, &grad_seg_in);
        sum_seg += nn::segmentation_loss<float>(gen_ws[b].probs, labels[b].classes, weights[i], &grad_seg);
        grad_probs.resize(gen_ws[b].probs.channels, gen_ws[b].probs.height, gen_ws[b].probs.width);
        for (std::size_t k = 0; k < grad_probs.data.size(); ++k) {
          grad_probs.data[k] = inv * (grad_seg_in.data[k] + lambda * grad_seg.data[k]);
        }
        gen.backward(gen_ws[b], grad_probs, grad_g);
      }
      adam_g.step(gen.params(), grad_g);
    }
    const double n = static_cast<double>(order.size());
    EpochRecord record{epoch, sum_d / n, sum_g / n, sum_seg / n};
    if (!std::isfinite(record.d_loss) || !std::isfinite(record.g_loss) || !std::isfinite(record.seg_loss)) {
      throw TrainingDivergedError(epoch, "non-finite loss");
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

std::vector<Prediction> predict_labels(const ModelState& state, std::span<const ImageSlice> slices) {
  std::vector<Prediction> out;
  out.reserve(slices.size());
  nn::Generator<float>::Workspace ws;
  for (const auto& slice : slices) {
    ws.input = nn::to_tensor<float>(slice);
    state.generator.forward(ws.input, ws);
    ProbMap probs = nn::to_probmap(ws.probs, slice.id);
    LabelMap labels = argmax_labels(probs, LabelSource::Pseudo);
    out.push_back({std::move(probs), std::move(labels)});
  }
  return out;
}

void write_history_csv(const std::filesystem::path& file, std::span<const EpochRecord> history) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out << "epoch,d_loss,g_loss,seg_loss\n";
  out.precision(9);
  for (const auto& r : history) out << r.epoch << ',' << r.d_loss << ',' << r.g_loss << ',' << r.seg_loss << '\n';
}

}  // namespace coseg
