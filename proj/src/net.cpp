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

#include "coseg/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace coseg {

void GeneratorConfig::validate() const {
  if (num_classes < 2 || num_classes > 255) throw ValidationError("generator: num_classes must be in [2,255]");
  if (base_channels < 1) throw ValidationError("generator: base_channels must be >= 1");
  if (depth < 1 || depth > 8) throw ValidationError("generator: depth must be in [1,8]");
}

void DiscriminatorConfig::validate() const {
  if (base_channels < 1) throw ValidationError("discriminator: base_channels must be >= 1");
  if (num_downsamples < 1 || num_downsamples > 8) {
    throw ValidationError("discriminator: num_downsamples must be in [1,8]");
  }
}

void LossWeights::validate() const {
  if (!(lambda_seg > 0.0) || !std::isfinite(lambda_seg)) throw ValidationError("loss: lambda_seg must be > 0");
  if (!(w_pseudo >= 0.0 && w_pseudo <= 1.0)) throw ValidationError("loss: w_pseudo must be in [0,1]");
  if (!(mismatch_weight >= 0.0) || !std::isfinite(mismatch_weight)) {
    throw ValidationError("loss: mismatch_weight must be finite and >= 0");
  }
}

namespace nn {
namespace {

int level_channels(int base, int level) { return base << std::min(level, 2); }

template <typename T>
T log_clamped(T p) {
  return std::log(std::max(p, static_cast<T>(kLogEpsilon)));
}

// d/dp of -log(max(p, eps)).
template <typename T>
T neg_log_grad(T p) {
  return p > static_cast<T>(kLogEpsilon) ? -T(1) / p : T{};
}

}  // namespace

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::size_t offset = 0;
  auto add = [&](ConvShape shape) {
    Conv2d<T> conv(shape, offset);
    offset += conv.param_count();
    return conv;
  };
  const int depth = cfg_.depth;
  enc_.push_back(add({1, level_channels(cfg_.base_channels, 0), 3, 1, 1}));
  for (int i = 1; i <= depth; ++i) {
    enc_.push_back(add({level_channels(cfg_.base_channels, i - 1), level_channels(cfg_.base_channels, i), 3, 2, 1}));
  }
  // dec_[i] produces the level-i feature map from upsampled level i+1 and the level-i skip.
  dec_.resize(depth);
  for (int i = depth - 1; i >= 0; --i) {
    const int up_channels = i == depth - 1 ? level_channels(cfg_.base_channels, depth)
                                           : dec_[i + 1].shape().out_channels;
    const int skip_channels = level_channels(cfg_.base_channels, i);
    const int out_channels = level_channels(cfg_.base_channels, std::max(i - 1, 0));
    dec_[i] = add({up_channels + skip_channels, out_channels, 3, 1, 1});
  }
  head_ = add({dec_[0].shape().out_channels, cfg_.num_classes, 1, 1, 0});
  params_.assign(offset, T{});
  initialize();
}

template <typename T>
void Generator<T>::initialize() {
  std::mt19937_64 rng(cfg_.rng_seed);
  std::span<T> all(params_);
  for (const auto& conv : enc_) conv.initialize(all, rng);
  for (int i = cfg_.depth - 1; i >= 0; --i) dec_[i].initialize(all, rng);
  head_.initialize(all, rng);
}

template <typename T>
void Generator<T>::check_input(int height, int width) const {
  const int factor = 1 << cfg_.depth;
  if (height <= 0 || width <= 0 || height % factor != 0 || width % factor != 0) {
    throw ShapeError("generator input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 2^depth = " + std::to_string(factor));
  }
}

template <typename T>
void Generator<T>::forward(const Tensor<T>& image, Workspace& ws) const {
  if (image.channels != 1) throw ShapeError("generator expects a single-channel image");
  check_input(image.height, image.width);
  const int depth = cfg_.depth;
  std::span<const T> p(params_);
  ws.enc_out.resize(depth + 1);
  ws.enc_col.resize(depth + 1);
  ws.up.resize(depth);
  ws.cat.resize(depth);
  ws.dec_out.resize(depth);
  ws.dec_col.resize(depth);

  enc_[0].forward(p, image, ws.enc_out[0], ws.enc_col[0]);
  relu_inplace(ws.enc_out[0]);
  for (int i = 1; i <= depth; ++i) {
    enc_[i].forward(p, ws.enc_out[i - 1], ws.enc_out[i], ws.enc_col[i]);
    relu_inplace(ws.enc_out[i]);
  }
  for (int i = depth - 1; i >= 0; --i) {
    const Tensor<T>& below = i == depth - 1 ? ws.enc_out[depth] : ws.dec_out[i + 1];
    upsample2x(below, ws.up[i]);
    concat_channels(ws.up[i], ws.enc_out[i], ws.cat[i]);
    dec_[i].forward(p, ws.cat[i], ws.dec_out[i], ws.dec_col[i]);
    relu_inplace(ws.dec_out[i]);
  }
  head_.forward(p, ws.dec_out[0], ws.probs, ws.head_col);
  softmax_channels(ws.probs);
}

template <typename T>
void Generator<T>::backward(Workspace& ws, const Tensor<T>& dprobs, std::span<T> dparams) const {
  const int depth = cfg_.depth;
  std::span<const T> p(params_);
  Buffer<T> scratch;
  Tensor<T> grad;
  softmax_backward(ws.probs, dprobs, grad);

  std::vector<Tensor<T>> d_dec(depth);
  std::vector<Tensor<T>> d_enc(depth + 1);
  head_.backward(p, ws.dec_out[0], ws.head_col, grad, dparams, &d_dec[0], scratch);

  Tensor<T> d_cat;
  Tensor<T> d_up;
  for (int i = 0; i < depth; ++i) {
    relu_backward(ws.dec_out[i], d_dec[i]);
    dec_[i].backward(p, ws.cat[i], ws.dec_col[i], d_dec[i], dparams, &d_cat, scratch);
    const int up_channels = ws.up[i].channels;
    d_up.channels = up_channels;
    d_up.height = d_cat.height;
    d_up.width = d_cat.width;
    d_up.data.assign(d_cat.data.begin(), d_cat.data.begin() + static_cast<std::ptrdiff_t>(up_channels * d_cat.plane()));
    // Skip-connection gradient.
    Tensor<T>& skip = d_enc[i];
    skip.channels = d_cat.channels - up_channels;
    skip.height = d_cat.height;
    skip.width = d_cat.width;
    skip.data.assign(d_cat.data.begin() + static_cast<std::ptrdiff_t>(up_channels * d_cat.plane()), d_cat.data.end());
    Tensor<T>& below = i == depth - 1 ? d_enc[depth] : d_dec[i + 1];
    upsample2x_backward(d_up, below);
  }
  Tensor<T> d_prev;
  for (int i = depth; i >= 0; --i) {
    relu_backward(ws.enc_out[i], d_enc[i]);
    const Tensor<T>& input = i == 0 ? ws.input : ws.enc_out[i - 1];
    enc_[i].backward(p, input, ws.enc_col[i], d_enc[i], dparams, i == 0 ? nullptr : &d_prev, scratch);
    if (i > 0) {
      for (std::size_t k = 0; k < d_prev.data.size(); ++k) d_enc[i - 1].data[k] += d_prev.data[k];
    }
  }
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, int num_classes)
    : cfg_(cfg), num_classes_(num_classes) {
  cfg_.validate();
  if (num_classes < 2) throw ValidationError("discriminator: num_classes must be >= 2");
  std::size_t offset = 0;
  int in_channels = 1 + num_classes;
  for (int i = 0; i < cfg_.num_downsamples; ++i) {
    const int out_channels = level_channels(cfg_.base_channels, i);
    down_.emplace_back(ConvShape{in_channels, out_channels, 3, 2, 1}, offset);
    offset += down_.back().param_count();
    in_channels = out_channels;
  }
  final_ = Conv2d<T>(ConvShape{in_channels, 1, 3, 1, 1}, offset);
  offset += final_.param_count();
  params_.assign(offset, T{});
  initialize();
}

template <typename T>
void Discriminator<T>::initialize() {
  std::mt19937_64 rng(cfg_.rng_seed);
  std::span<T> all(params_);
  for (const auto& conv : down_) conv.initialize(all, rng);
  final_.initialize(all, rng);
}

template <typename T>
int Discriminator<T>::receptive_field() const noexcept {
  int field = 1;
  int jump = 1;
  for (int i = 0; i < cfg_.num_downsamples; ++i) {
    field += 2 * jump;
    jump *= 2;
  }
  return field + 2 * jump;
}

template <typename T>
void Discriminator<T>::check_input(int height, int width) const {
  const int factor = 1 << cfg_.num_downsamples;
  if (height <= 0 || width <= 0 || height % factor != 0 || width % factor != 0) {
    throw ShapeError("discriminator input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 2^num_downsamples = " + std::to_string(factor));
  }
  if (receptive_field() >= std::min(height, width)) {
    throw ShapeError("discriminator receptive field " + std::to_string(receptive_field()) +
                     " does not fit inside a " + std::to_string(height) + "x" + std::to_string(width) + " image");
  }
}

template <typename T>
void Discriminator<T>::forward(const Tensor<T>& image, const Tensor<T>& seg, Workspace& ws) const {
  if (image.channels != 1) throw ShapeError("discriminator expects a single-channel image");
  if (seg.channels != num_classes_) {
    throw ShapeError("discriminator expects " + std::to_string(num_classes_) + " segmentation channels, got " +
                     std::to_string(seg.channels));
  }
  if (seg.height != image.height || seg.width != image.width) {
    throw ShapeError("segmentation " + std::to_string(seg.height) + "x" + std::to_string(seg.width) +
                     " is not aligned with image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width));
  }
  check_input(image.height, image.width);
  std::span<const T> p(params_);
  concat_channels(image, seg, ws.input);
  ws.out.resize(down_.size());
  ws.col.resize(down_.size());
  const Tensor<T>* x = &ws.input;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    down_[i].forward(p, *x, ws.out[i], ws.col[i]);
    leaky_relu_inplace(ws.out[i], static_cast<T>(kLeakySlope));
    x = &ws.out[i];
  }
  final_.forward(p, *x, ws.scores, ws.final_col);
  const T lo = static_cast<T>(1e-6);
  const T hi = T(1) - lo;
  ws.clamped.assign(ws.scores.data.size(), 0);
  for (std::size_t i = 0; i < ws.scores.data.size(); ++i) {
    const T s = T(1) / (T(1) + std::exp(-ws.scores.data[i]));
    if (s < lo || s > hi) ws.clamped[i] = 1;
    ws.scores.data[i] = std::clamp(s, lo, hi);
  }
}

template <typename T>
void Discriminator<T>::backward(Workspace& ws, const Tensor<T>& dscores, std::span<T> dparams, Tensor<T>* dseg) const {
  std::span<const T> p(params_);
  Buffer<T> scratch;
  Tensor<T> grad(dscores.channels, dscores.height, dscores.width);
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    const T s = ws.scores.data[i];
    grad.data[i] = ws.clamped[i] ? T{} : dscores.data[i] * s * (T(1) - s);
  }
  Tensor<T> dx;
  const std::size_t layers = down_.size();
  final_.backward(p, ws.out[layers - 1], ws.final_col, grad, dparams, &dx, scratch);
  for (std::size_t i = layers; i-- > 0;) {
    leaky_relu_backward(ws.out[i], dx, static_cast<T>(kLeakySlope));
    const Tensor<T>& input = i == 0 ? ws.input : ws.out[i - 1];
    const bool need_dx = i > 0 || dseg != nullptr;
    Tensor<T> next;
    down_[i].backward(p, input, ws.col[i], dx, dparams, need_dx ? &next : nullptr, scratch);
    dx = std::move(next);
  }
  if (dseg) {
    dseg->resize(num_classes_, dx.height, dx.width);
    std::copy(dx.data.begin() + static_cast<std::ptrdiff_t>(dx.plane()), dx.data.end(), dseg->data.begin());
  }
}

template <typename T>
T segmentation_loss(const Tensor<T>& probs, const Grid<std::uint8_t>& target, T weight, Tensor<T>* grad) {
  if (!target.same_shape(probs.height, probs.width)) {
    throw ShapeError("segmentation target " + std::to_string(target.height()) + "x" +
                     std::to_string(target.width()) + " does not match prediction " + std::to_string(probs.height) +
                     "x" + std::to_string(probs.width));
  }
  if (weight < T{}) throw ValidationError("segmentation loss weight must be >= 0");
  const std::size_t plane = probs.plane();
  if (grad) grad->resize(probs.channels, probs.height, probs.width);
  if (weight == T{}) return T{};
  const T scale = weight / static_cast<T>(plane);
  T total{};
  for (std::size_t i = 0; i < plane; ++i) {
    const int c = target[i];
    if (c >= probs.channels) throw ValidationError("segmentation target class out of range");
    const T pt = probs.data[c * plane + i];
    total -= log_clamped(pt);
    if (grad) grad->data[c * plane + i] = scale * neg_log_grad(pt);
  }
  return scale * total;
}

template <typename T>
T discriminator_loss(const Tensor<T>& real, const Tensor<T>& fake, T real_weight, Tensor<T>* grad_real,
                     Tensor<T>* grad_fake) {
  const T n_real = static_cast<T>(real.data.size());
  const T n_fake = static_cast<T>(fake.data.size());
  T loss_real{};
  T loss_fake{};
  if (grad_real) grad_real->resize(real.channels, real.height, real.width);
  if (grad_fake) grad_fake->resize(fake.channels, fake.height, fake.width);
  for (std::size_t i = 0; i < real.data.size(); ++i) {
    loss_real -= log_clamped(real.data[i]);
    if (grad_real) grad_real->data[i] = real_weight * neg_log_grad(real.data[i]) / n_real;
  }
  for (std::size_t i = 0; i < fake.data.size(); ++i) {
    loss_fake -= log_clamped(T(1) - fake.data[i]);
    if (grad_fake) grad_fake->data[i] = -neg_log_grad(T(1) - fake.data[i]) / n_fake;
  }
  return real_weight * loss_real / n_real + loss_fake / n_fake;
}

template <typename T>
T generator_adversarial_loss(const Tensor<T>& fake, Tensor<T>* grad_fake) {
  const T n = static_cast<T>(fake.data.size());
  T loss{};
  if (grad_fake) grad_fake->resize(fake.channels, fake.height, fake.width);
  for (std::size_t i = 0; i < fake.data.size(); ++i) {
    loss -= log_clamped(fake.data[i]);
    if (grad_fake) grad_fake->data[i] = neg_log_grad(fake.data[i]) / n;
  }
  return loss / n;
}

template <typename T>
Tensor<T> to_tensor(const ImageSlice& slice) {
  // Standardized per slice: zero mean, unit variance.
  Tensor<T> t(1, slice.height(), slice.width());
  const auto values = slice.pixels.values();
  double mean = 0.0;
  for (float v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (float v : values) var += (v - mean) * (v - mean);
  const double inv_std = 1.0 / std::sqrt(std::max(var / static_cast<double>(values.size()), 1e-12));
  for (std::size_t i = 0; i < values.size(); ++i) t.data[i] = static_cast<T>((values[i] - mean) * inv_std);
  return t;
}

template <typename T>
Tensor<T> to_tensor(const ProbMap& probs) {
  Tensor<T> t(probs.num_classes, probs.height, probs.width);
  if (probs.probs.size() != t.data.size()) throw ShapeError("probability map " + probs.slice_id + " is malformed");
  std::transform(probs.probs.begin(), probs.probs.end(), t.data.begin(), [](float v) { return static_cast<T>(v); });
  return t;
}

ProbMap to_probmap(const Tensor<float>& t, const std::string& slice_id) {
  ProbMap out(slice_id, t.channels, t.height, t.width);
  out.probs.assign(t.data.begin(), t.data.end());
  return out;
}

ScoreMap to_scoremap(const Tensor<float>& t) {
  ScoreMap out(t.height, t.width);
  std::copy(t.data.begin(), t.data.end(), out.values().begin());
  return out;
}

#define COSEG_INSTANTIATE(T)                                                                                  \
  template class Generator<T>;                                                                                \
  template class Discriminator<T>;                                                                            \
  template T segmentation_loss<T>(const Tensor<T>&, const Grid<std::uint8_t>&, T, Tensor<T>*);                \
  template T discriminator_loss<T>(const Tensor<T>&, const Tensor<T>&, T, Tensor<T>*, Tensor<T>*);            \
  template T generator_adversarial_loss<T>(const Tensor<T>&, Tensor<T>*);                                     \
  template Tensor<T> to_tensor<T>(const ImageSlice&);                                                         \
  template Tensor<T> to_tensor<T>(const ProbMap&);

COSEG_INSTANTIATE(float)
COSEG_INSTANTIATE(double)
#undef COSEG_INSTANTIATE

}  // namespace nn

ModelState ModelState::initialize(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg) {
  return ModelState{nn::Generator<float>(gcfg), nn::Discriminator<float>(dcfg, gcfg.num_classes)};
}

bool ModelState::operator==(const ModelState& other) const {
  return generator.config() == other.generator.config() && discriminator.config() == other.discriminator.config() &&
         generator.params() == other.generator.params() && discriminator.params() == other.discriminator.params();
}

ProbMap generator_forward(const nn::Generator<float>& generator, const ImageSlice& image) {
  typename nn::Generator<float>::Workspace ws;
  ws.input = nn::to_tensor<float>(image);
  generator.forward(ws.input, ws);
  return nn::to_probmap(ws.probs, image.id);
}

ScoreMap discriminator_forward(const nn::Discriminator<float>& discriminator, const ImageSlice& image,
                               const ProbMap& seg) {
  typename nn::Discriminator<float>::Workspace ws;
  discriminator.forward(nn::to_tensor<float>(image), nn::to_tensor<float>(seg), ws);
  return nn::to_scoremap(ws.scores);
}

double segmentation_loss(const ProbMap& pred, const LabelMap& target, double weight) {
  return nn::segmentation_loss<double>(nn::to_tensor<double>(pred), target.classes, weight, nullptr);
}

AdversarialLosses adversarial_losses(const ScoreMap& real_scores, const ScoreMap& fake_scores) {
  auto check = [](const ScoreMap& m, const char* name) {
    for (float s : m.values()) {
      if (!(s > 0.0f && s < 1.0f)) throw ValidationError(std::string(name) + " score outside (0,1)");
    }
    if (m.empty()) throw ValidationError(std::string(name) + " score map is empty");
  };
  check(real_scores, "real");
  check(fake_scores, "fake");
  auto to_t = [](const ScoreMap& m) {
    nn::Tensor<double> t(1, m.height(), m.width());
    std::copy(m.values().begin(), m.values().end(), t.data.begin());
    return t;
  };
  const auto real = to_t(real_scores);
  const auto fake = to_t(fake_scores);
  return {nn::discriminator_loss<double>(real, fake, 1.0, nullptr, nullptr),
          nn::generator_adversarial_loss<double>(fake, nullptr)};
}

namespace {

constexpr char kMagic[8] = {'C', 'O', 'S', 'E', 'G', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename V>
void put(std::ofstream& out, const V& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename V>
V take(std::ifstream& in, const std::filesystem::path& file) {
  V value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw FormatError(file.string() + ": truncated checkpoint");
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const ModelState& state) {
  const auto& g = state.generator.config();
  const auto& d = state.discriminator.config();
  nlohmann::ordered_json header;
  header["generator"] = {{"num_classes", g.num_classes},
                         {"base_channels", g.base_channels},
                         {"depth", g.depth},
                         {"rng_seed", g.rng_seed}};
  header["discriminator"] = {{"base_channels", d.base_channels},
                             {"num_downsamples", d.num_downsamples},
                             {"rng_seed", d.rng_seed}};
  header["generator_params"] = state.generator.param_count();
  header["discriminator_params"] = state.discriminator.param_count();
  const std::string text = header.dump();

  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot open " + file.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(state.generator.params().data()),
            static_cast<std::streamsize>(state.generator.param_count() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(state.discriminator.params().data()),
            static_cast<std::streamsize>(state.discriminator.param_count() * sizeof(float)));
  if (!out) throw IOError("write failed: " + file.string());
}

ModelState load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IOError("cannot open checkpoint " + file.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError(file.string() + ": not a checkpoint");
  const auto version = take<std::uint32_t>(in, file);
  if (version != kVersion) throw FormatError(file.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto length = take<std::uint32_t>(in, file);
  if (length > (1u << 20)) throw FormatError(file.string() + ": oversized checkpoint header");
  std::string text(length, '\0');
  in.read(text.data(), length);
  if (!in) throw FormatError(file.string() + ": truncated checkpoint header");

  GeneratorConfig gcfg;
  DiscriminatorConfig dcfg;
  std::size_t g_count = 0;
  std::size_t d_count = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    const auto& g = header.at("generator");
    gcfg.num_classes = g.at("num_classes").get<int>();
    gcfg.base_channels = g.at("base_channels").get<int>();
    gcfg.depth = g.at("depth").get<int>();
    gcfg.rng_seed = g.at("rng_seed").get<std::uint64_t>();
    const auto& d = header.at("discriminator");
    dcfg.base_channels = d.at("base_channels").get<int>();
    dcfg.num_downsamples = d.at("num_downsamples").get<int>();
    dcfg.rng_seed = d.at("rng_seed").get<std::uint64_t>();
    g_count = header.at("generator_params").get<std::size_t>();
    d_count = header.at("discriminator_params").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file.string() + ": bad checkpoint header: " + e.what());
  }
  ModelState state = [&] {
    try {
      return ModelState::initialize(gcfg, dcfg);
    } catch (const ValidationError& e) {
      throw FormatError(file.string() + ": " + e.what());
    }
  }();
  if (g_count != state.generator.param_count() || d_count != state.discriminator.param_count()) {
    throw FormatError(file.string() + ": parameter counts do not match the recorded configuration");
  }
  in.read(reinterpret_cast<char*>(state.generator.params().data()), static_cast<std::streamsize>(g_count * sizeof(float)));
  in.read(reinterpret_cast<char*>(state.discriminator.params().data()),
          static_cast<std::streamsize>(d_count * sizeof(float)));
  if (!in) throw FormatError(file.string() + ": truncated parameter block");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(file.string() + ": trailing bytes after parameters");
  return state;
}

}  // namespace coseg
