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

// Minimal CPU building blocks for the segmentation networks: a C x H x W tensor,
// im2col convolution and the activations the networks need, each with an explicit
// backward pass. Instantiated for float (training) and double (gradient checks).

#include <cstddef>
#include <cstdint>
#include <new>
#include <random>
#include <span>
#include <vector>

namespace coseg::nn {

/// 64-byte aligned allocation. Vectorized reductions peel according to the data address,
/// so a fixed alignment keeps floating-point results identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  Buffer<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T{})
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  void resize(int c, int h, int w) {
    channels = c;
    height = h;
    width = w;
    data.assign(static_cast<std::size_t>(c) * h * w, T{});
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  T* channel(int c) noexcept { return data.data() + c * plane(); }
  const T* channel(int c) const noexcept { return data.data() + c * plane(); }
  T& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  T at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
};

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

/// Convolution whose weights live at `offset` inside a network's flat parameter vector:
/// out_channels x (in_channels * k * k) weights followed by out_channels biases.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ConvShape shape, std::size_t offset) : shape_(shape), offset_(offset) {}

  const ConvShape& shape() const noexcept { return shape_; }
  std::size_t offset() const noexcept { return offset_; }
  std::size_t weight_count() const noexcept {
    return static_cast<std::size_t>(shape_.out_channels) * shape_.in_channels * shape_.kernel * shape_.kernel;
  }
  std::size_t param_count() const noexcept { return weight_count() + shape_.out_channels; }
  int output_size(int input) const noexcept { return (input + 2 * shape_.padding - shape_.kernel) / shape_.stride + 1; }

  /// He-normal weights, zero bias.
  void initialize(std::span<T> params, std::mt19937_64& rng) const;

  /// `col` receives the unfolded input and must be kept for backward.
  void forward(std::span<const T> params, const Tensor<T>& x, Tensor<T>& y, Buffer<T>& col) const;

  /// Accumulates weight/bias gradients into `dparams` unless it is empty; writes the input
  /// gradient into `dx` (overwrite) when non-null.
  void backward(std::span<const T> params, const Tensor<T>& x, const Buffer<T>& col, const Tensor<T>& dy,
                std::span<T> dparams, Tensor<T>* dx, Buffer<T>& scratch) const;

 private:
  ConvShape shape_;
  std::size_t offset_ = 0;
};

template <typename T>
void relu_inplace(Tensor<T>& t);
/// Zeroes dy wherever the activation output was not positive.
template <typename T>
void relu_backward(const Tensor<T>& output, Tensor<T>& dy);

template <typename T>
void leaky_relu_inplace(Tensor<T>& t, T slope);
template <typename T>
void leaky_relu_backward(const Tensor<T>& output, Tensor<T>& dy, T slope);

template <typename T>
void upsample2x(const Tensor<T>& x, Tensor<T>& y);
/// Sums each 2x2 block of dy into dx (overwrite).
template <typename T>
void upsample2x_backward(const Tensor<T>& dy, Tensor<T>& dx);

template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out);

/// In-place softmax over channels at every pixel.
template <typename T>
void softmax_channels(Tensor<T>& t);
/// dlogits = p * (dp - sum_c p_c dp_c)
template <typename T>
void softmax_backward(const Tensor<T>& probs, const Tensor<T>& dprobs, Tensor<T>& dlogits);

}  // namespace coseg::nn
