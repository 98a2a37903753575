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

#include "coseg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "coseg/errors.hpp"

namespace coseg::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void im2col(const Tensor<T>& x, const ConvShape& s, int out_h, int out_w, Buffer<T>& col) {
  const int k = s.kernel;
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  col.resize(static_cast<std::size_t>(s.in_channels) * k * k * n);
  T* dst = col.data();
  for (int c = 0; c < s.in_channels; ++c) {
    const T* src = x.channel(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          T* row = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= x.height) {
            std::fill(row, row + out_w, T{});
            continue;
          }
          const T* line = src + static_cast<std::size_t>(iy) * x.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            row[ox] = (ix >= 0 && ix < x.width) ? line[ix] : T{};
          }
        }
        dst += n;
      }
    }
  }
}

template <typename T>
void col2im(const Buffer<T>& col, const ConvShape& s, int out_h, int out_w, Tensor<T>& dx) {
  const int k = s.kernel;
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  std::fill(dx.data.begin(), dx.data.end(), T{});
  const T* src = col.data();
  for (int c = 0; c < s.in_channels; ++c) {
    T* dst = dx.channel(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= dx.height) continue;
          const T* row = src + static_cast<std::size_t>(oy) * out_w;
          T* line = dst + static_cast<std::size_t>(iy) * dx.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            if (ix >= 0 && ix < dx.width) line[ix] += row[ox];
          }
        }
        src += n;
      }
    }
  }
}

}  // namespace

template <typename T>
void Conv2d<T>::initialize(std::span<T> params, std::mt19937_64& rng) const {
  const double fan_in = static_cast<double>(shape_.in_channels) * shape_.kernel * shape_.kernel;
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  T* w = params.data() + offset_;
  for (std::size_t i = 0; i < weight_count(); ++i) w[i] = static_cast<T>(normal(rng));
  std::fill(w + weight_count(), w + param_count(), T{});
}

template <typename T>
void Conv2d<T>::forward(std::span<const T> params, const Tensor<T>& x, Tensor<T>& y, Buffer<T>& col) const {
  if (x.channels != shape_.in_channels) {
    throw ShapeError("conv expects " + std::to_string(shape_.in_channels) + " input channels, got " +
                     std::to_string(x.channels));
  }
  const int out_h = output_size(x.height);
  const int out_w = output_size(x.width);
  const int k_dim = shape_.in_channels * shape_.kernel * shape_.kernel;
  const int n = out_h * out_w;
  im2col(x, shape_, out_h, out_w, col);
  y.resize(shape_.out_channels, out_h, out_w);
  ConstMatrixMap<T> weights(params.data() + offset_, shape_.out_channels, k_dim);
  ConstMatrixMap<T> cols(col.data(), k_dim, n);
  MatrixMap<T> out(y.data.data(), shape_.out_channels, n);
  out.noalias() = weights * cols;
  const T* bias = params.data() + offset_ + weight_count();
  for (int o = 0; o < shape_.out_channels; ++o) out.row(o).array() += bias[o];
}

template <typename T>
void Conv2d<T>::backward(std::span<const T> params, const Tensor<T>& x, const Buffer<T>& col,
                         const Tensor<T>& dy, std::span<T> dparams, Tensor<T>* dx, Buffer<T>& scratch) const {
  const int k_dim = shape_.in_channels * shape_.kernel * shape_.kernel;
  const int n = dy.height * dy.width;
  ConstMatrixMap<T> grad_out(dy.data.data(), shape_.out_channels, n);
  if (!dparams.empty()) {
    ConstMatrixMap<T> cols(col.data(), k_dim, n);
    MatrixMap<T> grad_w(dparams.data() + offset_, shape_.out_channels, k_dim);
    grad_w.noalias() += grad_out * cols.transpose();
    T* grad_b = dparams.data() + offset_ + weight_count();
    for (int o = 0; o < shape_.out_channels; ++o) grad_b[o] += grad_out.row(o).sum();
  }
  if (dx) {
    ConstMatrixMap<T> weights(params.data() + offset_, shape_.out_channels, k_dim);
    scratch.resize(static_cast<std::size_t>(k_dim) * n);
    MatrixMap<T> grad_col(scratch.data(), k_dim, n);
    grad_col.noalias() = weights.transpose() * grad_out;
    dx->resize(x.channels, x.height, x.width);
    col2im(scratch, shape_, dy.height, dy.width, *dx);
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (T& v : t.data) v = v > T{} ? v : T{};
}

template <typename T>
void relu_backward(const Tensor<T>& output, Tensor<T>& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(output.data[i] > T{})) dy.data[i] = T{};
  }
}

template <typename T>
void leaky_relu_inplace(Tensor<T>& t, T slope) {
  for (T& v : t.data) v = v > T{} ? v : v * slope;
}

template <typename T>
void leaky_relu_backward(const Tensor<T>& output, Tensor<T>& dy, T slope) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(output.data[i] > T{})) dy.data[i] *= slope;
  }
}

template <typename T>
void upsample2x(const Tensor<T>& x, Tensor<T>& y) {
  y.resize(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.channel(c);
    T* dst = y.channel(c);
    for (int yy = 0; yy < y.height; ++yy) {
      const T* line = src + static_cast<std::size_t>(yy / 2) * x.width;
      T* out = dst + static_cast<std::size_t>(yy) * y.width;
      for (int xx = 0; xx < y.width; ++xx) out[xx] = line[xx / 2];
    }
  }
}

template <typename T>
void upsample2x_backward(const Tensor<T>& dy, Tensor<T>& dx) {
  dx.resize(dy.channels, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c) {
    const T* src = dy.channel(c);
    T* dst = dx.channel(c);
    for (int yy = 0; yy < dy.height; ++yy) {
      const T* line = src + static_cast<std::size_t>(yy) * dy.width;
      T* out = dst + static_cast<std::size_t>(yy / 2) * dx.width;
      for (int xx = 0; xx < dy.width; ++xx) out[xx / 2] += line[xx];
    }
  }
}

template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("concat of misaligned tensors");
  out.channels = a.channels + b.channels;
  out.height = a.height;
  out.width = a.width;
  out.data.resize(a.data.size() + b.data.size());
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
}

template <typename T>
void softmax_channels(Tensor<T>& t) {
  const std::size_t plane = t.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    T peak = t.data[p];
    for (int c = 1; c < t.channels; ++c) peak = std::max(peak, t.data[c * plane + p]);
    T sum{};
    for (int c = 0; c < t.channels; ++c) {
      T& v = t.data[c * plane + p];
      v = std::exp(v - peak);
      sum += v;
    }
    for (int c = 0; c < t.channels; ++c) t.data[c * plane + p] /= sum;
  }
}

template <typename T>
void softmax_backward(const Tensor<T>& probs, const Tensor<T>& dprobs, Tensor<T>& dlogits) {
  dlogits.resize(probs.channels, probs.height, probs.width);
  const std::size_t plane = probs.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    T dot{};
    for (int c = 0; c < probs.channels; ++c) dot += probs.data[c * plane + p] * dprobs.data[c * plane + p];
    for (int c = 0; c < probs.channels; ++c) {
      dlogits.data[c * plane + p] = probs.data[c * plane + p] * (dprobs.data[c * plane + p] - dot);
    }
  }
}

#define COSEG_INSTANTIATE(T)                                                   \
  template class Conv2d<T>;                                                    \
  template void relu_inplace<T>(Tensor<T>&);                                   \
  template void relu_backward<T>(const Tensor<T>&, Tensor<T>&);                \
  template void leaky_relu_inplace<T>(Tensor<T>&, T);                          \
  template void leaky_relu_backward<T>(const Tensor<T>&, Tensor<T>&, T);       \
  template void upsample2x<T>(const Tensor<T>&, Tensor<T>&);                   \
  template void upsample2x_backward<T>(const Tensor<T>&, Tensor<T>&);          \
  template void concat_channels<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&); \
  template void softmax_channels<T>(Tensor<T>&);                               \
  template void softmax_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);

COSEG_INSTANTIATE(float)
COSEG_INSTANTIATE(double)
#undef COSEG_INSTANTIATE

}  // namespace coseg::nn
