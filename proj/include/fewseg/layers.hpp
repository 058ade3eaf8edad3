// Copyright 2026 The fewseg Authors
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

// Forward and backward kernels for the handful of layer types the network
// uses. Convolutions are "same" padded, stride 1, lowered to GEMM via im2col.

#include <algorithm>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "fewseg/tensor.hpp"

namespace fewseg::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Image rows [y0, y1) of the im2col matrix: (C*k*k) rows, (y1-y0)*W columns.
template <typename T>
void im2col_rows(const Tensor<T>& x, int k, int y0, int y1, std::vector<T>& col) {
  const int H = x.height, W = x.width, pad = k / 2;
  const std::size_t n = static_cast<std::size_t>(y1 - y0) * W;
  col.resize(static_cast<std::size_t>(x.channels) * k * k * n);
  T* dst = col.data();
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.channel(c);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, dst += n) {
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
        for (int y = y0; y < y1; ++y) {
          T* row = dst + static_cast<std::size_t>(y - y0) * W;
          const int sy = y + dy;
          if (sy < 0 || sy >= H || x0 >= x1) {
            std::fill(row, row + W, T{0});
            continue;
          }
          std::fill(row, row + x0, T{0});
          std::copy(src + static_cast<std::size_t>(sy) * W + x0 + dx, src + static_cast<std::size_t>(sy) * W + x1 + dx,
                    row + x0);
          std::fill(row + x1, row + W, T{0});
        }
      }
  }
}

// Adjoint of im2col_rows: scatters column gradients back, accumulating into dx.
template <typename T>
void col2im_rows_add(const std::vector<T>& col, int k, int y0, int y1, Tensor<T>& dx) {
  const int H = dx.height, W = dx.width, pad = k / 2;
  const std::size_t n = static_cast<std::size_t>(y1 - y0) * W;
  const T* src = col.data();
  for (int c = 0; c < dx.channels; ++c) {
    T* dst = dx.channel(c);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, src += n) {
        const int dy = ky - pad, dxo = kx - pad;
        const int x0 = std::max(0, -dxo), x1 = std::min(W, W - dxo);
        for (int y = y0; y < y1; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const T* row = src + static_cast<std::size_t>(y - y0) * W;
          T* out = dst + static_cast<std::size_t>(sy) * W + dxo;
          for (int x = x0; x < x1; ++x) out[x] += row[x];
        }
      }
  }
}

template <typename T>
void im2col(const Tensor<T>& x, int k, std::vector<T>& col) {
  im2col_rows(x, k, 0, x.height, col);
}

template <typename T>
void col2im_add(const std::vector<T>& col, int k, Tensor<T>& dx) {
  col2im_rows_add(col, k, 0, dx.height, dx);
}

// Rows per im2col tile, so a tile stays cache resident.
inline int tile_rows(int channels, int k, int width) {
  constexpr std::size_t kTileBytes = 256 * 1024;
  const std::size_t per_row = static_cast<std::size_t>(channels) * k * k * width * sizeof(float);
  return static_cast<int>(std::max<std::size_t>(1, kTileBytes / std::max<std::size_t>(per_row, 1)));
}

// weight: [out][in][k][k], bias: [out].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int out_channels, int k) {
  Tensor<T> y(out_channels, x.height, x.width);
  const Eigen::Index hw = static_cast<Eigen::Index>(x.plane());
  const Eigen::Index depth = static_cast<Eigen::Index>(x.channels) * k * k;
  ConstMatrixMap<T> w(weight.data(), out_channels, depth);
  MatrixMap<T> out(y.data.data(), out_channels, hw);
  if (k == 1) {
    out.noalias() = w * ConstMatrixMap<T>(x.data.data(), depth, hw);
  } else {
    std::vector<T> col;
    const int step = tile_rows(x.channels, k, x.width);
    for (int y0 = 0; y0 < x.height; y0 += step) {
      const int y1 = std::min(x.height, y0 + step);
      const Eigen::Index n = static_cast<Eigen::Index>(y1 - y0) * x.width;
      im2col_rows(x, k, y0, y1, col);
      out.middleCols(static_cast<Eigen::Index>(y0) * x.width, n).noalias() =
          w * ConstMatrixMap<T>(col.data(), depth, n);
    }
  }
  for (int o = 0; o < out_channels; ++o) out.row(o).array() += bias[o];
  return y;
}

// Accumulates parameter gradients; writes the input gradient when dx != nullptr.
template <typename T>
void conv2d_backward(const Tensor<T>& x, std::span<const T> weight, int out_channels, int k, const Tensor<T>& dy,
                     std::span<T> dweight, std::span<T> dbias, Tensor<T>* dx) {
  const Eigen::Index hw = static_cast<Eigen::Index>(x.plane());
  const Eigen::Index depth = static_cast<Eigen::Index>(x.channels) * k * k;
  ConstMatrixMap<T> g(dy.data.data(), out_channels, hw);
  MatrixMap<T> dw(dweight.data(), out_channels, depth);
  // Fixed-order loop: Eigen reductions peel by pointer alignment, so their
  // summation order would depend on where the allocator put the buffer.
  for (int o = 0; o < out_channels; ++o) {
    const T* row = dy.channel(o);
    std::common_type_t<T, double> total = 0;
    for (Eigen::Index i = 0; i < hw; ++i) total += row[i];
    dbias[o] += static_cast<T>(total);
  }
  ConstMatrixMap<T> w(weight.data(), out_channels, depth);
  if (k == 1) {
    ConstMatrixMap<T> xin(x.data.data(), depth, hw);
    dw.noalias() += g * xin.transpose();
    if (dx) {
      *dx = Tensor<T>(x.channels, x.height, x.width);
      MatrixMap<T>(dx->data.data(), depth, hw).noalias() = w.transpose() * g;
    }
    return;
  }
  if (dx) *dx = Tensor<T>(x.channels, x.height, x.width);
  std::vector<T> col;
  const int step = tile_rows(x.channels, k, x.width);
  for (int y0 = 0; y0 < x.height; y0 += step) {
    const int y1 = std::min(x.height, y0 + step);
    const Eigen::Index n = static_cast<Eigen::Index>(y1 - y0) * x.width;
    const auto g_tile = g.middleCols(static_cast<Eigen::Index>(y0) * x.width, n);
    im2col_rows(x, k, y0, y1, col);
    dw.noalias() += g_tile * ConstMatrixMap<T>(col.data(), depth, n).transpose();
    if (dx) {
      MatrixMap<T>(col.data(), depth, n).noalias() = w.transpose() * g_tile;
      col2im_rows_add(col, k, y0, y1, *dx);
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.data) v = v > T{0} ? v : T{0};
}

// grad *= (activated > 0), where `activated` is the ReLU output.
template <typename T>
void relu_backward(const Tensor<T>& activated, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!(activated.data[i] > T{0})) grad.data[i] = T{0};
}

// 2x2 max pooling, stride 2. `argmax` records the winning offset (0..3).
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x, std::vector<std::uint8_t>& argmax) {
  Tensor<T> y(x.channels, x.height / 2, x.width / 2);
  argmax.assign(y.size(), 0);
  std::size_t i = 0;
  for (int c = 0; c < x.channels; ++c)
    for (int oy = 0; oy < y.height; ++oy)
      for (int ox = 0; ox < y.width; ++ox, ++i) {
        T best = x.at(c, 2 * oy, 2 * ox);
        std::uint8_t arg = 0;
        for (std::uint8_t q = 1; q < 4; ++q) {
          T v = x.at(c, 2 * oy + q / 2, 2 * ox + q % 2);
          if (v > best) {
            best = v;
            arg = q;
          }
        }
        y.data[i] = best;
        argmax[i] = arg;
      }
  return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint8_t>& argmax, int height, int width) {
  Tensor<T> dx(dy.channels, height, width);
  std::size_t i = 0;
  for (int c = 0; c < dy.channels; ++c)
    for (int oy = 0; oy < dy.height; ++oy)
      for (int ox = 0; ox < dy.width; ++ox, ++i) {
        const std::uint8_t q = argmax[i];
        dx.at(c, 2 * oy + q / 2, 2 * ox + q % 2) += dy.data[i];
      }
  return dx;
}

// Nearest-neighbour x2 upsampling.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  Tensor<T> y(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c)
    for (int yy = 0; yy < y.height; ++yy) {
      const T* src = x.channel(c) + static_cast<std::size_t>(yy / 2) * x.width;
      T* dst = y.channel(c) + static_cast<std::size_t>(yy) * y.width;
      for (int xx = 0; xx < y.width; ++xx) dst[xx] = src[xx / 2];
    }
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.channels, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c)
    for (int yy = 0; yy < dy.height; ++yy) {
      const T* src = dy.channel(c) + static_cast<std::size_t>(yy) * dy.width;
      T* dst = dx.channel(c) + static_cast<std::size_t>(yy / 2) * dx.width;
      for (int xx = 0; xx < dy.width; ++xx) dst[xx / 2] += src[xx];
    }
  return dx;
}

// Channel concatenation of same-sized maps, in argument order.
template <typename T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts) {
  int channels = 0;
  const Tensor<T>* first = *parts.begin();
  for (const auto* p : parts) channels += p->channels;
  Tensor<T> out(channels, first->height, first->width);
  auto it = out.data.begin();
  for (const auto* p : parts) it = std::copy(p->data.begin(), p->data.end(), it);
  return out;
}

// Channels [begin, begin + count) of x.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count) {
  Tensor<T> out(count, x.height, x.width);
  std::copy(x.channel(begin), x.channel(begin) + count * x.plane(), out.data.begin());
  return out;
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += x.data[i];
}

}  // namespace fewseg::nn
