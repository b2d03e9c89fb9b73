/* Copyright 2026 The sqakd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "sqakd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sqakd {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace ops {
namespace {

template <typename T>
using Grads = std::vector<std::vector<T>>;

template <typename T>
Tensor<T> Finish(Tensor<T> out, std::vector<Tensor<T>> inputs,
                 typename Tape<T>::BackwardFn backward, const char* name) {
  CheckFinite<T>(out.data(), name);
  if (Tape<T>::ShouldRecord(inputs)) {
    Tape<T>::Active()->Record(std::move(inputs), out, std::move(backward));
  }
  return out;
}

void RequireRank(const Shape& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank) {
    throw DimensionError(std::string(op) + " expects rank " +
                         std::to_string(rank) + ", got " +
                         ShapeToString(shape));
  }
}

template <typename T>
void RequireSameShape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch " +
                         ShapeToString(a.shape()) + " vs " +
                         ShapeToString(b.shape()));
  }
}

// Splits a tensor into rows over its last axis.
template <typename T>
std::pair<std::size_t, std::size_t> RowsCols(const Tensor<T>& a,
                                             const char* op) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw DimensionError(std::string(op) + " over an empty axis");
  }
  const std::size_t cols = a.shape().back();
  return {a.size() / cols, cols};
}

}  // namespace

template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b) {
  RequireRank(a.shape(), 2, "matmul");
  RequireRank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions disagree: " +
                         ShapeToString(a.shape()) + " x " +
                         ShapeToString(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = &B[p * n];
      T* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto backward = [a, b, m, k, n](std::span<const T> g) {
    Grads<T> grads(2);
    const auto A = a.data();
    const auto B = b.data();
    if (a.requires_grad()) {
      auto& da = grads[0];
      da.assign(m * k, T(0));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
          da[i * k + p] = acc;
        }
    }
    if (b.requires_grad()) {
      auto& db = grads[1];
      db.assign(k * n, T(0));
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * g[i * n + j];
        }
    }
    return grads;
  };
  return Finish(Tensor<T>({m, n}, std::move(out)), {a, b}, backward, "matmul");
}

template <typename T>
Tensor<T> Conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  RequireRank(x.shape(), 4, "conv2d input");
  RequireRank(w.shape(), 4, "conv2d kernel");
  if (stride == 0) throw DimensionError("conv2d stride must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C) {
    throw DimensionError("conv2d channel mismatch: input " +
                         ShapeToString(x.shape()) + ", kernel " +
                         ShapeToString(w.shape()));
  }
  if (kh > H + 2 * padding || kw > W + 2 * padding) {
    throw DimensionError("conv2d kernel " + ShapeToString(w.shape()) +
                         " larger than padded input " +
                         ShapeToString(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != F)) {
    throw DimensionError("conv2d bias must have shape [" + std::to_string(F) +
                         "]");
  }
  const std::size_t OH = (H + 2 * padding - kh) / stride + 1;
  const std::size_t OW = (W + 2 * padding - kw) / stride + 1;

  // Visits every (output, kernel tap) pair that lands inside the input.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const std::size_t o = ((n * F + f) * OH + oy) * OW + ox;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const long iy = static_cast<long>(oy * stride + ky) -
                                static_cast<long>(padding);
                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const long ix = static_cast<long>(ox * stride + kx) -
                                  static_cast<long>(padding);
                  if (ix < 0 || ix >= static_cast<long>(W)) continue;
                  const std::size_t xi =
                      ((n * C + c) * H + static_cast<std::size_t>(iy)) * W +
                      static_cast<std::size_t>(ix);
                  const std::size_t wi = ((f * C + c) * kh + ky) * kw + kx;
                  fn(o, xi, wi);
                }
              }
          }
  };

  std::vector<T> out(N * F * OH * OW, T(0));
  if (has_bias) {
    const auto b = bias.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = b[(i / (OH * OW)) % F];
  }
  {
    const auto X = x.data();
    const auto Wt = w.data();
    for_each_tap([&](std::size_t o, std::size_t xi, std::size_t wi) {
      out[o] += X[xi] * Wt[wi];
    });
  }

  auto backward = [x, w, bias, has_bias, F, OH, OW,
                   for_each_tap](std::span<const T> g) {
    Grads<T> grads(3);
    const auto X = x.data();
    const auto Wt = w.data();
    const bool need_x = x.requires_grad(), need_w = w.requires_grad();
    if (need_x) grads[0].assign(x.size(), T(0));
    if (need_w) grads[1].assign(w.size(), T(0));
    if (need_x || need_w) {
      for_each_tap([&](std::size_t o, std::size_t xi, std::size_t wi) {
        if (need_x) grads[0][xi] += g[o] * Wt[wi];
        if (need_w) grads[1][wi] += g[o] * X[xi];
      });
    }
    if (has_bias && bias.requires_grad()) {
      grads[2].assign(F, T(0));
      for (std::size_t i = 0; i < g.size(); ++i) grads[2][(i / (OH * OW)) % F] += g[i];
    }
    return grads;
  };
  return Finish(Tensor<T>({N, F, OH, OW}, std::move(out)), {x, w, bias},
                backward, "conv2d");
}

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  const bool bias = a.shape() != b.shape();
  if (bias && !(b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0))) {
    throw DimensionError("add shape mismatch " + ShapeToString(a.shape()) +
                         " vs " + ShapeToString(b.shape()));
  }
  const auto A = a.data();
  const auto B = b.data();
  const std::size_t nb = b.size();
  std::vector<T> out(A.begin(), A.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i % nb];
  auto backward = [a, b, nb](std::span<const T> g) {
    Grads<T> grads(2);
    if (a.requires_grad()) grads[0].assign(g.begin(), g.end());
    if (b.requires_grad()) {
      grads[1].assign(nb, T(0));
      for (std::size_t i = 0; i < g.size(); ++i) grads[1][i % nb] += g[i];
    }
    return grads;
  };
  return Finish(Tensor<T>(a.shape(), std::move(out)), {a, b}, backward, "add");
}

template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b) {
  RequireSameShape(a, b, "sub");
  const auto A = a.data();
  const auto B = b.data();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  auto backward = [a, b](std::span<const T> g) {
    Grads<T> grads(2);
    if (a.requires_grad()) grads[0].assign(g.begin(), g.end());
    if (b.requires_grad()) {
      grads[1].resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] = -g[i];
    }
    return grads;
  };
  return Finish(Tensor<T>(a.shape(), std::move(out)), {a, b}, backward, "sub");
}

template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b) {
  RequireSameShape(a, b, "mul");
  const auto A = a.data();
  const auto B = b.data();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  auto backward = [a, b](std::span<const T> g) {
    Grads<T> grads(2);
    const auto A = a.data();
    const auto B = b.data();
    if (a.requires_grad()) {
      grads[0].resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] = g[i] * B[i];
    }
    if (b.requires_grad()) {
      grads[1].resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] = g[i] * A[i];
    }
    return grads;
  };
  return Finish(Tensor<T>(a.shape(), std::move(out)), {a, b}, backward, "mul");
}

template <typename T>
Tensor<T> Scale(const Tensor<T>& a, T factor) {
  const auto A = a.data();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * factor;
  auto backward = [factor](std::span<const T> g) {
    Grads<T> grads(1);
    grads[0].resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] = g[i] * factor;
    return grads;
  };
  return Finish(Tensor<T>(a.shape(), std::move(out)), {a}, backward, "scale");
}

template <typename T>
Tensor<T> Relu(const Tensor<T>& a) {
  const auto A = a.data();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] > T(0) ? A[i] : T(0);
  auto backward = [a](std::span<const T> g) {
    Grads<T> grads(1);
    const auto A = a.data();
    grads[0].resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      grads[0][i] = A[i] > T(0) ? g[i] : T(0);
    return grads;
  };
  return Finish(Tensor<T>(a.shape(), std::move(out)), {a}, backward, "relu");
}

template <typename T>
Tensor<T> Softmax(const Tensor<T>& a) {
  const auto [rows, cols] = RowsCols(a, "softmax");
  const auto A = a.data();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = &A[r * cols];
    T* o = &out[r * cols];
    const T mx = *std::max_element(in, in + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  auto backward = [y = out, rows = rows, cols = cols](std::span<const T> g) {
    Grads<T> grads(1);
    grads[0].resize(g.size());
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        grads[0][i] = y[i] * (g[i] - dot);
      }
    }
    return grads;
  };
  return Finish(Tensor<T>(a.shape(), std::move(out)), {a}, backward, "softmax");
}

template <typename T>
Tensor<T> LogSoftmax(const Tensor<T>& a) {
  const auto [rows, cols] = RowsCols(a, "log_softmax");
  const auto A = a.data();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = &A[r * cols];
    T* o = &out[r * cols];
    const T mx = *std::max_element(in, in + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - mx);
    const T log_total = std::log(total);
    for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - mx - log_total;
  }
  auto backward = [y = out, rows = rows, cols = cols](std::span<const T> g) {
    Grads<T> grads(1);
    grads[0].resize(g.size());
    for (std::size_t r = 0; r < rows; ++r) {
      T gsum = 0;
      for (std::size_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        grads[0][i] = g[i] - std::exp(y[i]) * gsum;
      }
    }
    return grads;
  };
  return Finish(Tensor<T>(a.shape(), std::move(out)), {a}, backward,
                "log_softmax");
}

template <typename T>
Tensor<T> Sum(const Tensor<T>& a) {
  T total = 0;
  for (const T v : a.data()) total += v;
  auto backward = [n = a.size()](std::span<const T> g) {
    return Grads<T>{std::vector<T>(n, g[0])};
  };
  return Finish(Tensor<T>::Scalar(total), {a}, backward, "sum");
}

template <typename T>
Tensor<T> Mean(const Tensor<T>& a) {
  if (a.size() == 0) throw DimensionError("mean of an empty tensor");
  T total = 0;
  for (const T v : a.data()) total += v;
  const T n = static_cast<T>(a.size());
  auto backward = [count = a.size(), n](std::span<const T> g) {
    return Grads<T>{std::vector<T>(count, g[0] / n)};
  };
  return Finish(Tensor<T>::Scalar(total / n), {a}, backward, "mean");
}

template <typename T>
Tensor<T> Reshape(const Tensor<T>& a, Shape shape) {
  if (NumElements(shape) != a.size()) {
    throw DimensionError("cannot reshape " + ShapeToString(a.shape()) +
                         " to " + ShapeToString(shape));
  }
  auto backward = [](std::span<const T> g) {
    return Grads<T>{std::vector<T>(g.begin(), g.end())};
  };
  const auto A = a.data();
  return Finish(Tensor<T>(std::move(shape), std::vector<T>(A.begin(), A.end())),
                {a}, backward, "reshape");
}

template <typename T>
Tensor<T> Pick(const Tensor<T>& a, std::span<const int> labels) {
  RequireRank(a.shape(), 2, "pick");
  const std::size_t n = a.dim(0), c = a.dim(1);
  if (labels.size() != n) {
    throw DimensionError("pick: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  std::vector<std::size_t> index(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DataError(DataFault::kLabelRange,
                      "label " + std::to_string(labels[i]) +
                          " outside [0, " + std::to_string(c) + ")");
    }
    index[i] = i * c + static_cast<std::size_t>(labels[i]);
  }
  const auto A = a.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = A[index[i]];
  auto backward = [index, total = a.size()](std::span<const T> g) {
    Grads<T> grads(1);
    grads[0].assign(total, T(0));
    for (std::size_t i = 0; i < index.size(); ++i) grads[0][index[i]] += g[i];
    return grads;
  };
  return Finish(Tensor<T>({n}, std::move(out)), {a}, backward, "pick");
}

template <typename T>
Tensor<T> CustomGradOp<T>::operator()(std::vector<Tensor<T>> inputs) const {
  ForwardResult<T> result;
  {
    NoGradGuard<T> guard;
    result = forward_(inputs);
  }
  const auto values = result.output.data();
  Tensor<T> out(result.output.shape(),
                std::vector<T>(values.begin(), values.end()));
  auto backward = [saved = std::move(result.saved),
                   fn = backward_](std::span<const T> g) {
    return fn(g, saved);
  };
  return Finish(std::move(out), std::move(inputs), backward, "custom op");
}

#define SQAKD_INSTANTIATE_OPS(T)                                              \
  template Tensor<T> MatMul(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> Conv2d(const Tensor<T>&, const Tensor<T>&,               \
                            const Tensor<T>&, std::size_t, std::size_t);      \
  template Tensor<T> Add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Sub(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Mul(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> Scale(const Tensor<T>&, T);                              \
  template Tensor<T> Relu(const Tensor<T>&);                                  \
  template Tensor<T> Softmax(const Tensor<T>&);                               \
  template Tensor<T> LogSoftmax(const Tensor<T>&);                            \
  template Tensor<T> Sum(const Tensor<T>&);                                   \
  template Tensor<T> Mean(const Tensor<T>&);                                  \
  template Tensor<T> Reshape(const Tensor<T>&, Shape);                        \
  template Tensor<T> Pick(const Tensor<T>&, std::span<const int>);            \
  template class CustomGradOp<T>;

SQAKD_INSTANTIATE_OPS(float)
SQAKD_INSTANTIATE_OPS(double)

#undef SQAKD_INSTANTIATE_OPS

}  // namespace ops
}  // namespace sqakd
