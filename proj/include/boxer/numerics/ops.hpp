// Copyright 2026 The BoxeR-lite Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "boxer/numerics/tensor.hpp"

#ifdef BOXER_USE_BLAS
#include <cblas.h>
#endif

namespace boxer {

namespace testing_hooks {
/// Negative-control switch for the gradient checker: when set, the
/// input-side gradient of every matrix product is scaled by 1.01.
inline bool corrupt_matmul_backward = false;
}  // namespace testing_hooks

namespace detail {

template <class T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs)
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  return false;
}

template <class T>
void record(std::function<void()> fn) {
  Tape<T>::active()->record(std::move(fn));
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

/// Splits a shape into (rows, last extent).
inline std::pair<std::size_t, std::size_t> rows_cols(const Shape& s) {
  require(!s.empty(), "expected at least one axis");
  const std::size_t cols = s.back();
  return {cols == 0 ? 0 : shape_numel(s) / cols, cols};
}

// out[n x m] += a[n x k] * b[k x m]
template <class T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = out + i * m;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

template <class T>
T backward_factor() {
  return testing_hooks::corrupt_matmul_backward ? T(1.01) : T(1);
}

// out[n x k] += alpha * g[n x m] * b[k x m]^T
template <class T>
void gemm_nt(const T* g, const T* b, T* out, std::size_t n, std::size_t k, std::size_t m,
             T alpha = T(1)) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* grow = g + i * m;
    T* orow = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * m;
      T acc = 0;
      for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
      orow[p] += alpha * acc;
    }
  }
}

// out[k x m] += a[n x k]^T * g[n x m]
template <class T>
void gemm_tn(const T* a, const T* g, T* out, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    const T* grow = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* orow = out + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * grow[j];
    }
  }
}

#ifdef BOXER_USE_BLAS
template <>
inline void gemm_nn<float>(const float* a, const float* b, float* out, std::size_t n, std::size_t k,
                           std::size_t m) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(n), int(m), int(k), 1.0f, a, int(k), b,
              int(m), 1.0f, out, int(m));
}
template <>
inline void gemm_nn<double>(const double* a, const double* b, double* out, std::size_t n,
                            std::size_t k, std::size_t m) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(n), int(m), int(k), 1.0, a, int(k), b,
              int(m), 1.0, out, int(m));
}
template <>
inline void gemm_nt<float>(const float* g, const float* b, float* out, std::size_t n, std::size_t k,
                           std::size_t m, float alpha) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(n), int(k), int(m), alpha, g, int(m), b,
              int(m), 1.0f, out, int(k));
}
template <>
inline void gemm_nt<double>(const double* g, const double* b, double* out, std::size_t n,
                            std::size_t k, std::size_t m, double alpha) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(n), int(k), int(m), alpha, g, int(m), b,
              int(m), 1.0, out, int(k));
}
template <>
inline void gemm_tn<float>(const float* a, const float* g, float* out, std::size_t n, std::size_t k,
                           std::size_t m) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(k), int(m), int(n), 1.0f, a, int(k), g,
              int(m), 1.0f, out, int(m));
}
template <>
inline void gemm_tn<double>(const double* a, const double* g, double* out, std::size_t n,
                            std::size_t k, std::size_t m) {
  if (n == 0 || k == 0 || m == 0) return;
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(k), int(m), int(n), 1.0, a, int(k), g,
              int(m), 1.0, out, int(m));
}
#endif

template <class T>
Tensor<T> unary_map(const Tensor<T>& x, auto&& fwd, auto&& dfdx_from_xy) {
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  Tensor<T> y(x.shape(), std::move(out));
  if (recording<T>({&x})) {
    y.set_requires_grad(true);
    record<T>([xi = x.impl(), yi = y.impl(), dfdx_from_xy] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      auto& gx = xi->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += yi->grad[i] * dfdx_from_xy(xi->data[i], yi->data[i]);
    });
  }
  return y;
}

}  // namespace detail

/// Matrix product of two rank-2 tensors.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.dim() == 2 && b.dim() == 2, "matmul expects rank-2 operands");
  detail::require(a.size(1) == b.size(0), "matmul inner extents differ: " +
                                              shape_str(a.shape()) + " * " + shape_str(b.shape()));
  const std::size_t n = a.size(0), k = a.size(1), m = b.size(1);
  Tensor<T> out(Shape{n, m});
  detail::gemm_nn(a.data().data(), b.data().data(), out.mutable_data().data(), n, k, m);
  if (detail::recording<T>({&a, &b})) {
    out.set_requires_grad(true);
    detail::record<T>([ai = a.impl(), bi = b.impl(), oi = out.impl(), n, k, m] {
      if (oi->grad.empty()) return;
      if (ai->requires_grad)
        detail::gemm_nt(oi->grad.data(), bi->data.data(), ai->ensure_grad().data(), n, k, m,
                        detail::backward_factor<T>());
      if (bi->requires_grad)
        detail::gemm_tn(ai->data.data(), oi->grad.data(), bi->ensure_grad().data(), n, k, m);
    });
  }
  return out;
}

/// Batched product: a[B x N x K] * b[B x K x M], or b[B x M x K] when
/// `transpose_b`.
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false) {
  detail::require(a.dim() == 3 && b.dim() == 3, "bmm expects rank-3 operands");
  detail::require(a.size(0) == b.size(0), "bmm batch extents differ");
  const std::size_t batch = a.size(0), n = a.size(1), k = a.size(2);
  const std::size_t m = transpose_b ? b.size(1) : b.size(2);
  detail::require((transpose_b ? b.size(2) : b.size(1)) == k, "bmm inner extents differ");
  Tensor<T> out(Shape{batch, n, m});
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* od = out.mutable_data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    if (transpose_b) {
      // out[n x m] = a[n x k] * b[m x k]^T
      detail::gemm_nt(ad + s * n * k, bd + s * m * k, od + s * n * m, n, m, k);
    } else {
      detail::gemm_nn(ad + s * n * k, bd + s * k * m, od + s * n * m, n, k, m);
    }
  }
  if (detail::recording<T>({&a, &b})) {
    out.set_requires_grad(true);
    detail::record<T>([ai = a.impl(), bi = b.impl(), oi = out.impl(), batch, n, k, m,
                       transpose_b] {
      if (oi->grad.empty()) return;
      const T* g = oi->grad.data();
      for (std::size_t s = 0; s < batch; ++s) {
        const T* gs = g + s * n * m;
        if (ai->requires_grad) {
          T* ga = ai->ensure_grad().data() + s * n * k;
          if (transpose_b) {
            detail::gemm_nn(gs, bi->data.data() + s * m * k, ga, n, m, k);
          } else {
            detail::gemm_nt(gs, bi->data.data() + s * k * m, ga, n, k, m);
          }
        }
        if (bi->requires_grad) {
          T* gb = bi->ensure_grad().data();
          if (transpose_b) {
            // d b[m x k] += g^T[m x n] * a[n x k]
            detail::gemm_tn(gs, ai->data.data() + s * n * k, gb + s * m * k, n, m, k);
          } else {
            detail::gemm_tn(ai->data.data() + s * n * k, gs, gb + s * k * m, n, k, m);
          }
        }
      }
    });
  }
  return out;
}

/// Affine map over the last axis: x[... x K] * weight[K x M] + bias[M].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require(weight.dim() == 2, "linear weight must be rank 2");
  const auto [n, k] = detail::rows_cols(x.shape());
  detail::require(weight.size(0) == k, "linear input width " + std::to_string(k) +
                                           " does not match weight " + shape_str(weight.shape()));
  const std::size_t m = weight.size(1);
  const bool has_bias = bias.defined();
  if (has_bias) detail::require(bias.numel() == m, "linear bias width mismatch");
  Shape out_shape = x.shape();
  out_shape.back() = m;
  Tensor<T> out(out_shape);
  T* od = out.mutable_data().data();
  if (has_bias) {
    const auto bd = bias.data();
    for (std::size_t i = 0; i < n; ++i) std::copy(bd.begin(), bd.end(), od + i * m);
  }
  detail::gemm_nn(x.data().data(), weight.data().data(), od, n, k, m);
  if (detail::recording<T>({&x, &weight, &bias})) {
    out.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), wi = weight.impl(),
                       bi = has_bias ? bias.impl() : detail::ImplPtr<T>{}, oi = out.impl(), n,
                       k, m] {
      if (oi->grad.empty()) return;
      const T* g = oi->grad.data();
      if (xi->requires_grad)
        detail::gemm_nt(g, wi->data.data(), xi->ensure_grad().data(), n, k, m,
                        detail::backward_factor<T>());
      if (wi->requires_grad) detail::gemm_tn(xi->data.data(), g, wi->ensure_grad().data(), n, k, m);
      if (bi && bi->requires_grad) {
        auto& gb = bi->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(),
                  "add shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (detail::recording<T>({&a, &b})) {
    y.set_requires_grad(true);
    detail::record<T>([ai = a.impl(), bi = b.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      for (auto* in : {ai.get(), bi.get()}) {
        if (!in->requires_grad) continue;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "sub shape mismatch");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (detail::recording<T>({&a, &b})) {
    y.set_requires_grad(true);
    detail::record<T>([ai = a.impl(), bi = b.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      if (ai->requires_grad) {
        auto& g = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= yi->grad[i];
      }
    });
  }
  return y;
}

/// Elementwise product.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul shape mismatch");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (detail::recording<T>({&a, &b})) {
    y.set_requires_grad(true);
    detail::record<T>([ai = a.impl(), bi = b.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      if (ai->requires_grad) {
        auto& g = ai->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * ai->data[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary_map(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_map(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_map(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

inline constexpr double kInverseSigmoidEps = 1e-5;

/// log(x / (1 - x)) with x clamped to [eps, 1 - eps]; zero gradient outside.
template <class T>
Tensor<T> inverse_sigmoid(const Tensor<T>& x, T eps = T(kInverseSigmoidEps)) {
  return detail::unary_map(
      x,
      [eps](T v) {
        const T c = std::clamp(v, eps, T(1) - eps);
        return std::log(c / (T(1) - c));
      },
      [eps](T v, T) {
        if (v < eps || v > T(1) - eps) return T(0);
        return T(1) / (v * (T(1) - v));
      });
}

enum class Pointwise { kRelu, kSigmoid, kInverseSigmoid };

template <class T>
Tensor<T> pointwise(const Tensor<T>& x, Pointwise kind) {
  switch (kind) {
    case Pointwise::kRelu: return relu(x);
    case Pointwise::kSigmoid: return sigmoid(x);
    case Pointwise::kInverseSigmoid: return inverse_sigmoid(x);
  }
  throw ContractError("unknown pointwise kind");
}

/// Max-subtracted softmax along `axis`.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.dim()) {
    throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  Tensor<T> y(s, std::move(out));
  if (detail::recording<T>({&x})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), yi = y.impl(), outer, inner, n] {
      if (yi->grad.empty()) return;
      auto& gx = xi->ensure_grad();
      const auto& g = yi->grad;
      const auto& yd = yi->data;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          T dot = 0;
          for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * yd[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += yd[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return y;
}

/// Normalizes each row over the last axis, then applies gain and bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  const auto [rows, d] = detail::rows_cols(x.shape());
  detail::require(gain.numel() == d && bias.numel() == d,
                  "layer_norm gain/bias must match last extent " + std::to_string(d));
  std::vector<T> out(x.numel()), xhat(x.numel()), rstd(rows);
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mean) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  Tensor<T> y(x.shape(), std::move(out));
  if (detail::recording<T>({&x, &gain, &bias})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), gi = gain.impl(), bi = bias.impl(), yi = y.impl(),
                       xhat = std::move(xhat), rstd = std::move(rstd), rows, d] {
      if (yi->grad.empty()) return;
      const auto& g = yi->grad;
      if (gi->requires_grad || bi->requires_grad) {
        auto& gg = gi->ensure_grad();
        auto& gb = bi->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) {
            gg[j] += g[r * d + j] * xhat[r * d + j];
            gb[j] += g[r * d + j];
          }
      }
      if (!xi->requires_grad) return;
      auto& gx = xi->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_g = 0, mean_gx = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const T dh = g[r * d + j] * gi->data[j];
          mean_g += dh;
          mean_gx += dh * xhat[r * d + j];
        }
        mean_g /= static_cast<T>(d);
        mean_gx /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const T dh = g[r * d + j] * gi->data[j];
          gx[r * d + j] += rstd[r] * (dh - mean_g - xhat[r * d + j] * mean_gx);
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  Tensor<T> y = Tensor<T>::scalar(total);
  if (detail::recording<T>({&x})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      auto& g = xi->ensure_grad();
      for (auto& v : g) v += yi->grad[0];
    });
  }
  return y;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Same data under a new shape with equal element count.
template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::require(shape_numel(shape) == x.numel(),
                  "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor<T> y(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (detail::recording<T>({&x})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      auto& g = xi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
    });
  }
  return y;
}

namespace detail {

// For each output element in order, the matching input offset.
inline void permute_offsets(const Shape& in_shape, const std::vector<std::size_t>& perm,
                            auto&& visit) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    stride[i] = in_strides[perm[i]];
  }
  const std::size_t total = shape_numel(in_shape);
  if (total == 0) return;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  const std::size_t last = rank - 1;
  for (std::size_t o = 0; o < total;) {
    // Innermost axis as a tight loop.
    const std::size_t n = out_shape[last];
    const std::size_t st = stride[last];
    for (std::size_t j = 0; j < n; ++j) visit(o + j, offset + j * st);
    o += n;
    for (std::size_t ax = last; ax-- > 0;) {
      ++idx[ax];
      offset += stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      offset -= stride[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace detail

/// Axis permutation: output axis i is input axis perm[i].
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  detail::require(perm.size() == x.dim(), "permute rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    detail::require(p < perm.size() && !seen[p], "permute expects a permutation");
    seen[p] = true;
  }
  Shape out_shape(x.dim());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.size(perm[i]);
  std::vector<T> out(x.numel());
  const T* xd = x.data().data();
  detail::permute_offsets(x.shape(), perm, [&](std::size_t o, std::size_t i) { out[o] = xd[i]; });
  Tensor<T> y(out_shape, std::move(out));
  if (detail::recording<T>({&x})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), yi = y.impl(), perm] {
      if (yi->grad.empty()) return;
      auto& g = xi->ensure_grad();
      const T* gy = yi->grad.data();
      detail::permute_offsets(xi->shape, perm,
                              [&](std::size_t o, std::size_t i) { g[i] += gy[o]; });
    });
  }
  return y;
}

/// Rows (slices along axis 0) selected by index, in index order.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& index) {
  detail::require(x.dim() >= 1, "gather_rows on scalar");
  const std::size_t row = x.size(0) == 0 ? 0 : x.numel() / x.size(0);
  Shape out_shape = x.shape();
  out_shape[0] = index.size();
  std::vector<T> out(index.size() * row);
  for (std::size_t r = 0; r < index.size(); ++r) {
    detail::require(index[r] < x.size(0), "gather_rows index out of range");
    std::copy_n(x.data().begin() + index[r] * row, row, out.begin() + r * row);
  }
  Tensor<T> y(out_shape, std::move(out));
  if (detail::recording<T>({&x})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), yi = y.impl(), index, row] {
      if (yi->grad.empty()) return;
      auto& g = xi->ensure_grad();
      for (std::size_t r = 0; r < index.size(); ++r)
        for (std::size_t j = 0; j < row; ++j) g[index[r] * row + j] += yi->grad[r * row + j];
    });
  }
  return y;
}

/// Concatenation along axis 0.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows of nothing");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<T> out;
  bool rec = false;
  for (const auto& p : parts) {
    detail::require(Shape(p.shape().begin() + 1, p.shape().end()) == tail,
                    "concat_rows trailing shapes differ");
    rows += p.size(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
    rec = rec || detail::recording<T>({&p});
  }
  Shape out_shape{rows};
  out_shape.insert(out_shape.end(), tail.begin(), tail.end());
  Tensor<T> y(out_shape, std::move(out));
  if (rec) {
    y.set_requires_grad(true);
    std::vector<detail::ImplPtr<T>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    detail::record<T>([impls = std::move(impls), yi = y.impl()] {
      if (yi->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& in : impls) {
        if (in->requires_grad) {
          auto& g = in->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[offset + i];
        }
        offset += in->data.size();
      }
    });
  }
  return y;
}

/// Contiguous row range [begin, end) along axis 0.
template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require(begin <= end && end <= x.size(0), "slice_rows range out of bounds");
  std::vector<std::size_t> index(end - begin);
  std::iota(index.begin(), index.end(), begin);
  return gather_rows(x, index);
}

/// x[N x D] -> [N x copies x D], each row repeated.
template <class T>
Tensor<T> repeat_rows(const Tensor<T>& x, std::size_t copies) {
  const auto [n, d] = detail::rows_cols(x.shape());
  std::vector<T> out(n * copies * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < copies; ++c)
      std::copy_n(x.data().begin() + i * d, d, out.begin() + (i * copies + c) * d);
  Tensor<T> y(Shape{n, copies, d}, std::move(out));
  if (detail::recording<T>({&x})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), yi = y.impl(), n = n, d = d, copies] {
      if (yi->grad.empty()) return;
      auto& g = xi->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < copies; ++c)
          for (std::size_t j = 0; j < d; ++j) g[i * d + j] += yi->grad[(i * copies + c) * d + j];
    });
  }
  return y;
}

/// 2x2 mean pooling with stride 2 over an [H x W x C] map.
template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  detail::require(x.dim() == 3 && x.size(0) % 2 == 0 && x.size(1) % 2 == 0,
                  "avg_pool2 expects [H x W x C] with even H and W");
  const std::size_t h = x.size(0), w = x.size(1), c = x.size(2);
  const std::size_t ho = h / 2, wo = w / 2;
  std::vector<T> out(ho * wo * c, T(0));
  const auto xd = x.data();
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j)
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx)
          for (std::size_t k = 0; k < c; ++k)
            out[(i * wo + j) * c + k] +=
                T(0.25) * xd[((2 * i + dy) * w + 2 * j + dx) * c + k];
  Tensor<T> y(Shape{ho, wo, c}, std::move(out));
  if (detail::recording<T>({&x})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), yi = y.impl(), w, c, ho, wo] {
      if (yi->grad.empty()) return;
      auto& g = xi->ensure_grad();
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j)
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              for (std::size_t k = 0; k < c; ++k)
                g[((2 * i + dy) * w + 2 * j + dx) * c + k] +=
                    T(0.25) * yi->grad[(i * wo + j) * c + k];
    });
  }
  return y;
}

namespace detail {

// Bilinear tap weights for one normalized point on an H x W grid with pixel
// centers at ((i + 0.5) / W, (j + 0.5) / H).
template <class T>
struct BilinearTaps {
  long x0, y0;
  T fx, fy;

  BilinearTaps(T x, T y, std::size_t h, std::size_t w) {
    const T px = x * static_cast<T>(w) - T(0.5);
    const T py = y * static_cast<T>(h) - T(0.5);
    const T fx0 = std::floor(px), fy0 = std::floor(py);
    x0 = static_cast<long>(fx0);
    y0 = static_cast<long>(fy0);
    fx = px - fx0;
    fy = py - fy0;
  }
};

// Samples `channels` channels starting at `channel_offset` from a row-major
// [h x w x stride] map. Out-of-range taps read as zero.
template <class T>
void bilinear_forward(const T* map, std::size_t h, std::size_t w, std::size_t stride,
                      std::size_t channel_offset, std::size_t channels, T x, T y, T* out) {
  if (!std::isfinite(static_cast<double>(x)) || !std::isfinite(static_cast<double>(y))) {
    throw NumericalError("grid sample point is not finite");
  }
  const BilinearTaps<T> t(x, y, h, w);
  const T wts[4] = {(1 - t.fx) * (1 - t.fy), t.fx * (1 - t.fy), (1 - t.fx) * t.fy, t.fx * t.fy};
  if (t.x0 >= 0 && t.y0 >= 0 && t.x0 + 1 < static_cast<long>(w) && t.y0 + 1 < static_cast<long>(h)) {
    const T* s00 = map + (static_cast<std::size_t>(t.y0) * w + static_cast<std::size_t>(t.x0)) * stride +
                   channel_offset;
    const T* s01 = s00 + stride;
    const T* s10 = s00 + w * stride;
    const T* s11 = s10 + stride;
    for (std::size_t c = 0; c < channels; ++c)
      out[c] += wts[0] * s00[c] + wts[1] * s01[c] + wts[2] * s10[c] + wts[3] * s11[c];
    return;
  }
  for (int corner = 0; corner < 4; ++corner) {
    const long cx = t.x0 + (corner & 1);
    const long cy = t.y0 + (corner >> 1);
    if (cx < 0 || cy < 0 || cx >= static_cast<long>(w) || cy >= static_cast<long>(h)) continue;
    const T* src = map + (static_cast<std::size_t>(cy) * w + static_cast<std::size_t>(cx)) * stride +
                   channel_offset;
    const T wt = wts[corner];
    for (std::size_t c = 0; c < channels; ++c) out[c] += wt * src[c];
  }
}

// Accumulates map and coordinate gradients for one sample.
template <class T>
void bilinear_backward(const T* map, T* grad_map, std::size_t h, std::size_t w,
                       std::size_t stride, std::size_t channel_offset, std::size_t channels, T x,
                       T y, const T* grad_out, T* grad_xy) {
  const BilinearTaps<T> t(x, y, h, w);
  const T wts[4] = {(1 - t.fx) * (1 - t.fy), t.fx * (1 - t.fy), (1 - t.fx) * t.fy, t.fx * t.fy};
  // d weight / d fx and d weight / d fy per corner.
  const T dwx[4] = {-(1 - t.fy), (1 - t.fy), -t.fy, t.fy};
  const T dwy[4] = {-(1 - t.fx), -t.fx, (1 - t.fx), t.fx};
  T gx = 0, gy = 0;
  if (t.x0 >= 0 && t.y0 >= 0 && t.x0 + 1 < static_cast<long>(w) && t.y0 + 1 < static_cast<long>(h)) {
    const std::size_t b00 =
        (static_cast<std::size_t>(t.y0) * w + static_cast<std::size_t>(t.x0)) * stride + channel_offset;
    const std::size_t base[4] = {b00, b00 + stride, b00 + w * stride, b00 + w * stride + stride};
    T dot[4] = {0, 0, 0, 0};
    for (std::size_t c = 0; c < channels; ++c) {
      const T g = grad_out[c];
      dot[0] += g * map[base[0] + c];
      dot[1] += g * map[base[1] + c];
      dot[2] += g * map[base[2] + c];
      dot[3] += g * map[base[3] + c];
    }
    if (grad_map != nullptr) {
      for (std::size_t c = 0; c < channels; ++c) {
        const T g = grad_out[c];
        grad_map[base[0] + c] += wts[0] * g;
        grad_map[base[1] + c] += wts[1] * g;
        grad_map[base[2] + c] += wts[2] * g;
        grad_map[base[3] + c] += wts[3] * g;
      }
    }
    for (int corner = 0; corner < 4; ++corner) {
      gx += dwx[corner] * dot[corner];
      gy += dwy[corner] * dot[corner];
    }
  } else {
  for (int corner = 0; corner < 4; ++corner) {
    const long cx = t.x0 + (corner & 1);
    const long cy = t.y0 + (corner >> 1);
    if (cx < 0 || cy < 0 || cx >= static_cast<long>(w) || cy >= static_cast<long>(h)) continue;
    const std::size_t base =
        (static_cast<std::size_t>(cy) * w + static_cast<std::size_t>(cx)) * stride + channel_offset;
    T dot = 0;
    for (std::size_t c = 0; c < channels; ++c) dot += grad_out[c] * map[base + c];
    gx += dwx[corner] * dot;
    gy += dwy[corner] * dot;
    if (grad_map != nullptr) {
      const T wt = wts[corner];
      for (std::size_t c = 0; c < channels; ++c) grad_map[base + c] += wt * grad_out[c];
    }
  }
  }
  if (grad_xy != nullptr) {
    grad_xy[0] += gx * static_cast<T>(w);
    grad_xy[1] += gy * static_cast<T>(h);
  }
}

}  // namespace detail

/// Bilinear sampling of map[H x W x C] at normalized points[P x 2] (x, y),
/// zero padding outside the map. Differentiable in both map and points.
template <class T>
Tensor<T> grid_sample(const Tensor<T>& map, const Tensor<T>& points) {
  detail::require(map.dim() == 3, "grid_sample map must be [H x W x C]");
  detail::require(points.dim() == 2 && points.size(1) == 2, "grid_sample points must be [P x 2]");
  const std::size_t h = map.size(0), w = map.size(1), c = map.size(2), p = points.size(0);
  Tensor<T> out(Shape{p, c});
  T* od = out.mutable_data().data();
  const T* md = map.data().data();
  const T* pd = points.data().data();
  for (std::size_t i = 0; i < p; ++i)
    detail::bilinear_forward(md, h, w, c, 0, c, pd[2 * i], pd[2 * i + 1], od + i * c);
  if (detail::recording<T>({&map, &points})) {
    out.set_requires_grad(true);
    detail::record<T>([mi = map.impl(), pi = points.impl(), oi = out.impl(), h, w, c, p] {
      if (oi->grad.empty()) return;
      T* gm = mi->requires_grad ? mi->ensure_grad().data() : nullptr;
      T* gp = pi->requires_grad ? pi->ensure_grad().data() : nullptr;
      for (std::size_t i = 0; i < p; ++i)
        detail::bilinear_backward(mi->data.data(), gm, h, w, c, 0, c, pi->data[2 * i],
                                  pi->data[2 * i + 1], oi->grad.data() + i * c,
                                  gp ? gp + 2 * i : nullptr);
    });
  }
  return out;
}

/// Multi-level, head-grouped sampling.
///
/// `levels[j]` is [H_j x W_j x C]; `points` is [N x G x t x P x 2]. Group g
/// reads channels [g*C/G, (g+1)*C/G) of level j for its points at level j.
/// Output is [N x G x t x P x C/G].
template <class T>
Tensor<T> sample_pyramid(const std::vector<Tensor<T>>& levels, const Tensor<T>& points) {
  detail::require(points.dim() == 5 && points.size(4) == 2,
                  "sample_pyramid points must be [N x G x t x P x 2]");
  const std::size_t n = points.size(0), groups = points.size(1), t = points.size(2),
                    p = points.size(3);
  detail::require(levels.size() == t, "sample_pyramid level count " +
                                          std::to_string(levels.size()) + " != " +
                                          std::to_string(t));
  const std::size_t c = levels[0].size(2);
  detail::require(c % groups == 0, "channel count not divisible by group count");
  for (const auto& lv : levels)
    detail::require(lv.dim() == 3 && lv.size(2) == c, "pyramid levels must share channel count");
  const std::size_t ch = c / groups;
  Tensor<T> out(Shape{n, groups, t, p, ch});
  T* od = out.mutable_data().data();
  const T* pd = points.data().data();
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < t; ++j) {
        const auto& lv = levels[j];
        const T* md = lv.data().data();
        for (std::size_t k = 0; k < p; ++k) {
          const std::size_t idx = ((q * groups + g) * t + j) * p + k;
          detail::bilinear_forward(md, lv.size(0), lv.size(1), c, g * ch, ch, pd[2 * idx],
                                   pd[2 * idx + 1], od + idx * ch);
        }
      }
  bool rec = detail::recording<T>({&points});
  for (const auto& lv : levels) rec = rec || detail::recording<T>({&lv});
  if (rec) {
    out.set_requires_grad(true);
    std::vector<detail::ImplPtr<T>> lis;
    for (const auto& lv : levels) lis.push_back(lv.impl());
    detail::record<T>([lis = std::move(lis), pi = points.impl(), oi = out.impl(), n, groups, t,
                       p, c, ch] {
      if (oi->grad.empty()) return;
      T* gp = pi->requires_grad ? pi->ensure_grad().data() : nullptr;
      for (std::size_t j = 0; j < t; ++j) {
        auto& lv = *lis[j];
        T* gm = lv.requires_grad ? lv.ensure_grad().data() : nullptr;
        const std::size_t h = lv.shape[0], w = lv.shape[1];
        for (std::size_t q = 0; q < n; ++q)
          for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t k = 0; k < p; ++k) {
              const std::size_t idx = ((q * groups + g) * t + j) * p + k;
              detail::bilinear_backward(lv.data.data(), gm, h, w, c, g * ch, ch,
                                        pi->data[2 * idx], pi->data[2 * idx + 1],
                                        oi->grad.data() + idx * ch, gp ? gp + 2 * idx : nullptr);
            }
      }
    });
  }
  return out;
}

/// Attention-weighted multi-level sampling, fused:
/// out[n, g, :] = sum over (j, k) of weights[n, g, j*P + k] times the
/// bilinear sample of level j, channel group g, at points[n, g, j, k].
/// Shapes as in sample_pyramid; `weights` is [N x G x t*P]; output is
/// [N x G x C/G]. Differentiable in levels, points and weights.
template <class T>
Tensor<T> attend_pyramid(const std::vector<Tensor<T>>& levels, const Tensor<T>& points,
                         const Tensor<T>& weights) {
  detail::require(points.dim() == 5 && points.size(4) == 2,
                  "attend_pyramid points must be [N x G x t x P x 2]");
  const std::size_t n = points.size(0), groups = points.size(1), t = points.size(2),
                    p = points.size(3);
  detail::require(levels.size() == t, "attend_pyramid level count mismatch");
  detail::require(weights.shape() == Shape({n, groups, t * p}),
                  "attend_pyramid weights must be [N x G x t*P]");
  const std::size_t c = levels[0].size(2);
  detail::require(c % groups == 0, "channel count not divisible by group count");
  for (const auto& lv : levels)
    detail::require(lv.dim() == 3 && lv.size(2) == c, "pyramid levels must share channel count");
  const std::size_t ch = c / groups;
  Tensor<T> out(Shape{n, groups, ch});
  T* od = out.mutable_data().data();
  const T* pd = points.data().data();
  const T* wd = weights.data().data();
  std::vector<T> tmp(ch);
  for (std::size_t q = 0; q < n * groups; ++q) {
    const std::size_t g = q % groups;
    T* acc = od + q * ch;
    for (std::size_t j = 0; j < t; ++j) {
      const auto& lv = levels[j];
      const T* md = lv.data().data();
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t idx = (q * t + j) * p + k;
        std::fill(tmp.begin(), tmp.end(), T(0));
        detail::bilinear_forward(md, lv.size(0), lv.size(1), c, g * ch, ch, pd[2 * idx],
                                 pd[2 * idx + 1], tmp.data());
        const T wt = wd[q * t * p + j * p + k];
        for (std::size_t e = 0; e < ch; ++e) acc[e] += wt * tmp[e];
      }
    }
  }
  bool rec = detail::recording<T>({&points, &weights});
  for (const auto& lv : levels) rec = rec || detail::recording<T>({&lv});
  if (rec) {
    out.set_requires_grad(true);
    std::vector<detail::ImplPtr<T>> lis;
    for (const auto& lv : levels) lis.push_back(lv.impl());
    detail::record<T>([lis = std::move(lis), pi = points.impl(), wi = weights.impl(),
                       oi = out.impl(), n, groups, t, p, c, ch] {
      if (oi->grad.empty()) return;
      T* gp = pi->requires_grad ? pi->ensure_grad().data() : nullptr;
      T* gw = wi->requires_grad ? wi->ensure_grad().data() : nullptr;
      std::vector<T> tmp(ch), scaled(ch);
      for (std::size_t q = 0; q < n * groups; ++q) {
        const std::size_t g = q % groups;
        const T* go = oi->grad.data() + q * ch;
        for (std::size_t j = 0; j < t; ++j) {
          auto& lv = *lis[j];
          T* gm = lv.requires_grad ? lv.ensure_grad().data() : nullptr;
          const std::size_t h = lv.shape[0], w = lv.shape[1];
          for (std::size_t k = 0; k < p; ++k) {
            const std::size_t idx = (q * t + j) * p + k;
            const std::size_t widx = q * t * p + j * p + k;
            const T x = pi->data[2 * idx], y = pi->data[2 * idx + 1];
            if (gw) {
              std::fill(tmp.begin(), tmp.end(), T(0));
              detail::bilinear_forward(lv.data.data(), h, w, c, g * ch, ch, x, y, tmp.data());
              T dot = 0;
              for (std::size_t e = 0; e < ch; ++e) dot += go[e] * tmp[e];
              gw[widx] += dot;
            }
            if (gm || gp) {
              const T wt = wi->data[widx];
              for (std::size_t e = 0; e < ch; ++e) scaled[e] = wt * go[e];
              detail::bilinear_backward(lv.data.data(), gm, h, w, c, g * ch, ch, x, y,
                                        scaled.data(), gp ? gp + 2 * idx : nullptr);
            }
          }
        }
      }
    });
  }
  return out;
}

/// Predicted coordinate sigma(delta + logit(prior)) with the prior clamped to
/// [eps, 1 - eps]. Evaluated so that delta == 0 returns the clamped prior
/// bit-for-bit. `prior` is a constant.
template <class T>
Tensor<T> sigmoid_offset(const Tensor<T>& delta, const Tensor<T>& prior,
                         T eps = T(kInverseSigmoidEps)) {
  detail::require(delta.shape() == prior.shape(), "sigmoid_offset shape mismatch");
  std::vector<T> out(delta.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = std::clamp(prior[i], eps, T(1) - eps);
    const T d = delta[i];
    if (d <= T(0)) {
      out[i] = v * std::exp(d) / (T(1) + v * std::expm1(d));
    } else {
      out[i] = v / (v + (T(1) - v) * std::exp(-d));
    }
  }
  Tensor<T> y(delta.shape(), std::move(out));
  if (detail::recording<T>({&delta})) {
    y.set_requires_grad(true);
    detail::record<T>([di = delta.impl(), yi = y.impl()] {
      if (yi->grad.empty()) return;
      auto& g = di->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += yi->grad[i] * yi->data[i] * (T(1) - yi->data[i]);
    });
  }
  return y;
}

}  // namespace boxer
