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
#include <array>
#include <cmath>
#include <vector>

#include "boxer/geometry/boxes.hpp"
#include "boxer/numerics/ops.hpp"

// Loss kernels with analytic gradients. Each returns a scalar tensor and
// divides its sum by `normalizer` (the ground-truth count in training).

namespace boxer {

namespace detail {

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

template <class T>
Tensor<T> scalar_result(T value, const Tensor<T>& input, std::vector<T> dvalue_dinput) {
  Tensor<T> y = Tensor<T>::scalar(value);
  if (recording<T>({&input})) {
    y.set_requires_grad(true);
    record<T>([xi = input.impl(), yi = y.impl(), d = std::move(dvalue_dinput)] {
      if (yi->grad.empty()) return;
      auto& g = xi->ensure_grad();
      const T gy = yi->grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * d[i];
    });
  }
  return y;
}

}  // namespace detail

/// Sigmoid focal loss of one logit against a binary target, and its
/// derivative with respect to the logit.
struct FocalValue {
  double loss, grad;
};

inline FocalValue focal_term(double x, bool positive, double alpha, double gamma) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  const double pt = positive ? p : 1.0 - p;
  const double at = positive ? alpha : 1.0 - alpha;
  const double ce = positive ? detail::softplus(-x) : detail::softplus(x);
  const double s = positive ? 1.0 : -1.0;
  const double mod = std::pow(1.0 - pt, gamma);
  return {at * mod * ce, -at * s * mod * (gamma * pt * ce + (1.0 - pt))};
}

/// Focal loss over every (row, class) logit; `labels[r]` is the positive
/// class of row r, or -1 for background.
template <class T>
Tensor<T> sigmoid_focal_loss(const Tensor<T>& logits, const std::vector<int>& labels, double alpha,
                             double gamma, double normalizer) {
  const auto [rows, classes] = detail::rows_cols(logits.shape());
  detail::require(labels.size() == rows, "focal loss needs one label per row");
  double total = 0;
  std::vector<T> d(logits.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < classes; ++c) {
      const auto f = focal_term(logits[r * classes + c], labels[r] == static_cast<int>(c), alpha, gamma);
      total += f.loss;
      d[r * classes + c] = static_cast<T>(f.grad / normalizer);
    }
  return detail::scalar_result(static_cast<T>(total / normalizer), logits, std::move(d));
}

/// Sum of |pred - target| over the listed columns.
template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target, const std::vector<std::size_t>& columns,
                  double normalizer) {
  detail::require(pred.shape() == target.shape() && pred.dim() == 2, "l1 loss shape mismatch");
  const std::size_t m = pred.size(0), k = pred.size(1);
  double total = 0;
  std::vector<T> d(pred.numel(), T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c : columns) {
      const double diff = static_cast<double>(pred[i * k + c]) - static_cast<double>(target[i * k + c]);
      total += std::abs(diff);
      d[i * k + c] = static_cast<T>((diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0) / normalizer);
    }
  return detail::scalar_result(static_cast<T>(total / normalizer), pred, std::move(d));
}

/// Wrapped distance on the unit circle of normalized angles, column `col`.
template <class T>
Tensor<T> angle_l1_loss(const Tensor<T>& pred, const Tensor<T>& target, std::size_t col,
                        double normalizer) {
  detail::require(pred.shape() == target.shape() && pred.dim() == 2, "angle loss shape mismatch");
  const std::size_t m = pred.size(0), k = pred.size(1);
  double total = 0;
  std::vector<T> d(pred.numel(), T(0));
  for (std::size_t i = 0; i < m; ++i) {
    double diff = static_cast<double>(pred[i * k + col]) - static_cast<double>(target[i * k + col]);
    diff -= std::floor(diff + 0.5);  // (-1/2, 1/2]
    total += std::abs(diff);
    d[i * k + col] = static_cast<T>((diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0) / normalizer);
  }
  return detail::scalar_result(static_cast<T>(total / normalizer), pred, std::move(d));
}

/// GIoU of (cx, cy, w, h) boxes and its gradient with respect to the first.
struct GiouValue {
  double giou;
  std::array<double, 4> grad;
};

inline GiouValue giou_with_grad(const std::array<double, 4>& p, const std::array<double, 4>& t) {
  const double x0 = p[0] - p[2] / 2, x1 = p[0] + p[2] / 2, y0 = p[1] - p[3] / 2, y1 = p[1] + p[3] / 2;
  const double X0 = t[0] - t[2] / 2, X1 = t[0] + t[2] / 2, Y0 = t[1] - t[3] / 2, Y1 = t[1] + t[3] / 2;
  const double iw_raw = std::min(x1, X1) - std::max(x0, X0);
  const double ih_raw = std::min(y1, Y1) - std::max(y0, Y0);
  const double iw = std::max(iw_raw, 0.0), ih = std::max(ih_raw, 0.0);
  const double inter = iw * ih;
  const double a = p[2] * p[3], b = t[2] * t[3];
  const double uni = a + b - inter;
  const double cw = std::max(x1, X1) - std::min(x0, X0), ch = std::max(y1, Y1) - std::min(y0, Y0);
  const double hull = cw * ch;
  GiouValue out{0.0, {0, 0, 0, 0}};
  if (uni <= 0) return out;
  const double iou = inter / uni;
  if (hull <= 0) {
    out.giou = iou;
    return out;
  }
  out.giou = iou - (hull - uni) / hull;
  const double d_inter = (uni + inter) / (uni * uni) - 1.0 / hull;
  const double d_area = -inter / (uni * uni) + 1.0 / hull;
  const double d_hull = -uni / (hull * hull);
  // Partials with respect to the corners x0, x1, y0, y1 and the area.
  double gx0 = 0, gx1 = 0, gy0 = 0, gy1 = 0;
  if (iw_raw > 0 && ih_raw > 0) {
    const double d_iw = d_inter * ih, d_ih = d_inter * iw;
    if (x1 < X1) gx1 += d_iw;
    if (x0 > X0) gx0 -= d_iw;
    if (y1 < Y1) gy1 += d_ih;
    if (y0 > Y0) gy0 -= d_ih;
  }
  const double d_cw = d_hull * ch, d_ch = d_hull * cw;
  if (x1 >= X1) gx1 += d_cw;
  if (x0 <= X0) gx0 -= d_cw;
  if (y1 >= Y1) gy1 += d_ch;
  if (y0 <= Y0) gy0 -= d_ch;
  out.grad[0] = gx0 + gx1;
  out.grad[1] = gy0 + gy1;
  out.grad[2] = 0.5 * (gx1 - gx0) + d_area * p[3];
  out.grad[3] = 0.5 * (gy1 - gy0) + d_area * p[2];
  return out;
}

/// Sum of (1 - GIoU) over rows, boxes read from `columns` = {cx, cy, w, h}.
template <class T>
Tensor<T> giou_loss(const Tensor<T>& pred, const Tensor<T>& target, const std::array<std::size_t, 4>& columns,
                    double normalizer) {
  detail::require(pred.shape() == target.shape() && pred.dim() == 2, "giou loss shape mismatch");
  const std::size_t m = pred.size(0), k = pred.size(1);
  double total = 0;
  std::vector<T> d(pred.numel(), T(0));
  for (std::size_t i = 0; i < m; ++i) {
    std::array<double, 4> p, t;
    for (int c = 0; c < 4; ++c) {
      p[c] = pred[i * k + columns[c]];
      t[c] = target[i * k + columns[c]];
    }
    const auto g = giou_with_grad(p, t);
    total += 1.0 - g.giou;
    for (int c = 0; c < 4; ++c) d[i * k + columns[c]] = static_cast<T>(-g.grad[c] / normalizer);
  }
  return detail::scalar_result(static_cast<T>(total / normalizer), pred, std::move(d));
}

/// x[R x ... x C] -> [R x ...], keeping channel channels[r] of row r.
template <class T>
Tensor<T> select_channels(const Tensor<T>& x, const std::vector<std::size_t>& channels) {
  detail::require(x.dim() >= 2 && channels.size() == x.size(0), "select_channels needs one channel per row");
  const std::size_t r = x.size(0), c = x.shape().back();
  const std::size_t inner = x.numel() / (r * c);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<T> out(r * inner);
  for (std::size_t i = 0; i < r; ++i) {
    detail::require(channels[i] < c, "select_channels channel out of range");
    for (std::size_t j = 0; j < inner; ++j) out[i * inner + j] = x[(i * inner + j) * c + channels[i]];
  }
  Tensor<T> y(out_shape, std::move(out));
  if (detail::recording<T>({&x})) {
    y.set_requires_grad(true);
    detail::record<T>([xi = x.impl(), yi = y.impl(), channels, r, c, inner] {
      if (yi->grad.empty()) return;
      auto& g = xi->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < inner; ++j) g[(i * inner + j) * c + channels[i]] += yi->grad[i * inner + j];
    });
  }
  return y;
}

/// Per-pixel binary cross-entropy on logits [R x ...], averaged over each
/// mask's pixels and summed over masks.
template <class T>
Tensor<T> mask_bce_loss(const Tensor<T>& logits, const Tensor<T>& targets, double normalizer) {
  detail::require(logits.shape() == targets.shape(), "mask bce shape mismatch");
  const std::size_t r = logits.size(0), s = r == 0 ? 0 : logits.numel() / r;
  double total = 0;
  std::vector<T> d(logits.numel());
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double x = logits[i], t = targets[i];
    total += (1 - t) * x + detail::softplus(-x);
    const double p = 1.0 / (1.0 + std::exp(-x));
    d[i] = static_cast<T>((p - t) / (static_cast<double>(s) * normalizer));
  }
  return detail::scalar_result(static_cast<T>(total / (static_cast<double>(s) * normalizer)), logits,
                               std::move(d));
}

/// 1 - 2|P n T| / (|P| + |T|) on probabilities; 0 when both are empty.
inline double dice_from_probs(const std::vector<double>& p, const std::vector<double>& t) {
  double inter = 0, denom = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * t[i];
    denom += p[i] + t[i];
  }
  return denom > 0 ? 1.0 - 2.0 * inter / denom : 0.0;
}

/// Dice loss of sigmoid(logits) per mask, summed over masks.
template <class T>
Tensor<T> mask_dice_loss(const Tensor<T>& logits, const Tensor<T>& targets, double normalizer) {
  detail::require(logits.shape() == targets.shape(), "mask dice shape mismatch");
  const std::size_t r = logits.size(0), s = r == 0 ? 0 : logits.numel() / r;
  double total = 0;
  std::vector<T> d(logits.numel(), T(0));
  for (std::size_t i = 0; i < r; ++i) {
    double inter = 0, denom = 0;
    std::vector<double> p(s);
    for (std::size_t j = 0; j < s; ++j) {
      p[j] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i * s + j])));
      inter += p[j] * targets[i * s + j];
      denom += p[j] + targets[i * s + j];
    }
    if (denom <= 0) continue;
    total += 1.0 - 2.0 * inter / denom;
    for (std::size_t j = 0; j < s; ++j) {
      const double t = targets[i * s + j];
      const double dp = -(2.0 * t * denom - 2.0 * inter) / (denom * denom);
      d[i * s + j] = static_cast<T>(dp * p[j] * (1.0 - p[j]) / normalizer);
    }
  }
  return detail::scalar_result(static_cast<T>(total / normalizer), logits, std::move(d));
}

}  // namespace boxer
