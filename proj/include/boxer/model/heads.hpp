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

#include <cmath>
#include <string>
#include <vector>

#include "boxer/model/config.hpp"
#include "boxer/numerics/nn.hpp"
#include "boxer/numerics/ops.hpp"

namespace boxer {

namespace detail {

template <class T>
T wrap_turn(T v) {
  if (v >= T(1)) return v - T(1);
  if (v < T(0)) return v + T(1);
  return v;
}

}  // namespace detail

/// Boxes from head offsets `delta` [R x k] relative to constant `windows`
/// [R x 5] (x, y, wx, wy, theta).
///
/// k = 4: every coordinate is sigma(delta + logit(window)).
/// k = 7: (x, y, z, wx, wy, wz, theta). Planar fields follow the window;
/// z and wz are plain sigmoids; theta = wrap(theta_w + sigma(delta) - 1/2),
/// so a zero offset returns the window angle exactly and any angle is
/// reachable.
template <class T>
Tensor<T> decode_boxes(const Tensor<T>& delta, const Tensor<T>& windows) {
  detail::require(delta.dim() == 2 && (delta.size(1) == 4 || delta.size(1) == 7),
                  "decode_boxes expects delta [R x 4|7]");
  const std::size_t r = delta.size(0), k = delta.size(1);
  detail::require(windows.shape() == Shape({r, 5}), "decode_boxes windows must be [R x 5]");
  static constexpr int kPrior2d[4] = {0, 1, 2, 3};
  static constexpr int kPrior3d[7] = {0, 1, -1, 2, 3, -1, -2};  // -1 plain, -2 angle
  const int* prior = k == 4 ? kPrior2d : kPrior3d;
  std::vector<T> out(r * k);
  std::vector<T> slope(r * k);  // s(1 - s) of the underlying sigmoid
  const T eps = T(kInverseSigmoidEps);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const T dv = delta[i * k + j];
      T s;
      if (prior[j] >= 0) {
        const T v = std::clamp(windows[i * 5 + prior[j]], eps, T(1) - eps);
        s = dv <= T(0) ? v * std::exp(dv) / (T(1) + v * std::expm1(dv))
                       : v / (v + (T(1) - v) * std::exp(-dv));
        out[i * k + j] = s;
      } else {
        s = T(1) / (T(1) + std::exp(-dv));
        out[i * k + j] = prior[j] == -1 ? s : detail::wrap_turn(windows[i * 5 + 4] + (s - T(0.5)));
      }
      slope[i * k + j] = s * (T(1) - s);
    }
  }
  Tensor<T> y(Shape{r, k}, std::move(out));
  if (detail::recording<T>({&delta})) {
    y.set_requires_grad(true);
    detail::record<T>([di = delta.impl(), yi = y.impl(), slope = std::move(slope)] {
      if (yi->grad.empty()) return;
      auto& g = di->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * slope[i];
    });
  }
  return y;
}

/// Shared prediction head: a linear classifier and a 3-layer offset
/// perceptron whose last layer starts at zero.
template <class T>
struct PredictionHead {
  Linear<T> classes;
  Mlp3<T> offsets;

  PredictionHead() = default;
  PredictionHead(std::size_t d, std::size_t num_logits, std::size_t offset_dims, Rng& rng)
      : classes(d, num_logits, rng), offsets(d, d, offset_dims, rng) {
    // Rare-foreground prior on the class logits.
    for (auto& b : classes.bias.mutable_data()) b = static_cast<T>(-std::log((1.0 - 0.01) / 0.01));
  }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    classes.for_each_param(prefix + ".classes", fn);
    offsets.for_each_param(prefix + ".offsets", fn);
  }
};

/// Per-class mask logits from an m x m feature grid: a 2x2 stride-2
/// transposed convolution (a linear map to four sub-pixels, then pixel
/// shuffle), relu, a 1x1 mix, relu, and a 1x1 projection to classes.
template <class T>
struct MaskHead {
  Linear<T> upsample, mix, project;
  std::size_t width = 0;

  MaskHead() = default;
  MaskHead(std::size_t d, std::size_t hidden, std::size_t num_classes, Rng& rng)
      : upsample(d, 4 * hidden, rng), mix(hidden, hidden, rng), project(hidden, num_classes, rng),
        width(hidden) {}

  /// `grid` [R x m*m x d] -> [R x 2m x 2m x C].
  Tensor<T> operator()(const Tensor<T>& grid, std::size_t m) const {
    const std::size_t r = grid.size(0);
    detail::require(grid.dim() == 3 && grid.size(1) == m * m, "mask head expects [R x m*m x d]");
    Tensor<T> up = reshape(upsample(grid), {r, m, m, 2, 2, width});
    up = reshape(permute(up, {0, 1, 3, 2, 4, 5}), {r, 2 * m, 2 * m, width});
    return project(relu(mix(relu(up))));
  }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    upsample.for_each_param(prefix + ".upsample", fn);
    mix.for_each_param(prefix + ".mix", fn);
    project.for_each_param(prefix + ".project", fn);
  }
};

}  // namespace boxer
