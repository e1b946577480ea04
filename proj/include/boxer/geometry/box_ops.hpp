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
#include <numbers>

#include "boxer/geometry/boxes.hpp"
#include "boxer/numerics/ops.hpp"

// Differentiable tensor forms of the where-to-attend transforms and grid
// generation, used inside the attention modules.

namespace boxer {

/// Slope of max(x, 0), taking 1/2 at the kink so zero-initialized size
/// projections still receive gradient.
template <class T>
T gate_slope(T x) {
  return x > T(0) ? T(1) : x < T(0) ? T(0) : T(0.5);
}

/// Attended boxes from raw transform projections.
///
/// `raw` is [N x G x t x k] (k = 4, or 5 with rotation); `windows` is a
/// constant [N x G x 5] tensor of reference windows (x, y, wx, wy, theta).
/// Returns [N x G x t x 5]. Angles are left unwrapped.
template <class T>
Tensor<T> attend_boxes(const Tensor<T>& raw, const Tensor<T>& windows, T tau, T tau_theta) {
  detail::require(raw.dim() == 4 && (raw.size(3) == 4 || raw.size(3) == 5),
                  "attend_boxes expects raw [N x G x t x 4|5]");
  const std::size_t n = raw.size(0), g = raw.size(1), t = raw.size(2), k = raw.size(3);
  detail::require(windows.shape() == Shape({n, g, 5}), "attend_boxes windows must be [N x G x 5]");
  std::vector<T> out(n * g * t * 5);
  const auto r = raw.data();
  const auto wd = windows.data();
  for (std::size_t q = 0; q < n * g; ++q) {
    const T* win = wd.data() + q * 5;
    for (std::size_t j = 0; j < t; ++j) {
      const T* in = r.data() + (q * t + j) * k;
      T* o = out.data() + (q * t + j) * 5;
      o[0] = win[0] + in[0] * win[2] / tau;
      o[1] = win[1] + in[1] * win[3] / tau;
      o[2] = win[2] + std::max(in[2], T(0)) * win[2] / tau;
      o[3] = win[3] + std::max(in[3], T(0)) * win[3] / tau;
      o[4] = win[4] + (k == 5 ? in[4] / tau_theta : T(0));
    }
  }
  Tensor<T> y(Shape{n, g, t, 5}, std::move(out));
  if (detail::recording<T>({&raw})) {
    y.set_requires_grad(true);
    detail::record<T>([ri = raw.impl(), wi = windows.impl(), yi = y.impl(), n, g, t, k, tau,
                       tau_theta] {
      if (yi->grad.empty()) return;
      auto& gr = ri->ensure_grad();
      for (std::size_t q = 0; q < n * g; ++q) {
        const T* win = wi->data.data() + q * 5;
        for (std::size_t j = 0; j < t; ++j) {
          const T* in = ri->data.data() + (q * t + j) * k;
          const T* go = yi->grad.data() + (q * t + j) * 5;
          T* gi = gr.data() + (q * t + j) * k;
          gi[0] += go[0] * win[2] / tau;
          gi[1] += go[1] * win[3] / tau;
          gi[2] += gate_slope(in[2]) * go[2] * win[2] / tau;
          gi[3] += gate_slope(in[3]) * go[3] * win[3] / tau;
          if (k == 5) gi[4] += go[4] / tau_theta;
        }
      }
    });
  }
  return y;
}

/// m x m bin centers for every box in `boxes` [... x 5], rotated about the
/// box center. Returns [... x m*m x 2].
template <class T>
Tensor<T> grid_points(const Tensor<T>& boxes, std::size_t m) {
  detail::require(boxes.dim() >= 1 && boxes.shape().back() == 5, "grid_points expects [... x 5]");
  if (m == 0) throw ConfigError("grid side must be at least 1");
  const std::size_t count = boxes.numel() / 5;
  const std::size_t cells = m * m;
  constexpr T kTurn = T(2) * std::numbers::pi_v<T>;
  std::vector<T> u(cells), v(cells);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      u[r * m + c] = (static_cast<T>(c) + T(0.5)) / static_cast<T>(m) - T(0.5);
      v[r * m + c] = (static_cast<T>(r) + T(0.5)) / static_cast<T>(m) - T(0.5);
    }
  std::vector<T> out(count * cells * 2);
  const auto bd = boxes.data();
  for (std::size_t b = 0; b < count; ++b) {
    const T* box = bd.data() + b * 5;
    const T cs = std::cos(kTurn * box[4]), sn = std::sin(kTurn * box[4]);
    T* o = out.data() + b * cells * 2;
    for (std::size_t i = 0; i < cells; ++i) {
      const T dx = u[i] * box[2], dy = v[i] * box[3];
      o[2 * i] = box[0] + dx * cs - dy * sn;
      o[2 * i + 1] = box[1] + dx * sn + dy * cs;
    }
  }
  Shape out_shape(boxes.shape().begin(), boxes.shape().end() - 1);
  out_shape.push_back(cells);
  out_shape.push_back(2);
  Tensor<T> y(out_shape, std::move(out));
  if (detail::recording<T>({&boxes})) {
    y.set_requires_grad(true);
    detail::record<T>([bi = boxes.impl(), yi = y.impl(), count, cells, u = std::move(u),
                       v = std::move(v)] {
      if (yi->grad.empty()) return;
      auto& gb = bi->ensure_grad();
      for (std::size_t b = 0; b < count; ++b) {
        const T* box = bi->data.data() + b * 5;
        const T cs = std::cos(kTurn * box[4]), sn = std::sin(kTurn * box[4]);
        const T* go = yi->grad.data() + b * cells * 2;
        T* g = gb.data() + b * 5;
        for (std::size_t i = 0; i < cells; ++i) {
          const T gx = go[2 * i], gy = go[2 * i + 1];
          const T dx = u[i] * box[2], dy = v[i] * box[3];
          g[0] += gx;
          g[1] += gy;
          g[2] += gx * u[i] * cs + gy * u[i] * sn;
          g[3] += -gx * v[i] * sn + gy * v[i] * cs;
          g[4] += kTurn * (gx * (-dx * sn - dy * cs) + gy * (dx * cs - dy * sn));
        }
      }
    });
  }
  return y;
}

}  // namespace boxer
