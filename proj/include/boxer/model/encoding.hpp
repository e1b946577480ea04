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
#include <span>
#include <vector>

#include "boxer/numerics/tensor.hpp"

namespace boxer {

/// Sinusoid code for one window: x and y each fill d/2 interleaved
/// (sin, cos) features over d/4 frequencies, giving a position code; the
/// size (wx, wy) is coded the same way, and the two are summed.
template <class T>
void spatial_encoding_into(double x, double y, double wx, double wy, std::size_t d,
                           double temperature, T* out) {
  if (d % 4 != 0) throw ConfigError("spatial encoding width must be divisible by 4");
  const std::size_t half = d / 2, freqs = d / 4;
  auto code = [&](double v, T* dst) {
    for (std::size_t i = 0; i < freqs; ++i) {
      const double omega = 2.0 * std::numbers::pi /
                           std::pow(temperature, static_cast<double>(i) / static_cast<double>(freqs));
      dst[2 * i] += static_cast<T>(std::sin(v * omega));
      dst[2 * i + 1] += static_cast<T>(std::cos(v * omega));
    }
  };
  code(x, out);
  code(y, out + half);
  code(wx, out);
  code(wy, out + half);
}

/// Codes for a batch of windows given as rows of (x, y, wx, wy, ...), with
/// `stride` values per row. Returns a constant [N x d] tensor.
template <class T>
Tensor<T> spatial_encoding(std::span<const T> windows, std::size_t stride, std::size_t d,
                           double temperature = 10000.0) {
  const std::size_t n = stride == 0 ? 0 : windows.size() / stride;
  std::vector<T> out(n * d, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* w = windows.data() + i * stride;
    spatial_encoding_into<T>(w[0], w[1], w[2], w[3], d, temperature, out.data() + i * d);
  }
  return Tensor<T>(Shape{n, d}, std::move(out));
}

}  // namespace boxer
