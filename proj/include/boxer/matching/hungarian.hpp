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
#include <utility>
#include <vector>

#include "boxer/numerics/tensor.hpp"

namespace boxer {

/// Dense row-major cost matrix.
struct CostMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  CostMatrix transposed() const {
    CostMatrix t(cols, rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }
};

/// (prediction, ground truth) pairs sorted by prediction index.
struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total_cost = 0.0;
};

namespace detail {

// Shortest augmenting path (Jonker-Volgenant style potentials) for
// rows <= cols. Strict comparisons keep the lowest index on ties.
inline std::vector<std::size_t> assign_rows(const CostMatrix& c) {
  const std::size_t n = c.rows, m = c.cols;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);  // owner[j]: 1-based row
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = kNone;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, kNone);
  for (std::size_t j = 1; j <= m; ++j)
    if (owner[j] != 0) row_to_col[owner[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

/// Minimum-cost injective assignment between the rows (predictions) and
/// columns (ground truths) of `cost`; min(rows, cols) pairs.
inline Assignment hungarian(const CostMatrix& cost) {
  Assignment out;
  if (cost.rows == 0 || cost.cols == 0) return out;
  for (double v : cost.values)
    if (!std::isfinite(v)) throw NumericalError("non-finite matching cost");
  if (cost.rows <= cost.cols) {
    const auto r2c = detail::assign_rows(cost);
    for (std::size_t i = 0; i < cost.rows; ++i) out.pairs.emplace_back(i, r2c[i]);
  } else {
    const auto c2r = detail::assign_rows(cost.transposed());
    for (std::size_t j = 0; j < cost.cols; ++j) out.pairs.emplace_back(c2r[j], j);
    std::sort(out.pairs.begin(), out.pairs.end());
  }
  for (auto [i, j] : out.pairs) out.total_cost += cost(i, j);
  return out;
}

}  // namespace boxer
