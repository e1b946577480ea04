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
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "boxer/numerics/tensor.hpp"

namespace boxer {

/// Axis-aligned box in normalized image coordinates: center and extent.
template <class T = double>
struct BoxAA {
  T x = 0, y = 0, wx = 0, wy = 0;
  bool operator==(const BoxAA&) const = default;
};

/// Rotated box. `theta` is the rotation about the center as a fraction of a
/// full turn, kept in [0, 1).
template <class T = double>
struct BoxR {
  T x = 0, y = 0, wx = 0, wy = 0, theta = 0;

  BoxAA<T> planar() const { return {x, y, wx, wy}; }
  T radians() const { return theta * T(2) * std::numbers::pi_v<T>; }
  bool operator==(const BoxR&) const = default;
};

template <class T>
struct Point {
  T x = 0, y = 0;
};

/// Wraps a normalized angle into [0, 1).
template <class T>
T wrap_unit(T v) {
  T w = v - std::floor(v);
  return w >= T(1) ? T(0) : w;
}

template <class T>
T radians_to_unit(T radians) {
  return wrap_unit(radians / (T(2) * std::numbers::pi_v<T>));
}

/// Shortest distance between two normalized angles on the unit circle.
template <class T>
T wrapped_angle_distance(T a, T b) {
  const T d = std::abs(wrap_unit(a) - wrap_unit(b));
  return std::min(d, T(1) - d);
}

// ---------------------------------------------------------------------------
// Reference windows

struct ReferenceWindow {
  BoxR<double> box;
  std::size_t level = 0;        // pyramid index, 0-based
  std::size_t angle_index = 0;  // index into the configured angle list
};

struct LevelShape {
  std::size_t height = 0, width = 0;
};

/// The three window angles used for rotated detection, in radians.
inline std::vector<double> default_rotated_angles() {
  const double third = 2.0 * std::numbers::pi / 3.0;
  return {-third, 0.0, third};
}

/// One window per (level, position, angle), ordered level-major, then
/// row-major position, then angle. Each window is centered on its query's
/// pixel center and sized by its level's normalized window size.
inline std::vector<ReferenceWindow> make_reference_windows(
    std::span<const LevelShape> levels, std::span<const std::array<double, 2>> window_sizes,
    std::span<const double> angles) {
  if (window_sizes.size() != levels.size()) {
    throw ConfigError("need one window size per pyramid level: got " +
                      std::to_string(window_sizes.size()) + " for " +
                      std::to_string(levels.size()) + " levels");
  }
  if (angles.empty()) throw ConfigError("reference windows need at least one angle");
  std::vector<ReferenceWindow> out;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    const auto [h, w] = levels[j];
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        for (std::size_t a = 0; a < angles.size(); ++a) {
          BoxR<double> box{(static_cast<double>(c) + 0.5) / static_cast<double>(w),
                           (static_cast<double>(r) + 0.5) / static_cast<double>(h),
                           window_sizes[j][0], window_sizes[j][1], radians_to_unit(angles[a])};
          out.push_back({box, j, a});
        }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Where-to-attend transforms

/// Geometric offsets predicted for one (head, level) pair. `dtheta` is in
/// normalized turns, like BoxR::theta.
template <class T>
struct Offsets {
  T dx = 0, dy = 0, dwx = 0, dwy = 0, dtheta = 0;
};

/// Weights of one transform projection: weight is [d x k] row-major, k = 4
/// (translate + scale) or 5 (plus rotation).
template <class T>
struct TransformWeights {
  std::vector<T> weight;
  std::vector<T> bias;
  std::size_t width = 0;
};

inline constexpr double kDefaultTau = 8.0;
inline constexpr double kDefaultTauTheta = 8.0;

/// Offsets from the raw projection outputs (q W^T + b) of one transform.
/// Translations and sizes scale with the window extent over `tau`; size
/// offsets pass through a relu gate so windows only grow.
template <class T>
Offsets<T> offsets_from_projection(std::span<const T> raw, const BoxR<T>& window, T tau,
                                   T tau_theta) {
  Offsets<T> o;
  o.dx = raw[0] * window.wx / tau;
  o.dy = raw[1] * window.wy / tau;
  o.dwx = std::max(raw[2], T(0)) * window.wx / tau;
  o.dwy = std::max(raw[3], T(0)) * window.wy / tau;
  if (raw.size() > 4) o.dtheta = raw[4] / tau_theta;
  return o;
}

template <class T>
Offsets<T> offset_projection(std::span<const T> query, const BoxR<T>& window,
                             const TransformWeights<T>& weights, T tau = T(kDefaultTau),
                             T tau_theta = T(kDefaultTauTheta)) {
  const std::size_t k = weights.bias.size();
  if (weights.weight.size() != query.size() * k) {
    throw DimensionError("transform weight does not match query width");
  }
  std::vector<T> raw(weights.bias);
  for (std::size_t i = 0; i < query.size(); ++i)
    for (std::size_t j = 0; j < k; ++j) raw[j] += query[i] * weights.weight[i * k + j];
  return offsets_from_projection<T>(raw, window, tau, tau_theta);
}

template <class T>
BoxAA<T> apply_translation_scaling(const BoxAA<T>& box, const Offsets<T>& o) {
  return {box.x + o.dx, box.y + o.dy, box.wx + o.dwx, box.wy + o.dwy};
}

/// Adds a rotation offset given in normalized turns.
template <class T>
BoxR<T> apply_rotation(const BoxR<T>& box, T delta_theta) {
  BoxR<T> out = box;
  out.theta = wrap_unit(box.theta + delta_theta);
  return out;
}

/// Translation, then scaling, then rotation.
template <class T>
BoxR<T> apply_offsets(const BoxR<T>& box, const Offsets<T>& o) {
  const BoxAA<T> planar = apply_translation_scaling(box.planar(), o);
  return apply_rotation(BoxR<T>{planar.x, planar.y, planar.wx, planar.wy, box.theta}, o.dtheta);
}

/// Bin centers of an m x m subdivision of the box, row-major (y outer),
/// rotated about the box center.
template <class T>
std::vector<Point<T>> grid_coordinates(const BoxR<T>& box, std::size_t m) {
  if (m == 0) throw ConfigError("grid side must be at least 1");
  const T a = box.radians();
  const T cs = std::cos(a), sn = std::sin(a);
  std::vector<Point<T>> out;
  out.reserve(m * m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      const T u = (static_cast<T>(c) + T(0.5)) / static_cast<T>(m) - T(0.5);
      const T v = (static_cast<T>(r) + T(0.5)) / static_cast<T>(m) - T(0.5);
      const T dx = u * box.wx, dy = v * box.wy;
      out.push_back({box.x + dx * cs - dy * sn, box.y + dx * sn + dy * cs});
    }
  return out;
}

template <class T>
std::vector<Point<T>> grid_coordinates(const BoxAA<T>& box, std::size_t m) {
  return grid_coordinates(BoxR<T>{box.x, box.y, box.wx, box.wy, T(0)}, m);
}

// ---------------------------------------------------------------------------
// Overlap measures

template <class T>
T area(const BoxAA<T>& b) {
  return std::max(b.wx, T(0)) * std::max(b.wy, T(0));
}

template <class T>
T iou(const BoxAA<T>& a, const BoxAA<T>& b) {
  const T ix = std::min(a.x + a.wx / 2, b.x + b.wx / 2) - std::max(a.x - a.wx / 2, b.x - b.wx / 2);
  const T iy = std::min(a.y + a.wy / 2, b.y + b.wy / 2) - std::max(a.y - a.wy / 2, b.y - b.wy / 2);
  const T inter = std::max(ix, T(0)) * std::max(iy, T(0));
  const T uni = area(a) + area(b) - inter;
  if (area(a) <= T(0) || area(b) <= T(0) || uni <= T(0)) return T(0);
  return inter / uni;
}

/// Generalized IoU: IoU minus the fraction of the enclosing hull not covered
/// by the union.
template <class T>
T giou(const BoxAA<T>& a, const BoxAA<T>& b) {
  const T ix = std::min(a.x + a.wx / 2, b.x + b.wx / 2) - std::max(a.x - a.wx / 2, b.x - b.wx / 2);
  const T iy = std::min(a.y + a.wy / 2, b.y + b.wy / 2) - std::max(a.y - a.wy / 2, b.y - b.wy / 2);
  const T inter = std::max(ix, T(0)) * std::max(iy, T(0));
  const T uni = area(a) + area(b) - inter;
  const T hx = std::max(a.x + a.wx / 2, b.x + b.wx / 2) - std::min(a.x - a.wx / 2, b.x - b.wx / 2);
  const T hy = std::max(a.y + a.wy / 2, b.y + b.wy / 2) - std::min(a.y - a.wy / 2, b.y - b.wy / 2);
  const T hull = hx * hy;
  const T overlap = (area(a) <= T(0) || area(b) <= T(0) || uni <= T(0)) ? T(0) : inter / uni;
  if (hull <= T(0)) return overlap;
  return overlap - (hull - uni) / hull;
}

template <class T>
BoxAA<T> from_corners(T x0, T y0, T x1, T y1) {
  return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

/// Corners in counter-clockwise order (for the usual x-right, y-up frame).
template <class T>
std::array<Point<T>, 4> corners(const BoxR<T>& b) {
  const T a = b.radians();
  const T cs = std::cos(a), sn = std::sin(a);
  const T hx = b.wx / 2, hy = b.wy / 2;
  const std::array<std::array<T, 2>, 4> local{{{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}}};
  std::array<Point<T>, 4> out;
  for (std::size_t i = 0; i < 4; ++i)
    out[i] = {b.x + local[i][0] * cs - local[i][1] * sn, b.y + local[i][0] * sn + local[i][1] * cs};
  return out;
}

template <class T>
T polygon_area(const std::vector<Point<T>>& poly) {
  T twice = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return std::abs(twice) / 2;
}

/// Sutherland-Hodgman clipping of `subject` against a convex CCW `clip`.
template <class T>
std::vector<Point<T>> clip_polygon(std::vector<Point<T>> subject,
                                   const std::array<Point<T>, 4>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Point<T> a = clip[e];
    const Point<T> b = clip[(e + 1) % clip.size()];
    auto side = [&](const Point<T>& p) {
      return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    };
    std::vector<Point<T>> next;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Point<T> cur = subject[i];
      const Point<T> prev = subject[(i + subject.size() - 1) % subject.size()];
      const T sc = side(cur), sp = side(prev);
      if (sc >= 0) {
        if (sp < 0) {
          const T t = sp / (sp - sc);
          next.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
        next.push_back(cur);
      } else if (sp >= 0) {
        const T t = sp / (sp - sc);
        next.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
    }
    subject = std::move(next);
  }
  return subject;
}

/// Exact IoU of two rotated rectangles by convex polygon clipping.
template <class T>
T rotated_iou(const BoxR<T>& a, const BoxR<T>& b) {
  const T area_a = a.wx * a.wy, area_b = b.wx * b.wy;
  if (!(area_a > T(0)) || !(area_b > T(0))) return T(0);
  const auto ca = corners(a);
  const auto cb = corners(b);
  const auto inter_poly = clip_polygon(std::vector<Point<T>>(ca.begin(), ca.end()), cb);
  const T inter = inter_poly.size() < 3 ? T(0) : polygon_area(inter_poly);
  const T uni = area_a + area_b - inter;
  return uni > T(0) ? std::clamp(inter / uni, T(0), T(1)) : T(0);
}

}  // namespace boxer
