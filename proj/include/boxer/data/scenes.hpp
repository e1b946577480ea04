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
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "boxer/geometry/boxes.hpp"
#include "boxer/matching/criterion.hpp"
#include "boxer/numerics/nn.hpp"
#include "json.hpp"

namespace boxer {

using Bitmap = std::vector<std::uint8_t>;

enum class Shape2D : int { kRect = 0, kCircle = 1, kTriangle = 2 };
enum class Object3D : int { kVehicle = 0, kPedestrian = 1 };

inline constexpr int kNumShapeClasses = 3;
inline constexpr int kNumObjectClasses = 2;

/// Mixes a base seed and an index into an independent scene seed.
inline std::uint64_t scene_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Rasterizers: a pixel belongs to a shape when its center does.

inline Bitmap raster_rect(double x0, double y0, double x1, double y1, std::size_t h, std::size_t w) {
  Bitmap m(h * w, 0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double px = static_cast<double>(j) + 0.5, py = static_cast<double>(i) + 0.5;
      m[i * w + j] = px >= x0 && px < x1 && py >= y0 && py < y1;
    }
  return m;
}

inline Bitmap raster_circle(double cx, double cy, double r, std::size_t h, std::size_t w) {
  Bitmap m(h * w, 0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double dx = static_cast<double>(j) + 0.5 - cx, dy = static_cast<double>(i) + 0.5 - cy;
      m[i * w + j] = dx * dx + dy * dy <= r * r;
    }
  return m;
}

/// Isosceles triangle in the box [x0, x1) x [y0, y1), apex up or down.
inline Bitmap raster_triangle(double x0, double y0, double x1, double y1, bool apex_up, std::size_t h,
                              std::size_t w) {
  Bitmap m(h * w, 0);
  const double cx = 0.5 * (x0 + x1), half = 0.5 * (x1 - x0), height = y1 - y0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double px = static_cast<double>(j) + 0.5, py = static_cast<double>(i) + 0.5;
      if (py < y0 || py >= y1) continue;
      const double depth = apex_up ? (py - y0) / height : (y1 - py) / height;
      m[i * w + j] = std::abs(px - cx) <= half * depth;
    }
  return m;
}

/// Cells whose centers fall inside a rotated rectangle given in cell units.
inline Bitmap raster_rotated_rect(double cx, double cy, double length, double width, double radians,
                                  std::size_t h, std::size_t w) {
  Bitmap m(h * w, 0);
  const double c = std::cos(radians), s = std::sin(radians);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double dx = static_cast<double>(j) + 0.5 - cx, dy = static_cast<double>(i) + 0.5 - cy;
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      m[i * w + j] = std::abs(u) <= length / 2 && std::abs(v) <= width / 2;
    }
  return m;
}

/// Tight normalized box (cx, cy, w, h) of a bitmap's set pixels; zero box if empty.
inline BoxAA<double> bitmap_box(const Bitmap& m, std::size_t h, std::size_t w) {
  std::size_t x0 = w, y0 = h, x1 = 0, y1 = 0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      if (m[i * w + j]) {
        x0 = std::min(x0, j), x1 = std::max(x1, j + 1);
        y0 = std::min(y0, i), y1 = std::max(y1, i + 1);
      }
  if (x1 == 0) return {0, 0, 0, 0};
  const double W = static_cast<double>(w), H = static_cast<double>(h);
  return {0.5 * static_cast<double>(x0 + x1) / W, 0.5 * static_cast<double>(y0 + y1) / H,
          static_cast<double>(x1 - x0) / W, static_cast<double>(y1 - y0) / H};
}

inline std::size_t bitmap_count(const Bitmap& m) {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

// ---------------------------------------------------------------------------
// 2D scenes

struct SceneConfig2D {
  std::size_t height = 32, width = 32;
  std::size_t min_objects = 1, max_objects = 3;
  double min_size = 8, max_size = 16;  // pixels
  double max_iou = 0.3;
  int max_tries = 100;
  double noise = 0.25;
};

struct Instance2D {
  Shape2D label;
  BoxAA<double> box;  // normalized (cx, cy, w, h), tight around the mask
  Bitmap mask;        // visible pixels, height*width
};

struct Scene2D {
  std::size_t height = 0, width = 0;
  std::vector<float> raster;  // [H x W x 3]
  std::vector<Instance2D> instances;
};

namespace detail {

inline std::array<double, 3> shape_color(Shape2D s, Rng& rng) {
  const double hi = rng.uniform(0.65, 1.0), lo1 = rng.uniform(0.2, 0.45), lo2 = rng.uniform(0.2, 0.45);
  switch (s) {
    case Shape2D::kRect: return {hi, lo1, lo2};
    case Shape2D::kCircle: return {lo1, hi, lo2};
    default: return {lo1, lo2, hi};
  }
}

}  // namespace detail

/// Pure function of (seed, config): noise background plus shapes placed by
/// rejection sampling with pairwise box IoU at most `max_iou`. Later shapes
/// occlude earlier ones; masks and boxes describe visible pixels.
inline Scene2D gen_scene_2d(std::uint64_t seed, const SceneConfig2D& cfg = {}) {
  if (cfg.min_objects > cfg.max_objects || cfg.min_size > cfg.max_size || cfg.min_size < 2)
    throw ConfigError("invalid 2d scene config");
  Rng rng(seed);
  const std::size_t h = cfg.height, w = cfg.width;
  Scene2D scene;
  scene.height = h, scene.width = w;
  scene.raster.resize(h * w * 3);
  for (auto& v : scene.raster) v = static_cast<float>(rng.uniform(0.0, cfg.noise));
  const std::size_t count = cfg.min_objects + rng.below(cfg.max_objects - cfg.min_objects + 1);
  std::vector<BoxAA<double>> placed;
  for (std::size_t n = 0; n < count; ++n) {
    const auto label = static_cast<Shape2D>(rng.below(kNumShapeClasses));
    const auto color = detail::shape_color(label, rng);
    for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
      const double bw = rng.uniform(cfg.min_size, cfg.max_size);
      const double bh = label == Shape2D::kCircle ? bw : rng.uniform(cfg.min_size, cfg.max_size);
      const double x0 = rng.uniform(0.0, static_cast<double>(w) - bw);
      const double y0 = rng.uniform(0.0, static_cast<double>(h) - bh);
      const bool apex_up = rng.uniform() < 0.5;
      Bitmap mask;
      switch (label) {
        case Shape2D::kRect: mask = raster_rect(x0, y0, x0 + bw, y0 + bh, h, w); break;
        case Shape2D::kCircle: mask = raster_circle(x0 + bw / 2, y0 + bw / 2, bw / 2, h, w); break;
        case Shape2D::kTriangle: mask = raster_triangle(x0, y0, x0 + bw, y0 + bh, apex_up, h, w); break;
      }
      if (bitmap_count(mask) < 4) continue;
      const BoxAA<double> box = bitmap_box(mask, h, w);
      bool clash = false;
      for (const auto& other : placed) clash = clash || iou(box, other) > cfg.max_iou;
      if (clash) continue;
      for (std::size_t i = 0; i < h * w; ++i) {
        if (!mask[i]) continue;
        for (std::size_t c = 0; c < 3; ++c)
          scene.raster[i * 3 + c] = static_cast<float>(color[c] + rng.uniform(-0.05, 0.05));
        for (auto& inst : scene.instances) inst.mask[i] = 0;
      }
      placed.push_back(box);
      scene.instances.push_back({label, box, std::move(mask)});
      break;
    }
  }
  // Occlusion may shrink earlier instances; keep boxes tight and drop
  // anything left too small to see.
  std::vector<Instance2D> kept;
  for (auto& inst : scene.instances) {
    if (bitmap_count(inst.mask) < 4) continue;
    inst.box = bitmap_box(inst.mask, h, w);
    kept.push_back(std::move(inst));
  }
  scene.instances = std::move(kept);
  return scene;
}

// ---------------------------------------------------------------------------
// 3D bird's-eye-view scenes

struct SceneConfig3D {
  std::size_t height = 64, width = 64;
  std::size_t min_objects = 1, max_objects = 4;
  double vehicle_fraction = 0.5;
  double vehicle_length_min = 0.10, vehicle_length_max = 0.16;  // normalized
  double vehicle_aspect_min = 1.8, vehicle_aspect_max = 2.5;
  double pedestrian_size_min = 0.035, pedestrian_size_max = 0.05;
  double max_iou = 0.3;
  int max_tries = 100;
  double clutter = 0.01;  // background occupancy rate
};

struct Instance3D {
  Object3D label;
  BoxR<double> box;  // normalized planar box, theta in turns
  double z = 0.5, dz = 0.1;  // normalized center height and extent
};

struct Scene3D {
  std::size_t height = 0, width = 0;
  std::vector<float> bev;  // [H x W x 2]: occupancy, intensity
  std::vector<Instance3D> instances;
};

namespace detail {

inline Bitmap footprint(const BoxR<double>& b, std::size_t h, std::size_t w) {
  return raster_rotated_rect(b.x * static_cast<double>(w), b.y * static_cast<double>(h),
                             b.wx * static_cast<double>(w), b.wy * static_cast<double>(h), b.radians(), h, w);
}

inline void paint_bev(Scene3D& scene, const Instance3D& inst, Rng& rng) {
  const std::size_t h = scene.height, w = scene.width;
  const Bitmap m = footprint(inst.box, h, w);
  const double c = std::cos(inst.box.radians()), s = std::sin(inst.box.radians());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      if (!m[i * w + j]) continue;
      scene.bev[(i * w + j) * 2] = 1.0f;
      // Brighter returns from the front half give the heading away.
      const double dx = (static_cast<double>(j) + 0.5) / static_cast<double>(w) - inst.box.x;
      const double dy = (static_cast<double>(i) + 0.5) / static_cast<double>(h) - inst.box.y;
      const bool front = c * dx + s * dy > 0;
      const double base = inst.label == Object3D::kVehicle ? (front ? 0.9 : 0.45) : 0.7;
      scene.bev[(i * w + j) * 2 + 1] = static_cast<float>(base + rng.uniform(-0.1, 0.1));
    }
}

}  // namespace detail

/// Pure function of (seed, config): rotated vehicles and pedestrians
/// rasterized into occupancy and intensity channels over sparse clutter.
inline Scene3D gen_scene_3d(std::uint64_t seed, const SceneConfig3D& cfg = {}) {
  if (cfg.min_objects > cfg.max_objects || cfg.vehicle_aspect_min < 1.5)
    throw ConfigError("invalid 3d scene config");
  Rng rng(seed);
  const std::size_t h = cfg.height, w = cfg.width;
  Scene3D scene;
  scene.height = h, scene.width = w;
  scene.bev.assign(h * w * 2, 0.0f);
  for (std::size_t i = 0; i < h * w; ++i)
    if (rng.uniform() < cfg.clutter) {
      scene.bev[i * 2] = 1.0f;
      scene.bev[i * 2 + 1] = static_cast<float>(rng.uniform(0.2, 0.8));
    }
  const std::size_t count = cfg.min_objects + rng.below(cfg.max_objects - cfg.min_objects + 1);
  std::vector<BoxR<double>> placed;
  for (std::size_t n = 0; n < count; ++n) {
    const auto label = rng.uniform() < cfg.vehicle_fraction ? Object3D::kVehicle : Object3D::kPedestrian;
    for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
      Instance3D inst;
      inst.label = label;
      double length, width;
      if (label == Object3D::kVehicle) {
        length = rng.uniform(cfg.vehicle_length_min, cfg.vehicle_length_max);
        width = length / rng.uniform(cfg.vehicle_aspect_min, cfg.vehicle_aspect_max);
        inst.z = rng.uniform(0.3, 0.4);
        inst.dz = rng.uniform(0.12, 0.18);
      } else {
        length = rng.uniform(cfg.pedestrian_size_min, cfg.pedestrian_size_max);
        width = length * rng.uniform(0.8, 1.0);
        inst.z = rng.uniform(0.35, 0.45);
        inst.dz = rng.uniform(0.14, 0.2);
      }
      const double theta = rng.uniform();
      const double margin = 0.5 * std::hypot(length, width);
      inst.box = {rng.uniform(margin, 1 - margin), rng.uniform(margin, 1 - margin), length, width, theta};
      bool clash = false;
      for (const auto& other : placed) {
        const double overlap = rotated_iou(inst.box, other);
        clash = clash || overlap > cfg.max_iou || (label == Object3D::kPedestrian && overlap > 0);
      }
      if (clash) continue;
      detail::paint_bev(scene, inst, rng);
      placed.push_back(inst.box);
      scene.instances.push_back(inst);
      break;
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Augmentation

inline Scene2D flip_horizontal(const Scene2D& s) {
  Scene2D out = s;
  const std::size_t h = s.height, w = s.width;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c) out.raster[(i * w + j) * 3 + c] = s.raster[(i * w + (w - 1 - j)) * 3 + c];
  for (std::size_t n = 0; n < s.instances.size(); ++n) {
    auto& inst = out.instances[n];
    inst.box.x = 1.0 - s.instances[n].box.x;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) inst.mask[i * w + j] = s.instances[n].mask[i * w + (w - 1 - j)];
  }
  return out;
}

/// Mirror in x: centers x -> 1 - x, headings theta -> pi - theta.
inline Scene3D flip_horizontal(const Scene3D& s) {
  Scene3D out = s;
  const std::size_t h = s.height, w = s.width;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 2; ++c) out.bev[(i * w + j) * 2 + c] = s.bev[(i * w + (w - 1 - j)) * 2 + c];
  for (auto& inst : out.instances) {
    inst.box.x = 1.0 - inst.box.x;
    inst.box.theta = wrap_unit(0.5 - inst.box.theta);
  }
  return out;
}

/// Quarter turn about the scene center (square scenes): a point at offset
/// (dx, dy) moves to (-dy, dx) and headings gain a quarter turn.
inline Scene3D rotate_quarter(const Scene3D& s) {
  if (s.height != s.width) throw ConfigError("quarter turn needs a square scene");
  Scene3D out = s;
  const std::size_t n = s.width;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < 2; ++c)
        out.bev[(j * n + (n - 1 - i)) * 2 + c] = s.bev[(i * n + j) * 2 + c];
  for (auto& inst : out.instances) {
    const double dx = inst.box.x - 0.5, dy = inst.box.y - 0.5;
    inst.box.x = 0.5 - dy;
    inst.box.y = 0.5 + dx;
    inst.box.theta = wrap_unit(inst.box.theta + 0.25);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model inputs and targets

template <class T>
Tensor<T> scene_tensor(const Scene2D& s) {
  return Tensor<T>(Shape{s.height, s.width, 3}, std::vector<T>(s.raster.begin(), s.raster.end()));
}

template <class T>
Tensor<T> scene_tensor(const Scene3D& s) {
  return Tensor<T>(Shape{s.height, s.width, 2}, std::vector<T>(s.bev.begin(), s.bev.end()));
}

inline SceneTargets scene_targets(const Scene2D& s) {
  SceneTargets t;
  t.height = s.height, t.width = s.width;
  for (const auto& inst : s.instances) {
    t.labels.push_back(static_cast<int>(inst.label));
    t.boxes.push_back({inst.box.x, inst.box.y, inst.box.wx, inst.box.wy});
    t.masks.push_back(inst.mask);
  }
  return t;
}

inline SceneTargets scene_targets(const Scene3D& s) {
  SceneTargets t;
  t.height = s.height, t.width = s.width;
  for (const auto& inst : s.instances) {
    t.labels.push_back(static_cast<int>(inst.label));
    t.boxes.push_back({inst.box.x, inst.box.y, inst.z, inst.box.wx, inst.box.wy, inst.dz, inst.box.theta});
  }
  return t;
}

/// Generates scenes [first, first + count) of a seeded stream, in index
/// order, on `workers` threads. Each scene depends only on its own seed.
template <class Scene, class Gen>
std::vector<Scene> generate_scenes(std::uint64_t base_seed, std::size_t first, std::size_t count, Gen&& gen,
                                   std::size_t workers = 1) {
  std::vector<Scene> out(count);
  workers = std::max<std::size_t>(1, std::min(workers, count));
  auto job = [&](std::size_t wk) {
    for (std::size_t i = wk; i < count; i += workers) out[i] = gen(scene_seed(base_seed, first + i));
  };
  if (workers == 1) {
    job(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t wk = 0; wk < workers; ++wk) pool.emplace_back(job, wk);
    for (auto& t : pool) t.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dump format: a JSON record per scene plus the raw raster as little-endian
// float32.

/// Row-major run lengths, starting with a (possibly empty) run of zeros.
inline std::vector<std::size_t> rle_encode(const Bitmap& m) {
  std::vector<std::size_t> runs;
  std::uint8_t current = 0;
  std::size_t run = 0;
  for (auto v : m) {
    if (v != current) {
      runs.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

inline Bitmap rle_decode(const std::vector<std::size_t>& runs) {
  Bitmap m;
  std::uint8_t v = 0;
  for (std::size_t r : runs) {
    m.insert(m.end(), r, v);
    v = static_cast<std::uint8_t>(1 - v);
  }
  return m;
}

inline nlohmann::json scene_record(const Scene2D& s, std::uint64_t seed) {
  nlohmann::json j{{"seed", seed}, {"height", s.height}, {"width", s.width}, {"channels", 3}};
  j["instances"] = nlohmann::json::array();
  for (const auto& inst : s.instances)
    j["instances"].push_back({{"class", static_cast<int>(inst.label)},
                              {"box", {inst.box.x, inst.box.y, inst.box.wx, inst.box.wy}},
                              {"mask_rle", rle_encode(inst.mask)}});
  return j;
}

inline nlohmann::json scene_record(const Scene3D& s, std::uint64_t seed) {
  nlohmann::json j{{"seed", seed}, {"height", s.height}, {"width", s.width}, {"channels", 2}};
  j["instances"] = nlohmann::json::array();
  for (const auto& inst : s.instances)
    j["instances"].push_back({{"class", static_cast<int>(inst.label)},
                              {"box", {inst.box.x, inst.box.y, inst.z, inst.box.wx, inst.box.wy, inst.dz,
                                       inst.box.theta}}});
  return j;
}

inline void write_raster(const std::string& path, const std::vector<float>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (float v : data) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                       static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    os.write(b, 4);
  }
}

}  // namespace boxer
