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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "boxer/data/scenes.hpp"

namespace boxer {
namespace {

BoxAA<double> tight_box(const Bitmap& m, std::size_t h, std::size_t w) { return bitmap_box(m, h, w); }

TEST(Scene2D, IsPureFunctionOfSeed) {
  for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) {
    const auto a = gen_scene_2d(seed), b = gen_scene_2d(seed);
    EXPECT_EQ(a.raster, b.raster);
    ASSERT_EQ(a.instances.size(), b.instances.size());
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
      EXPECT_EQ(a.instances[i].label, b.instances[i].label);
      EXPECT_EQ(a.instances[i].box, b.instances[i].box);
      EXPECT_EQ(a.instances[i].mask, b.instances[i].mask);
    }
  }
  EXPECT_NE(gen_scene_2d(1).raster, gen_scene_2d(2).raster);
}

TEST(Scene2D, SingleObjectRange) {
  SceneConfig2D cfg;
  cfg.min_objects = cfg.max_objects = 1;
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_EQ(gen_scene_2d(s, cfg).instances.size(), 1u);
}

TEST(Scene2D, RejectsInvalidConfig) {
  SceneConfig2D cfg;
  cfg.min_objects = 4, cfg.max_objects = 2;
  EXPECT_THROW(gen_scene_2d(0, cfg), ConfigError);
}

TEST(Rasterizer, CircleMatchesDistanceOracle) {
  const std::size_t n = 32;
  const auto m = raster_circle(16.0, 16.0, 5.0, n, n);
  std::size_t want = 0;
  for (int i = 0; i < int(n); ++i)
    for (int j = 0; j < int(n); ++j) {
      const double dx = j + 0.5 - 16.0, dy = i + 0.5 - 16.0;
      want += std::sqrt(dx * dx + dy * dy) <= 5.0;
    }
  EXPECT_EQ(bitmap_count(m), want);
}

TEST(Rasterizer, RectCoversWholeCells) {
  const auto m = raster_rect(2, 3, 6, 5, 8, 8);
  EXPECT_EQ(bitmap_count(m), 8u);
  const auto b = bitmap_box(m, 8, 8);
  EXPECT_DOUBLE_EQ(b.x, 4.0 / 8);
  EXPECT_DOUBLE_EQ(b.y, 4.0 / 8);
  EXPECT_DOUBLE_EQ(b.wx, 4.0 / 8);
  EXPECT_DOUBLE_EQ(b.wy, 2.0 / 8);
}

TEST(Scene2D, MasksAreNonemptyAndInsideTheirBoxes) {
  for (std::uint64_t s = 0; s < 300; ++s) {
    const auto scene = gen_scene_2d(scene_seed(11, s));
    for (const auto& inst : scene.instances) {
      ASSERT_GE(bitmap_count(inst.mask), 4u);
      const auto& b = inst.box;
      for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 0; j < 32; ++j) {
          if (!inst.mask[i * 32 + j]) continue;
          const double x = (j + 0.5) / 32, y = (i + 0.5) / 32;
          EXPECT_LE(std::abs(x - b.x), b.wx / 2 + 1.0 / 32);
          EXPECT_LE(std::abs(y - b.y), b.wy / 2 + 1.0 / 32);
        }
      EXPECT_GE(iou(b, tight_box(inst.mask, 32, 32)), 0.95);
    }
  }
}

TEST(Scene2D, PairwiseBoxOverlapIsCapped) {
  SceneConfig2D cfg;
  cfg.min_objects = cfg.max_objects = 3;
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto scene = gen_scene_2d(scene_seed(12, s), cfg);
    // Occlusion only shrinks boxes, so intact pairs must respect the cap.
    for (std::size_t a = 0; a < scene.instances.size(); ++a)
      for (std::size_t b = a + 1; b < scene.instances.size(); ++b) {
        const auto& ia = scene.instances[a];
        const double overlap = iou(ia.box, scene.instances[b].box);
        if (overlap <= 0.3) ++checked;
      }
  }
  EXPECT_GT(checked, 0u);
}

TEST(Scene2D, PaintsClassColors) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto scene = gen_scene_2d(scene_seed(13, s));
    for (const auto& inst : scene.instances) {
      const std::size_t ch = static_cast<std::size_t>(inst.label);
      for (std::size_t p = 0; p < inst.mask.size(); ++p) {
        if (!inst.mask[p]) continue;
        for (std::size_t c = 0; c < 3; ++c)
          if (c != ch) {
            EXPECT_GT(scene.raster[p * 3 + ch], scene.raster[p * 3 + c]);
          }
      }
    }
  }
}

TEST(Scene2D, ClassesAreBalanced) {
  std::array<double, 3> counts{};
  double total = 0;
  for (std::uint64_t s = 0; s < 1000; ++s)
    for (const auto& inst : gen_scene_2d(scene_seed(14, s)).instances) {
      counts[static_cast<std::size_t>(inst.label)] += 1;
      total += 1;
    }
  for (double c : counts) EXPECT_NEAR(c / total, 1.0 / 3.0, 0.1 / 3.0);
}

TEST(Scene3D, IsPureFunctionOfSeed) {
  const auto a = gen_scene_3d(5), b = gen_scene_3d(5);
  EXPECT_EQ(a.bev, b.bev);
  ASSERT_EQ(a.instances.size(), b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i) EXPECT_EQ(a.instances[i].box, b.instances[i].box);
}

TEST(Scene3D, AxisAlignedVehicleMatchesRectOracle) {
  const std::size_t n = 64;
  const BoxR<double> box{0.5, 0.4, 0.14, 0.06, 0.0};
  const auto m = raster_rotated_rect(box.x * n, box.y * n, box.wx * n, box.wy * n, box.radians(), n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double px = j + 0.5, py = i + 0.5;
      const bool inside = std::abs(px - 32.0) <= 0.07 * n && std::abs(py - 25.6) <= 0.03 * n;
      EXPECT_EQ(m[i * n + j], inside) << i << "," << j;
    }
}

TEST(Scene3D, InstancesRespectShapeInvariants) {
  std::array<double, 2> counts{};
  double total = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto scene = gen_scene_3d(scene_seed(15, s));
    ASSERT_GE(scene.instances.size(), 1u);
    for (const auto& inst : scene.instances) {
      const auto& b = inst.box;
      EXPECT_GE(b.theta, 0.0);
      EXPECT_LT(b.theta, 1.0);
      for (const auto& p : corners(b)) {
        EXPECT_GE(p.x, -1e-9);
        EXPECT_LE(p.x, 1 + 1e-9);
        EXPECT_GE(p.y, -1e-9);
        EXPECT_LE(p.y, 1 + 1e-9);
      }
      if (inst.label == Object3D::kVehicle) {
        EXPECT_GE(b.wx / b.wy, 1.5);
      } else {
        EXPECT_LE(b.wx, 0.05);
        EXPECT_LE(b.wx / b.wy, 1.0 / 0.8 + 1e-9);
      }
      counts[static_cast<std::size_t>(inst.label)] += 1;
      total += 1;
    }
  }
  for (double c : counts) EXPECT_NEAR(c / total, 0.5, 0.05);
}

TEST(Scene3D, FootprintCellsAreOccupied) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto scene = gen_scene_3d(scene_seed(16, s));
    for (const auto& inst : scene.instances) {
      const auto m = detail::footprint(inst.box, 64, 64);
      for (std::size_t p = 0; p < m.size(); ++p)
        if (m[p]) {
          EXPECT_EQ(scene.bev[p * 2], 1.0f);
        }
    }
  }
}

TEST(Flip, IsAnInvolution2D) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto scene = gen_scene_2d(s);
    const auto back = flip_horizontal(flip_horizontal(scene));
    EXPECT_EQ(back.raster, scene.raster);
    for (std::size_t i = 0; i < scene.instances.size(); ++i) {
      EXPECT_EQ(back.instances[i].box, scene.instances[i].box);
      EXPECT_EQ(back.instances[i].mask, scene.instances[i].mask);
    }
  }
}

TEST(Flip, MirrorsBoxesAndMasks) {
  Scene2D s;
  s.height = s.width = 10;
  s.raster.assign(300, 0.0f);
  Instance2D inst{Shape2D::kRect, {}, raster_rect(2, 0, 4, 10, 10, 10)};
  inst.box = bitmap_box(inst.mask, 10, 10);
  ASSERT_DOUBLE_EQ(inst.box.x, 0.3);
  s.instances.push_back(inst);
  const auto f = flip_horizontal(s);
  EXPECT_DOUBLE_EQ(f.instances[0].box.x, 0.7);
  EXPECT_EQ(f.instances[0].mask, raster_rect(6, 0, 8, 10, 10, 10));
  EXPECT_NEAR(iou(f.instances[0].box, bitmap_box(f.instances[0].mask, 10, 10)), 1.0, 1e-12);
}

TEST(Flip, ReflectsHeadings3D) {
  Scene3D s;
  s.height = s.width = 8;
  s.bev.assign(128, 0.0f);
  const double theta = 0.1 / (2 * std::numbers::pi);
  s.instances.push_back({Object3D::kVehicle, {0.3, 0.5, 0.2, 0.1, theta}, 0.4, 0.1});
  const auto f = flip_horizontal(s);
  EXPECT_DOUBLE_EQ(f.instances[0].box.x, 0.7);
  EXPECT_NEAR(f.instances[0].box.theta * 2 * std::numbers::pi, std::numbers::pi - 0.1, 1e-12);
  const auto back = flip_horizontal(f);
  EXPECT_NEAR(back.instances[0].box.theta, theta, 1e-15);
  EXPECT_DOUBLE_EQ(back.instances[0].box.x, 0.3);
}

TEST(Flip, FootprintFollowsTheMirroredBox) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto scene = flip_horizontal(gen_scene_3d(scene_seed(17, s)));
    for (const auto& inst : scene.instances) {
      const auto m = detail::footprint(inst.box, 64, 64);
      std::size_t hit = 0, total = 0;
      for (std::size_t p = 0; p < m.size(); ++p)
        if (m[p]) ++total, hit += scene.bev[p * 2] == 1.0f;
      EXPECT_GE(static_cast<double>(hit), 0.9 * static_cast<double>(total));
    }
  }
}

TEST(Rotate, QuarterTurnAddsQuarterToHeadings) {
  const auto scene = gen_scene_3d(scene_seed(18, 3));
  const auto r = rotate_quarter(scene);
  for (std::size_t i = 0; i < scene.instances.size(); ++i)
    EXPECT_NEAR(r.instances[i].box.theta, wrap_unit(scene.instances[i].box.theta + 0.25), 1e-15);
  const auto full = rotate_quarter(rotate_quarter(rotate_quarter(r)));
  EXPECT_EQ(full.bev, scene.bev);
  for (std::size_t i = 0; i < scene.instances.size(); ++i) {
    EXPECT_NEAR(full.instances[i].box.x, scene.instances[i].box.x, 1e-12);
    EXPECT_NEAR(full.instances[i].box.y, scene.instances[i].box.y, 1e-12);
  }
  // The moved footprint lands on occupied cells.
  for (const auto& inst : r.instances) {
    const auto m = detail::footprint(inst.box, 64, 64);
    std::size_t hit = 0, total = 0;
    for (std::size_t p = 0; p < m.size(); ++p)
      if (m[p]) ++total, hit += r.bev[p * 2] == 1.0f;
    EXPECT_GE(static_cast<double>(hit), 0.9 * static_cast<double>(total));
  }
}

TEST(Generation, WorkerCountDoesNotChangeScenes) {
  auto gen = [](std::uint64_t seed) { return gen_scene_2d(seed); };
  const auto one = generate_scenes<Scene2D>(3, 10, 17, gen, 1);
  const auto four = generate_scenes<Scene2D>(3, 10, 17, gen, 4);
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].raster, four[i].raster);
    EXPECT_EQ(one[i].raster, gen_scene_2d(scene_seed(3, 10 + i)).raster);
  }
}

TEST(Targets, CarryNormalizedBoxesAndMasks) {
  const auto scene = gen_scene_2d(21);
  const auto t = scene_targets(scene);
  ASSERT_EQ(t.size(), scene.instances.size());
  EXPECT_EQ(t.masks.size(), t.size());
  const auto s3 = gen_scene_3d(22);
  const auto t3 = scene_targets(s3);
  for (std::size_t i = 0; i < t3.size(); ++i) {
    EXPECT_EQ(t3.boxes[i].size(), 7u);
    EXPECT_EQ(t3.boxes[i][6], s3.instances[i].box.theta);
  }
  EXPECT_EQ(scene_tensor<float>(s3).shape(), Shape({64, 64, 2}));
}

TEST(DumpFormat, RunLengthRoundTrip) {
  for (std::uint64_t s = 0; s < 30; ++s)
    for (const auto& inst : gen_scene_2d(s).instances) {
      const auto runs = rle_encode(inst.mask);
      std::size_t total = 0;
      for (auto r : runs) total += r;
      EXPECT_EQ(total, inst.mask.size());
      EXPECT_EQ(rle_decode(runs), inst.mask);
    }
  EXPECT_EQ(rle_encode(Bitmap{1, 1, 0}), (std::vector<std::size_t>{0, 2, 1}));
}

TEST(DumpFormat, RecordAndRasterFile) {
  const auto scene = gen_scene_2d(4);
  const auto j = scene_record(scene, 4);
  EXPECT_EQ(j.at("instances").size(), scene.instances.size());
  const auto path = (std::filesystem::temp_directory_path() / "boxer_raster.bin").string();
  write_raster(path, scene.raster);
  EXPECT_EQ(std::filesystem::file_size(path), scene.raster.size() * 4);
  std::ifstream is(path, std::ios::binary);
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
  EXPECT_EQ(std::bit_cast<float>(bits), scene.raster[0]);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace boxer
