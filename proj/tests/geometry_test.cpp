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
#include <numbers>
#include <random>

#include "boxer/geometry/box_ops.hpp"
#include "boxer/geometry/boxes.hpp"
#include "boxer/numerics/grad_check.hpp"
#include "test_util.hpp"

namespace boxer {
namespace {

constexpr double kPi = std::numbers::pi;

bool inside(const BoxR<double>& b, double px, double py) {
  const double a = b.radians();
  const double dx = px - b.x, dy = py - b.y;
  const double u = dx * std::cos(a) + dy * std::sin(a);
  const double v = -dx * std::sin(a) + dy * std::cos(a);
  return std::abs(u) <= b.wx / 2 && std::abs(v) <= b.wy / 2;
}

// Point-sampling estimate of rotated IoU over the union's bounding square.
double monte_carlo_iou(const BoxR<double>& a, const BoxR<double>& b, int samples,
                       std::mt19937_64& rng) {
  const double ra = std::hypot(a.wx, a.wy) / 2, rb = std::hypot(b.wx, b.wy) / 2;
  const double x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
  const double y0 = std::min(a.y - ra, b.y - rb), y1 = std::max(a.y + ra, b.y + rb);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  long inter = 0, uni = 0;
  for (int i = 0; i < samples; ++i) {
    const double px = ux(rng), py = uy(rng);
    const bool ia = inside(a, px, py), ib = inside(b, px, py);
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BoxR<double> random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0.2, 0.8), s(0.05, 0.4), t(0, 1);
  return {c(rng), c(rng), s(rng), s(rng), t(rng)};
}

TEST(ReferenceWindows, SingleCellLevelIsCenteredWithNormalizedSize) {
  const std::vector<LevelShape> levels{{1, 1}};
  const std::vector<std::array<double, 2>> sizes{{4.0 / 8.0, 4.0 / 8.0}};
  const std::vector<double> angles{0.0};
  auto w = make_reference_windows(levels, sizes, angles);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_DOUBLE_EQ(w[0].box.x, 0.5);
  EXPECT_DOUBLE_EQ(w[0].box.y, 0.5);
  EXPECT_DOUBLE_EQ(w[0].box.wx, 0.5);
  EXPECT_DOUBLE_EQ(w[0].box.wy, 0.5);
}

TEST(ReferenceWindows, CountsAndAngleCycling) {
  const std::vector<LevelShape> levels{{8, 8}, {4, 4}, {2, 2}};
  const std::vector<std::array<double, 2>> sizes{{0.25, 0.25}, {0.5, 0.5}, {0.75, 0.75}};
  const std::vector<double> flat{0.0};
  EXPECT_EQ(make_reference_windows(levels, sizes, flat).size(), 64u + 16u + 4u);
  const auto angles = default_rotated_angles();
  auto w = make_reference_windows(levels, sizes, angles);
  ASSERT_EQ(w.size(), 3u * 84u);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(w[i].angle_index, i % 3);
  EXPECT_NEAR(w[0].box.theta, 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(w[1].box.theta, 0.0);
  EXPECT_NEAR(w[2].box.theta, 1.0 / 3.0, 1e-15);
  // Centers sit on pixel centers of their level.
  EXPECT_DOUBLE_EQ(w[3 * 64].box.x, 0.125);
  EXPECT_EQ(w[3 * 64].level, 1u);
}

TEST(ReferenceWindows, RejectsMismatchedSizeList) {
  const std::vector<LevelShape> levels{{8, 8}, {4, 4}};
  const std::vector<std::array<double, 2>> sizes{{0.25, 0.25}};
  const std::vector<double> angles{0.0};
  EXPECT_THROW(make_reference_windows(levels, sizes, angles), ConfigError);
  const std::vector<std::array<double, 2>> two{{0.25, 0.25}, {0.5, 0.5}};
  EXPECT_THROW(make_reference_windows(levels, two, std::span<const double>{}), ConfigError);
}

TEST(OffsetProjection, ZeroWeightsGiveZeroOffsets) {
  std::mt19937_64 rng(1);
  TransformWeights<double> tw{std::vector<double>(6 * 5, 0.0), std::vector<double>(5, 0.0), 5};
  auto q = test::random_tensor<double>({6}, rng);
  auto o = offset_projection<double>(q.data(), BoxR<double>{0.5, 0.5, 0.3, 0.2, 0.1}, tw);
  EXPECT_EQ(o.dx, 0.0);
  EXPECT_EQ(o.dy, 0.0);
  EXPECT_EQ(o.dwx, 0.0);
  EXPECT_EQ(o.dwy, 0.0);
  EXPECT_EQ(o.dtheta, 0.0);
}

TEST(OffsetProjection, TemperatureAndReluGate) {
  const std::vector<double> raw{1.0, 0.0, -2.0, 3.0};
  auto o = offsets_from_projection<double>(raw, BoxR<double>{0.5, 0.5, 0.4, 0.2, 0}, 8.0, 8.0);
  EXPECT_DOUBLE_EQ(o.dx, 0.05);
  EXPECT_DOUBLE_EQ(o.dwx, 0.0);
  EXPECT_DOUBLE_EQ(o.dwy, 3.0 * 0.2 / 8.0);
}

TEST(OffsetProjection, SizesNeverShrink) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 3);
  for (int i = 0; i < 500; ++i) {
    const auto box = random_box(rng);
    const std::vector<double> raw{n(rng), n(rng), n(rng), n(rng), n(rng)};
    const auto out = apply_offsets(box, offsets_from_projection<double>(raw, box, 8, 8));
    EXPECT_GE(out.wx, box.wx);
    EXPECT_GE(out.wy, box.wy);
  }
}

TEST(Transforms, TranslationAndScaling) {
  const BoxAA<double> b{0.5, 0.5, 0.2, 0.2};
  auto t = apply_translation_scaling(b, Offsets<double>{0.1, -0.1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(t.x, 0.6);
  EXPECT_DOUBLE_EQ(t.y, 0.4);
  EXPECT_DOUBLE_EQ(t.wx, 0.2);
  auto s = apply_translation_scaling(b, Offsets<double>{0, 0, 0.05, 0.1, 0});
  EXPECT_DOUBLE_EQ(s.wx, 0.25);
  EXPECT_NEAR(s.wy, 0.3, 1e-15);
}

TEST(Transforms, ZeroOffsetsAreIdentity) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto box = random_box(rng);
    EXPECT_EQ(apply_translation_scaling(box.planar(), Offsets<double>{}), box.planar());
    EXPECT_EQ(apply_offsets(box, Offsets<double>{}), box);
  }
}

TEST(Transforms, RotationMovesAxisPointAndWraps) {
  auto r = apply_rotation(BoxR<double>{0.5, 0.5, 0.4, 0.0, 0.0}, 0.25);  // +pi/2
  EXPECT_DOUBLE_EQ(r.radians(), kPi / 2);
  // Grid points of a zero-height box lie on its width axis: (wx/4, 0) -> (0, wx/4).
  auto pts = grid_coordinates(r, 2);
  EXPECT_NEAR(pts[1].x - 0.5, 0.0, 1e-15);
  EXPECT_NEAR(pts[1].y - 0.5, 0.1, 1e-15);

  auto w = apply_rotation(BoxR<double>{0.5, 0.5, 0.2, 0.2, (2 * kPi - 0.1) / (2 * kPi)},
                          0.2 / (2 * kPi));
  EXPECT_NEAR(w.radians(), 0.1, 1e-12);
}

TEST(GridCoordinates, UnitBoxBinCenters) {
  auto pts = grid_coordinates(BoxAA<double>{0.5, 0.5, 1, 1}, 2);
  const double expect[4][2] = {{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(pts[i].x, expect[i][0]);
    EXPECT_DOUBLE_EQ(pts[i].y, expect[i][1]);
  }
}

TEST(GridCoordinates, SingleBinIsCenter) {
  auto pts = grid_coordinates(BoxR<double>{0.3, 0.6, 0.2, 0.1, 0.3}, 1);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].x, 0.3, 1e-15);
  EXPECT_NEAR(pts[0].y, 0.6, 1e-15);
}

TEST(GridCoordinates, HalfTurnReversesOrder) {
  auto flat = grid_coordinates(BoxAA<double>{0.5, 0.5, 1, 1}, 2);
  auto turned = grid_coordinates(BoxR<double>{0.5, 0.5, 1, 1, 0.5}, 2);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(turned[i].x, flat[3 - i].x, 1e-15);
    EXPECT_NEAR(turned[i].y, flat[3 - i].y, 1e-15);
  }
}

TEST(GridCoordinates, AxisAlignedEqualsZeroAngleAndCentroidIsCenter) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    auto box = random_box(rng);
    const std::size_t m = 1 + static_cast<std::size_t>(i % 6);
    auto aa = grid_coordinates(box.planar(), m);
    BoxR<double> flat = box;
    flat.theta = 0;
    auto r0 = grid_coordinates(flat, m);
    for (std::size_t k = 0; k < aa.size(); ++k) {
      EXPECT_EQ(aa[k].x, r0[k].x);
      EXPECT_EQ(aa[k].y, r0[k].y);
    }
    auto rot = grid_coordinates(box, m);
    double sx = 0, sy = 0;
    for (const auto& p : rot) {
      sx += p.x;
      sy += p.y;
    }
    EXPECT_NEAR(sx / static_cast<double>(rot.size()), box.x, 1e-9);
    EXPECT_NEAR(sy / static_cast<double>(rot.size()), box.y, 1e-9);
  }
}

TEST(Giou, HandValues) {
  const auto a = from_corners(0.0, 0.0, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(giou(a, a), 1.0);
  EXPECT_NEAR(giou(a, from_corners(2.0, 2.0, 3.0, 3.0)), -7.0 / 9.0, 1e-15);
  EXPECT_NEAR(giou(a, from_corners(1.0, 0.0, 2.0, 1.0)), 0.0, 1e-15);
}

TEST(Giou, ZeroAreaBoxHasZeroOverlapButHullPenalty) {
  const auto a = from_corners(0.0, 0.0, 1.0, 1.0);
  const auto line = from_corners(2.0, 0.0, 2.0, 1.0);
  EXPECT_NEAR(giou(a, line), -0.5, 1e-15);
}

TEST(Giou, SymmetricAndBoundedByIou) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_box(rng).planar();
    const auto b = random_box(rng).planar();
    EXPECT_DOUBLE_EQ(giou(a, b), giou(b, a));
    EXPECT_LE(giou(a, b), iou(a, b) + 1e-15);
    EXPECT_GT(giou(a, b), -1.0);
    EXPECT_NEAR(giou(a, a), 1.0, 1e-15);
  }
}

TEST(RotatedIou, IdenticalBoxes) {
  BoxR<double> b{0.4, 0.6, 0.3, 0.1, 0.37};
  EXPECT_NEAR(rotated_iou(b, b), 1.0, 1e-12);
}

TEST(RotatedIou, SquareAndDiamond) {
  BoxR<double> a{0, 0, 1, 1, 0}, b{0, 0, 1, 1, 0.125};
  // Intersection is a regular octagon with inradius 1/2.
  const double inter = 2.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(rotated_iou(a, b), inter / (2.0 - inter), 1e-12);
  std::mt19937_64 rng(6);
  EXPECT_LT(std::abs(rotated_iou(a, b) - monte_carlo_iou(a, b, 1000000, rng)), 1e-2);
}

TEST(RotatedIou, AxisAlignedAgreesWithIou) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    auto a = random_box(rng), b = random_box(rng);
    a.theta = b.theta = 0;
    EXPECT_NEAR(rotated_iou(a, b), iou(a.planar(), b.planar()), 1e-12);
  }
}

TEST(RotatedIou, RigidMotionInvariance) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> turn(0, 1);
  for (int i = 0; i < 100; ++i) {
    auto a = random_box(rng), b = random_box(rng);
    const double phi = turn(rng), ang = 2 * kPi * phi;
    auto move = [&](BoxR<double> box) {
      const double x = box.x * std::cos(ang) - box.y * std::sin(ang);
      const double y = box.x * std::sin(ang) + box.y * std::cos(ang);
      return BoxR<double>{x, y, box.wx, box.wy, wrap_unit(box.theta + phi)};
    };
    EXPECT_NEAR(rotated_iou(a, b), rotated_iou(move(a), move(b)), 1e-9);
  }
}

TEST(RotatedIou, DegenerateIsZero) {
  EXPECT_EQ(rotated_iou(BoxR<double>{0.5, 0.5, 0, 0.2, 0}, BoxR<double>{0.5, 0.5, 0.2, 0.2, 0}),
            0.0);
}

TEST(RotatedIou, AgreesWithMonteCarloOnRandomPairs) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    auto a = random_box(rng);
    auto b = a;
    // Nearby pairs so most overlaps are nonzero.
    std::normal_distribution<double> jitter(0, 0.05);
    b.x += jitter(rng);
    b.y += jitter(rng);
    b.wx = std::max(0.02, b.wx + jitter(rng));
    b.theta = wrap_unit(b.theta + jitter(rng));
    EXPECT_LT(std::abs(rotated_iou(a, b) - monte_carlo_iou(a, b, 200000, rng)), 1e-2);
  }
}

TEST(BoxOps, AttendBoxesMatchesScalarTransforms) {
  std::mt19937_64 rng(10);
  auto raw = test::random_tensor<double>({2, 3, 2, 5}, rng, -2, 2);
  auto windows = test::random_tensor<double>({2, 3, 5}, rng, 0.1, 0.6);
  auto boxes = attend_boxes(raw, windows, 8.0, 8.0);
  for (std::size_t q = 0; q < 6; ++q)
    for (std::size_t j = 0; j < 2; ++j) {
      const BoxR<double> win{windows[q * 5], windows[q * 5 + 1], windows[q * 5 + 2],
                             windows[q * 5 + 3], windows[q * 5 + 4]};
      std::span<const double> r(raw.data().data() + (q * 2 + j) * 5, 5);
      const auto o = offsets_from_projection<double>(r, win, 8.0, 8.0);
      const double* b = boxes.data().data() + (q * 2 + j) * 5;
      EXPECT_NEAR(b[0], win.x + o.dx, 1e-15);
      EXPECT_NEAR(b[1], win.y + o.dy, 1e-15);
      EXPECT_NEAR(b[2], win.wx + o.dwx, 1e-15);
      EXPECT_NEAR(b[3], win.wy + o.dwy, 1e-15);
      EXPECT_NEAR(wrap_unit(b[4]), apply_rotation(win, o.dtheta).theta, 1e-12);
    }
}

TEST(BoxOps, SizeGateSlopeAtZeroIsCentralDifference) {
  // Zero-initialized size projections sit on the gate's kink. The backward
  // pass takes the mean of the one-sided slopes, as a central difference does.
  Tensor<double> raw({1, 1, 1, 4}, {0, 0, 0, 0}, true);
  const Tensor<double> win({1, 1, 5}, {0.5, 0.5, 0.4, 0.2, 0});
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto b = attend_boxes(raw, win, 8.0, 8.0);
    tape.backward(sum(mul(b, Tensor<double>({1, 1, 1, 5}, {0, 0, 1, 1, 0}))));
  }
  EXPECT_DOUBLE_EQ(raw.grad()[2], 0.5 * 0.4 / 8.0);
  EXPECT_DOUBLE_EQ(raw.grad()[3], 0.5 * 0.2 / 8.0);
  EXPECT_EQ(gate_slope(-1e-300), 0.0);
  EXPECT_EQ(gate_slope(1e-300), 1.0);
}

TEST(BoxOps, GridPointsMatchScalarGrid) {
  std::mt19937_64 rng(11);
  auto boxes = test::random_tensor<double>({3, 5}, rng, 0.1, 0.9);
  auto pts = grid_points(boxes, 3);
  ASSERT_EQ(pts.shape(), (Shape{3, 9, 2}));
  for (std::size_t b = 0; b < 3; ++b) {
    auto ref = grid_coordinates(
        BoxR<double>{boxes[b * 5], boxes[b * 5 + 1], boxes[b * 5 + 2], boxes[b * 5 + 3],
                     boxes[b * 5 + 4]},
        3);
    for (std::size_t k = 0; k < 9; ++k) {
      EXPECT_NEAR(pts[(b * 9 + k) * 2], ref[k].x, 1e-15);
      EXPECT_NEAR(pts[(b * 9 + k) * 2 + 1], ref[k].y, 1e-15);
    }
  }
}

TEST(BoxOps, GradCheck) {
  std::mt19937_64 rng(12);
  auto raw = test::random_tensor<double>({2, 2, 3, 5}, rng, -2, 2);
  auto windows = test::random_tensor<double>({2, 2, 5}, rng, 0.1, 0.6);
  auto w1 = test::random_tensor<double>({2, 2, 3, 5}, rng);
  EXPECT_LT(grad_check<double>(
                [&] { return sum(mul(attend_boxes(raw, windows, 8.0, 4.0), w1)); }, {raw}),
            1e-6);
  auto boxes = test::random_tensor<double>({4, 5}, rng, 0.1, 0.9);
  auto w2 = test::random_tensor<double>({4, 4, 2}, rng);
  EXPECT_LT(grad_check<double>([&] { return sum(mul(grid_points(boxes, 2), w2)); }, {boxes}),
            1e-6);
}

}  // namespace
}  // namespace boxer
