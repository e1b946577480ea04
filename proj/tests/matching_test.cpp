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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "boxer/matching/criterion.hpp"
#include "test_util.hpp"

namespace boxer {
namespace {

using test::random_tensor;

double brute_force_min(const CostMatrix& c) {
  const std::size_t n = std::min(c.rows, c.cols);
  const bool by_rows = c.rows <= c.cols;
  std::vector<std::size_t> pick(by_rows ? c.cols : c.rows);
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += by_rows ? c(i, pick[i]) : c(pick[i], i);
    best = std::min(best, total);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

CostMatrix random_cost(std::size_t r, std::size_t c, std::mt19937_64& g, bool integer) {
  CostMatrix m(r, c);
  std::uniform_int_distribution<int> di(0, 9);
  std::uniform_real_distribution<double> dr(-3, 3);
  for (auto& v : m.values) v = integer ? di(g) : dr(g);
  return m;
}

void expect_valid(const Assignment& a, const CostMatrix& c) {
  ASSERT_EQ(a.pairs.size(), std::min(c.rows, c.cols));
  std::vector<bool> row(c.rows), col(c.cols);
  double total = 0;
  for (std::size_t k = 0; k < a.pairs.size(); ++k) {
    auto [i, j] = a.pairs[k];
    ASSERT_LT(i, c.rows);
    ASSERT_LT(j, c.cols);
    EXPECT_FALSE(row[i]);
    EXPECT_FALSE(col[j]);
    row[i] = col[j] = true;
    if (k > 0) {
      EXPECT_LT(a.pairs[k - 1].first, i);
    }
    total += c(i, j);
  }
  EXPECT_NEAR(total, a.total_cost, 1e-9);
}

TEST(Hungarian, SolvesSmallSquareExample) {
  CostMatrix c(3, 3);
  c.values = {4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto a = hungarian(c);
  expect_valid(a, c);
  EXPECT_DOUBLE_EQ(a.total_cost, 5.0);
  const std::vector<std::pair<std::size_t, std::size_t>> want{{0, 1}, {1, 0}, {2, 2}};
  EXPECT_EQ(a.pairs, want);
}

TEST(Hungarian, HandlesRectangularAndEmpty) {
  CostMatrix wide(2, 4);
  wide.values = {5, 1, 9, 9, 1, 0.5, 9, 9};
  auto a = hungarian(wide);
  const std::vector<std::pair<std::size_t, std::size_t>> want{{0, 1}, {1, 0}};
  EXPECT_EQ(a.pairs, want);
  CostMatrix tall = wide.transposed();
  auto b = hungarian(tall);
  const std::vector<std::pair<std::size_t, std::size_t>> want_t{{0, 1}, {1, 0}};
  EXPECT_EQ(b.pairs, want_t);
  EXPECT_TRUE(hungarian(CostMatrix(0, 3)).pairs.empty());
  EXPECT_TRUE(hungarian(CostMatrix(4, 0)).pairs.empty());
}

TEST(Hungarian, RejectsNonFiniteCosts) {
  CostMatrix c(2, 2, 1.0);
  c(1, 0) = std::nan("");
  EXPECT_THROW(hungarian(c), NumericalError);
  c(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(hungarian(c), NumericalError);
}

TEST(Hungarian, MatchesBruteForceOnRandomMatrices) {
  std::mt19937_64 g(31);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_cost(dim(g), dim(g), g, trial % 2 == 0);
    const auto a = hungarian(c);
    expect_valid(a, c);
    EXPECT_NEAR(a.total_cost, brute_force_min(c), 1e-9) << "trial " << trial;
  }
}

TEST(Hungarian, InvariantToPositiveScaleAndShift) {
  std::mt19937_64 g(32);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_cost(1 + trial % 5, 1 + (trial / 5) % 6, g, false);
    CostMatrix s = c;
    for (auto& v : s.values) v = 3.7 * v - 11.0;
    EXPECT_EQ(hungarian(c).pairs, hungarian(s).pairs);
  }
}

std::array<double, 4> corners(const std::vector<double>& b, std::size_t x, std::size_t y, std::size_t w,
                              std::size_t h) {
  return {b[x] - b[w] / 2, b[y] - b[h] / 2, b[x] + b[w] / 2, b[y] + b[h] / 2};
}

double giou_oracle(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ia = (a[2] - a[0]) * (a[3] - a[1]), ib = (b[2] - b[0]) * (b[3] - b[1]);
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih, uni = ia + ib - inter;
  const double hull = (std::max(a[2], b[2]) - std::min(a[0], b[0])) * (std::max(a[3], b[3]) - std::min(a[1], b[1]));
  return inter / uni - (hull - uni) / hull;
}

double focal_cost_oracle(double p) {
  return 0.25 * (1 - p) * (1 - p) * -std::log(p + 1e-8) - 0.75 * p * p * -std::log(1 - p + 1e-8);
}

TEST(MatchCost, TwoDimensionalMatchesHandOracle) {
  LossWeights w;
  const std::vector<double> pbox{0.4, 0.5, 0.3, 0.2}, gbox{0.45, 0.55, 0.2, 0.3};
  const Tensor<double> logits(Shape{1, 3}, {-1.0, 0.5, 2.0});
  const Tensor<double> boxes(Shape{1, 4}, std::vector<double>(pbox));
  SceneTargets t;
  t.labels = {1};
  t.boxes = {gbox};
  const auto c = match_cost_2d(logits, boxes, t, w);
  const double p = 1 / (1 + std::exp(-0.5));
  double l1 = 0;
  for (int k = 0; k < 4; ++k) l1 += std::abs(pbox[k] - gbox[k]);
  const double want = 2 * focal_cost_oracle(p) + 5 * l1 - 2 * giou_oracle(corners(pbox, 0, 1, 2, 3), corners(gbox, 0, 1, 2, 3));
  EXPECT_NEAR(c(0, 0), want, 1e-12);
  EXPECT_THROW(match_cost_3d(logits, boxes, t, w), DimensionError);
}

TEST(MatchCost, ThreeDimensionalMatchesHandOracle) {
  LossWeights w;
  const std::vector<double> pbox{0.4, 0.5, 0.6, 0.3, 0.2, 0.1, 0.99}, gbox{0.45, 0.55, 0.5, 0.2, 0.3, 0.2, 0.01};
  const Tensor<double> logits(Shape{1, 2}, {0.3, -0.7});
  const Tensor<double> boxes(Shape{1, 7}, std::vector<double>(pbox));
  SceneTargets t;
  t.labels = {0};
  t.boxes = {gbox};
  const auto c = match_cost_3d(logits, boxes, t, w);
  const double p = 1 / (1 + std::exp(-0.3));
  double l1 = 0;
  for (int k = 0; k < 6; ++k) l1 += std::abs(pbox[k] - gbox[k]);
  const double want = 2 * focal_cost_oracle(p) + 5 * l1 -
                      2 * giou_oracle(corners(pbox, 0, 1, 3, 4), corners(gbox, 0, 1, 3, 4)) + 4 * 0.02;
  EXPECT_NEAR(c(0, 0), want, 1e-12);
}

TEST(MatchCost, AngleTermUsesWrappedDistance) {
  LossWeights w;
  SceneTargets t;
  t.labels = {0};
  t.boxes = {{0.5, 0.5, 0.5, 0.2, 0.1, 0.2, 0.01}};
  const Tensor<double> logits(Shape{2, 2}, {0.0, 0.0, 0.0, 0.0});
  const Tensor<double> boxes(Shape{2, 7}, {0.5, 0.5, 0.5, 0.2, 0.1, 0.2, 0.99, 0.5, 0.5, 0.5, 0.2, 0.1, 0.2, 0.01});
  const auto c = match_cost_3d(logits, boxes, t, w);
  EXPECT_NEAR(c(0, 0) - c(1, 0), 4 * 0.02, 1e-12);
}

TEST(MatchCost, ClassAgnosticReadsFirstColumn) {
  LossWeights w;
  SceneTargets t;
  t.labels = {2};
  t.boxes = {{0.5, 0.5, 0.2, 0.2}};
  const Tensor<double> logits(Shape{1, 1}, std::vector<double>{1.5});
  const Tensor<double> boxes(Shape{1, 4}, {0.5, 0.5, 0.2, 0.2});
  const auto c = match_cost(logits, boxes, t, w, true);
  EXPECT_NEAR(c(0, 0), 2 * focal_cost_oracle(1 / (1 + std::exp(-1.5))) - 2.0, 1e-12);
}

TEST(MatchCost, PrefersTheOverlappingPrediction) {
  LossWeights w;
  SceneTargets t;
  t.labels = {0, 1};
  t.boxes = {{0.2, 0.2, 0.2, 0.2}, {0.7, 0.7, 0.3, 0.3}};
  const Tensor<double> logits(Shape{3, 2}, {0, 0, 0, 0, 0, 0});
  const Tensor<double> boxes(Shape{3, 4}, {0.7, 0.72, 0.3, 0.28, 0.5, 0.5, 0.9, 0.9, 0.21, 0.2, 0.2, 0.19});
  const auto a = hungarian(match_cost_2d(logits, boxes, t, w));
  const std::vector<std::pair<std::size_t, std::size_t>> want{{0, 1}, {2, 0}};
  EXPECT_EQ(a.pairs, want);
}

TEST(FocalLoss, MatchesHandValue) {
  const double x = 0.3, p = 1 / (1 + std::exp(-x));
  const auto pos = focal_term(x, true, 0.25, 2.0);
  EXPECT_NEAR(pos.loss, 0.25 * (1 - p) * (1 - p) * -std::log(p), 1e-12);
  const auto neg = focal_term(x, false, 0.25, 2.0);
  EXPECT_NEAR(neg.loss, 0.75 * p * p * -std::log(1 - p), 1e-12);
  const auto far = focal_term(-60.0, true, 0.25, 2.0);
  EXPECT_NEAR(far.loss, 0.25 * 60.0, 1e-9);
}

TEST(FocalLoss, SumsOverEveryLogit) {
  const Tensor<double> logits(Shape{2, 2}, {0.5, -1.0, 2.0, 0.1});
  const auto l = sigmoid_focal_loss(logits, {1, -1}, 0.25, 2.0, 2.0);
  const double want = (focal_term(0.5, false, 0.25, 2).loss + focal_term(-1.0, true, 0.25, 2).loss +
                       focal_term(2.0, false, 0.25, 2).loss + focal_term(0.1, false, 0.25, 2).loss) /
                      2.0;
  EXPECT_NEAR(l.item(), want, 1e-12);
}

TEST(LossKernels, PassGradChecks) {
  std::mt19937_64 g(33);
  auto logits = random_tensor<double>({4, 3}, g, -2.0, 2.0);
  auto r1 = grad_check_named<double>([&] { return sigmoid_focal_loss(logits, {0, -1, 2, 1}, 0.25, 2.0, 3.0); },
                                     {{"focal", logits}}, 1e-6);
  EXPECT_LT(r1.max_rel_err, 1e-6);

  auto pred = random_tensor<double>({3, 7}, g, 0.2, 0.8);
  const auto target = random_tensor<double>({3, 7}, g, 0.2, 0.8);
  auto r2 = grad_check_named<double>([&] { return l1_loss(pred, target, {0, 1, 2, 3, 4, 5}, 2.0); },
                                     {{"l1", pred}}, 1e-6);
  EXPECT_LT(r2.max_rel_err, 1e-6);
  auto r3 = grad_check_named<double>([&] { return angle_l1_loss(pred, target, 6, 2.0); }, {{"angle", pred}}, 1e-6);
  EXPECT_LT(r3.max_rel_err, 1e-6);

  auto boxes = random_tensor<double>({4, 4}, g, 0.2, 0.4);
  Tensor<double> tgt(Shape{4, 4}, {0.3, 0.3, 0.2, 0.25, 0.8, 0.8, 0.1, 0.1, 0.35, 0.25, 0.3, 0.1, 0.1, 0.5, 0.15, 0.3});
  auto r4 = grad_check_named<double>([&] { return giou_loss(boxes, tgt, {0, 1, 2, 3}, 1.5); }, {{"giou", boxes}}, 1e-7);
  EXPECT_LT(r4.max_rel_err, 1e-5);

  auto mask_logits = random_tensor<double>({2, 3, 3, 2}, g, -2.0, 2.0);
  Tensor<double> mt(Shape{2, 3, 3}, {1, 0, 1, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0, 0, 0});
  auto r5 = grad_check_named<double>(
      [&] {
        const auto sel = select_channels(mask_logits, {1, 0});
        return add(mask_bce_loss(sel, mt, 2.0), mask_dice_loss(sel, mt, 2.0));
      },
      {{"mask", mask_logits}}, 1e-6);
  EXPECT_LT(r5.max_rel_err, 1e-6);
}

TEST(LossKernels, AngleLossWrapsAcrossZero) {
  const Tensor<double> pred(Shape{1, 7}, {0, 0, 0, 0, 0, 0, 0.99});
  const Tensor<double> target(Shape{1, 7}, {0, 0, 0, 0, 0, 0, 0.01});
  EXPECT_NEAR(angle_l1_loss(pred, target, 6, 1.0).item(), 0.02, 1e-12);
}

TEST(LossKernels, PerfectPredictionsHitTheFloor) {
  const Tensor<double> b(Shape{2, 4}, {0.3, 0.4, 0.2, 0.1, 0.6, 0.6, 0.3, 0.5});
  EXPECT_DOUBLE_EQ(l1_loss(b, b, {0, 1, 2, 3}, 1.0).item(), 0.0);
  EXPECT_NEAR(giou_loss(b, b, {0, 1, 2, 3}, 1.0).item(), 0.0, 1e-12);
  const Tensor<double> far(Shape{1, 4}, {0.1, 0.1, 0.1, 0.1});
  const Tensor<double> other(Shape{1, 4}, {0.9, 0.9, 0.1, 0.1});
  EXPECT_NEAR(giou_loss(far, other, {0, 1, 2, 3}, 1.0).item(), 1.0 + (0.9 * 0.9 - 0.02) / 0.81, 1e-12);
}

TEST(LossKernels, DiceOnBinaryProbabilities) {
  EXPECT_DOUBLE_EQ(dice_from_probs({1, 1, 0}, {1, 1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(dice_from_probs({1, 0, 0}, {0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(dice_from_probs({0, 0}, {0, 0}), 0.0);
  EXPECT_NEAR(dice_from_probs({1, 1, 0, 0}, {1, 0, 0, 0}), 1.0 - 2.0 / 3.0, 1e-12);
  const Tensor<double> logits(Shape{1, 2, 2}, {40, 40, -40, -40});
  const Tensor<double> t(Shape{1, 2, 2}, {1, 1, 0, 0});
  EXPECT_NEAR(mask_dice_loss(logits, t, 1.0).item(), 0.0, 1e-12);
  EXPECT_NEAR(mask_bce_loss(logits, t, 1.0).item(), 0.0, 1e-12);
}

TEST(CropMask, ReadsNearestPixelAtBinCenters) {
  const std::size_t h = 8, w = 8;
  std::vector<std::uint8_t> mask(h * w, 0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < 4; ++j) mask[i * w + j] = 1;  // left half
  const auto full = crop_mask(mask, h, w, {0.25, 0.5, 0.5, 1.0}, 4);
  for (double v : full) EXPECT_EQ(v, 1.0);
  const auto half = crop_mask(mask, h, w, {0.5, 0.5, 1.0, 1.0}, 4);
  for (std::size_t v = 0; v < 4; ++v)
    for (std::size_t u = 0; u < 4; ++u) EXPECT_EQ(half[v * 4 + u], u < 2 ? 1.0 : 0.0);
  const auto outside = crop_mask(mask, h, w, {1.2, 0.5, 0.2, 0.2}, 2);
  for (double v : outside) EXPECT_EQ(v, 0.0);
}

ModelConfig tiny(Mode mode) {
  ModelConfig c = mode == Mode::k2D ? ModelConfig{} : ModelConfig::defaults_3d();
  c.image_height = c.image_width = 16;
  c.d = 8, c.d_ff = 8, c.heads = 2, c.levels = 2;
  c.enc_layers = 1, c.dec_layers = 2;
  c.m_box = 2, c.m_mask = 2, c.top_k = 4;
  c.window_sizes = {0.25, 0.5};
  return c;
}

void perturb(BoxerModel<double>& model, std::mt19937_64& g, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  model.for_each_param([&](const std::string&, Tensor<double>& t, ParamGroup) {
    for (auto& v : t.mutable_data()) v += u(g);
  });
}

SceneTargets one_object_2d() {
  SceneTargets t;
  t.height = t.width = 16;
  t.labels = {1};
  t.boxes = {{0.4, 0.55, 0.35, 0.3}};
  std::vector<std::uint8_t> m(256, 0);
  for (std::size_t i = 6; i < 13; ++i)
    for (std::size_t j = 4; j < 10; ++j) m[i * 16 + j] = 1;
  t.masks = {m};
  return t;
}

double focal_sum(const Tensor<double>& logits, const std::vector<int>& labels) {
  const std::size_t c = logits.size(1);
  double total = 0;
  for (std::size_t i = 0; i < logits.size(0); ++i)
    for (std::size_t k = 0; k < c; ++k) {
      const double p = 1 / (1 + std::exp(-logits[i * c + k]));
      const bool pos = labels[i] == static_cast<int>(k);
      total += pos ? 0.25 * (1 - p) * (1 - p) * -std::log(p) : 0.75 * p * p * -std::log(1 - p);
    }
  return total;
}

TEST(TotalLoss, SingleObjectMatchesHandOracle) {
  const ModelConfig c = tiny(Mode::k2D);
  BoxerModel<double> model(c, 41);
  std::mt19937_64 g(42);
  perturb(model, g, 0.3);
  const auto raster = random_tensor<double>({16, 16, 3}, g, 0.0, 1.0);
  const auto targets = one_object_2d();
  const LossWeights w;
  const auto out = model.forward(raster);
  const auto plan = make_loss_plan(model, out, targets, w);
  const auto loss = total_loss(model, out, targets, plan, w);

  const auto& gt = targets.boxes[0];
  double want = 0;
  auto set_term = [&](const Tensor<double>& logits, const Tensor<double>& boxes, bool agnostic) {
    // Best prediction by brute force over the matching cost.
    std::size_t best = 0;
    double best_cost = 1e300;
    for (std::size_t i = 0; i < logits.size(0); ++i) {
      const std::vector<double> b(boxes.data().begin() + i * 4, boxes.data().begin() + i * 4 + 4);
      const double p = 1 / (1 + std::exp(-logits[i * logits.size(1) + (agnostic ? 0 : 1)]));
      double l1 = 0;
      for (int k = 0; k < 4; ++k) l1 += std::abs(b[k] - gt[k]);
      const double cost = 2 * focal_cost_oracle(p) + 5 * l1 - 2 * giou_oracle(corners(b, 0, 1, 2, 3), corners(gt, 0, 1, 2, 3));
      if (cost < best_cost) best_cost = cost, best = i;
    }
    std::vector<int> labels(logits.size(0), -1);
    labels[best] = agnostic ? 0 : 1;
    const std::vector<double> b(boxes.data().begin() + best * 4, boxes.data().begin() + best * 4 + 4);
    double l1 = 0;
    for (int k = 0; k < 4; ++k) l1 += std::abs(b[k] - gt[k]);
    return std::pair{best, 2 * focal_sum(logits, labels) + 5 * l1 +
                               2 * (1 - giou_oracle(corners(b, 0, 1, 2, 3), corners(gt, 0, 1, 2, 3)))};
  };
  std::size_t last_match = 0;
  for (const auto& layer : out.layers) {
    auto [idx, v] = set_term(layer.logits, layer.boxes, false);
    want += v;
    last_match = idx;
  }
  want += set_term(out.enc_logits, out.enc_boxes, true).second;

  // Mask terms on the last-layer match, target cropped inside its box.
  const std::size_t s = c.mask_side();
  const auto masks = model.mask_logits(out, {last_match});
  const auto& pb = out.layers.back().boxes;
  const auto crop = crop_mask(targets.masks[0], 16, 16, {pb[last_match * 4], pb[last_match * 4 + 1],
                                                         pb[last_match * 4 + 2], pb[last_match * 4 + 3]}, s);
  double bce = 0, inter = 0, denom = 0;
  for (std::size_t i = 0; i < s * s; ++i) {
    const double x = masks[i * c.num_classes + 1], p = 1 / (1 + std::exp(-x)), t = crop[i];
    bce += -(t * std::log(p) + (1 - t) * std::log(1 - p));
    inter += p * t;
    denom += p + t;
  }
  want += 5 * bce / double(s * s) + 5 * (1 - 2 * inter / denom);

  EXPECT_NEAR(loss.total.item(), want, 1e-9);
  double term_sum = 0;
  for (auto [name, v] : loss.terms) term_sum += v;
  EXPECT_NEAR(term_sum, loss.total.item(), 1e-9);
  EXPECT_TRUE(loss.terms.count("enc_class"));
  EXPECT_TRUE(loss.terms.count("mask_dice"));
}

TEST(TotalLoss, EmptySceneKeepsOnlyClassTerms) {
  const ModelConfig c = tiny(Mode::k2D);
  BoxerModel<double> model(c, 43);
  std::mt19937_64 g(44);
  const auto out = model.forward(random_tensor<double>({16, 16, 3}, g, 0.0, 1.0));
  SceneTargets t;
  t.height = t.width = 16;
  const LossWeights w;
  const auto plan = make_loss_plan(model, out, t, w);
  const auto loss = total_loss(model, out, t, plan, w);
  EXPECT_EQ(loss.terms.size(), 2u);  // class, enc_class
  EXPECT_TRUE(std::isfinite(loss.total.item()));
}

void composite_grad_check(Mode mode) {
  const ModelConfig c = tiny(mode);
  BoxerModel<double> model(c, 45);
  std::mt19937_64 g(46);
  perturb(model, g, 0.3);
  const auto raster = random_tensor<double>({16, 16, c.in_channels}, g, 0.0, 1.0);
  SceneTargets t = one_object_2d();
  if (mode == Mode::k3D) {
    t.labels = {0};
    t.boxes = {{0.4, 0.55, 0.5, 0.3, 0.15, 0.2, 0.3}};
    t.masks.clear();
  }
  const LossWeights w;
  ModelOutput<double> ref;
  LossPlan<double> plan;
  {
    NoGradScope<double> off;
    ref = model.forward(raster);
    plan = make_loss_plan(model, ref, t, w);
  }
  auto report = grad_check_named<double>(
      [&] {
        const auto out = model.forward(raster, &ref.plan);
        return total_loss(model, out, t, plan, w).total;
      },
      model.named_parameters(), 1e-6);
  EXPECT_LT(report.max_rel_err, 1e-3);
  for (const auto& e : report.entries) EXPECT_LT(e.max_rel_err, 1e-3) << e.name << " idx " << e.worst_index << " a " << e.analytic << " n " << e.numeric;
}

TEST(TotalLoss, PassesGradCheck2D) { composite_grad_check(Mode::k2D); }
TEST(TotalLoss, PassesGradCheck3D) { composite_grad_check(Mode::k3D); }

}  // namespace
}  // namespace boxer
