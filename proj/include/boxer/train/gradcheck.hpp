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

#include <chrono>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "boxer/train/run_config.hpp"

namespace boxer {

/// One kernel-level check: a named function producing a report, and the
/// relative-error limit it must stay under.
struct KernelCase {
  std::string name;
  double threshold = 1e-4;
  std::function<GradCheckReport()> run;
};

struct KernelResult {
  std::string name;
  double threshold = 0;
  GradCheckReport report;
  bool passed() const { return report.max_rel_err < threshold; }
};

struct GradcheckSummary {
  std::vector<KernelResult> kernels;
  GradCheckReport composite;
  double composite_threshold = 1e-3;
  double seconds_kernels = 0, seconds_composite = 0;

  bool kernels_passed() const {
    return std::all_of(kernels.begin(), kernels.end(), [](const auto& k) { return k.passed(); });
  }
  bool composite_passed() const { return composite.max_rel_err < composite_threshold; }
  bool passed() const { return kernels_passed() && composite_passed(); }

  /// Failing checks as "suite: parameter path (error)".
  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& k : kernels)
      for (const auto& e : k.report.entries)
        if (e.max_rel_err >= k.threshold)
          out.push_back(k.name + ": " + e.name + " (" + std::to_string(e.max_rel_err) + ")");
    for (const auto& e : composite.entries)
      if (e.max_rel_err >= composite_threshold)
        out.push_back("composite: " + e.name + " (" + std::to_string(e.max_rel_err) + ")");
    return out;
  }
};

namespace detail {

using D = double;

inline Tensor<D> rand_t(Shape shape, std::mt19937_64& g, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<D> v(shape_numel(shape));
  for (auto& x : v) x = u(g);
  return Tensor<D>(std::move(shape), std::move(v));
}

/// Values in [lo, hi] with random sign: keeps kinks at zero out of reach.
inline Tensor<D> rand_away_from_zero(Shape shape, std::mt19937_64& g, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<D> v(shape_numel(shape));
  for (auto& x : v) x = sign(g) ? u(g) : -u(g);
  return Tensor<D>(std::move(shape), std::move(v));
}

/// sum(f(inputs) * w) with a fixed random w, so every output entry matters.
inline std::function<Tensor<D>()> weighted(std::function<Tensor<D>()> f, std::mt19937_64& g) {
  NoGradScope<D> off;
  const auto shape = f().shape();
  auto w = rand_t(shape, g);
  return [f = std::move(f), w] { return sum(mul(f(), w)); };
}

constexpr D kEps = 1e-6;

inline GradCheckReport check(std::function<Tensor<D>()> f, std::vector<NamedTensor<D>> params, std::mt19937_64& g) {
  return grad_check_named<D>(weighted(std::move(f), g), std::move(params), kEps);
}

}  // namespace detail

/// Gradient checks for every differentiable kernel at 64-bit precision.
inline std::vector<KernelCase> kernel_cases(std::uint64_t seed = 7) {
  using detail::check;
  using detail::D;
  using detail::rand_t;
  auto rng = std::make_shared<std::mt19937_64>(seed);
  std::vector<KernelCase> cases;
  auto add_case = [&](std::string name, double threshold, std::function<GradCheckReport(std::mt19937_64&)> fn) {
    cases.push_back({std::move(name), threshold, [rng, fn] { return fn(*rng); }});
  };

  add_case("matmul", 1e-4, [](auto& g) {
    auto a = rand_t({3, 4}, g), b = rand_t({4, 5}, g);
    return check([=] { return matmul(a, b); }, {{"a", a}, {"b", b}}, g);
  });
  add_case("bmm", 1e-4, [](auto& g) {
    auto a = rand_t({2, 3, 4}, g), b = rand_t({2, 4, 5}, g), c = rand_t({2, 5, 4}, g);
    return check([=] { return add(bmm(a, b), bmm(a, c, true)); }, {{"a", a}, {"b", b}, {"b_transposed", c}}, g);
  });
  add_case("linear", 1e-4, [](auto& g) {
    auto x = rand_t({2, 3, 4}, g), w = rand_t({4, 5}, g), b = rand_t({5}, g);
    return check([=] { return linear(x, w, b); }, {{"x", x}, {"weight", w}, {"bias", b}}, g);
  });
  add_case("elementwise", 1e-4, [](auto& g) {
    auto a = rand_t({3, 4}, g), b = rand_t({3, 4}, g);
    return check([=] { return add(mul(a, b), sub(scale(a, 0.7), b)); }, {{"a", a}, {"b", b}}, g);
  });
  add_case("relu", 1e-4, [](auto& g) {
    auto x = detail::rand_away_from_zero({4, 5}, g, 0.05, 1.0);
    return check([=] { return relu(x); }, {{"x", x}}, g);
  });
  add_case("sigmoid", 1e-4, [](auto& g) {
    auto x = rand_t({5}, g, -3, 3);
    return check([=] { return sigmoid(x); }, {{"x", x}}, g);
  });
  add_case("inverse_sigmoid", 1e-4, [](auto& g) {
    auto x = rand_t({6}, g, 0.05, 0.95);
    return check([=] { return inverse_sigmoid(x); }, {{"x", x}}, g);
  });
  add_case("softmax", 1e-4, [](auto& g) {
    auto x = rand_t({5}, g, -2, 2), y = rand_t({3, 4}, g, -2, 2);
    return check([=] { return add(sum(softmax(x, 0)), add(sum(mul(softmax(y, 1), y)), sum(mul(softmax(y, 0), y)))); },
                 {{"vector", x}, {"matrix", y}}, g);
  });
  add_case("layer_norm", 1e-4, [](auto& g) {
    auto x = rand_t({3, 6}, g), gain = rand_t({6}, g), bias = rand_t({6}, g);
    return check([=] { return layer_norm(x, gain, bias); }, {{"x", x}, {"gain", gain}, {"bias", bias}}, g);
  });
  add_case("reductions", 1e-4, [](auto& g) {
    auto x = rand_t({2, 4}, g);
    return check([=] { return add(sum(mul(x, x)), mean(x)); }, {{"x", x}}, g);
  });
  add_case("shape_ops", 1e-4, [](auto& g) {
    auto x = rand_t({2, 3, 4}, g), y = rand_t({5, 4}, g);
    return check(
        [=] {
          auto p = reshape(permute(x, {2, 0, 1}), {4, 6});
          auto rows = concat_rows<D>({reshape(x, {6, 4}), y});
          auto picked = gather_rows(rows, {10, 0, 3, 3, 7});
          auto sliced = slice_rows(rows, 2, 9);
          auto rep = reshape(repeat_rows(slice_rows(y, 0, 2), 3), {6, 4});
          return concat_rows<D>({reshape(p, {6, 4}), picked, sliced, rep});
        },
        {{"x", x}, {"y", y}}, g);
  });
  add_case("avg_pool2", 1e-4, [](auto& g) {
    auto x = rand_t({4, 6, 3}, g);
    return check([=] { return avg_pool2(x); }, {{"x", x}}, g);
  });
  add_case("grid_sample.map", 1e-4, [](auto& g) {
    auto map = rand_t({5, 6, 3}, g), pts = rand_t({7, 2}, g, -0.1, 1.1);
    return check([=] { return grid_sample(map, pts); }, {{"map", map}}, g);
  });
  add_case("grid_sample.points", 1e-3, [](auto& g) {
    auto map = rand_t({5, 6, 3}, g), pts = rand_t({7, 2}, g, 0.05, 0.95);
    return check([=] { return grid_sample(map, pts); }, {{"points", pts}}, g);
  });
  add_case("sample_pyramid.levels", 1e-4, [](auto& g) {
    std::vector<Tensor<D>> levels{rand_t({4, 4, 4}, g), rand_t({2, 2, 4}, g)};
    auto pts = rand_t({2, 2, 2, 3, 2}, g, 0.05, 0.95);
    return check([=] { return sample_pyramid(levels, pts); }, {{"level0", levels[0]}, {"level1", levels[1]}}, g);
  });
  add_case("sample_pyramid.points", 1e-3, [](auto& g) {
    std::vector<Tensor<D>> levels{rand_t({4, 4, 4}, g), rand_t({2, 2, 4}, g)};
    auto pts = rand_t({2, 2, 2, 3, 2}, g, 0.05, 0.95);
    return check([=] { return sample_pyramid(levels, pts); }, {{"points", pts}}, g);
  });
  add_case("attend_pyramid.values", 1e-4, [](auto& g) {
    std::vector<Tensor<D>> levels{rand_t({4, 4, 4}, g), rand_t({2, 2, 4}, g)};
    auto pts = rand_t({2, 2, 2, 3, 2}, g, 0.05, 0.95);
    auto w = rand_t({2, 2, 6}, g, 0, 1);
    return check([=] { return attend_pyramid(levels, pts, w); },
                 {{"level0", levels[0]}, {"level1", levels[1]}, {"weights", w}}, g);
  });
  add_case("attend_pyramid.points", 1e-3, [](auto& g) {
    std::vector<Tensor<D>> levels{rand_t({4, 4, 4}, g), rand_t({2, 2, 4}, g)};
    auto pts = rand_t({2, 2, 2, 3, 2}, g, 0.05, 0.95);
    auto w = rand_t({2, 2, 6}, g, 0, 1);
    return check([=] { return attend_pyramid(levels, pts, w); }, {{"points", pts}}, g);
  });
  add_case("sigmoid_offset", 1e-4, [](auto& g) {
    auto delta = rand_t({3, 4}, g, -2, 2), prior = rand_t({3, 4}, g, 0.1, 0.9);
    return check([=] { return sigmoid_offset(delta, prior); }, {{"delta", delta}}, g);
  });
  add_case("attend_boxes", 1e-4, [](auto& g) {
    auto raw = rand_t({2, 2, 2, 5}, g, -0.5, 0.5), win = rand_t({2, 2, 5}, g, 0.2, 0.8);
    return check([=] { return attend_boxes(raw, win, D(8), D(8)); }, {{"raw", raw}}, g);
  });
  add_case("grid_points", 1e-4, [](auto& g) {
    auto boxes = rand_t({3, 5}, g, 0.1, 0.9);
    return check([=] { return grid_points(boxes, 3); }, {{"boxes", boxes}}, g);
  });
  add_case("decode_boxes", 1e-4, [](auto& g) {
    auto d4 = rand_t({3, 4}, g, -2, 2), d7 = rand_t({3, 7}, g, -2, 2);
    auto win = rand_t({3, 5}, g, 0.1, 0.9);
    for (std::size_t i = 0; i < 3; ++i) win.mutable_data()[i * 5 + 4] = 0.5;
    return check([=] { return concat_rows<D>({reshape(decode_boxes(d4, win), {12, 1}), reshape(decode_boxes(d7, win), {21, 1})}); },
                 {{"delta4", d4}, {"delta7", d7}}, g);
  });
  add_case("losses", 1e-4, [](auto& g) {
    auto logits = rand_t({4, 3}, g, -2, 2);
    auto boxes = rand_t({3, 7}, g, 0.25, 0.45);
    Tensor<D> target(Shape{3, 7}, {0.3, 0.3, 0.5, 0.2, 0.25, 0.2, 0.1, 0.6, 0.7, 0.5, 0.1, 0.3, 0.2, 0.45,
                                   0.35, 0.2, 0.4, 0.3, 0.1, 0.2, 0.8});
    auto masks = rand_t({2, 3, 3, 2}, g, -2, 2);
    Tensor<D> mt(Shape{2, 3, 3}, {1, 0, 1, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0, 0, 0});
    return grad_check_named<D>(
        [=] {
          auto total = sigmoid_focal_loss(logits, {0, -1, 2, 1}, 0.25, 2.0, 2.0);
          total = add(total, l1_loss(boxes, target, {0, 1, 2, 3, 4, 5}, 2.0));
          total = add(total, angle_l1_loss(boxes, target, 6, 2.0));
          total = add(total, giou_loss(boxes, target, {0, 1, 3, 4}, 2.0));
          const auto sel = select_channels(masks, {1, 0});
          total = add(total, mask_bce_loss(sel, mt, 2.0));
          return add(total, mask_dice_loss(sel, mt, 2.0));
        },
        {{"logits", logits}, {"boxes", boxes}, {"mask_logits", masks}}, detail::kEps);
  });
  return cases;
}

/// A small model configuration whose full gradient check runs in seconds.
inline RunConfig gradcheck_config(Mode mode = Mode::k2D) {
  RunConfig c = RunConfig::defaults(mode);
  auto& m = c.model;
  m.image_height = m.image_width = 32;
  m.d = 16, m.d_ff = 16, m.heads = 2, m.levels = 3;
  m.enc_layers = 1, m.dec_layers = 2;
  m.m_box = 2, m.m_mask = 2, m.top_k = 5;
  m.window_sizes = {0.3, 0.45, 0.7};
  c.sync_scenes();
  return c;
}

namespace detail {

// True when some matched prediction sits exactly on its target in an L1
// coordinate, where the loss has no derivative.
inline bool on_l1_kink(const Tensor<double>& boxes, const Assignment& match, const SceneTargets& targets) {
  const std::size_t k = boxes.size(1);
  for (auto [pi, gi] : match.pairs)
    for (std::size_t col : BoxColumns::for_dims(k).l1)
      if (std::abs(boxes[pi * k + col] - targets.boxes[gi][col]) < 1e-6) return true;
  return false;
}

}  // namespace detail

/// Loss of a fresh model on a one-object scene against finite differences,
/// with proposals and matching held fixed. Scenes whose target lands exactly
/// on a matched prediction coordinate are skipped.
inline GradCheckReport composite_gradcheck(const RunConfig& cfg) {
  BoxerModel<double> model(cfg.model, scene_seed(cfg.seed, 0x6763));
  for (std::uint64_t attempt = 1;; ++attempt) {
    SceneTargets targets;
    Tensor<double> input;
    if (cfg.mode() == Mode::k2D) {
      SceneConfig2D sc = cfg.scene2d;
      sc.min_objects = sc.max_objects = 1;
      const auto s = gen_scene_2d(scene_seed(cfg.seed, attempt), sc);
      input = scene_tensor<double>(s);
      targets = scene_targets(s);
    } else {
      SceneConfig3D sc = cfg.scene3d;
      sc.min_objects = sc.max_objects = 1;
      const auto s = gen_scene_3d(scene_seed(cfg.seed, attempt), sc);
      input = scene_tensor<double>(s);
      targets = scene_targets(s);
    }
    ModelOutput<double> ref;
    LossPlan<double> plan;
    {
      NoGradScope<double> off;
      ref = model.forward(input);
      plan = make_loss_plan(model, ref, targets, cfg.loss);
    }
    bool kink = detail::on_l1_kink(ref.enc_boxes, plan.encoder, targets);
    for (std::size_t i = 0; i < ref.layers.size(); ++i)
      kink = kink || detail::on_l1_kink(ref.layers[i].boxes, plan.decoder[i], targets);
    if (kink && attempt < 64) continue;
    return grad_check_named<double>(
        [&] { return total_loss(model, model.forward(input, &ref.plan), targets, plan, cfg.loss).total; },
        model.named_parameters(), 1e-6);
  }
}

inline GradcheckSummary run_gradcheck(const RunConfig& cfg, const std::vector<KernelCase>& cases) {
  GradcheckSummary s;
  auto t0 = std::chrono::steady_clock::now();
  for (const auto& c : cases) s.kernels.push_back({c.name, c.threshold, c.run()});
  auto t1 = std::chrono::steady_clock::now();
  s.composite = composite_gradcheck(cfg);
  auto t2 = std::chrono::steady_clock::now();
  s.seconds_kernels = std::chrono::duration<double>(t1 - t0).count();
  s.seconds_composite = std::chrono::duration<double>(t2 - t1).count();
  return s;
}

}  // namespace boxer
