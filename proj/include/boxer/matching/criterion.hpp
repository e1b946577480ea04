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
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "boxer/matching/hungarian.hpp"
#include "boxer/matching/losses.hpp"
#include "boxer/model/boxer_model.hpp"

namespace boxer {

struct LossWeights {
  double l1_box = 5.0;
  double giou = 2.0;
  double angle_l1 = 4.0;
  double focal_class = 2.0;
  double bce_mask = 5.0;
  double dice_mask = 5.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  void validate() const {
    for (double w : {l1_box, giou, angle_l1, focal_class, bce_mask, dice_mask, focal_alpha, focal_gamma})
      if (!(w >= 0)) throw ConfigError("loss weights must be non-negative");
  }
};

/// Ground truth for one scene. Boxes are normalized: (cx, cy, w, h) in 2D,
/// (x, y, z, wx, wy, wz, theta) in 3D with theta in turns.
struct SceneTargets {
  std::size_t height = 0, width = 0;
  std::vector<int> labels;
  std::vector<std::vector<double>> boxes;
  std::vector<std::vector<std::uint8_t>> masks;  // height*width each, 2D only

  std::size_t size() const { return labels.size(); }
};

/// Columns used by each box term, per box width.
struct BoxColumns {
  std::vector<std::size_t> l1;
  std::array<std::size_t, 4> planar;  // cx, cy, w, h for GIoU
  bool has_angle = false;
  std::size_t angle = 0;

  static BoxColumns for_dims(std::size_t k) {
    if (k == 4) return {{0, 1, 2, 3}, {0, 1, 2, 3}, false, 0};
    return {{0, 1, 2, 3, 4, 5}, {0, 1, 3, 4}, true, 6};
  }
};

/// Focal-style classification cost: positive minus negative focal terms.
inline double focal_class_cost(double p, double alpha, double gamma) {
  constexpr double kEps = 1e-8;
  const double pos = alpha * std::pow(1 - p, gamma) * -std::log(p + kEps);
  const double neg = (1 - alpha) * std::pow(p, gamma) * -std::log(1 - p + kEps);
  return pos - neg;
}

/// Matching cost between predictions (class logits [K x C], boxes [K x k])
/// and targets. Class-agnostic matching reads logit column 0. No mask term.
template <class T>
CostMatrix match_cost(const Tensor<T>& logits, const Tensor<T>& boxes, const SceneTargets& targets,
                      const LossWeights& w, bool class_agnostic = false) {
  const std::size_t kq = logits.size(0), c = logits.size(1), k = boxes.size(1), m = targets.size();
  const BoxColumns cols = BoxColumns::for_dims(k);
  CostMatrix cost(kq, m);
  for (std::size_t i = 0; i < kq; ++i) {
    std::array<double, 4> p;
    for (int e = 0; e < 4; ++e) p[e] = boxes[i * k + cols.planar[e]];
    for (std::size_t j = 0; j < m; ++j) {
      const auto& g = targets.boxes[j];
      const std::size_t cls = class_agnostic ? 0 : static_cast<std::size_t>(targets.labels[j]);
      const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i * c + cls])));
      double l1 = 0;
      for (std::size_t col : cols.l1) l1 += std::abs(static_cast<double>(boxes[i * k + col]) - g[col]);
      std::array<double, 4> t;
      for (int e = 0; e < 4; ++e) t[e] = g[cols.planar[e]];
      double v = w.focal_class * focal_class_cost(prob, w.focal_alpha, w.focal_gamma) + w.l1_box * l1 -
                 w.giou * giou_with_grad(p, t).giou;
      if (cols.has_angle)
        v += w.angle_l1 * wrapped_angle_distance(static_cast<double>(boxes[i * k + cols.angle]), g[cols.angle]);
      cost(i, j) = v;
    }
  }
  return cost;
}

template <class T>
CostMatrix match_cost_2d(const Tensor<T>& logits, const Tensor<T>& boxes, const SceneTargets& targets,
                         const LossWeights& w) {
  detail::require(boxes.size(1) == 4, "2d matching expects 4-wide boxes");
  return match_cost(logits, boxes, targets, w);
}

template <class T>
CostMatrix match_cost_3d(const Tensor<T>& logits, const Tensor<T>& boxes, const SceneTargets& targets,
                         const LossWeights& w) {
  detail::require(boxes.size(1) == 7, "3d matching expects 7-wide boxes");
  return match_cost(logits, boxes, targets, w);
}

/// Rasterizes a full-image binary mask into an s x s grid spanning `box`
/// (cx, cy, w, h), reading the nearest image pixel at each bin center.
inline std::vector<double> crop_mask(const std::vector<std::uint8_t>& mask, std::size_t height,
                                     std::size_t width, const std::array<double, 4>& box, std::size_t s) {
  std::vector<double> out(s * s, 0.0);
  const double x0 = box[0] - box[2] / 2, y0 = box[1] - box[3] / 2;
  for (std::size_t v = 0; v < s; ++v)
    for (std::size_t u = 0; u < s; ++u) {
      const double px = (x0 + (static_cast<double>(u) + 0.5) / static_cast<double>(s) * box[2]) *
                        static_cast<double>(width);
      const double py = (y0 + (static_cast<double>(v) + 0.5) / static_cast<double>(s) * box[3]) *
                        static_cast<double>(height);
      const double fx = std::floor(px), fy = std::floor(py);
      if (fx < 0 || fy < 0 || fx >= static_cast<double>(width) || fy >= static_cast<double>(height)) continue;
      out[v * s + u] = mask[static_cast<std::size_t>(fy) * width + static_cast<std::size_t>(fx)];
    }
  return out;
}

/// Discrete choices behind a loss evaluation: matchings and mask targets.
template <class T>
struct LossPlan {
  std::vector<Assignment> decoder;  // one per decoder layer
  Assignment encoder;
  std::vector<std::size_t> mask_rows;      // last-layer queries with a mask loss
  std::vector<std::size_t> mask_channels;  // their target classes
  Tensor<T> mask_targets;                  // [R x S x S]
};

template <class T>
struct LossResult {
  Tensor<T> total;
  std::map<std::string, double> terms;  // weighted, summed over layers
};

template <class T>
LossPlan<T> make_loss_plan(const BoxerModel<T>& model, const ModelOutput<T>& out,
                           const SceneTargets& targets, const LossWeights& w) {
  LossPlan<T> plan;
  for (const auto& layer : out.layers)
    plan.decoder.push_back(hungarian(match_cost(layer.logits, layer.boxes, targets, w)));
  plan.encoder = hungarian(match_cost(out.enc_logits, out.enc_boxes, targets, w, true));
  const auto& cfg = model.config();
  if (cfg.uses_masks() && !targets.masks.empty()) {
    const std::size_t s = cfg.mask_side();
    const auto& boxes = out.layers.back().boxes;
    std::vector<T> data;
    for (auto [pi, gi] : plan.decoder.back().pairs) {
      plan.mask_rows.push_back(pi);
      plan.mask_channels.push_back(static_cast<std::size_t>(targets.labels[gi]));
      const std::array<double, 4> box{boxes[pi * 4], boxes[pi * 4 + 1], boxes[pi * 4 + 2], boxes[pi * 4 + 3]};
      for (double v : crop_mask(targets.masks[gi], targets.height, targets.width, box, s))
        data.push_back(static_cast<T>(v));
    }
    plan.mask_targets = Tensor<T>(Shape{plan.mask_rows.size(), s, s}, std::move(data));
  }
  return plan;
}

namespace detail {

template <class T>
void add_set_loss(const Tensor<T>& logits, const Tensor<T>& boxes, const Assignment& match,
                  const SceneTargets& targets, const LossWeights& w, bool class_agnostic,
                  const std::string& prefix, double normalizer, std::vector<Tensor<T>>& parts,
                  std::map<std::string, double>& terms) {
  const std::size_t k = boxes.size(1);
  const BoxColumns cols = BoxColumns::for_dims(k);
  std::vector<int> labels(logits.size(0), -1);
  std::vector<std::size_t> rows;
  std::vector<T> tgt;
  for (auto [pi, gi] : match.pairs) {
    labels[pi] = class_agnostic ? 0 : targets.labels[gi];
    rows.push_back(pi);
    for (double v : targets.boxes[gi]) tgt.push_back(static_cast<T>(v));
  }
  auto push = [&](const std::string& name, double weight, Tensor<T> term) {
    terms[prefix + name] += weight * static_cast<double>(term.item());
    parts.push_back(scale(term, static_cast<T>(weight)));
  };
  push("class", w.focal_class, sigmoid_focal_loss(logits, labels, w.focal_alpha, w.focal_gamma, normalizer));
  if (rows.empty()) return;
  const Tensor<T> pred = gather_rows(boxes, rows);
  const Tensor<T> target(Shape{rows.size(), k}, std::move(tgt));
  push("l1", w.l1_box, l1_loss(pred, target, cols.l1, normalizer));
  push("giou", w.giou, giou_loss(pred, target, cols.planar, normalizer));
  if (cols.has_angle) push("angle", w.angle_l1, angle_l1_loss(pred, target, cols.angle, normalizer));
}

}  // namespace detail

/// Sum over decoder layers of focal + L1 + GIoU (+ wrapped angle L1) terms,
/// the last-layer mask BCE and dice terms, and the class-agnostic
/// proposal loss on all encoder outputs.
template <class T>
LossResult<T> total_loss(const BoxerModel<T>& model, const ModelOutput<T>& out, const SceneTargets& targets,
                         const LossPlan<T>& plan, const LossWeights& w) {
  const double normalizer = std::max<double>(1.0, static_cast<double>(targets.size()));
  std::vector<Tensor<T>> parts;
  LossResult<T> result;
  for (std::size_t s = 0; s < out.layers.size(); ++s)
    detail::add_set_loss(out.layers[s].logits, out.layers[s].boxes, plan.decoder[s], targets, w, false, "",
                         normalizer, parts, result.terms);
  detail::add_set_loss(out.enc_logits, out.enc_boxes, plan.encoder, targets, w, true, "enc_", normalizer,
                       parts, result.terms);
  if (!plan.mask_rows.empty()) {
    const Tensor<T> logits = select_channels(model.mask_logits(out, plan.mask_rows), plan.mask_channels);
    const Tensor<T> bce = mask_bce_loss(logits, plan.mask_targets, normalizer);
    const Tensor<T> dice = mask_dice_loss(logits, plan.mask_targets, normalizer);
    result.terms["mask_bce"] = w.bce_mask * static_cast<double>(bce.item());
    result.terms["mask_dice"] = w.dice_mask * static_cast<double>(dice.item());
    parts.push_back(scale(bce, static_cast<T>(w.bce_mask)));
    parts.push_back(scale(dice, static_cast<T>(w.dice_mask)));
  }
  Tensor<T> total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
  result.total = total;
  return result;
}

}  // namespace boxer
