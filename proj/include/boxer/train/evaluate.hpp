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
#include <cstdlib>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "boxer/train/metrics.hpp"
#include "boxer/train/run_config.hpp"

namespace boxer {

/// Stream base for held-out scenes; shared by every run so that seeds and
/// variants are scored on the same scenes.
inline constexpr std::uint64_t kEvalStream = 0x5eed0e7a1ULL;

/// Worker threads for scene generation, from BOXER_WORKERS (default 1).
/// Results never depend on it.
inline std::size_t workers_from_env() {
  const char* v = std::getenv("BOXER_WORKERS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 256) throw ConfigError("BOXER_WORKERS must be an integer in [1, 256]");
  return static_cast<std::size_t>(n);
}

/// Named metric values in a fixed order per mode.
struct EvalMetrics {
  std::vector<std::pair<std::string, double>> values;

  double get(const std::string& name) const {
    for (const auto& [k, v] : values)
      if (k == name) return v;
    throw ContractError("no metric named " + name);
  }
  /// The value used to pick the best checkpoint.
  double headline() const { return get("ap50"); }
};

inline std::vector<std::string> metric_names(Mode mode) {
  if (mode == Mode::k2D) return {"ap50", "ap75", "mask_ap50"};
  return {"ap50", "ap70", "vehicle_ap50", "vehicle_ap70", "pedestrian_ap50", "pedestrian_ap70"};
}

/// Ground truth of one scene in evaluation form.
inline std::vector<GroundTruthObject> ground_truth(const SceneTargets& t, std::size_t scene) {
  std::vector<GroundTruthObject> out;
  for (std::size_t i = 0; i < t.size(); ++i)
    out.push_back({scene, t.labels[i], t.boxes[i], i < t.masks.size() ? t.masks[i] : std::vector<std::uint8_t>{}});
  return out;
}

/// Top-`topk` (query, class) pairs of the last decoder layer by sigmoid
/// score. Every pair is kept as is: there is no suppression step.
template <class T>
std::vector<Detection> scene_detections(const BoxerModel<T>& model, const ModelOutput<T>& out, std::size_t scene,
                                        std::size_t topk, bool with_masks, std::vector<std::size_t>* query_rows = nullptr) {
  const auto& layer = out.layers.back();
  const std::size_t kq = layer.logits.size(0), c = layer.logits.size(1), k = layer.boxes.size(1);
  std::vector<std::size_t> order(kq * c);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto logits = layer.logits.data();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  order.resize(std::min(topk, order.size()));

  std::vector<Detection> dets;
  std::vector<std::size_t> rows;
  for (std::size_t idx : order) {
    const std::size_t q = idx / c;
    Detection d;
    d.scene = scene;
    d.label = static_cast<int>(idx % c);
    d.score = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[idx])));
    for (std::size_t j = 0; j < k; ++j) d.box.push_back(static_cast<double>(layer.boxes[q * k + j]));
    dets.push_back(std::move(d));
    rows.push_back(q);
  }
  if (with_masks && !rows.empty()) {
    const auto& cfg = model.config();
    const std::size_t s = cfg.mask_side();
    std::vector<std::size_t> unique = rows;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    const Tensor<T> masks = model.mask_logits(out, unique);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const std::size_t u = static_cast<std::size_t>(
          std::lower_bound(unique.begin(), unique.end(), rows[i]) - unique.begin());
      std::vector<double> probs(s * s);
      for (std::size_t p = 0; p < s * s; ++p) {
        const double x = static_cast<double>(masks[(u * s * s + p) * c + static_cast<std::size_t>(dets[i].label)]);
        probs[p] = 1.0 / (1.0 + std::exp(-x));
      }
      const auto& b = dets[i].box;
      dets[i].mask = paste_mask(probs, s, {b[0], b[1], b[2], b[3]}, cfg.image_height, cfg.image_width);
    }
  }
  if (query_rows) *query_rows = std::move(rows);
  return dets;
}

/// Metrics from pooled detections and ground truth.
inline EvalMetrics score_detections(Mode mode, int num_classes, const std::vector<Detection>& dets,
                                    const std::vector<GroundTruthObject>& gts) {
  EvalMetrics m;
  if (mode == Mode::k2D) {
    m.values.emplace_back("ap50", mean_ap(dets, gts, num_classes, 0.5, box_overlap_2d).mean);
    m.values.emplace_back("ap75", mean_ap(dets, gts, num_classes, 0.75, box_overlap_2d).mean);
    const bool masks = std::any_of(dets.begin(), dets.end(), [](const auto& d) { return !d.mask.empty(); });
    m.values.emplace_back("mask_ap50", masks ? mean_ap(dets, gts, num_classes, 0.5, mask_overlap).mean : 0.0);
    return m;
  }
  const auto at50 = mean_ap(dets, gts, num_classes, 0.5, box_overlap_3d);
  const auto at70 = mean_ap(dets, gts, num_classes, 0.7, box_overlap_3d);
  auto cls = [](const ApSummary& s, int c) { return s.per_class.count(c) ? s.per_class.at(c) : 0.0; };
  m.values = {{"ap50", at50.mean},
              {"ap70", at70.mean},
              {"vehicle_ap50", cls(at50, static_cast<int>(Object3D::kVehicle))},
              {"vehicle_ap70", cls(at70, static_cast<int>(Object3D::kVehicle))},
              {"pedestrian_ap50", cls(at50, static_cast<int>(Object3D::kPedestrian))},
              {"pedestrian_ap70", cls(at70, static_cast<int>(Object3D::kPedestrian))}};
  return m;
}

/// Model input and targets for held-out scene `index`.
template <class T>
std::pair<Tensor<T>, SceneTargets> eval_scene(const RunConfig& cfg, std::size_t index) {
  const std::uint64_t seed = scene_seed(kEvalStream, index);
  if (cfg.mode() == Mode::k2D) {
    const auto s = gen_scene_2d(seed, cfg.scene2d);
    return {scene_tensor<T>(s), scene_targets(s)};
  }
  const auto s = gen_scene_3d(seed, cfg.scene3d);
  return {scene_tensor<T>(s), scene_targets(s)};
}

/// AP over held-out scenes [0, count).
template <class T>
EvalMetrics evaluate(const BoxerModel<T>& model, const RunConfig& cfg, std::size_t count) {
  NoGradScope<T> off;
  std::vector<Detection> dets;
  std::vector<GroundTruthObject> gts;
  const bool masks = model.config().uses_masks();
  for (std::size_t i = 0; i < count; ++i) {
    const auto [x, targets] = eval_scene<T>(cfg, i);
    const auto out = model.forward(x);
    auto d = scene_detections(model, out, i, cfg.eval_topk, masks);
    dets.insert(dets.end(), std::make_move_iterator(d.begin()), std::make_move_iterator(d.end()));
    auto g = ground_truth(targets, i);
    gts.insert(gts.end(), std::make_move_iterator(g.begin()), std::make_move_iterator(g.end()));
  }
  return score_detections(cfg.mode(), static_cast<int>(model.config().num_classes), dets, gts);
}

}  // namespace boxer
