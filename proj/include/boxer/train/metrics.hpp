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
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "boxer/geometry/boxes.hpp"

namespace boxer {

/// One scored detection: `box` holds the mode's box fields; `mask` is an
/// optional full-image bitmap.
struct Detection {
  std::size_t scene = 0;
  int label = 0;
  double score = 0;
  std::vector<double> box;
  std::vector<std::uint8_t> mask;
};

struct GroundTruthObject {
  std::size_t scene = 0;
  int label = 0;
  std::vector<double> box;
  std::vector<std::uint8_t> mask;
};

using OverlapFn = std::function<double(const Detection&, const GroundTruthObject&)>;

/// Area under the precision/recall curve with all-point interpolation
/// (precision made monotone from the right). `hits` follow descending
/// score order.
inline double average_precision(const std::vector<bool>& hits, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  double tp = 0, fp = 0;
  for (bool h : hits) {
    (h ? tp : fp) += 1;
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / static_cast<double>(num_gt));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

/// AP of one class: detections ranked by score (ties by scene, then input
/// order), each greedily matched to the best-overlapping unmatched ground
/// truth of its scene at or above `threshold`. No suppression step.
inline double class_ap(const std::vector<Detection>& dets, const std::vector<GroundTruthObject>& gts, int label,
                       double threshold, const OverlapFn& overlap) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].label == label) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].scene < dets[b].scene;
  });
  std::vector<std::size_t> gt_index;
  for (std::size_t j = 0; j < gts.size(); ++j)
    if (gts[j].label == label) gt_index.push_back(j);
  std::vector<bool> used(gts.size(), false), hits;
  for (std::size_t i : order) {
    double best = threshold;
    std::size_t best_j = gts.size();
    for (std::size_t j : gt_index) {
      if (used[j] || gts[j].scene != dets[i].scene) continue;
      const double o = overlap(dets[i], gts[j]);
      if (o >= best) {
        if (best_j == gts.size() || o > best) best_j = j;
        best = o;
      }
    }
    if (best_j != gts.size()) used[best_j] = true;
    hits.push_back(best_j != gts.size());
  }
  return average_precision(hits, gt_index.size());
}

/// Per-class AP for every label that has ground truth, plus their mean.
struct ApSummary {
  std::map<int, double> per_class;
  double mean = 0;
};

inline ApSummary mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruthObject>& gts,
                         int num_classes, double threshold, const OverlapFn& overlap) {
  ApSummary s;
  for (int c = 0; c < num_classes; ++c) {
    const bool present = std::any_of(gts.begin(), gts.end(), [&](const auto& g) { return g.label == c; });
    if (present) s.per_class[c] = class_ap(dets, gts, c, threshold, overlap);
  }
  if (!s.per_class.empty()) {
    double total = 0;
    for (auto [c, ap] : s.per_class) total += ap;
    s.mean = total / static_cast<double>(s.per_class.size());
  }
  return s;
}

inline double box_overlap_2d(const Detection& d, const GroundTruthObject& g) {
  return iou(BoxAA<double>{d.box[0], d.box[1], d.box[2], d.box[3]},
             BoxAA<double>{g.box[0], g.box[1], g.box[2], g.box[3]});
}

/// Rotated IoU of the planar footprints of (x, y, z, wx, wy, wz, theta) boxes.
inline double box_overlap_3d(const Detection& d, const GroundTruthObject& g) {
  return rotated_iou(BoxR<double>{d.box[0], d.box[1], d.box[3], d.box[4], d.box[6]},
                     BoxR<double>{g.box[0], g.box[1], g.box[3], g.box[4], g.box[6]});
}

inline double mask_overlap(const Detection& d, const GroundTruthObject& g) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < g.mask.size(); ++i) {
    const bool a = i < d.mask.size() && d.mask[i], b = g.mask[i];
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Binary full-image mask from an s x s probability grid spanning `box`
/// (cx, cy, w, h): each pixel center inside the box samples the grid
/// bilinearly (edge-clamped) and is set when the probability is >= 0.5.
inline std::vector<std::uint8_t> paste_mask(const std::vector<double>& probs, std::size_t s,
                                            const std::array<double, 4>& box, std::size_t height,
                                            std::size_t width) {
  std::vector<std::uint8_t> out(height * width, 0);
  const double x0 = box[0] - box[2] / 2, y0 = box[1] - box[3] / 2;
  if (box[2] <= 0 || box[3] <= 0) return out;
  const double S = static_cast<double>(s);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(width);
      const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(height);
      if (x < x0 || x >= x0 + box[2] || y < y0 || y >= y0 + box[3]) continue;
      const double u = std::clamp((x - x0) / box[2] * S - 0.5, 0.0, S - 1);
      const double v = std::clamp((y - y0) / box[3] * S - 0.5, 0.0, S - 1);
      const std::size_t u0 = std::min<std::size_t>(static_cast<std::size_t>(u), s - 1);
      const std::size_t v0 = std::min<std::size_t>(static_cast<std::size_t>(v), s - 1);
      const std::size_t u1 = std::min(u0 + 1, s - 1), v1 = std::min(v0 + 1, s - 1);
      const double fu = u - static_cast<double>(u0), fv = v - static_cast<double>(v0);
      const double p = (1 - fu) * (1 - fv) * probs[v0 * s + u0] + fu * (1 - fv) * probs[v0 * s + u1] +
                       (1 - fu) * fv * probs[v1 * s + u0] + fu * fv * probs[v1 * s + u1];
      out[i * width + j] = p >= 0.5;
    }
  return out;
}

}  // namespace boxer
