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

#include <sstream>
#include <string>
#include <vector>

#include "boxer/train/evaluate.hpp"

namespace boxer {

struct RenderOptions {
  double score_threshold = 0.3;
  bool attention = true;  // attended boxes of the top prediction
  double pixels = 512;    // output width
};

/// Corners of a (x, y, wx, wy, theta) row in normalized coordinates.
inline std::array<Point<double>, 4> window_corners(const double* w) {
  return corners(BoxR<double>{w[0], w[1], w[2], w[3], w[4]});
}

/// Attended boxes of decoder query `row` in the last cross-attention:
/// one per (head, level), as (x, y, wx, wy, theta).
template <class T>
std::vector<std::array<double, 5>> attended_boxes(const ModelOutput<T>& out, std::size_t row) {
  const auto& b = out.last_attention.boxes;  // [N x G x t x 5]
  const std::size_t per_row = b.numel() / b.size(0);
  std::vector<std::array<double, 5>> boxes;
  for (std::size_t i = 0; i < per_row / 5; ++i) {
    std::array<double, 5> v;
    for (std::size_t k = 0; k < 5; ++k) v[k] = static_cast<double>(b[row * per_row + i * 5 + k]);
    boxes.push_back(v);
  }
  return boxes;
}

struct RenderResult {
  std::string svg;
  std::size_t predictions = 0;  // prediction shapes drawn
  std::size_t attended = 0;     // attended boxes drawn
};

namespace detail {

inline const char* class_color(int label) {
  static constexpr const char* kColors[] = {"#1a9850", "#d73027", "#fd8d3c", "#984ea3"};
  return kColors[static_cast<std::size_t>(label) % 4];
}

inline std::string polygon(const std::array<Point<double>, 4>& c, double scale, const std::string& cls,
                           const std::string& style) {
  std::ostringstream os;
  os << "<polygon class=\"" << cls << "\" points=\"";
  for (std::size_t i = 0; i < 4; ++i) os << (i ? " " : "") << c[i].x * scale << ',' << c[i].y * scale;
  os << "\" " << style << "/>\n";
  return os.str();
}

}  // namespace detail

/// SVG of a scene: the raster, ground truth in blue, predictions above the
/// score threshold colored by class (with masks in 2D), and optionally the
/// attended boxes behind the best prediction.
template <class T>
RenderResult render_scene(const BoxerModel<T>& model, const Tensor<T>& input, const SceneTargets& targets,
                          const RenderOptions& opt = {}) {
  NoGradScope<T> off;
  const auto& cfg = model.config();
  const std::size_t h = input.size(0), w = input.size(1), c = input.size(2);
  const double scale = opt.pixels, px = scale / static_cast<double>(w);
  const auto out = model.forward(input);
  std::vector<std::size_t> rows;
  const std::size_t kq = out.layers.back().logits.size(0), classes = out.layers.back().logits.size(1);
  auto dets = scene_detections(model, out, 0, kq * classes, cfg.uses_masks(), &rows);

  RenderResult r;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << scale << "\" height=\""
     << scale * static_cast<double>(h) / static_cast<double>(w) << "\">\n<g class=\"raster\">\n";
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      int rgb[3];
      for (int k = 0; k < 3; ++k) {
        const std::size_t ch = c == 3 ? static_cast<std::size_t>(k) : (k == 0 ? 0 : 1);
        const double v = std::clamp(static_cast<double>(input[(i * w + j) * c + ch]), 0.0, 1.0);
        rgb[k] = static_cast<int>(std::lround(v * 255));
      }
      os << "<rect x=\"" << static_cast<double>(j) * px << "\" y=\"" << static_cast<double>(i) * px
         << "\" width=\"" << px << "\" height=\"" << px << "\" fill=\"rgb(" << rgb[0] << ',' << rgb[1] << ','
         << rgb[2] << ")\"/>\n";
    }
  os << "</g>\n";

  auto as_window = [](const std::vector<double>& b) {
    return b.size() == 4 ? std::array<double, 5>{b[0], b[1], b[2], b[3], 0.0}
                         : std::array<double, 5>{b[0], b[1], b[3], b[4], b[6]};
  };
  for (const auto& b : targets.boxes)
    os << detail::polygon(window_corners(as_window(b).data()), scale, "truth",
                          "fill=\"none\" stroke=\"#2166ac\" stroke-width=\"2\"");

  std::size_t best = dets.size();
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    if (d.score < opt.score_threshold) continue;
    if (best == dets.size()) best = i;
    const char* color = detail::class_color(d.label);
    if (!d.mask.empty()) {
      os << "<g class=\"mask\" fill=\"" << color << "\" fill-opacity=\"0.35\">\n";
      for (std::size_t p = 0; p < d.mask.size(); ++p)
        if (d.mask[p])
          os << "<rect x=\"" << static_cast<double>(p % w) * px << "\" y=\"" << static_cast<double>(p / w) * px
             << "\" width=\"" << px << "\" height=\"" << px << "\"/>\n";
      os << "</g>\n";
    }
    os << detail::polygon(window_corners(as_window(d.box).data()), scale, "prediction",
                          std::string("fill=\"none\" stroke=\"") + color + "\" stroke-width=\"2\"");
    ++r.predictions;
  }
  if (opt.attention && !dets.empty()) {
    const std::size_t row = rows[best == dets.size() ? 0 : best];
    for (const auto& a : attended_boxes(out, row)) {
      os << detail::polygon(window_corners(a.data()), scale, "attended",
                            "fill=\"none\" stroke=\"#fee08b\" stroke-width=\"1\" stroke-dasharray=\"4 2\"");
      ++r.attended;
    }
  }
  os << "</svg>\n";
  r.svg = os.str();
  return r;
}

}  // namespace boxer
