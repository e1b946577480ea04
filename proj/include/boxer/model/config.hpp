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

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "boxer/geometry/boxes.hpp"
#include "boxer/numerics/tensor.hpp"
#include "json.hpp"

namespace boxer {

enum class Mode { k2D, k3D };

inline std::string mode_name(Mode m) { return m == Mode::k2D ? "2d" : "3d"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "2d") return Mode::k2D;
  if (s == "3d") return Mode::k3D;
  throw ConfigError("unknown mode '" + s + "' (expected 2d or 3d)");
}

struct ModelConfig {
  Mode mode = Mode::k2D;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t in_channels = 3;
  std::size_t base_stride = 4;
  std::size_t d = 64;
  std::size_t d_ff = 128;
  std::size_t heads = 8;
  std::size_t levels = 3;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t m_box = 2;
  std::size_t m_mask = 14;
  std::size_t top_k = 50;
  std::size_t num_classes = 3;
  std::vector<double> window_sizes{0.25, 0.5, 0.75};  // normalized, one per level
  std::vector<double> angles{0.0};                    // reference angles in radians
  bool rotate = false;                                // learned rotation offsets
  bool masks = true;                                  // mask head (2D only)
  bool refine = false;                                // per-layer window refinement
  double tau = kDefaultTau;
  double tau_theta = kDefaultTauTheta;
  double encoding_temperature = 10000.0;

  static ModelConfig defaults_2d() { return {}; }

  static ModelConfig defaults_3d() {
    ModelConfig c;
    c.mode = Mode::k3D;
    c.image_height = 64;
    c.image_width = 64;
    c.in_channels = 2;
    c.num_classes = 2;
    c.window_sizes = {0.125, 0.25, 0.5};
    c.angles = default_rotated_angles();
    c.rotate = true;
    c.masks = false;
    return c;
  }

  /// Width of one predicted box: (x, y, wx, wy) or (x, y, z, wx, wy, wz, theta).
  std::size_t box_dims() const { return mode == Mode::k2D ? 4 : 7; }
  std::size_t num_angles() const { return angles.size(); }
  std::size_t mask_side() const { return 2 * m_mask; }
  bool uses_masks() const { return mode == Mode::k2D && masks; }

  std::vector<LevelShape> level_shapes() const {
    std::vector<LevelShape> out;
    std::size_t h = image_height / base_stride, w = image_width / base_stride;
    for (std::size_t j = 0; j < levels; ++j, h /= 2, w /= 2) out.push_back({h, w});
    return out;
  }

  std::size_t encoder_queries() const {
    std::size_t n = 0;
    for (auto [h, w] : level_shapes()) n += h * w;
    return n;
  }

  void validate() const {
    if (heads == 0 || d % heads != 0)
      throw ConfigError("model width " + std::to_string(d) + " not divisible by heads " +
                        std::to_string(heads));
    if (d % 4 != 0) throw ConfigError("model width must be divisible by 4");
    if (levels == 0 || base_stride == 0) throw ConfigError("levels and base_stride must be positive");
    const std::size_t unit = base_stride << (levels - 1);
    if (image_height % unit != 0 || image_width % unit != 0)
      throw ConfigError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                        " not divisible by " + std::to_string(unit));
    if (window_sizes.size() != levels)
      throw ConfigError("need one window size per level");
    if (angles.empty()) throw ConfigError("need at least one reference angle");
    if (mode == Mode::k2D && (angles.size() != 1 || angles[0] != 0.0 || rotate))
      throw ConfigError("2d mode uses a single zero-angle window and no rotation");
    if (num_classes == 0 || top_k == 0 || enc_layers == 0 || dec_layers == 0)
      throw ConfigError("num_classes, top_k and layer counts must be positive");
    if (m_box == 0 || m_mask == 0) throw ConfigError("grid sides must be positive");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"mode", mode_name(c.mode)},
                     {"image_height", c.image_height},
                     {"image_width", c.image_width},
                     {"in_channels", c.in_channels},
                     {"base_stride", c.base_stride},
                     {"d", c.d},
                     {"d_ff", c.d_ff},
                     {"heads", c.heads},
                     {"levels", c.levels},
                     {"enc_layers", c.enc_layers},
                     {"dec_layers", c.dec_layers},
                     {"m_box", c.m_box},
                     {"m_mask", c.m_mask},
                     {"top_k", c.top_k},
                     {"num_classes", c.num_classes},
                     {"window_sizes", c.window_sizes},
                     {"angles", c.angles},
                     {"rotate", c.rotate},
                     {"masks", c.masks},
                     {"refine", c.refine},
                     {"tau", c.tau},
                     {"tau_theta", c.tau_theta},
                     {"encoding_temperature", c.encoding_temperature}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.mode = parse_mode(j.at("mode").get<std::string>());
  j.at("image_height").get_to(c.image_height);
  j.at("image_width").get_to(c.image_width);
  j.at("in_channels").get_to(c.in_channels);
  j.at("base_stride").get_to(c.base_stride);
  j.at("d").get_to(c.d);
  j.at("d_ff").get_to(c.d_ff);
  j.at("heads").get_to(c.heads);
  j.at("levels").get_to(c.levels);
  j.at("enc_layers").get_to(c.enc_layers);
  j.at("dec_layers").get_to(c.dec_layers);
  j.at("m_box").get_to(c.m_box);
  j.at("m_mask").get_to(c.m_mask);
  j.at("top_k").get_to(c.top_k);
  j.at("num_classes").get_to(c.num_classes);
  j.at("window_sizes").get_to(c.window_sizes);
  j.at("angles").get_to(c.angles);
  j.at("rotate").get_to(c.rotate);
  j.at("masks").get_to(c.masks);
  j.at("refine").get_to(c.refine);
  j.at("tau").get_to(c.tau);
  j.at("tau_theta").get_to(c.tau_theta);
  j.at("encoding_temperature").get_to(c.encoding_temperature);
}

}  // namespace boxer
