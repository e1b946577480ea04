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

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "boxer/data/scenes.hpp"
#include "boxer/matching/criterion.hpp"
#include "boxer/train/optimizer.hpp"

namespace boxer {

/// Everything a training run depends on. Serialized as flat `key = value`
/// text; see `run_config_keys()` for the accepted keys.
struct RunConfig {
  ModelConfig model;
  OptimizerConfig optim;
  LossWeights loss;
  SceneConfig2D scene2d;
  SceneConfig3D scene3d;
  std::size_t seed = 0;
  std::size_t steps = 3000;
  std::size_t decay_step = 2400;
  double lr_decay = 0.1;
  std::size_t batch_size = 2;
  std::size_t train_scenes = 5000;
  std::size_t eval_scenes = 500;
  std::size_t eval_every = 500;
  std::size_t eval_topk = 50;  // (query, class) pairs kept per scene
  bool flip = true;

  Mode mode() const { return model.mode; }

  static RunConfig defaults(Mode mode) {
    RunConfig c;
    c.model = mode == Mode::k2D ? ModelConfig::defaults_2d() : ModelConfig::defaults_3d();
    c.sync_scenes();
    return c;
  }

  /// Scene rasters follow the model input size.
  void sync_scenes() {
    scene2d.height = scene3d.height = model.image_height;
    scene2d.width = scene3d.width = model.image_width;
  }

  void validate() const {
    model.validate();
    optim.validate();
    loss.validate();
    if (steps == 0 || batch_size == 0 || train_scenes == 0 || eval_scenes == 0 || eval_every == 0 ||
        eval_topk == 0)
      throw ConfigError("steps, batch_size, train_scenes, eval_scenes, eval_every and eval_topk must be positive");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr_decay must be in (0, 1]");
    if (scene2d.min_objects == 0 || scene2d.min_objects > scene2d.max_objects ||
        scene3d.min_objects == 0 || scene3d.min_objects > scene3d.max_objects)
      throw ConfigError("object count range must satisfy 1 <= min <= max");
    if (!(scene2d.min_size >= 2 && scene2d.min_size <= scene2d.max_size))
      throw ConfigError("2d object size range is invalid");
    if (!(scene3d.vehicle_fraction >= 0 && scene3d.vehicle_fraction <= 1))
      throw ConfigError("vehicle_fraction must be in [0, 1]");
  }
};

namespace detail {

using FieldRef = std::variant<std::size_t*, double*, bool*, std::vector<double>*>;

template <class Fn>
void visit_fields(RunConfig& c, Fn&& fn) {
  fn("seed", FieldRef{&c.seed});
  fn("steps", FieldRef{&c.steps});
  fn("decay_step", FieldRef{&c.decay_step});
  fn("lr_decay", FieldRef{&c.lr_decay});
  fn("batch_size", FieldRef{&c.batch_size});
  fn("train_scenes", FieldRef{&c.train_scenes});
  fn("eval_scenes", FieldRef{&c.eval_scenes});
  fn("eval_every", FieldRef{&c.eval_every});
  fn("eval_topk", FieldRef{&c.eval_topk});
  fn("flip", FieldRef{&c.flip});

  fn("lr", FieldRef{&c.optim.lr});
  fn("weight_decay", FieldRef{&c.optim.weight_decay});
  fn("beta1", FieldRef{&c.optim.beta1});
  fn("beta2", FieldRef{&c.optim.beta2});
  fn("adam_eps", FieldRef{&c.optim.eps});
  fn("transform_lr_scale", FieldRef{&c.optim.transform_lr_scale});
  fn("grad_clip", FieldRef{&c.optim.grad_clip});

  auto& m = c.model;
  fn("image_height", FieldRef{&m.image_height});
  fn("image_width", FieldRef{&m.image_width});
  fn("base_stride", FieldRef{&m.base_stride});
  fn("d", FieldRef{&m.d});
  fn("d_ff", FieldRef{&m.d_ff});
  fn("heads", FieldRef{&m.heads});
  fn("levels", FieldRef{&m.levels});
  fn("enc_layers", FieldRef{&m.enc_layers});
  fn("dec_layers", FieldRef{&m.dec_layers});
  fn("m_box", FieldRef{&m.m_box});
  fn("m_mask", FieldRef{&m.m_mask});
  fn("top_k", FieldRef{&m.top_k});
  fn("window_sizes", FieldRef{&m.window_sizes});
  fn("angles", FieldRef{&m.angles});  // radians
  fn("rotate", FieldRef{&m.rotate});
  fn("masks", FieldRef{&m.masks});
  fn("refine", FieldRef{&m.refine});
  fn("tau", FieldRef{&m.tau});
  fn("tau_theta", FieldRef{&m.tau_theta});

  auto& w = c.loss;
  fn("w_l1", FieldRef{&w.l1_box});
  fn("w_giou", FieldRef{&w.giou});
  fn("w_angle", FieldRef{&w.angle_l1});
  fn("w_class", FieldRef{&w.focal_class});
  fn("w_mask_bce", FieldRef{&w.bce_mask});
  fn("w_mask_dice", FieldRef{&w.dice_mask});
  fn("focal_alpha", FieldRef{&w.focal_alpha});
  fn("focal_gamma", FieldRef{&w.focal_gamma});

  fn("scene_min_objects", FieldRef{&c.scene2d.min_objects});
  fn("scene_max_objects", FieldRef{&c.scene2d.max_objects});
  fn("scene_min_size", FieldRef{&c.scene2d.min_size});
  fn("scene_max_size", FieldRef{&c.scene2d.max_size});
  fn("scene_max_iou", FieldRef{&c.scene2d.max_iou});
  fn("scene_noise", FieldRef{&c.scene2d.noise});
  fn("bev_min_objects", FieldRef{&c.scene3d.min_objects});
  fn("bev_max_objects", FieldRef{&c.scene3d.max_objects});
  fn("bev_vehicle_fraction", FieldRef{&c.scene3d.vehicle_fraction});
  fn("bev_max_iou", FieldRef{&c.scene3d.max_iou});
  fn("bev_clutter", FieldRef{&c.scene3d.clutter});
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("'" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError("'" + key + "': empty list");
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

}  // namespace detail

/// Every accepted key, in serialization order (after `mode`).
inline std::vector<std::string> run_config_keys() {
  RunConfig c;
  std::vector<std::string> keys{"mode"};
  detail::visit_fields(c, [&](const char* k, detail::FieldRef) { keys.push_back(k); });
  return keys;
}

/// Parses `key = value` lines; `#` starts a comment. `mode` picks the
/// defaults every other key overrides. Unknown or repeated keys, and
/// values of the wrong type, are rejected.
inline RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> values;
  std::vector<std::string> order;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(body.substr(0, eq)), value = detail::trim(body.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    if (!values.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
    order.push_back(key);
  }
  RunConfig c = RunConfig::defaults(values.count("mode") ? parse_mode(values.at("mode")) : Mode::k2D);
  std::map<std::string, bool> used{{"mode", true}};
  detail::visit_fields(c, [&](const char* key, detail::FieldRef ref) {
    const auto it = values.find(key);
    if (it == values.end()) return;
    used[key] = true;
    const std::string& v = it->second;
    std::visit(
        [&](auto field) {
          using F = decltype(field);
          if constexpr (std::is_same_v<F, std::size_t*>) *field = detail::parse_count(key, v);
          else if constexpr (std::is_same_v<F, double*>) *field = detail::parse_double(key, v);
          else if constexpr (std::is_same_v<F, bool*>) *field = detail::parse_bool(key, v);
          else *field = detail::parse_list(key, v);
        },
        ref);
  });
  for (const auto& key : order)
    if (!used.count(key)) throw ConfigError("unknown config key '" + key + "'");
  c.sync_scenes();
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

/// Complete text form; parse_run_config(format_run_config(c)) == c.
inline std::string format_run_config(RunConfig c) {
  std::string out = "mode = " + mode_name(c.mode()) + "\n";
  detail::visit_fields(c, [&](const char* key, detail::FieldRef ref) {
    std::string v = std::visit(
        [](auto field) -> std::string {
          using F = decltype(field);
          if constexpr (std::is_same_v<F, std::size_t*>) return std::to_string(*field);
          else if constexpr (std::is_same_v<F, double*>) return detail::format_double(*field);
          else if constexpr (std::is_same_v<F, bool*>) return *field ? "true" : "false";
          else return detail::format_list(*field);
        },
        ref);
    out += std::string(key) + " = " + v + "\n";
  });
  return out;
}

}  // namespace boxer
