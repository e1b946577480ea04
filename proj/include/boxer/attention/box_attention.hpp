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
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "boxer/geometry/box_ops.hpp"
#include "boxer/numerics/nn.hpp"

namespace boxer {

struct BoxAttentionConfig {
  std::size_t d = 64;
  std::size_t heads = 8;
  std::size_t levels = 3;
  std::size_t grid = 2;  // m: samples per box side
  bool rotate = false;   // predict a rotation offset per (head, level)
  double tau = kDefaultTau;
  double tau_theta = kDefaultTauTheta;
  bool random_transform_bias = false;

  std::size_t head_dim() const { return d / heads; }
  std::size_t cells() const { return grid * grid; }
  std::size_t transform_width() const { return rotate ? 5 : 4; }

  void validate() const {
    if (heads == 0 || d % heads != 0)
      throw ConfigError("model width " + std::to_string(d) + " not divisible by head count " +
                        std::to_string(heads));
    if (grid == 0) throw ConfigError("grid side must be at least 1");
    if (levels == 0) throw ConfigError("need at least one pyramid level");
  }
};

template <class T>
struct AttentionOutput {
  Tensor<T> features;  // [N x d]
  Tensor<T> weights;   // [N x l x t*m*m], softmax over the last axis
  Tensor<T> boxes;     // [N x l x t x 5] attended boxes
  Tensor<T> points;    // [N x l x t x m*m x 2] sampling locations
  Tensor<T> logits;    // [N x l x t*m*m]
  std::vector<Tensor<T>> values;  // value-projected pyramid
  std::optional<Tensor<T>> mask_features;  // [N x m*m x d], instance mode only
};

/// Multi-head box-attention over a feature pyramid.
///
/// Each head transforms its query's reference window once per level, samples
/// an m x m grid of value features inside every transformed box, and takes
/// a softmax-weighted average over all t*m*m samples. The logits come from a
/// linear map of the query, i.e. dot products with t*m*m learnable keys.
template <class T>
class BoxAttention {
 public:
  BoxAttention() = default;
  BoxAttention(const BoxAttentionConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg.d;
    value_ = Linear<T>(d, d, rng);
    output_ = Linear<T>(d, d, rng);
    logits_ = Linear<T>(d, cfg.heads * cfg.levels * cfg.cells(), rng, Init::kZero);
    transform_ = Linear<T>(d, cfg.heads * cfg.levels * cfg.transform_width(), rng, Init::kZero,
                           ParamGroup::kTransform);
    if (cfg.random_transform_bias) {
      for (auto& v : transform_.bias.mutable_data()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    }
  }

  const BoxAttentionConfig& config() const { return cfg_; }

  /// `queries` [N x d]; `windows` constant [N x A x 5], head g uses window
  /// g mod A; `pyramid` holds t maps [H_j x W_j x d].
  AttentionOutput<T> forward(const Tensor<T>& queries, const Tensor<T>& windows,
                             const std::vector<Tensor<T>>& pyramid) const {
    const std::size_t n = queries.size(0);
    const std::size_t l = cfg_.heads, t = cfg_.levels, p = cfg_.cells();
    if (pyramid.size() != t) {
      throw ConfigError("box attention expects " + std::to_string(t) + " pyramid levels, got " +
                        std::to_string(pyramid.size()));
    }
    detail::require(queries.dim() == 2 && queries.size(1) == cfg_.d, "queries must be [N x d]");
    detail::require(windows.dim() == 3 && windows.size(0) == n && windows.size(2) == 5,
                    "windows must be [N x A x 5]");

    AttentionOutput<T> out;
    out.values.reserve(t);
    for (const auto& level : pyramid) out.values.push_back(value_(level));

    const Tensor<T> head_windows = per_head_windows(windows);
    const Tensor<T> raw = reshape(transform_(queries), {n, l, t, cfg_.transform_width()});
    out.boxes = attend_boxes(raw, head_windows, static_cast<T>(cfg_.tau),
                             static_cast<T>(cfg_.tau_theta));
    out.points = grid_points(out.boxes, cfg_.grid);
    out.logits = reshape(logits_(queries), {n, l, t * p});
    out.weights = softmax(out.logits, 2);
    const Tensor<T> mixed = attend_pyramid(out.values, out.points, out.weights);
    out.features = output_(reshape(mixed, {n, cfg_.d}));
    return out;
  }

  /// Instance-attention: the box-attention output plus an m x m mask feature
  /// grid per query, formed by a softmax over the level axis of the same
  /// logits. `mask_rows` restricts the mask branch to a subset of queries.
  AttentionOutput<T> forward_instance(const Tensor<T>& queries, const Tensor<T>& windows,
                                      const std::vector<Tensor<T>>& pyramid,
                                      std::optional<std::vector<std::size_t>> mask_rows = {}) const {
    AttentionOutput<T> out = forward(queries, windows, pyramid);
    std::vector<std::size_t> rows;
    if (mask_rows) {
      rows = *mask_rows;
    } else {
      rows.resize(queries.size(0));
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    out.mask_features = mask_branch(out, rows);
    return out;
  }

  /// Mask features [K x m*m x d] for the selected queries of a previous
  /// forward pass.
  Tensor<T> mask_branch(const AttentionOutput<T>& out, const std::vector<std::size_t>& rows) const {
    const std::size_t l = cfg_.heads, t = cfg_.levels, p = cfg_.cells(), dh = cfg_.head_dim();
    const std::size_t k = rows.size();
    if (k == 0) return Tensor<T>(Shape{0, p, cfg_.d});
    const Tensor<T> logits = reshape(gather_rows(out.logits, rows), {k, l, t, p});
    const Tensor<T> level_weights = softmax(logits, 2);  // over t
    const Tensor<T> w = reshape(permute(level_weights, {0, 1, 3, 2}), {k * l * p, 1, t});
    const Tensor<T> v = reshape(permute(sample(out, rows), {0, 1, 3, 2, 4}), {k * l * p, t, dh});
    const Tensor<T> mixed = reshape(bmm(w, v), {k, l, p, dh});
    return output_(reshape(permute(mixed, {0, 2, 1, 3}), {k, p, cfg_.d}));
  }

  /// Grid values [K x l x t x m*m x d_h] for the selected queries.
  Tensor<T> sample(const AttentionOutput<T>& out, const std::vector<std::size_t>& rows) const {
    return sample_pyramid(out.values, gather_rows(out.points, rows));
  }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    value_.for_each_param(prefix + ".value", fn);
    transform_.for_each_param(prefix + ".transform", fn);
    logits_.for_each_param(prefix + ".logits", fn);
    output_.for_each_param(prefix + ".output", fn);
  }

  Linear<T>& value_proj() { return value_; }
  Linear<T>& output_proj() { return output_; }
  Linear<T>& logit_proj() { return logits_; }
  Linear<T>& transform_proj() { return transform_; }

 private:
  Tensor<T> per_head_windows(const Tensor<T>& windows) const {
    const std::size_t n = windows.size(0), a = windows.size(1), l = cfg_.heads;
    std::vector<T> data(n * l * 5);
    const auto wd = windows.data();
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t g = 0; g < l; ++g)
        std::copy_n(wd.begin() + (q * a + g % a) * 5, 5, data.begin() + (q * l + g) * 5);
    return Tensor<T>(Shape{n, l, 5}, std::move(data));
  }

  BoxAttentionConfig cfg_;
  Linear<T> value_, output_, logits_, transform_;
};

/// Standard multi-head scaled dot-product self-attention.
template <class T>
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(std::size_t d, std::size_t heads, Rng& rng)
      : heads_(heads), q_(d, d, rng), k_(d, d, rng), v_(d, d, rng), o_(d, d, rng) {
    if (heads == 0 || d % heads != 0) throw ConfigError("model width not divisible by heads");
  }

  /// Queries and keys are projected from `qk_input` (features plus position
  /// codes), values from `v_input`.
  Tensor<T> operator()(const Tensor<T>& qk_input, const Tensor<T>& v_input) const {
    const std::size_t n = qk_input.size(0), d = qk_input.size(1), dh = d / heads_;
    auto split = [&](const Tensor<T>& x) { return permute(reshape(x, {n, heads_, dh}), {1, 0, 2}); };
    const Tensor<T> q = split(q_(qk_input));
    const Tensor<T> k = split(k_(qk_input));
    const Tensor<T> v = split(v_(v_input));
    const Tensor<T> scores = scale(bmm(q, k, true), T(1) / std::sqrt(static_cast<T>(dh)));
    const Tensor<T> mixed = bmm(softmax(scores, 2), v);  // [l x N x dh]
    return o_(reshape(permute(mixed, {1, 0, 2}), {n, d}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return (*this)(x, x); }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    q_.for_each_param(prefix + ".q", fn);
    k_.for_each_param(prefix + ".k", fn);
    v_.for_each_param(prefix + ".v", fn);
    o_.for_each_param(prefix + ".o", fn);
  }

  std::size_t heads() const { return heads_; }
  Linear<T>& q_proj() { return q_; }
  Linear<T>& k_proj() { return k_; }
  Linear<T>& v_proj() { return v_; }
  Linear<T>& o_proj() { return o_; }

 private:
  std::size_t heads_ = 1;
  Linear<T> q_, k_, v_, o_;
};

}  // namespace boxer
