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
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "boxer/attention/box_attention.hpp"
#include "boxer/model/config.hpp"
#include "boxer/model/encoding.hpp"
#include "boxer/model/heads.hpp"
#include "boxer/numerics/grad_check.hpp"

namespace boxer {

/// Small learnable stand-in for a convolutional backbone: a strided patch
/// embedding (linear, relu, linear) to the first level, then 2x2 mean-pool
/// plus a linear mix per extra level.
template <class T>
struct PyramidBuilder {
  Linear<T> patch, patch_mix;
  std::vector<Linear<T>> reduce;
  std::size_t stride = 4, levels = 3;

  PyramidBuilder() = default;
  PyramidBuilder(const ModelConfig& cfg, Rng& rng)
      : patch(cfg.base_stride * cfg.base_stride * cfg.in_channels, cfg.d, rng),
        patch_mix(cfg.d, cfg.d, rng),
        stride(cfg.base_stride),
        levels(cfg.levels) {
    for (std::size_t j = 1; j < cfg.levels; ++j) reduce.emplace_back(cfg.d, cfg.d, rng);
  }

  /// `raster` [H x W x c] -> `levels` maps [H_j x W_j x d].
  std::vector<Tensor<T>> operator()(const Tensor<T>& raster) const {
    detail::require(raster.dim() == 3, "raster must be [H x W x c]");
    const std::size_t h = raster.size(0), w = raster.size(1), c = raster.size(2);
    const std::size_t unit = stride << (levels - 1);
    if (h % unit != 0 || w % unit != 0)
      throw ConfigError("raster " + std::to_string(h) + "x" + std::to_string(w) +
                        " not divisible by " + std::to_string(unit));
    const std::size_t ph = h / stride, pw = w / stride, pd = stride * stride * c;
    std::vector<T> patches(ph * pw * pd);
    const auto rd = raster.data();
    for (std::size_t i = 0; i < ph; ++i)
      for (std::size_t j = 0; j < pw; ++j)
        for (std::size_t dy = 0; dy < stride; ++dy)
          std::copy_n(rd.begin() + ((i * stride + dy) * w + j * stride) * c, stride * c,
                      patches.begin() + (i * pw + j) * pd + dy * stride * c);
    Tensor<T> x(Shape{ph, pw, pd}, std::move(patches));
    std::vector<Tensor<T>> out;
    out.push_back(patch_mix(relu(patch(x))));
    for (const auto& lin : reduce) out.push_back(lin(avg_pool2(out.back())));
    return out;
  }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    patch.for_each_param(prefix + ".patch", fn);
    patch_mix.for_each_param(prefix + ".patch_mix", fn);
    for (std::size_t j = 0; j < reduce.size(); ++j)
      reduce[j].for_each_param(prefix + ".reduce" + std::to_string(j + 1), fn);
  }
};

template <class T>
struct EncoderLayer {
  BoxAttention<T> attn;
  LayerNorm<T> norm1, norm2;
  FeedForward<T> ff;

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    attn.for_each_param(prefix + ".attn", fn);
    norm1.for_each_param(prefix + ".norm1", fn);
    ff.for_each_param(prefix + ".ff", fn);
    norm2.for_each_param(prefix + ".norm2", fn);
  }
};

template <class T>
struct DecoderLayer {
  SelfAttention<T> self_attn;
  BoxAttention<T> cross_attn;
  LayerNorm<T> norm1, norm2, norm3;
  FeedForward<T> ff;

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    self_attn.for_each_param(prefix + ".self_attn", fn);
    norm1.for_each_param(prefix + ".norm1", fn);
    cross_attn.for_each_param(prefix + ".cross_attn", fn);
    norm2.for_each_param(prefix + ".norm2", fn);
    ff.for_each_param(prefix + ".ff", fn);
    norm3.for_each_param(prefix + ".norm3", fn);
  }
};

/// Selected proposals. Everything here is a constant: the decoder reads
/// the values but no gradient flows back into the encoder through them.
template <class T>
struct ProposalPlan {
  std::vector<std::size_t> rows;  // proposal rows (position * angles + angle)
  Tensor<T> windows;              // [K x 5]
  Tensor<T> features;             // [K x d] encoder features before projection
  Tensor<T> scores;               // [K] sigmoid scores, descending
};

template <class T>
struct LayerPrediction {
  Tensor<T> logits;   // [K x C]
  Tensor<T> boxes;    // [K x box_dims]
  Tensor<T> windows;  // [K x 5] constant windows the layer attended from
};

template <class T>
struct ModelOutput {
  std::vector<Tensor<T>> memory;  // encoder output pyramid
  Tensor<T> ref_windows;          // [P x 5] encoder reference windows
  Tensor<T> enc_logits;           // [P x 1]
  Tensor<T> enc_boxes;            // [P x box_dims]
  ProposalPlan<T> plan;
  std::vector<LayerPrediction<T>> layers;
  AttentionOutput<T> last_attention;  // last decoder cross-attention
  Tensor<T> last_query;               // last layer input to the cross-attention residual
};

/// Window rows (x, y, wx, wy, theta) from predicted boxes.
template <class T>
Tensor<T> boxes_to_windows(const Tensor<T>& boxes) {
  const std::size_t r = boxes.size(0), k = boxes.size(1);
  std::vector<T> out(r * 5, T(0));
  for (std::size_t i = 0; i < r; ++i) {
    const T* b = boxes.data().data() + i * k;
    T* o = out.data() + i * 5;
    if (k == 4) {
      std::copy_n(b, 4, o);
    } else {
      o[0] = b[0], o[1] = b[1], o[2] = b[3], o[3] = b[4], o[4] = b[6];
    }
  }
  return Tensor<T>(Shape{r, 5}, std::move(out));
}

template <class T>
class BoxerModel {
 public:
  BoxerModel() = default;
  BoxerModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    backbone_ = PyramidBuilder<T>(cfg_, rng);
    BoxAttentionConfig enc_attn{.d = cfg_.d, .heads = cfg_.heads, .levels = cfg_.levels,
                                .grid = cfg_.m_box, .rotate = cfg_.rotate, .tau = cfg_.tau,
                                .tau_theta = cfg_.tau_theta};
    BoxAttentionConfig dec_attn = enc_attn;
    if (cfg_.mode == Mode::k2D) dec_attn.grid = cfg_.m_mask;
    for (std::size_t s = 0; s < cfg_.enc_layers; ++s) {
      EncoderLayer<T> layer;
      layer.attn = BoxAttention<T>(enc_attn, rng);
      layer.norm1 = LayerNorm<T>(cfg_.d);
      layer.ff = FeedForward<T>(cfg_.d, cfg_.d_ff, rng);
      layer.norm2 = LayerNorm<T>(cfg_.d);
      encoder_.push_back(std::move(layer));
    }
    const std::size_t a = cfg_.num_angles(), k = cfg_.box_dims();
    proposal_head_ = PredictionHead<T>(cfg_.d, a, a * k, rng);
    query_proj_ = Linear<T>(cfg_.d, cfg_.d, rng);
    for (std::size_t s = 0; s < cfg_.dec_layers; ++s) {
      DecoderLayer<T> layer;
      layer.self_attn = SelfAttention<T>(cfg_.d, cfg_.heads, rng);
      layer.norm1 = LayerNorm<T>(cfg_.d);
      layer.cross_attn = BoxAttention<T>(dec_attn, rng);
      layer.norm2 = LayerNorm<T>(cfg_.d);
      layer.ff = FeedForward<T>(cfg_.d, cfg_.d_ff, rng);
      layer.norm3 = LayerNorm<T>(cfg_.d);
      decoder_.push_back(std::move(layer));
    }
    head_ = PredictionHead<T>(cfg_.d, cfg_.num_classes, k, rng);
    if (cfg_.uses_masks()) mask_head_ = MaskHead<T>(cfg_.d, cfg_.d, cfg_.num_classes, rng);

    const auto shapes = cfg_.level_shapes();
    std::vector<std::array<double, 2>> sizes;
    for (double s : cfg_.window_sizes) sizes.push_back({s, s});
    const auto windows = make_reference_windows(shapes, sizes, cfg_.angles);
    std::vector<T> wd;
    for (const auto& w : windows)
      wd.insert(wd.end(), {static_cast<T>(w.box.x), static_cast<T>(w.box.y), static_cast<T>(w.box.wx),
                           static_cast<T>(w.box.wy), static_cast<T>(w.box.theta)});
    ref_windows_ = Tensor<T>(Shape{windows.size(), 5}, std::move(wd));
    const std::size_t positions = windows.size() / a;
    enc_pos_ = spatial_encoding<T>(ref_windows_.data(), 5 * a, cfg_.d, cfg_.encoding_temperature);
    detail::require(enc_pos_.size(0) == positions, "encoder position codes");
  }

  const ModelConfig& config() const { return cfg_; }
  const Tensor<T>& reference_windows() const { return ref_windows_; }

  /// Full forward pass. A `fixed` plan replaces top-k proposal selection
  /// (used to hold the discrete choices still in gradient checks).
  ModelOutput<T> forward(const Tensor<T>& raster, const ProposalPlan<T>* fixed = nullptr) const {
    ModelOutput<T> out;
    const std::size_t a = cfg_.num_angles(), k = cfg_.box_dims(), d = cfg_.d;
    out.ref_windows = ref_windows_;

    // Encoder.
    std::vector<Tensor<T>> levels = backbone_(raster);
    std::vector<Shape> level_shapes;
    std::vector<Tensor<T>> rows;
    for (const auto& lv : levels) {
      level_shapes.push_back(lv.shape());
      rows.push_back(reshape(lv, {lv.size(0) * lv.size(1), d}));
    }
    Tensor<T> x = concat_rows(rows);
    const std::size_t positions = x.size(0);
    const Tensor<T> enc_windows = reshape(ref_windows_, {positions, a, 5});
    for (const auto& layer : encoder_) {
      auto attn = layer.attn.forward(add(x, enc_pos_), enc_windows, levels);
      x = layer.norm1(add(x, attn.features));
      x = layer.norm2(add(x, layer.ff(x)));
      levels = split_levels(x, level_shapes);
    }
    out.memory = levels;

    // Proposal stage.
    out.enc_logits = reshape(proposal_head_.classes(x), {positions * a, 1});
    const Tensor<T> enc_delta = reshape(proposal_head_.offsets(x), {positions * a, k});
    out.enc_boxes = decode_boxes(enc_delta, ref_windows_);
    out.plan = fixed ? *fixed : select_proposals(out, x);

    // Decoder.
    Tensor<T> q = query_proj_(out.plan.features);
    Tensor<T> windows = out.plan.windows;
    const std::size_t kq = q.size(0);
    for (std::size_t s = 0; s < decoder_.size(); ++s) {
      const auto& layer = decoder_[s];
      const Tensor<T> pos = spatial_encoding<T>(windows.data(), 5, d, cfg_.encoding_temperature);
      const Tensor<T> qk = add(q, pos);
      q = layer.norm1(add(q, layer.self_attn(qk, q)));
      const Tensor<T> pre = q;
      auto attn = layer.cross_attn.forward(add(q, pos), reshape(windows, {kq, 1, 5}), out.memory);
      q = layer.norm2(add(q, attn.features));
      q = layer.norm3(add(q, layer.ff(q)));
      LayerPrediction<T> pred;
      pred.logits = head_.classes(q);
      pred.boxes = decode_boxes(head_.offsets(q), windows);
      pred.windows = windows;
      if (s + 1 == decoder_.size()) {
        out.last_attention = std::move(attn);
        out.last_query = pre;
      } else if (cfg_.refine) {
        windows = boxes_to_windows(pred.boxes.detach());
      }
      out.layers.push_back(std::move(pred));
    }
    return out;
  }

  /// Per-class mask logits [R x 2m x 2m x C] for the given last-layer queries.
  Tensor<T> mask_logits(const ModelOutput<T>& out, const std::vector<std::size_t>& rows) const {
    if (!cfg_.uses_masks()) throw ConfigError("model was built without a mask head");
    const auto& layer = decoder_.back();
    const std::size_t m = cfg_.m_mask, p = m * m;
    const Tensor<T> grid = layer.cross_attn.mask_branch(out.last_attention, rows);
    Tensor<T> z = add(repeat_rows(gather_rows(out.last_query, rows), p), grid);
    z = layer.norm2(z);
    z = layer.norm3(add(z, layer.ff(z)));
    return mask_head_(z, m);
  }

  template <class Fn>
  void for_each_param(Fn&& fn) {
    backbone_.for_each_param("backbone", fn);
    for (std::size_t s = 0; s < encoder_.size(); ++s)
      encoder_[s].for_each_param("encoder" + std::to_string(s), fn);
    proposal_head_.for_each_param("proposal_head", fn);
    query_proj_.for_each_param("query_proj", fn);
    for (std::size_t s = 0; s < decoder_.size(); ++s)
      decoder_[s].for_each_param("decoder" + std::to_string(s), fn);
    head_.for_each_param("head", fn);
    if (cfg_.uses_masks()) mask_head_.for_each_param("mask_head", fn);
  }

  /// Parameters in declaration order.
  std::vector<NamedTensor<T>> named_parameters() {
    std::vector<NamedTensor<T>> out;
    for_each_param([&](const std::string& n, Tensor<T>& t, ParamGroup) { out.push_back({n, t}); });
    return out;
  }

  std::vector<EncoderLayer<T>>& encoder() { return encoder_; }
  std::vector<DecoderLayer<T>>& decoder() { return decoder_; }
  PredictionHead<T>& head() { return head_; }
  PredictionHead<T>& proposal_head() { return proposal_head_; }
  MaskHead<T>& mask_head() { return mask_head_; }
  PyramidBuilder<T>& backbone() { return backbone_; }

 private:
  static std::vector<Tensor<T>> split_levels(const Tensor<T>& x, const std::vector<Shape>& shapes) {
    std::vector<Tensor<T>> out;
    std::size_t begin = 0;
    for (const auto& s : shapes) {
      const std::size_t n = s[0] * s[1];
      out.push_back(reshape(slice_rows(x, begin, begin + n), s));
      begin += n;
    }
    return out;
  }

  ProposalPlan<T> select_proposals(const ModelOutput<T>& out, const Tensor<T>& x) const {
    const std::size_t total = out.enc_logits.size(0), a = cfg_.num_angles();
    const std::size_t kq = std::min(cfg_.top_k, total);
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto logits = out.enc_logits.data();
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return logits[i] > logits[j]; });
    order.resize(kq);
    ProposalPlan<T> plan;
    plan.rows = order;
    std::vector<std::size_t> positions(kq);
    std::vector<T> scores(kq);
    for (std::size_t i = 0; i < kq; ++i) {
      positions[i] = order[i] / a;
      scores[i] = T(1) / (T(1) + std::exp(-logits[order[i]]));
    }
    plan.windows = boxes_to_windows(gather_rows(out.enc_boxes.detach(), order));
    plan.features = gather_rows(x.detach(), positions);
    plan.scores = Tensor<T>(Shape{kq}, std::move(scores));
    return plan;
  }

  ModelConfig cfg_;
  PyramidBuilder<T> backbone_;
  std::vector<EncoderLayer<T>> encoder_;
  PredictionHead<T> proposal_head_;
  Linear<T> query_proj_;
  std::vector<DecoderLayer<T>> decoder_;
  PredictionHead<T> head_;
  MaskHead<T> mask_head_;
  Tensor<T> ref_windows_;
  Tensor<T> enc_pos_;
};

}  // namespace boxer
