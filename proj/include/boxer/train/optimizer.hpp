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
#include <string>
#include <vector>

#include "boxer/numerics/nn.hpp"

namespace boxer {

struct OptimizerConfig {
  double lr = 2e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double transform_lr_scale = 0.1;  // where-to-attend projections
  double grad_clip = 0.1;           // global norm; 0 disables

  void validate() const {
    if (!(lr > 0) || weight_decay < 0 || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) ||
        !(eps > 0) || !(transform_lr_scale > 0) || grad_clip < 0)
      throw ConfigError("invalid optimizer settings");
  }
};

/// Adam with decoupled weight decay over two parameter groups.
template <class T>
class AdamW {
 public:
  struct Slot {
    std::string name;
    Tensor<T> param;
    ParamGroup group;
    std::vector<double> m, v;
  };

  AdamW() = default;
  explicit AdamW(const OptimizerConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

  void add(const std::string& name, Tensor<T> param, ParamGroup group) {
    const std::size_t n = param.numel();
    slots_.push_back({name, std::move(param), group, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }

  void zero_grad() {
    for (auto& s : slots_)
      if (s.param.has_grad()) s.param.zero_grad();
  }

  /// Global L2 norm of the current gradients.
  double grad_norm() const {
    double total = 0;
    for (const auto& s : slots_)
      if (s.param.has_grad())
        for (T g : s.param.grad()) total += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(total);
  }

  /// One update with base rate `lr` (the schedule is the caller's), after
  /// scaling gradients by `grad_scale` and clipping the global norm.
  void step(double lr, double grad_scale = 1.0) {
    ++t_;
    double factor = grad_scale;
    if (cfg_.grad_clip > 0) {
      const double norm = grad_norm() * grad_scale;
      if (norm > cfg_.grad_clip) factor *= cfg_.grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
      if (!s.param.has_grad()) continue;
      const double rate = lr * (s.group == ParamGroup::kTransform ? cfg_.transform_lr_scale : 1.0);
      auto p = s.param.mutable_data();
      const auto g = s.param.grad();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * factor;
        s.m[i] = cfg_.beta1 * s.m[i] + (1 - cfg_.beta1) * gi;
        s.v[i] = cfg_.beta2 * s.v[i] + (1 - cfg_.beta2) * gi * gi;
        const double update = (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + cfg_.eps);
        p[i] = static_cast<T>(static_cast<double>(p[i]) * (1 - rate * cfg_.weight_decay) - rate * update);
      }
    }
  }

  const std::vector<Slot>& slots() const { return slots_; }
  long steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

/// Step decay: `base` until `decay_step`, then base * factor.
inline double scheduled_lr(double base, std::size_t step, std::size_t decay_step, double factor = 0.1) {
  return step < decay_step ? base : base * factor;
}

}  // namespace boxer
