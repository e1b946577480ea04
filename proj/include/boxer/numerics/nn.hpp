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
#include <random>
#include <string>
#include <utility>

#include "boxer/numerics/ops.hpp"

// Small parameter-holding layers shared by the attention and model code.

namespace boxer {

/// Optimizer group a parameter belongs to. Transform projections of the
/// where-to-attend module train at a reduced rate.
enum class ParamGroup { kBase, kTransform };

/// Deterministic uniform draws independent of the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }
  double normal() {
    // Box-Muller, one value per call.
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

enum class Init { kXavier, kZero };

template <class T>
Tensor<T> make_param(Shape shape, Init init, Rng& rng, std::size_t fan_in = 0,
                     std::size_t fan_out = 0) {
  Tensor<T> t(std::move(shape), true);
  if (init == Init::kXavier) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return t;
}

template <class T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]
  ParamGroup group = ParamGroup::kBase;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, Init init = Init::kXavier,
         ParamGroup g = ParamGroup::kBase)
      : weight(make_param<T>({in, out}, init, rng, in, out)),
        bias(make_param<T>({out}, Init::kZero, rng)),
        group(g) {}

  std::size_t in_features() const { return weight.size(0); }
  std::size_t out_features() const { return weight.size(1); }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight, group);
    fn(prefix + ".bias", bias, group);
  }
};

template <class T>
struct LayerNorm {
  Tensor<T> gain, bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d) : gain(Tensor<T>::full({d}, T(1), true)), bias(Shape{d}, true) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".gain", gain, ParamGroup::kBase);
    fn(prefix + ".bias", bias, ParamGroup::kBase);
  }
};

/// Two-layer position-wise feed-forward block with relu.
template <class T>
struct FeedForward {
  Linear<T> up, down;

  FeedForward() = default;
  FeedForward(std::size_t d, std::size_t hidden, Rng& rng) : up(d, hidden, rng), down(hidden, d, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return down(relu(up(x))); }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    up.for_each_param(prefix + ".up", fn);
    down.for_each_param(prefix + ".down", fn);
  }
};

/// Three-layer perceptron with relu; the last layer starts at zero so the
/// head's first prediction is its prior.
template <class T>
struct Mlp3 {
  Linear<T> l1, l2, l3;

  Mlp3() = default;
  Mlp3(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
      : l1(in, hidden, rng), l2(hidden, hidden, rng), l3(hidden, out, rng, Init::kZero) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return l3(relu(l2(relu(l1(x))))); }

  template <class Fn>
  void for_each_param(const std::string& prefix, Fn&& fn) {
    l1.for_each_param(prefix + ".l1", fn);
    l2.for_each_param(prefix + ".l2", fn);
    l3.for_each_param(prefix + ".l3", fn);
  }
};

}  // namespace boxer
