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
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "boxer/numerics/tensor.hpp"

namespace boxer {

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_rel_err = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
};

struct GradCheckReport {
  double max_rel_err = 0;
  double floor = 0;  // denominator floor used for every entry
  std::vector<GradCheckEntry> entries;  // one per parameter tensor, input order
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that sit
/// inside the finite-difference rounding noise from reading as mismatches.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `eps`, entry by entry.
///
/// `f` must rebuild the loss from the current parameter values each call.
template <class T>
GradCheckReport grad_check_named(const std::function<Tensor<T>()>& f,
                                 std::vector<NamedTensor<T>> params, T eps = T(1e-4)) {
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    if (p.tensor.has_grad()) p.tensor.zero_grad();
  }
  double value = 0;
  {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> loss = f();
    if (!all_finite(loss)) throw NumericalError("grad_check: non-finite function value");
    value = static_cast<double>(loss.item());
    tape.backward(loss);
  }
  auto evaluate = [&f] {
    NoGradScope<T> off;
    const T v = f().item();
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericalError("grad_check: non-finite function value");
    return static_cast<double>(v);
  };

  GradCheckReport report;
  // Central differences carry about machine-eps * |f| / eps of rounding
  // error; below 1e4 times that, compare in absolute terms.
  const double rounding = std::numeric_limits<T>::epsilon() * std::max(1.0, std::abs(value)) /
                          static_cast<double>(eps);
  report.floor = std::max(1e-8, 1e4 * rounding);
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    entry.count = p.tensor.numel();
    std::vector<T> analytic(p.tensor.numel(), T(0));
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate();
      values[i] = saved - eps;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * static_cast<double>(eps));
      const double err = relative_error(static_cast<double>(analytic[i]), numeric, report.floor);
      if (err > entry.max_rel_err || i == 0) {
        entry.max_rel_err = std::max(err, entry.max_rel_err);
        if (err >= entry.max_rel_err) {
          entry.worst_index = i;
          entry.analytic = static_cast<double>(analytic[i]);
          entry.numeric = numeric;
        }
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

/// Max relative error over every entry of every parameter.
template <class T>
double grad_check(const std::function<Tensor<T>()>& f, const std::vector<Tensor<T>>& params,
                  T eps = T(1e-4)) {
  std::vector<NamedTensor<T>> named;
  for (std::size_t i = 0; i < params.size(); ++i)
    named.push_back({"param" + std::to_string(i), params[i]});
  return grad_check_named<T>(f, std::move(named), eps).max_rel_err;
}

}  // namespace boxer
