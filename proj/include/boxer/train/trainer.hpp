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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "boxer/model/checkpoint.hpp"
#include "boxer/train/evaluate.hpp"

namespace boxer {

inline constexpr std::uint64_t kModelStream = 0x6d6f64656cULL;
inline constexpr std::uint64_t kOrderStream = 0x6f72646572ULL;
inline constexpr std::uint64_t kFlipStream = 0x666c6970ULL;

/// A training sample after augmentation.
template <class T>
struct Sample {
  std::size_t index = 0;  // position in the training set
  std::uint64_t seed = 0;
  bool flipped = false;
  Tensor<T> input;
  SceneTargets targets;
};

template <class T>
Sample<T> make_sample(const RunConfig& cfg, std::size_t index, bool flip) {
  Sample<T> s;
  s.index = index;
  s.seed = scene_seed(cfg.seed, index);
  s.flipped = flip;
  if (cfg.mode() == Mode::k2D) {
    auto scene = gen_scene_2d(s.seed, cfg.scene2d);
    if (flip) scene = flip_horizontal(scene);
    s.input = scene_tensor<T>(scene);
    s.targets = scene_targets(scene);
  } else {
    auto scene = gen_scene_3d(s.seed, cfg.scene3d);
    if (flip) scene = flip_horizontal(scene);
    s.input = scene_tensor<T>(scene);
    s.targets = scene_targets(scene);
  }
  return s;
}

/// Training-set order for one epoch: a seeded Fisher-Yates shuffle.
inline std::vector<std::size_t> epoch_order(const RunConfig& cfg, std::size_t epoch) {
  std::vector<std::size_t> order(cfg.train_scenes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(scene_seed(cfg.seed ^ kOrderStream, epoch));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

/// Forward pass, matching and loss for one sample, with the tape recording.
template <class T>
LossResult<T> sample_loss(const BoxerModel<T>& model, const Sample<T>& s, const LossWeights& w) {
  const auto out = model.forward(s.input);
  const auto plan = make_loss_plan(model, out, s.targets, w);
  return total_loss(model, out, s.targets, plan, w);
}

struct MetricsRow {
  std::size_t step = 0;
  double lr = 0;
  double loss = 0;                       // mean per-sample loss since the previous row
  std::map<std::string, double> terms;   // same averaging
  EvalMetrics eval;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  double initial_loss = 0;  // mean loss of the first batch
  std::size_t best_step = 0;
  EvalMetrics best;
  double seconds = 0;
};

/// Metric rows as CSV: fixed columns, one row per evaluation.
class MetricsCsv {
 public:
  explicit MetricsCsv(const std::string& path) : os_(path) {
    if (!os_) throw ConfigError("cannot write " + path);
  }

  void append(const MetricsRow& row) {
    if (columns_.empty()) {
      for (const auto& [k, v] : row.terms) columns_.push_back(k);
      os_ << "step,lr,loss";
      for (const auto& k : columns_) os_ << ',' << k;
      for (const auto& [k, v] : row.eval.values) os_ << ',' << k;
      os_ << '\n';
    }
    os_ << row.step << ',' << format(row.lr) << ',' << format(row.loss);
    for (const auto& k : columns_) os_ << ',' << format(row.terms.count(k) ? row.terms.at(k) : 0.0);
    for (const auto& [k, v] : row.eval.values) os_ << ',' << format(v);
    os_ << '\n';
    os_.flush();
  }

 private:
  static std::string format(double v) {
    std::ostringstream ss;
    ss << std::setprecision(9) << v;
    return ss.str();
  }

  std::ofstream os_;
  std::vector<std::string> columns_;
};

/// Full training run writing config.txt, metrics.csv, summary.json,
/// final.ckpt and best.ckpt into `out_dir`. Throws NumericalError (after
/// writing nan_batch.json) when a loss goes non-finite.
inline TrainResult train(const RunConfig& cfg, const std::string& out_dir, std::ostream* log = nullptr,
                         std::size_t workers = 1) {
  using T = float;
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream os(fs::path(out_dir) / "config.txt");
    os << format_run_config(cfg);
  }
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  BoxerModel<T> model(cfg.model, scene_seed(cfg.seed, kModelStream));
  AdamW<T> opt(cfg.optim);
  model.for_each_param([&](const std::string& name, Tensor<T>& t, ParamGroup g) {
    t.set_requires_grad(true);
    opt.add(name, t, g);
  });

  MetricsCsv csv((fs::path(out_dir) / "metrics.csv").string());
  TrainResult result;
  nlohmann::json timings = nlohmann::json::array();
  double best = -1;
  std::map<std::string, double> term_sum;
  double loss_sum = 0;
  std::size_t samples = 0;
  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double lr = scheduled_lr(cfg.optim.lr, step, cfg.decay_step, cfg.lr_decay);
    std::vector<std::size_t> indices;
    std::vector<bool> flips;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t pos = step * cfg.batch_size + b;
      if (pos / cfg.train_scenes != order_epoch) {
        order_epoch = pos / cfg.train_scenes;
        order = epoch_order(cfg, order_epoch);
      }
      indices.push_back(order[pos % cfg.train_scenes]);
      flips.push_back(cfg.flip && (Rng(scene_seed(cfg.seed ^ kFlipStream, pos)).next() & 1));
    }
    std::vector<Sample<T>> batch(indices.size());
    {
      const std::size_t n = indices.size(), wk = std::max<std::size_t>(1, std::min(workers, n));
      auto job = [&](std::size_t w) {
        for (std::size_t i = w; i < n; i += wk) batch[i] = make_sample<T>(cfg, indices[i], flips[i]);
      };
      if (wk == 1) {
        job(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < wk; ++w) pool.emplace_back(job, w);
        for (auto& t : pool) t.join();
      }
    }

    opt.zero_grad();
    double batch_loss = 0;
    for (const auto& s : batch) {
      Tape<T> tape;
      TapeScope<T> scope(tape);
      auto loss = sample_loss(model, s, cfg.loss);
      const double v = static_cast<double>(loss.total.item());
      if (!std::isfinite(v)) {
        nlohmann::json dump{{"step", step}, {"scene_index", s.index}, {"scene_seed", s.seed},
                            {"flipped", s.flipped}, {"terms", loss.terms}};
        nlohmann::json seeds = nlohmann::json::array();
        for (const auto& o : batch) seeds.push_back({{"scene_index", o.index}, {"scene_seed", o.seed}, {"flipped", o.flipped}});
        dump["batch"] = seeds;
        std::ofstream(fs::path(out_dir) / "nan_batch.json") << dump.dump(2) << '\n';
        throw NumericalError("non-finite loss at step " + std::to_string(step) + " on scene seed " +
                             std::to_string(s.seed) + " (see nan_batch.json)");
      }
      tape.backward(loss.total);
      batch_loss += v;
      for (const auto& [k, t] : loss.terms) term_sum[k] += t;
      loss_sum += v;
      ++samples;
    }
    if (step == 0) result.initial_loss = batch_loss / static_cast<double>(batch.size());
    opt.step(lr, 1.0 / static_cast<double>(batch.size()));

    const std::size_t done = step + 1;
    if (done % cfg.eval_every == 0 || done == cfg.steps) {
      MetricsRow row;
      row.step = done;
      row.lr = lr;
      row.loss = loss_sum / static_cast<double>(samples);
      for (const auto& [k, v] : term_sum) row.terms[k] = v / static_cast<double>(samples);
      row.eval = evaluate(model, cfg, cfg.eval_scenes);
      csv.append(row);
      timings.push_back({{"step", done}, {"seconds", elapsed()}});
      if (log) {
        *log << "step " << done << " loss " << row.loss;
        for (const auto& [k, v] : row.eval.values) *log << ' ' << k << ' ' << v;
        *log << " (" << static_cast<long>(elapsed()) << "s)" << std::endl;
      }
      if (row.eval.headline() > best) {
        best = row.eval.headline();
        result.best = row.eval;
        result.best_step = done;
        save_checkpoint(model, (fs::path(out_dir) / "best.ckpt").string(),
                        {{"step", done}, {"run_config", format_run_config(cfg)}});
      }
      result.rows.push_back(std::move(row));
      term_sum.clear();
      loss_sum = 0;
      samples = 0;
    }
  }
  save_checkpoint(model, (fs::path(out_dir) / "final.ckpt").string(),
                  {{"step", cfg.steps}, {"run_config", format_run_config(cfg)}});
  result.seconds = elapsed();

  nlohmann::json summary;
  summary["mode"] = mode_name(cfg.mode());
  summary["seed"] = cfg.seed;
  summary["steps"] = cfg.steps;
  summary["initial_loss"] = result.initial_loss;
  summary["best_step"] = result.best_step;
  for (const auto& [k, v] : result.best.values) summary["best"][k] = v;
  for (const auto& [k, v] : result.rows.back().eval.values) summary["final"][k] = v;
  summary["eval_seconds"] = timings;
  summary["wall_seconds"] = result.seconds;
  std::ofstream(fs::path(out_dir) / "summary.json") << summary.dump(2) << '\n';
  return result;
}

}  // namespace boxer
