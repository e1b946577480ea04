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

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "boxer/train/gradcheck.hpp"
#include "boxer/train/render.hpp"
#include "boxer/train/trainer.hpp"

namespace {

using namespace boxer;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kNumerical = 2;

/// Run config stored with a checkpoint, or mode defaults sized to the model.
RunConfig checkpoint_run_config(const BoxerModel<float>& model, const nlohmann::json& extra) {
  if (extra.contains("run_config")) return parse_run_config(extra.at("run_config").get<std::string>());
  RunConfig cfg = RunConfig::defaults(model.config().mode);
  cfg.model = model.config();
  cfg.sync_scenes();
  return cfg;
}

int cmd_train(const std::string& config, const std::string& out) {
  const RunConfig cfg = load_run_config(config);
  const auto result = train(cfg, out, &std::cerr, workers_from_env());
  std::cout << "best step " << result.best_step;
  for (const auto& [k, v] : result.best.values) std::cout << ' ' << k << ' ' << v;
  std::cout << '\n';
  return kOk;
}

int cmd_eval(const std::string& ckpt, std::size_t scenes, const std::string& mode) {
  nlohmann::json extra;
  const auto model = load_checkpoint<float>(ckpt, &extra);
  if (model.config().mode != parse_mode(mode))
    throw CheckpointError(ckpt + ": checkpoint (format v" + std::to_string(kCheckpointVersion) + ") holds a " +
                          mode_name(model.config().mode) + " model, not " + mode);
  RunConfig cfg = checkpoint_run_config(model, extra);
  const auto metrics = evaluate(model, cfg, scenes);
  nlohmann::json j{{"checkpoint", ckpt}, {"mode", mode}, {"scenes", scenes}};
  for (const auto& [k, v] : metrics.values) j["metrics"][k] = v;
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_gradcheck(const std::string& config) {
  const RunConfig cfg = load_run_config(config);
  const auto s = run_gradcheck(cfg, kernel_cases(cfg.seed + 7));
  std::cout << std::left << std::setw(24) << "suite" << std::setw(14) << "max rel err" << "limit\n";
  for (const auto& k : s.kernels)
    std::cout << std::setw(24) << k.name << std::setw(14) << k.report.max_rel_err << k.threshold
              << (k.passed() ? "" : "  FAIL") << '\n';
  std::cout << "\ncomposite loss, " << s.composite.entries.size() << " parameter tensors:\n";
  for (const auto& e : s.composite.entries)
    std::cout << "  " << std::setw(44) << e.name << std::setw(8) << e.count << e.max_rel_err
              << (e.max_rel_err < s.composite_threshold ? "" : "  FAIL") << '\n';
  std::cout << "composite max rel err " << s.composite.max_rel_err << " (limit " << s.composite_threshold
            << ")\nkernels " << s.seconds_kernels << "s, composite " << s.seconds_composite << "s\n";
  if (s.passed()) {
    std::cout << "gradcheck passed\n";
    return kOk;
  }
  std::cerr << "gradcheck failed:\n";
  for (const auto& f : s.failures()) std::cerr << "  " << f << '\n';
  return kNumerical;
}

int cmd_render(const std::string& ckpt, std::uint64_t seed, const std::string& out, double threshold,
               bool no_attention) {
  nlohmann::json extra;
  const auto model = load_checkpoint<float>(ckpt, &extra);
  const RunConfig cfg = checkpoint_run_config(model, extra);
  RenderOptions opt;
  opt.score_threshold = threshold;
  opt.attention = !no_attention;
  RenderResult r;
  if (cfg.mode() == Mode::k2D) {
    const auto s = gen_scene_2d(seed, cfg.scene2d);
    r = render_scene(model, scene_tensor<float>(s), scene_targets(s), opt);
  } else {
    const auto s = gen_scene_3d(seed, cfg.scene3d);
    r = render_scene(model, scene_tensor<float>(s), scene_targets(s), opt);
  }
  std::ofstream os(out);
  if (!os) throw ConfigError("cannot write " + out);
  os << r.svg;
  std::cout << "wrote " << out << " (" << r.predictions << " predictions, " << r.attended << " attended boxes)\n";
  return kOk;
}

int cmd_scenes(const std::string& mode, std::uint64_t seed, std::size_t count, const std::string& out) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  const RunConfig cfg = RunConfig::defaults(parse_mode(mode));
  std::ofstream index(fs::path(out) / "scenes.jsonl");
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = scene_seed(seed, i);
    const std::string raster = "scene_" + std::to_string(i) + ".f32";
    nlohmann::json rec;
    if (cfg.mode() == Mode::k2D) {
      const auto scene = gen_scene_2d(s, cfg.scene2d);
      rec = scene_record(scene, s);
      write_raster((fs::path(out) / raster).string(), scene.raster);
    } else {
      const auto scene = gen_scene_3d(s, cfg.scene3d);
      rec = scene_record(scene, s);
      write_raster((fs::path(out) / raster).string(), scene.bev);
    }
    rec["raster"] = raster;
    index << rec.dump() << '\n';
  }
  std::cout << "wrote " << count << " scenes to " << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Box-attention detector on synthetic scenes"};
  app.require_subcommand(1);

  std::string config, out, ckpt, mode = "2d";
  std::size_t scenes = 500, count = 10;
  std::uint64_t seed = 0;
  double threshold = 0.3;
  bool no_attention = false;

  auto* train_cmd = app.add_subcommand("train", "Train a model and write metrics and checkpoints");
  train_cmd->add_option("--config", config, "Run config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on held-out scenes");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--scenes", scenes, "Number of held-out scenes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--mode", mode, "2d or 3d")->check(CLI::IsMember({"2d", "3d"}));

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare gradients with finite differences");
  grad_cmd->add_option("--config", config, "Run config file")->required()->check(CLI::ExistingFile);

  auto* render_cmd = app.add_subcommand("render", "Draw predictions for one scene as SVG");
  render_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  render_cmd->add_option("--seed", seed, "Scene seed")->required();
  render_cmd->add_option("--out", out, "Output SVG")->required();
  render_cmd->add_option("--threshold", threshold, "Minimum score to draw");
  render_cmd->add_flag("--no-attention", no_attention, "Skip attended boxes");

  auto* scenes_cmd = app.add_subcommand("scenes", "Dump synthetic scenes");
  scenes_cmd->add_option("--mode", mode, "2d or 3d")->check(CLI::IsMember({"2d", "3d"}));
  scenes_cmd->add_option("--seed", seed, "Stream seed");
  scenes_cmd->add_option("--count", count, "Number of scenes");
  scenes_cmd->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*train_cmd) return cmd_train(config, out);
    if (*eval_cmd) return cmd_eval(ckpt, scenes, mode);
    if (*grad_cmd) return cmd_gradcheck(config);
    if (*render_cmd) return cmd_render(ckpt, seed, out, threshold, no_attention);
    if (*scenes_cmd) return cmd_scenes(mode, seed, count, out);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}
