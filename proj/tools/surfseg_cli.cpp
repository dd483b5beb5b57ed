// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

// surfseg command-line front end. Flags override values from a config file,
// which override built-in defaults.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "surfseg/checkpoint.hpp"
#include "surfseg/mesh.hpp"
#include "surfseg/metrics.hpp"
#include "surfseg/parallel.hpp"
#include "surfseg/segmenter.hpp"
#include "surfseg/synth.hpp"
#include "surfseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace surfseg;

namespace {

// Input validation failures map to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw UsageError(std::string(what) + " not found: " + path);
}

template <typename Fn>
auto as_usage(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
}

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Common {
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config file)");
  cmd->add_option("--threads", c.threads, "Worker thread cap; 1 is the deterministic reference path")
      ->check(CLI::NonNegativeNumber);
}

void apply_threads(const Common& c) {
  if (c.threads > 0) set_max_threads(c.threads);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"surfseg: multi-view object segmentation through neural surface fields"};
  app.require_subcommand(1);
  app.footer("Precedence: command-line flag > config file > built-in default.");

  // synth
  Common synth_c;
  std::string synth_spec, synth_out;
  auto* synth = app.add_subcommand("synth", "Render a synthetic scene with ground-truth masks");
  synth->add_option("--spec", synth_spec, "Scene spec JSON")->required();
  synth->add_option("--out", synth_out, "Output scene directory")->required();
  add_common(synth, synth_c);

  // train
  Common train_c;
  std::string train_scene, train_config, train_out, train_history;
  std::optional<long> train_iters;
  std::optional<int> train_batch;
  std::optional<double> train_lr;
  bool train_no_masks = false;
  auto* train_cmd = app.add_subcommand("train", "Optimize the foreground and background fields");
  train_cmd->add_option("--scene", train_scene, "Scene directory")->required();
  train_cmd->add_option("--config", train_config, "Training config JSON");
  train_cmd->add_option("--out", train_out, "Output checkpoint path")->required();
  train_cmd->add_option("--history", train_history, "Loss history CSV (default: <out>.history.csv)");
  train_cmd->add_option("--iterations", train_iters, "Iteration count");
  train_cmd->add_option("--batch-rays", train_batch, "Rays per batch");
  train_cmd->add_option("--lr", train_lr, "Learning rate");
  train_cmd->add_flag("--no-masks", train_no_masks, "Ignore coarse masks");
  add_common(train_cmd, train_c);

  // render
  Common render_c;
  std::string render_ckpt, render_scene, render_out;
  std::size_t render_view = 0;
  bool render_no_occ = false;
  auto* render = app.add_subcommand("render", "Render one training view");
  render->add_option("--ckpt", render_ckpt, "Checkpoint")->required();
  render->add_option("--scene", render_scene, "Scene directory (camera poses)")->required();
  render->add_option("--view", render_view, "View index")->required();
  render->add_option("--out", render_out, "Output PNG")->required();
  render->add_flag("--no-occupancy", render_no_occ, "Disable empty-space skipping");
  add_common(render, render_c);

  // segment
  Common seg_c;
  std::string seg_ckpt, seg_scene, seg_out;
  double seg_threshold = kDefaultMaskThreshold;
  auto* segment = app.add_subcommand("segment", "Write alpha, mask, foreground and background PNGs");
  segment->add_option("--ckpt", seg_ckpt, "Checkpoint")->required();
  segment->add_option("--scene", seg_scene, "Scene directory")->required();
  segment->add_option("--out", seg_out, "Output directory")->required();
  segment->add_option("--threshold", seg_threshold, "Binary mask threshold");
  add_common(segment, seg_c);

  // eval
  Common eval_c;
  std::string eval_pred, eval_gt, eval_report;
  double eval_threshold = kDefaultMaskThreshold;
  MetricScales scales;
  auto* eval = app.add_subcommand("eval", "Score predicted alpha maps against ground-truth masks");
  eval->add_option("--pred", eval_pred, "Predicted alpha directory (or a segment output directory)")
      ->required();
  eval->add_option("--gt", eval_gt, "Ground-truth mask directory (or a synthetic scene directory)")
      ->required();
  eval->add_option("--report", eval_report, "Output JSON report")->required();
  eval->add_option("--threshold", eval_threshold, "Binary threshold");
  eval->add_option("--sad-divisor", scales.sad_divisor, "SAD divisor");
  eval->add_option("--mse-factor", scales.mse_factor, "MSE factor");
  add_common(eval, eval_c);

  // mesh
  Common mesh_c;
  std::string mesh_ckpt, mesh_out;
  int mesh_res = 256;
  auto* mesh = app.add_subcommand("mesh", "Extract the foreground zero-level set as OBJ");
  mesh->add_option("--ckpt", mesh_ckpt, "Checkpoint")->required();
  mesh->add_option("--res", mesh_res, "Grid cells per axis");
  mesh->add_option("--out", mesh_out, "Output OBJ")->required();
  add_common(mesh, mesh_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      apply_threads(synth_c);
      require_file(synth_spec, "spec");
      SynthSpec spec = as_usage([&] { return SynthSpec::from_json_file(synth_spec); });
      if (synth_c.seed) spec.seed = *synth_c.seed;
      std::cerr << "synth: rendering " << spec.views << " views\n";
      const SynthScene scene = synth_scene(spec);
      write_scene_dir(synth_out, scene);
      std::cerr << "synth: wrote " << synth_out << "\n";
    } else if (*train_cmd) {
      apply_threads(train_c);
      require_dir(train_scene, "scene directory");
      TrainConfig config;
      if (!train_config.empty()) {
        require_file(train_config, "config");
        config = as_usage([&] { return TrainConfig::from_json_file(train_config); });
      }
      if (train_c.seed) config.seed = *train_c.seed;
      if (train_iters) config.iterations = *train_iters;
      if (train_batch) config.batch_rays = *train_batch;
      if (train_lr) config.lr = *train_lr;
      if (train_no_masks) config.use_masks = false;
      as_usage([&] { config.validate(); return 0; });
      const SceneBundle scene = as_usage([&] { return load_scene_dir(train_scene, config.use_masks); });
      const fs::path out = train_out;
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::cerr << "train: " << scene.views.size() << " views, " << config.iterations << " iterations\n";
      const TrainResult result = train(scene, config, out);
      write_history_csv(train_history.empty() ? fs::path(train_out + ".history.csv") : fs::path(train_history),
                        result.history);
      std::cerr << "train: wrote " << train_out << "\n";
    } else if (*render) {
      apply_threads(render_c);
      require_file(render_ckpt, "checkpoint");
      require_dir(render_scene, "scene directory");
      const Checkpoint ckpt = as_usage([&] { return Checkpoint::load(render_ckpt); });
      const TrainedModel model(ckpt);
      const SceneBundle scene =
          as_usage([&] { return load_scene_dir(render_scene, model.config().use_masks); });
      if (render_view >= scene.views.size()) {
        throw UsageError("view " + std::to_string(render_view) + " out of range (scene has " +
                         std::to_string(scene.views.size()) + " views)");
      }
      SegmentOptions options;
      options.use_masks = model.config().use_masks;
      options.mask_dilation = model.config().mask_dilation;
      const auto out = segment_view(model.field(), scene, render_view,
                                    model.render_settings(!render_no_occ), options);
      write_png(render_out, out.composite);
      std::cerr << "render: wrote " << render_out << "\n";
    } else if (*segment) {
      apply_threads(seg_c);
      require_file(seg_ckpt, "checkpoint");
      require_dir(seg_scene, "scene directory");
      if (!(seg_threshold > 0.0 && seg_threshold < 1.0)) throw UsageError("threshold must lie in (0,1)");
      const Checkpoint ckpt = as_usage([&] { return Checkpoint::load(seg_ckpt); });
      const TrainedModel model(ckpt);
      const SceneBundle scene =
          as_usage([&] { return load_scene_dir(seg_scene, model.config().use_masks); });
      for (std::size_t v = 0; v < scene.views.size(); ++v) {
        const auto out = segment_view(model, scene, v, seg_threshold);
        write_segmentation(seg_out, scene.views[v].name, out);
        std::cerr << "segment: view " << v + 1 << "/" << scene.views.size() << "\n";
      }
    } else if (*eval) {
      apply_threads(eval_c);
      require_dir(eval_pred, "prediction directory");
      require_dir(eval_gt, "ground-truth directory");
      fs::path pred_dir = eval_pred, gt_dir = eval_gt;
      if (fs::is_directory(pred_dir / "alpha")) pred_dir /= "alpha";
      if (fs::is_directory(gt_dir / "gt_masks")) gt_dir /= "gt_masks";
      const auto preds = sorted_pngs(pred_dir);
      const auto gts = sorted_pngs(gt_dir);
      if (preds.size() != gts.size()) {
        throw UsageError("image count mismatch: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(gts.size()) + " ground-truth masks");
      }
      std::vector<Image> pred_images, gt_images;
      std::vector<std::string> names;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        pred_images.push_back(read_png(preds[i], 1));
        gt_images.push_back(read_png(gts[i], 1));
        names.push_back(preds[i].stem().string());
      }
      const EvalReport report =
          as_usage([&] { return evaluate(pred_images, gt_images, eval_threshold, scales, names); });
      std::ofstream out(eval_report);
      if (!out) throw IoError("cannot write " + eval_report);
      out << report.to_json();
      std::cerr << report.to_table();
    } else if (*mesh) {
      apply_threads(mesh_c);
      require_file(mesh_ckpt, "checkpoint");
      if (mesh_res < 8) throw UsageError("--res must be >= 8");
      const Checkpoint ckpt = as_usage([&] { return Checkpoint::load(mesh_ckpt); });
      const TrainedModel model(ckpt);
      const SurfaceMesh m = extract_mesh(model.fields(), mesh_res, model.norm());
      write_obj(mesh_out, m);
      std::cerr << "mesh: " << m.vertices.size() << " vertices, " << m.triangles.size()
                << " triangles -> " << mesh_out << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
