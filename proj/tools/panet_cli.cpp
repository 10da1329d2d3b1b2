// Command-line front end: train, eval, stats, gradcheck, anchors, shapes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "panet/grad_suite.hpp"
#include "panet/harness/anchors.hpp"
#include "panet/harness/config.hpp"
#include "panet/harness/evaluate.hpp"
#include "panet/harness/image_io.hpp"
#include "panet/harness/scene.hpp"
#include "panet/harness/train.hpp"

namespace fs = std::filesystem;
using namespace panet;
using namespace panet::harness;

namespace {

TrainConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::ofstream open_output(const std::string& path) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

std::vector<SyntheticScene> scenes_for(const PANetModel& model, std::size_t count) {
  TrainConfig cfg = model.config();
  if (count > 0) cfg.eval_scenes = count;
  return evaluation_scenes(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Path-aggregation instance segmentation on synthetic scenes"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "run";
  std::vector<std::string> overrides;
  bool evaluate_after = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write metrics.csv and model.ckpt");
  train_cmd->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "Output directory");
  train_cmd->add_option("--set", overrides, "Override a config key (key=value), repeatable");
  train_cmd->add_flag("--eval", evaluate_after, "Evaluate on held-out scenes after training");

  std::string checkpoint, report_path = "report.csv";
  std::size_t scene_count = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on held-out scenes");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", report_path, "Report CSV");
  eval_cmd->add_option("--scenes", scene_count, "Number of scenes (default: eval_scenes from the checkpoint)");

  std::string stats_path = "source_ratios.csv", head = "box";
  auto* stats_cmd = app.add_subcommand("stats", "Per-level max-fusion source ratios of a trained model");
  stats_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--out", stats_path, "CSV output");
  stats_cmd->add_option("--scenes", scene_count, "Number of scenes");
  stats_cmd->add_option("--head", head, "Head to trace")->check(CLI::IsMember({"box", "mask"}));

  std::uint64_t seed = 1;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad_cmd->add_option("--seed", seed, "Input seed");

  std::string preset = "mvd";
  std::vector<double> scales, ratios;
  auto* anchors_cmd = app.add_subcommand("anchors", "Print anchor templates as CSV");
  anchors_cmd->add_option("--preset", preset, "mvd | cityscapes | custom")
      ->check(CLI::IsMember({"mvd", "cityscapes", "custom"}));
  anchors_cmd->add_option("--scales", scales, "Anchor areas for the custom preset");
  anchors_cmd->add_option("--ratios", ratios, "Aspect ratios (w/h) for the custom preset");

  std::string dump_dir;
  std::size_t count = 8, size = 64, max_instances = 3;
  auto* shapes_cmd = app.add_subcommand("shapes", "Generate synthetic scenes");
  shapes_cmd->add_option("--dump", dump_dir, "Write PPM previews into this directory")->required();
  shapes_cmd->add_option("--count", count, "Number of scenes");
  shapes_cmd->add_option("--size", size, "Image side (multiple of 32)");
  shapes_cmd->add_option("--max-instances", max_instances, "Instances per scene upper bound");
  shapes_cmd->add_option("--seed", seed, "Scene seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const TrainConfig cfg = build_config(config_path, overrides);
      const TrainResult result = train(cfg, out_dir);
      std::printf("trained %zu steps in %.1f s\nmetrics: %s\ncheckpoint: %s\n", cfg.steps, result.seconds,
                  result.metrics_path.c_str(), result.checkpoint_path.c_str());
      if (evaluate_after) {
        auto model = load_model(result.checkpoint_path);
        const EvalReport report = evaluate(*model, evaluation_scenes(cfg));
        auto out = open_output((fs::path(out_dir) / "report.csv").string());
        report.write_csv(out);
        std::printf("mask_iou %.4f box_iou %.4f cls_accuracy %.4f\n", report.mean_mask_iou, report.mean_box_iou,
                    report.accuracy);
      }
    } else if (*eval_cmd) {
      auto model = load_model(checkpoint);
      const EvalReport report = evaluate(*model, scenes_for(*model, scene_count));
      auto out = open_output(report_path);
      report.write_csv(out);
      std::printf("instances %zu mask_iou %.4f box_iou %.4f cls_accuracy %.4f\n", report.instances,
                  report.mean_mask_iou, report.mean_box_iou, report.accuracy);
    } else if (*stats_cmd) {
      auto model = load_model(checkpoint);
      const SourceRatioTable table = collect_source_stats(*model, scenes_for(*model, scene_count), head == "mask");
      auto out = open_output(stats_path);
      table.write_csv(out);
      for (const auto& [group, stats] : table.groups()) {
        std::printf("level %d: %llu elements, %.1f%% from other levels\n", group,
                    static_cast<unsigned long long>(stats.total), 100.0 * stats.foreign_fraction());
      }
    } else if (*grad_cmd) {
      bool ok = true;
      for (const auto& e : run_gradient_suite(seed)) {
        std::printf("%-4s %-32s max_rel %.3e probes %5zu %.2fs%s%s\n", e.report.passed ? "ok" : "FAIL",
                    e.name.c_str(), e.report.max_rel_error, e.report.probes, e.seconds,
                    e.report.passed ? "" : "  ", e.report.passed ? "" : e.report.worst.c_str());
        ok = ok && e.report.passed;
      }
      return ok ? 0 : 1;
    } else if (*anchors_cmd) {
      const AnchorSet set = generate_anchors(parse_anchor_preset(preset), scales, ratios);
      std::printf("scale,ratio,width,height\n");
      for (const auto& a : set.anchors) std::printf("%g,%g,%.6f,%.6f\n", a.scale, a.ratio, a.width, a.height);
    } else if (*shapes_cmd) {
      fs::create_directories(dump_dir);
      const auto scenes = generate_scenes(seed, count, size, max_instances);
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "scene_%03zu.ppm", i);
        write_ppm((fs::path(dump_dir) / name).string(), scenes[i].image);
        std::snprintf(name, sizeof name, "scene_%03zu_masks.ppm", i);
        write_ppm((fs::path(dump_dir) / name).string(), render_overlay(scenes[i]));
      }
      std::printf("wrote %zu scenes to %s\n", scenes.size(), dump_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
