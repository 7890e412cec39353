#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "savid/errors.hpp"
#include "savid/io.hpp"
#include "savid/pipeline.hpp"
#include "savid/report.hpp"
#include "savid/verify/checks.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> scene_seed;
  std::optional<std::uint64_t> model_seed;
  std::optional<std::size_t> sequence_length;
  std::optional<std::string> asmn_mode;
  std::optional<std::string> kgf_cosine;
  std::optional<std::string> kgf_neighbors;
  std::optional<std::size_t> threads;
  std::optional<std::string> severity_table;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Configuration file (YAML)")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override a config key, key=value (repeatable)");
    cmd->add_option("--scene-seed", scene_seed, "Scene seed");
    cmd->add_option("--model-seed", model_seed, "Model parameter seed");
    cmd->add_option("--sequence-length", sequence_length, "Frames threaded through the sequence");
    cmd->add_option("--asmn-mode", asmn_mode, "attention | elementwise");
    cmd->add_option("--kgf-cosine", kgf_cosine, "paper | standard");
    cmd->add_option("--kgf-neighbors", kgf_neighbors, "window3x3 | knn");
    cmd->add_option("--threads", threads, "Worker threads for the corruption sweep (0 = all)");
    cmd->add_option("--severity-table", severity_table, "Corruption severity table (YAML)");
  }

  savid::PipelineConfig resolve() const {
    savid::PipelineConfig config =
        config_path.empty() ? savid::PipelineConfig{} : savid::PipelineConfig::load(config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw savid::ValidationError("--set expects key=value, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (scene_seed) config.set("scene_seed", std::to_string(*scene_seed));
    if (model_seed) config.set("model_seed", std::to_string(*model_seed));
    if (sequence_length) config.set("sequence_length", std::to_string(*sequence_length));
    if (asmn_mode) config.set("asmn_mode", *asmn_mode);
    if (kgf_cosine) config.set("kgf_cosine", *kgf_cosine);
    if (kgf_neighbors) config.set("kgf_neighbors", *kgf_neighbors);
    if (threads) config.set("threads", std::to_string(*threads));
    if (severity_table) config.set("severity_table", *severity_table);
    config.validate();
    return config;
  }
};

int run_forward_cmd(const ConfigFlags& flags, const std::string& out) {
  const savid::PipelineConfig config = flags.resolve();
  const savid::SyntheticScene scene = savid::generate_scene(config.scene_options());
  const savid::ForwardOutputs outputs = savid::run_forward(config, scene);
  savid::emit_forward(outputs, config, out);
  const auto& t = outputs.timings;
  std::printf("forward: %zu frames, output %s\n", outputs.frames.size(),
              savid::to_string(outputs.frames.back().output.shape()).c_str());
  std::printf("timings (s): depth %.3f  gman %.3f  lidar %.3f  asmn %.3f  kgf %.3f\n", t.depth, t.gman, t.lidar,
              t.asmn, t.kgf);
  return 0;
}

int run_robustness_cmd(const ConfigFlags& flags, const std::string& out, const std::string& detections) {
  const savid::PipelineConfig config = flags.resolve();
  const savid::SyntheticScene scene = savid::generate_scene(config.scene_options());
  const savid::ProxyScorer proxy;
  const savid::FileDetections files(detections);
  const savid::DetectionProvider& provider =
      detections.empty() ? static_cast<const savid::DetectionProvider&>(proxy) : files;
  const savid::RobustnessReport report = savid::run_robustness_suite(config, scene, provider);
  savid::emit_report(report, config, out);
  if (!report.complete()) {
    std::fprintf(stderr, "robustness: %zu cell(s) failed%s; partial report written to %s\n", report.failures.size(),
                 report.clean_failure ? " including the clean run" : "", out.c_str());
    for (const auto& [key, why] : report.failures) std::fprintf(stderr, "  %s: %s\n", savid::to_string(key).c_str(), why.c_str());
    if (report.clean_failure) std::fprintf(stderr, "  clean: %s\n", report.clean_failure->c_str());
    return kExitValidation;
  }
  const double corr = savid::ap_corr(report.table, savid::kCorruptionKinds);
  std::printf("AP_cln %.4f  AP_corr %.4f", report.table.ap_cln, corr);
  if (report.table.ap_cln > 0.0) std::printf("  RCE %.4f", savid::rce(report.table.ap_cln, corr));
  std::printf("\n");
  return 0;
}

int run_gen_scene_cmd(std::uint64_t seed, std::size_t objects, double range, std::size_t frames,
                      const std::string& out) {
  savid::SceneOptions options;
  options.seed = seed;
  options.num_objects = objects;
  options.range_m = range;
  options.frames = frames;
  const savid::SyntheticScene scene = savid::generate_scene(options);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw savid::ValidationError("cannot create " + out + ": " + ec.message());
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const std::filesystem::path stem = std::filesystem::path(out) / ("frame" + std::to_string(f + 1));
    savid::save_point_cloud(stem.string() + ".svpc", scene.frames[f].cloud);
    savid::save_tensor(stem.string() + "_image.svtn", scene.frames[f].image);
    savid::save_detections(stem.string() + "_boxes.txt", scene.frames[f].boxes);
  }
  std::printf("scene: %zu frames, %zu objects, frame 1 has %zu points -> %s\n", scene.frames.size(), objects,
              scene.frames.front().cloud.size(), out.c_str());
  return 0;
}

int run_selftest_cmd() {
  bool all = true;
  for (const auto& suite : savid::verify::selftest_suites()) {
    for (const savid::verify::CheckResult& r : suite.run()) {
      std::printf("%s  %s/%s: %s\n", r.passed ? "PASS" : "FAIL", suite.name.c_str(), r.name.c_str(), r.detail.c_str());
      all = all && r.passed;
    }
  }
  return all ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera-LiDAR fusion pipeline: forward pass, corruption sweep and self-checks"};
  app.require_subcommand(1);

  ConfigFlags forward_flags, robustness_flags;
  std::string forward_out, robustness_out, detections_dir;

  CLI::App* forward = app.add_subcommand("forward", "Run the three-stage forward pass on a synthetic scene");
  forward_flags.attach(forward);
  forward->add_option("--out", forward_out, "Output directory")->required();

  CLI::App* robustness = app.add_subcommand("robustness", "Clean and corrupted evaluation, AP_corr and RCE");
  robustness_flags.attach(robustness);
  robustness->add_option("--out", robustness_out, "Output directory")->required();
  robustness->add_option("--detections", detections_dir, "Directory of detection files instead of the proxy scorer")
      ->check(CLI::ExistingDirectory);

  std::uint64_t scene_seed = 1;
  std::size_t objects = 8, frames = 7;
  double range = 50.0;
  std::string scene_out = "scene";
  CLI::App* gen = app.add_subcommand("gen-scene", "Write a synthetic scene as SVPC/SVTN files");
  gen->add_option("--seed", scene_seed, "Scene seed");
  gen->add_option("--objects", objects, "Number of objects");
  gen->add_option("--range", range, "Placement range in meters");
  gen->add_option("--frames", frames, "Number of frames");
  gen->add_option("--out", scene_out, "Output directory");

  CLI::App* selftest = app.add_subcommand("selftest", "Run the oracle and gradient checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*forward) return run_forward_cmd(forward_flags, forward_out);
    if (*robustness) return run_robustness_cmd(robustness_flags, robustness_out, detections_dir);
    if (*gen) return run_gen_scene_cmd(scene_seed, objects, range, frames, scene_out);
    if (*selftest) return run_selftest_cmd();
  } catch (const savid::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const savid::ValidationError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitValidation;
  } catch (const savid::NotImplementedError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitValidation;
  }
  return 0;
}
