#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hairgbuf/error.hpp"
#include "hairgbuf/model.hpp"
#include "hairgbuf/pipeline.hpp"
#include "hairgbuf/raster.hpp"
#include "hairgbuf/scene_file.hpp"
#include "hairgbuf/weights.hpp"

namespace fs = std::filesystem;
using namespace hairgbuf;

namespace {

int run_command(const fs::path& config_path, const std::optional<std::string>& mode,
                const std::optional<fs::path>& weights, bool dump_debug,
                const std::optional<fs::path>& out, const std::optional<int>& threads) {
  PipelineConfig config = load_pipeline_config(config_path);
  if (mode) {
    config.mode = parse_mode(*mode);
    // An explicit analytic-only run ignores the config's weight file.
    if (config.mode == PipelineMode::AnalyticOnly && !weights) config.weights.reset();
  }
  if (weights) config.weights = *weights;
  if (dump_debug) config.dump_debug = true;
  if (out) config.output_dir = *out;
  if (threads) config.threads = *threads;

  const SequenceResult result = run_sequence(config);
  for (const FrameReport& r : result.frames) {
    if (r.ok) {
      std::printf("frame %4d  psnr %8.3f  ssim %.4f  completed %6.2f%%  repaired %d\n", r.frame,
                  r.psnr, r.ssim, r.completed_percent, r.repaired);
    } else {
      std::printf("frame %4d  FAILED: %s\n", r.frame, r.status.c_str());
    }
  }
  std::printf("wrote %s\n", (config.output_dir / "metrics.csv").string().c_str());
  return result.exit_code;
}

int validate_command(const fs::path& file) {
  try {
    const ModelReport report = validate_weight_file(file);
    std::cout << "OK " << file.string() << '\n' << report.describe();
    return 0;
  } catch (const WeightFileError& e) {
    std::cerr << "invalid weight file: " << e.what() << '\n';
    return 1;
  }
}

int dataset_command(const fs::path& config_path, const fs::path& out) {
  const PipelineConfig config = load_pipeline_config(config_path);
  if (config.scene.empty()) throw InvalidArgument("config does not name a scene");
  const SceneDescription scene = load_scene(config.scene);
  const Camera camera = scene.make_camera();
  DatasetOptions options;
  options.spp_noisy = config.spp_noisy;
  options.spp_reference = config.spp_reference;
  options.jitter = JitterSequence::halton23(config.jitter_length);
  const auto frames = make_dataset(scene.scene, camera, config.frames, options);
  write_dataset(out, frames, camera, options);
  std::printf("wrote %d frames to %s\n", config.frames, out.string().c_str());
  return 0;
}

int init_weights_command(const std::string& kind, std::uint64_t seed, const fs::path& out) {
  const WeightSet w = kind == "zero" ? zero_residual_weights() : random_weights(seed);
  write_weights(out, w);
  std::cout << "wrote " << out.string() << '\n' << validate_model_weights(w).describe();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hair G-buffer reconstruction pipeline"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the pipeline over a frame sequence");
  fs::path run_config;
  std::string mode_text;
  fs::path weights_path, out_path;
  bool dump_debug = false;
  int threads = 0;
  run->add_option("--config", run_config, "Pipeline config file")->required()->check(CLI::ExistingFile);
  auto* mode_opt = run->add_option("--mode", mode_text, "full | spatial-only | analytic-only")
                       ->check(CLI::IsMember({"full", "spatial-only", "analytic-only"}));
  auto* weights_opt = run->add_option("--weights", weights_path, "HGBW weight file");
  run->add_flag("--dump-debug", dump_debug, "Write per-stage PFM snapshots");
  auto* out_opt = run->add_option("--out", out_path, "Output directory");
  auto* threads_opt = run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate-weights", "Check an HGBW file against the model");
  fs::path validate_file;
  validate->add_option("file", validate_file, "HGBW weight file")->required();

  auto* dataset = app.add_subcommand("make-dataset", "Write noisy/reference training pairs");
  fs::path dataset_config, dataset_out;
  dataset->add_option("--config", dataset_config, "Pipeline config file")->required()->check(CLI::ExistingFile);
  dataset->add_option("--out", dataset_out, "Dataset directory")->required();

  auto* init = app.add_subcommand("init-weights", "Write a zero-residual or random weight file");
  std::string kind = "zero";
  std::uint64_t seed = 1;
  fs::path init_out;
  init->add_option("--kind", kind, "zero | random")->check(CLI::IsMember({"zero", "random"}));
  init->add_option("--seed", seed, "Seed for --kind random");
  init->add_option("--out", init_out, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      return run_command(run_config, *mode_opt ? std::optional(mode_text) : std::nullopt,
                         *weights_opt ? std::optional(weights_path) : std::nullopt, dump_debug,
                         *out_opt ? std::optional(out_path) : std::nullopt,
                         *threads_opt ? std::optional(threads) : std::nullopt);
    }
    if (*validate) return validate_command(validate_file);
    if (*dataset) return dataset_command(dataset_config, dataset_out);
    if (*init) return init_weights_command(kind, seed, init_out);
  } catch (const DegenerateFrame& e) {
    std::cerr << "degenerate frame: " << e.what() << '\n';
    return 2;
  } catch (const WeightFileError& e) {
    std::cerr << "weight file error (" << WeightFileError::kind_name(e.kind()) << "): " << e.what()
              << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
