#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "hairgbuf/gbuffer.hpp"
#include "hairgbuf/model.hpp"
#include "hairgbuf/recon.hpp"
#include "hairgbuf/scene_file.hpp"
#include "hairgbuf/shading.hpp"
#include "hairgbuf/spatial.hpp"
#include "hairgbuf/temporal.hpp"

namespace hairgbuf {

enum class PipelineMode { Full, AnalyticOnly, SpatialOnly };
enum class AccumulateMode { Auto, On, Off };

const char* mode_name(PipelineMode mode);
PipelineMode parse_mode(const std::string& text);

/// Run configuration. Config file keys (all optional):
///
///   scene = scenes/helix.scene     (relative to the config file)
///   frames = 16                    spp_noisy = 1          spp_reference = 128
///   mode = analytic-only | spatial-only | full
///   weights = model.hgbw           (required by full and spatial-only)
///   theta_max = 30                 K = 4                  eps_pos = 1e-6
///   logit_threshold = 0            sweep_cap = 4
///   accumulate = auto | on | off   (auto: on for analytic-only only)
///   out = out                      dump_debug = false     write_images = true
///   threads = 1                    jitter_length = 8
///   light_direction = x y z        specular_exponent = 32
struct PipelineConfig {
  std::filesystem::path scene;
  int frames = 16;
  int spp_noisy = 1;
  int spp_reference = 128;
  int jitter_length = 8;
  PipelineMode mode = PipelineMode::AnalyticOnly;
  std::optional<std::filesystem::path> weights;
  ReconParams recon;
  float logit_threshold = 0.0f;
  AccumulateMode accumulate = AccumulateMode::Auto;
  std::filesystem::path output_dir = "out";
  bool dump_debug = false;
  bool write_images = true;
  int threads = 1;
  ShadeParams shading;

  /// Throws InvalidArgument when a value is out of range or the mode and
  /// weight file disagree.
  void validate() const;
  bool accumulation_enabled() const;
};

PipelineConfig parse_pipeline_config(std::istream& in, const std::filesystem::path& base_dir,
                                     const std::string& source = "<config>");
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Reprojected running mean of coverage over the last `window` frames, with
/// the current tangent where the frame has one and the history tangent
/// elsewhere. Weight-free; first frame passes through.
class JitterAccumulator {
 public:
  explicit JitterAccumulator(int window = 8);
  void accumulate(const TensorImage& coverage, const TensorImage& tangent,
                  const TensorImage& motion, TensorImage& coverage_out, TensorImage& tangent_out);
  void reset();

 private:
  int window_;
  bool has_history_ = false;
  TensorImage mean_, count_, tangent_;
};

struct StageTimings {
  double rasterize_ms = 0.0;
  double neural_ms = 0.0;
  double recon_ms = 0.0;
  double shade_ms = 0.0;
};

struct FrameReport {
  int frame = 0;
  bool ok = true;
  std::string status = "ok";
  double mse = 0.0, psnr = 0.0, ssim = 0.0;
  double raw_mse = 0.0, raw_psnr = 0.0, raw_ssim = 0.0;
  int hair_pixels = 0;
  double valid_percent = 0.0;      // hair pixels with a rasterized position
  double completed_percent = 0.0;  // hair pixels with a position after reconstruction
  int repaired = 0;
  int stalled = 0;
  StageTimings timings;
};

/// Everything one frame produced, for callers that inspect results in-process.
struct FrameOutput {
  GBuffer noisy;
  GBuffer reference;
  TensorImage coverage;  // after the neural stages / accumulation
  TensorImage tangent;
  ReconResult recon;
  ReconSnapshots snapshots;
  TensorImage shaded, reference_shaded, raw_shaded;
};

/// Frame-by-frame driver. Frames must be processed in increasing order.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, SceneDescription scene,
           std::optional<WeightSet> weights = std::nullopt);

  FrameReport process(int frame, FrameOutput* output = nullptr);
  const Camera& camera() const { return camera_; }
  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  SceneDescription scene_;
  Camera camera_;
  std::optional<SpatialNet> spatial_;
  std::optional<TemporalNet> temporal_;
  TemporalState temporal_state_;
  JitterAccumulator accumulator_;
  int next_frame_ = 0;
};

struct SequenceResult {
  std::vector<FrameReport> frames;
  int exit_code = 0;  // 0 ok, 2 when any frame failed
};

/// Loads scene and weights, runs every frame, writes metrics.csv,
/// timings.csv, per-frame images and (with dump_debug) stage snapshots.
SequenceResult run_sequence(const PipelineConfig& config);

std::string format_metrics_csv(const std::vector<FrameReport>& frames);
std::string format_timings_csv(const std::vector<FrameReport>& frames);

/// Nearest-valid-pixel position fill: every hair pixel (coverage > 0) without
/// a position copies the Euclidean-nearest pixel that has one.
TensorImage nearest_neighbor_fill(const TensorImage& position, const TensorImage& coverage,
                                  double eps_pos = 1e-6);

}  // namespace hairgbuf
