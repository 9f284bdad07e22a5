#include "hairgbuf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hairgbuf/error.hpp"
#include "hairgbuf/image_io.hpp"
#include "hairgbuf/metrics.hpp"
#include "hairgbuf/parallel.hpp"
#include "hairgbuf/raster.hpp"

namespace hairgbuf {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

TensorImage clamp01(TensorImage img) {
  for (float& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

std::string frame_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d", frame);
  return buf;
}

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

AccumulateMode parse_accumulate(const KeyValue& kv) {
  if (kv.value == "auto") return AccumulateMode::Auto;
  if (kv.value == "on" || kv.value == "true") return AccumulateMode::On;
  if (kv.value == "off" || kv.value == "false") return AccumulateMode::Off;
  throw IoError(kv.source + ":" + std::to_string(kv.line) + " (accumulate): expected auto, on or off");
}

}  // namespace

const char* mode_name(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::Full: return "full";
    case PipelineMode::AnalyticOnly: return "analytic-only";
    case PipelineMode::SpatialOnly: return "spatial-only";
  }
  return "unknown";
}

PipelineMode parse_mode(const std::string& text) {
  if (text == "full") return PipelineMode::Full;
  if (text == "analytic-only") return PipelineMode::AnalyticOnly;
  if (text == "spatial-only") return PipelineMode::SpatialOnly;
  throw InvalidArgument("unknown mode '" + text + "' (expected full, analytic-only or spatial-only)");
}

void PipelineConfig::validate() const {
  if (frames < 1) throw InvalidArgument("frames must be >= 1");
  if (spp_noisy < 1 || spp_reference < 1) throw InvalidArgument("spp values must be >= 1");
  if (jitter_length < 1) throw InvalidArgument("jitter_length must be >= 1");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
  if (!std::isfinite(logit_threshold)) throw InvalidArgument("logit_threshold must be finite");
  recon.validate();
  shading.validate();
  if (mode == PipelineMode::AnalyticOnly && weights) {
    throw InvalidArgument("analytic-only mode takes no weight file");
  }
  if (mode != PipelineMode::AnalyticOnly && !weights) {
    throw InvalidArgument(std::string(mode_name(mode)) + " mode requires a weight file");
  }
}

bool PipelineConfig::accumulation_enabled() const {
  switch (accumulate) {
    case AccumulateMode::On: return true;
    case AccumulateMode::Off: return false;
    case AccumulateMode::Auto: return mode == PipelineMode::AnalyticOnly;
  }
  return false;
}

PipelineConfig parse_pipeline_config(std::istream& in, const std::filesystem::path& base_dir,
                                     const std::string& source) {
  PipelineConfig c;
  for (const KeyValue& kv : parse_key_values(in, source)) {
    const std::string& k = kv.key;
    if (k == "scene") {
      c.scene = base_dir / kv.value;
    } else if (k == "frames") {
      c.frames = parse_int(kv);
    } else if (k == "spp_noisy") {
      c.spp_noisy = parse_int(kv);
    } else if (k == "spp_reference") {
      c.spp_reference = parse_int(kv);
    } else if (k == "jitter_length") {
      c.jitter_length = parse_int(kv);
    } else if (k == "mode") {
      try {
        c.mode = parse_mode(kv.value);
      } catch (const InvalidArgument& e) {
        throw IoError(source + ":" + std::to_string(kv.line) + ": " + e.what());
      }
    } else if (k == "weights") {
      c.weights = base_dir / kv.value;
    } else if (k == "theta_max") {
      c.recon.theta_max_degrees = parse_double(kv);
    } else if (k == "K") {
      c.recon.pool_capacity = parse_int(kv);
    } else if (k == "eps_pos") {
      c.recon.eps_pos = parse_double(kv);
    } else if (k == "sweep_cap") {
      c.recon.sweep_cap = parse_int(kv);
    } else if (k == "logit_threshold") {
      c.logit_threshold = static_cast<float>(parse_double(kv));
    } else if (k == "accumulate") {
      c.accumulate = parse_accumulate(kv);
    } else if (k == "out") {
      c.output_dir = base_dir / kv.value;
    } else if (k == "dump_debug") {
      c.dump_debug = parse_bool(kv);
    } else if (k == "write_images") {
      c.write_images = parse_bool(kv);
    } else if (k == "threads") {
      c.threads = parse_int(kv);
    } else if (k == "light_direction") {
      c.shading.light_direction = parse_vec3(kv.value, source).normalized();
    } else if (k == "specular_exponent") {
      c.shading.specular_exponent = parse_double(kv);
    } else {
      throw IoError(source + ":" + std::to_string(kv.line) + ": unknown key '" + k + "'");
    }
  }
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  return parse_pipeline_config(in, path.parent_path(), path.string());
}

JitterAccumulator::JitterAccumulator(int window) : window_(window) {
  if (window < 1) throw InvalidArgument("JitterAccumulator: window must be >= 1");
}

void JitterAccumulator::reset() { has_history_ = false; }

void JitterAccumulator::accumulate(const TensorImage& coverage, const TensorImage& tangent,
                                   const TensorImage& motion, TensorImage& coverage_out,
                                   TensorImage& tangent_out) {
  const int h = coverage.height();
  const int w = coverage.width();
  if (!has_history_) {
    mean_ = coverage;
    count_ = TensorImage(h, w, 1, 1.0f);
    tangent_ = tangent;
    has_history_ = true;
    coverage_out = coverage;
    tangent_out = tangent;
    return;
  }
  const Reprojection mean = reproject_with_validity(mean_, motion);
  const TensorImage count = reproject(count_, motion);
  const TensorImage hist_tan = reproject(tangent_, motion);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool valid = mean.valid.at(y, x) > 0.0f;
      const float prev_n = valid ? std::min(count.at(y, x), static_cast<float>(window_ - 1)) : 0.0f;
      const float n = prev_n + 1.0f;
      const float prev = valid ? mean.image.at(y, x) : 0.0f;
      mean_.at(y, x) = prev + (coverage.at(y, x) - prev) / n;
      count_.at(y, x) = n;
      Eigen::Vector3d t = tangent.vec3(y, x);
      if (!(coverage.at(y, x) > 0.0f) || t.squaredNorm() == 0.0) {
        t = valid ? hist_tan.vec3(y, x) : Eigen::Vector3d::Zero();
        const double len = t.norm();
        t = len > 1e-12 ? Eigen::Vector3d(t / len) : Eigen::Vector3d::Zero();
      }
      tangent_.set_vec3(y, x, t);
    }
  coverage_out = mean_;
  tangent_out = tangent_;
}

Pipeline::Pipeline(PipelineConfig config, SceneDescription scene, std::optional<WeightSet> weights)
    : config_(std::move(config)),
      scene_(std::move(scene)),
      camera_(scene_.make_camera()),
      accumulator_(config_.jitter_length) {
  if (config_.mode != PipelineMode::AnalyticOnly) {
    if (!weights) throw InvalidArgument(std::string(mode_name(config_.mode)) + " mode requires weights");
    validate_model_weights(*weights);
    spatial_ = SpatialNet::from_weights(*weights);
    if (config_.mode == PipelineMode::Full) temporal_ = TemporalNet::from_weights(*weights);
  }
}

FrameReport Pipeline::process(int frame, FrameOutput* output) {
  if (frame != next_frame_) throw InvalidArgument("Pipeline: frames must be processed in order");
  ++next_frame_;
  set_thread_count(config_.threads);
  FrameReport report;
  report.frame = frame;
  FrameOutput local;
  FrameOutput& out = output ? *output : local;

  auto t0 = Clock::now();
  out.noisy = rasterize(scene_.scene, camera_, config_.spp_noisy,
                        JitterSequence::halton23(config_.jitter_length), frame);
  out.reference = rasterize(scene_.scene, camera_, config_.spp_reference, JitterSequence::none(), frame);
  report.timings.rasterize_ms = elapsed_ms(t0);

  t0 = Clock::now();
  const GBuffer& noisy = out.noisy;
  if (config_.mode == PipelineMode::AnalyticOnly) {
    out.coverage = noisy.coverage;
    out.tangent = noisy.tangent;
  } else {
    const TensorImage x = concat_channels({&noisy.coverage, &noisy.tangent});
    const SpatialOutput s = spatial_forward(*spatial_, x);
    TensorImage y;
    if (config_.mode == PipelineMode::Full) {
      const TensorImage u = assemble_temporal_input(s, temporal_state_, noisy.motion);
      y = temporal_forward(*temporal_, u, s, temporal_state_.first_frame());
      temporal_state_.advance(y, noisy.motion);
    } else {
      y = s.packed();
    }
    MaskedOutput masked = apply_support_mask(y, config_.logit_threshold);
    out.coverage = std::move(masked.coverage);
    out.tangent = std::move(masked.tangent);
  }
  if (config_.accumulation_enabled()) {
    TensorImage cov, tan;
    accumulator_.accumulate(out.coverage, out.tangent, noisy.motion, cov, tan);
    out.coverage = std::move(cov);
    out.tangent = std::move(tan);
  }
  report.timings.neural_ms = elapsed_ms(t0);

  t0 = Clock::now();
  try {
    out.recon = reconstruct_positions(noisy, out.coverage, out.tangent, camera_, config_.recon,
                                      config_.dump_debug ? &out.snapshots : nullptr);
  } catch (const DegenerateFrame& e) {
    report.ok = false;
    report.status = "degenerate";
    report.timings.recon_ms = elapsed_ms(t0);
    return report;
  }
  report.timings.recon_ms = elapsed_ms(t0);
  const ReconStats& st = out.recon.stats;
  report.hair_pixels = st.hair_pixels;
  report.repaired = st.repaired();
  report.stalled = st.stalled;
  int completed = 0;
  for (int y = 0; y < camera_.height(); ++y)
    for (int x = 0; x < camera_.width(); ++x)
      if (out.coverage.at(y, x) > 0.0f && out.recon.position.vec3(y, x).norm() > config_.recon.eps_pos) {
        ++completed;
      }
  report.valid_percent = st.hair_pixels ? 100.0 * st.initially_valid / st.hair_pixels : 100.0;
  report.completed_percent = st.hair_pixels ? 100.0 * completed / st.hair_pixels : 100.0;

  t0 = Clock::now();
  const GBuffer& ref = out.reference;
  out.shaded = clamp01(shade(out.coverage, out.tangent, out.recon.position, camera_, config_.shading));
  out.reference_shaded =
      clamp01(shade(ref.coverage, ref.tangent, ref.position, camera_, config_.shading));
  out.raw_shaded =
      clamp01(shade(noisy.coverage, noisy.tangent, noisy.position, camera_, config_.shading));
  report.timings.shade_ms = elapsed_ms(t0);

  const TensorImage mask = foreground_mask(ref.coverage);
  const ImageMetrics m = image_metrics(out.shaded, out.reference_shaded, mask);
  const ImageMetrics raw = image_metrics(out.raw_shaded, out.reference_shaded, mask);
  report.mse = m.mse;
  report.psnr = m.psnr;
  report.ssim = m.ssim;
  report.raw_mse = raw.mse;
  report.raw_psnr = raw.psnr;
  report.raw_ssim = raw.ssim;
  if (!m.valid) report.status = "empty-reference";
  return report;
}

std::string format_metrics_csv(const std::vector<FrameReport>& frames) {
  std::ostringstream out;
  out << "frame,status,mse,psnr,ssim,raw_mse,raw_psnr,raw_ssim,hair_pixels,valid_pct,"
         "completed_pct,repaired,stalled\n";
  for (const FrameReport& r : frames) {
    out << r.frame << ',' << r.status << ',' << number(r.mse) << ',' << number(r.psnr) << ','
        << number(r.ssim) << ',' << number(r.raw_mse) << ',' << number(r.raw_psnr) << ','
        << number(r.raw_ssim) << ',' << r.hair_pixels << ',' << number(r.valid_percent) << ','
        << number(r.completed_percent) << ',' << r.repaired << ',' << r.stalled << '\n';
  }
  return out.str();
}

std::string format_timings_csv(const std::vector<FrameReport>& frames) {
  std::ostringstream out;
  out << "frame,rasterize_ms,neural_ms,recon_ms,shade_ms\n";
  for (const FrameReport& r : frames) {
    out << r.frame << ',' << number(r.timings.rasterize_ms) << ',' << number(r.timings.neural_ms)
        << ',' << number(r.timings.recon_ms) << ',' << number(r.timings.shade_ms) << '\n';
  }
  return out.str();
}

SequenceResult run_sequence(const PipelineConfig& config) {
  config.validate();
  if (config.scene.empty()) throw InvalidArgument("config does not name a scene");
  SceneDescription scene = load_scene(config.scene);
  std::optional<WeightSet> weights;
  if (config.weights) weights = read_weights(*config.weights);
  Pipeline pipeline(config, std::move(scene), std::move(weights));

  std::filesystem::create_directories(config.output_dir);
  SequenceResult result;
  for (int f = 0; f < config.frames; ++f) {
    FrameOutput out;
    FrameReport report = pipeline.process(f, &out);
    if (!report.ok) result.exit_code = 2;
    const std::string name = frame_name(f);
    if (report.ok && config.write_images) {
      write_pfm(config.output_dir / (name + "_shaded.pfm"), out.shaded);
      write_png(config.output_dir / (name + "_shaded.png"), out.shaded);
      write_png(config.output_dir / (name + "_reference.png"), out.reference_shaded);
      write_png(config.output_dir / (name + "_raw.png"), out.raw_shaded);
    }
    if (report.ok && config.dump_debug) {
      const auto dir = config.output_dir / "debug" / name;
      std::filesystem::create_directories(dir);
      write_pfm(dir / "classes.pfm", out.snapshots.classes);
      write_pfm(dir / "depth_inpainted.pfm", out.snapshots.depth);
      write_pfm(dir / "curvature_radius.pfm", out.snapshots.curvature_radius);
      write_pfm(dir / "position_repaired.pfm", out.snapshots.position);
      write_pfm(dir / "coverage_t.pfm", out.coverage);
      write_pfm(dir / "tangent_t.pfm", out.tangent);
    }
    result.frames.push_back(report);
  }
  auto write_text = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
  };
  write_text(config.output_dir / "metrics.csv", format_metrics_csv(result.frames));
  write_text(config.output_dir / "timings.csv", format_timings_csv(result.frames));
  return result;
}

TensorImage nearest_neighbor_fill(const TensorImage& position, const TensorImage& coverage,
                                  double eps_pos) {
  const int h = position.height();
  const int w = position.width();
  if (!coverage.same_extent(position) || coverage.channels() != 1 || position.channels() != 3) {
    throw InvalidArgument("nearest_neighbor_fill: shapes disagree");
  }
  std::vector<std::uint8_t> has(static_cast<std::size_t>(h) * w, 0);
  bool any = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool v = position.vec3(y, x).norm() > eps_pos;
      has[static_cast<std::size_t>(y) * w + x] = v;
      any |= v;
    }
  TensorImage out(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!(coverage.at(y, x) > 0.0f)) continue;
      if (has[static_cast<std::size_t>(y) * w + x]) {
        out.set_vec3(y, x, position.vec3(y, x));
      } else if (any) {
        const long i = nearest_flagged_pixel(has, h, w, y, x);
        out.set_vec3(y, x, position.vec3(static_cast<int>(i / w), static_cast<int>(i % w)));
      }
    }
  return out;
}

}  // namespace hairgbuf
