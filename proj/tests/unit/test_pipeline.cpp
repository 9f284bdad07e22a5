#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hairgbuf/pipeline.hpp"
#include "test_support.hpp"

using namespace hairgbuf;
namespace fs = std::filesystem;

namespace {

SceneDescription small_scene(const std::string& extra = "") {
  std::istringstream in("width = 32\nheight = 32\nseed = 4\ncamera.auto_fit = true\n"
                        "generate = helix count=6\n" +
                        extra);
  return parse_scene(in, "inline.scene");
}

PipelineConfig small_config(PipelineMode mode) {
  PipelineConfig c;
  c.frames = 1;
  c.spp_reference = 16;
  c.mode = mode;
  c.write_images = false;
  return c;
}

PipelineConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_pipeline_config(in, "/base", "t.cfg");
}

}  // namespace

TEST(PipelineConfig, ParsesKeysRelativeToBaseDir) {
  const PipelineConfig c = parse(
      "# comment\nscene = s/a.scene\nframes = 3\nspp_reference = 32\nmode = full\n"
      "weights = w.hgbw\ntheta_max = 20\nK = 2\neps_pos = 1e-5\nsweep_cap = 6\n"
      "logit_threshold = -0.5\naccumulate = off\nout = o\ndump_debug = yes\nthreads = 2\n");
  EXPECT_EQ(c.scene, fs::path("/base/s/a.scene"));
  EXPECT_EQ(c.frames, 3);
  EXPECT_EQ(c.spp_noisy, 1);
  EXPECT_EQ(c.spp_reference, 32);
  EXPECT_EQ(c.mode, PipelineMode::Full);
  EXPECT_EQ(*c.weights, fs::path("/base/w.hgbw"));
  EXPECT_EQ(c.recon.theta_max_degrees, 20.0);
  EXPECT_EQ(c.recon.pool_capacity, 2);
  EXPECT_EQ(c.recon.eps_pos, 1e-5);
  EXPECT_EQ(c.recon.sweep_cap, 6);
  EXPECT_EQ(c.logit_threshold, -0.5f);
  EXPECT_FALSE(c.accumulation_enabled());
  EXPECT_EQ(c.output_dir, fs::path("/base/o"));
  EXPECT_TRUE(c.dump_debug);
  EXPECT_EQ(c.threads, 2);
  EXPECT_NO_THROW(c.validate());
}

TEST(PipelineConfig, DefaultsAndAccumulationRule) {
  const PipelineConfig c = parse("");
  EXPECT_EQ(c.frames, 16);
  EXPECT_EQ(c.spp_reference, 128);
  EXPECT_EQ(c.mode, PipelineMode::AnalyticOnly);
  EXPECT_TRUE(c.accumulation_enabled());
  PipelineConfig f = c;
  f.mode = PipelineMode::Full;
  EXPECT_FALSE(f.accumulation_enabled());
}

TEST(PipelineConfig, RejectsBadInput) {
  EXPECT_THROW(parse("bogus = 1\n"), IoError);
  EXPECT_THROW(parse("frames = x\n"), IoError);
  EXPECT_THROW(parse("mode = turbo\n"), IoError);
  EXPECT_THROW(parse("accumulate = sometimes\n"), IoError);
  EXPECT_THROW(parse("no equals sign\n"), IoError);
  EXPECT_THROW(parse("mode = analytic-only\nweights = w.hgbw\n").validate(), InvalidArgument);
  EXPECT_THROW(parse("mode = full\n").validate(), InvalidArgument);
  EXPECT_THROW(parse("frames = 0\n").validate(), InvalidArgument);
  EXPECT_THROW(parse("theta_max = 95\n").validate(), InvalidArgument);
  EXPECT_THROW(parse("K = 0\n").validate(), InvalidArgument);
  EXPECT_THROW(load_pipeline_config("/nonexistent.cfg"), IoError);
}

TEST(Pipeline, AnalyticSingleFrameCompletesEveryHairPixel) {
  Pipeline p(small_config(PipelineMode::AnalyticOnly), small_scene());
  FrameOutput out;
  const FrameReport r = p.process(0, &out);
  EXPECT_TRUE(r.ok);
  EXPECT_GT(r.hair_pixels, 0);
  EXPECT_EQ(r.completed_percent, 100.0);
  EXPECT_EQ(out.shaded.channels(), 3);
  EXPECT_THROW(p.process(2), InvalidArgument);
  const std::string csv = format_metrics_csv({r});
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("frame,status,mse,psnr,ssim", 0), 0u);
}

TEST(Pipeline, FullModeWithZeroWeightsMatchesAnalyticOnly) {
  for (AccumulateMode acc : {AccumulateMode::Off, AccumulateMode::On}) {
    PipelineConfig a = small_config(PipelineMode::AnalyticOnly);
    PipelineConfig f = small_config(PipelineMode::Full);
    a.accumulate = acc;
    f.accumulate = acc;
    const SceneDescription scene =
        small_scene("keyframe = frame=0\nkeyframe = frame=3 translate=0.1,0,0 rotate_y=10\n");
    Pipeline pa(a, scene);
    Pipeline pf(f, scene, zero_residual_weights());
    for (int frame = 0; frame < 3; ++frame) {
      FrameOutput oa, of;
      pa.process(frame, &oa);
      pf.process(frame, &of);
      EXPECT_LE(max_abs_diff(oa.coverage, of.coverage), 1e-6) << frame;
      EXPECT_LE(max_abs_diff(oa.tangent, of.tangent), 1e-6) << frame;
      EXPECT_LE(max_abs_diff(oa.shaded, of.shaded), 1e-6) << frame;
    }
  }
}

TEST(Pipeline, NeuralModesRequireValidWeights) {
  EXPECT_THROW(Pipeline(small_config(PipelineMode::Full), small_scene()), InvalidArgument);
  WeightSet ws = zero_residual_weights();
  ws.erase("temporal.head.bias");
  EXPECT_THROW(Pipeline(small_config(PipelineMode::SpatialOnly), small_scene(), ws), WeightFileError);
}

TEST(Pipeline, RunSequenceWritesOutputs) {
  const fs::path dir = fs::temp_directory_path() / "hairgbuf_pipeline_run";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "a.scene") << "width = 16\nheight = 16\nseed = 2\ngenerate = arc count=3\n";
  }
  PipelineConfig c = small_config(PipelineMode::AnalyticOnly);
  c.frames = 2;
  c.scene = dir / "a.scene";
  c.output_dir = dir / "out";
  c.write_images = true;
  c.dump_debug = true;
  const SequenceResult r = run_sequence(c);
  EXPECT_EQ(r.exit_code, 0);
  ASSERT_EQ(r.frames.size(), 2u);
  EXPECT_TRUE(fs::exists(c.output_dir / "metrics.csv"));
  EXPECT_TRUE(fs::exists(c.output_dir / "timings.csv"));
  EXPECT_TRUE(fs::exists(c.output_dir / "frame_0001_shaded.pfm"));
  EXPECT_TRUE(fs::exists(c.output_dir / "debug" / "frame_0000" / "classes.pfm"));
}

TEST(NearestNeighborFill, CopiesNearestPositionedPixel) {
  TensorImage pos(1, 5, 3);
  TensorImage cov(1, 5, 1, 1.0f);
  pos.set_vec3(0, 0, {1, 2, 3});
  pos.set_vec3(0, 4, {4, 5, 6});
  cov.at(0, 4) = 0.0f;
  const TensorImage out = nearest_neighbor_fill(pos, cov);
  EXPECT_EQ(out.vec3(0, 1), Eigen::Vector3d(1, 2, 3));
  EXPECT_EQ(out.vec3(0, 2), Eigen::Vector3d(1, 2, 3));  // tie: row-major first
  EXPECT_EQ(out.vec3(0, 3), Eigen::Vector3d(4, 5, 6));
  EXPECT_EQ(out.vec3(0, 4), Eigen::Vector3d::Zero());   // background
  EXPECT_THROW(nearest_neighbor_fill(pos, TensorImage(1, 3, 1)), InvalidArgument);
}

TEST(JitterAccumulator, StaticFramesAverageCoverage) {
  JitterAccumulator acc(4);
  TensorImage motion(1, 1, 2), cov_out, tan_out;
  TensorImage tan(1, 1, 3);
  tan.set_vec3(0, 0, {0, 1, 0});
  const float values[] = {1.0f, 0.0f, 0.5f};
  for (float v : values) {
    acc.accumulate(TensorImage(1, 1, 1, v), tan, motion, cov_out, tan_out);
  }
  EXPECT_NEAR(cov_out.at(0, 0), 0.5f, 1e-6);
  EXPECT_EQ(tan_out.vec3(0, 0), Eigen::Vector3d(0, 1, 0));
  EXPECT_THROW(JitterAccumulator(0), InvalidArgument);
}
