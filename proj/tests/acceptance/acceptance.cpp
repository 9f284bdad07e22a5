// Acceptance gate: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hairgbuf/losses.hpp"
#include "hairgbuf/model.hpp"
#include "hairgbuf/nn_layers.hpp"
#include "hairgbuf/pipeline.hpp"
#include "hairgbuf/raster.hpp"
#include "hairgbuf/recon.hpp"
#include "hairgbuf/spatial.hpp"
#include "hairgbuf/temporal.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace hairgbuf;
using hairgbuf::test::Rng;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string quote(const fs::path& p) { return "\"" + p.string() + "\""; }

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 1. Property suite green within five minutes.
Outcome invariant_suite(const fs::path& work) {
  const fs::path log = work / "property_tests.log";
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run_command(quote(HAIRGBUF_PROPERTY_TESTS_PATH) + " > " + quote(log) + " 2>&1");
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string text = read_file(log);
  const auto pos = text.rfind("[  PASSED  ]");
  std::string summary = pos == std::string::npos ? "no PASSED line" : text.substr(pos, text.find('\n', pos) - pos);
  return {code == 0 && seconds < 300.0,
          fmt("exit %d, %.1f s (limit 300 s); %s; log %s", code, seconds, summary.c_str(), log.c_str())};
}

TensorImage network_input(Rng& rng, int h, int w) {
  TensorImage x(h, w, 4);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c) {
      if (rng.chance(0.3)) continue;
      x.at(y, c, 0) = static_cast<float>(rng.uniform(0.05, 1.0));
      x.set_vec3(y, c, rng.unit_vector(), 1);
    }
  return x;
}

// 2. Oracle equivalence on 20 random cases per operation.
Outcome oracle_equivalence() {
  constexpr int kCases = 20;
  Rng rng(2);
  double conv_err = 0, attn_err = 0, hier_err = 0, spatial_err = 0, temporal_err = 0;
  for (int i = 0; i < kCases; ++i) {
    const int in = rng.integer(1, 6), out = rng.integer(1, 6);
    const int k = rng.chance(0.5) ? 3 : 1, stride = rng.integer(1, 2);
    const TensorImage x = test::random_image(rng, rng.integer(1, 9), rng.integer(1, 9), in);
    const ConvLayer layer = test::random_conv(rng, in, out, k, stride);
    conv_err = std::max(conv_err, oracle::max_abs_diff(
        oracle::conv(oracle::from(x), layer.weight(), layer.bias(), out, k, stride), conv2d(x, layer)));
  }
  for (int i = 0; i < kCases; ++i) {
    const int heads = 1 << rng.integer(0, 2);
    const int c = heads * rng.integer(1, 4);
    const int h = rng.integer(1, 4), w = rng.integer(1, 4);
    const TensorImage q = test::random_image(rng, h, w, c), k = test::random_image(rng, h, w, c),
                      v = test::random_image(rng, h, w, c);
    attn_err = std::max(attn_err, oracle::max_abs_diff(
        oracle::attention(oracle::from(q), oracle::from(k), oracle::from(v), heads),
        multi_head_attention(q, k, v, heads)));
  }
  for (int i = 0; i < kCases; ++i) {
    const int h = 4 * rng.integer(1, 3), w = 4 * rng.integer(1, 3);
    const int c4 = rng.integer(1, 6), c2 = rng.integer(1, 6);
    const TensorImage x = network_input(rng, h, w);
    const TensorImage f4 = test::random_image(rng, h / 4, w / 4, c4);
    const TensorImage f2 = test::random_image(rng, h / 2, w / 2, c2);
    const ConvLayer k4 = test::random_conv(rng, c4, 5, 1), k2 = test::random_conv(rng, c2, 5, 1);
    WeightSet ws;
    ws["k4.weight"] = Tensor{{5, static_cast<std::uint32_t>(c4), 1, 1}, k4.weight()};
    ws["k4.bias"] = Tensor{{5}, k4.bias()};
    ws["k2.weight"] = Tensor{{5, static_cast<std::uint32_t>(c2), 1, 1}, k2.weight()};
    ws["k2.bias"] = Tensor{{5}, k2.bias()};
    hier_err = std::max(hier_err, oracle::max_abs_diff(
        oracle::hierarchical(oracle::from(f4), oracle::from(f2), oracle::from(x), ws, "k4", "k2"),
        hierarchical_filter(f4, f2, x, k4, k2)));
  }
  for (int i = 0; i < kCases; ++i) {
    const WeightSet ws = random_weights(100 + i);
    const TensorImage x = network_input(rng, 16, 16);
    const TensorImage got = spatial_forward(SpatialNet::from_weights(ws), x).packed();
    spatial_err = std::max(spatial_err, oracle::max_abs_diff(oracle::spatial_forward(ws, oracle::from(x)), got));
    const TensorImage s5 = test::random_image(rng, 8, 8, 5);
    const TensorImage u = test::random_image(rng, 8, 8, 14);
    const TensorImage t = temporal_forward(TemporalNet::from_weights(ws), u, SpatialOutput::unpack(s5), false);
    temporal_err = std::max(temporal_err, oracle::max_abs_diff(
        oracle::temporal_forward(ws, oracle::from(u), oracle::from(s5), false), t));
  }
  const bool pass = conv_err <= 1e-5 && attn_err <= 1e-5 && hier_err <= 1e-5 && spatial_err <= 1e-4 &&
                    temporal_err <= 1e-4;
  return {pass, fmt("20 cases each, max |diff|: conv2d %.2e (1e-5), attention %.2e (1e-5), "
                    "hierarchical %.2e (1e-5), spatial 16x16 %.2e (1e-4), temporal 8x8 %.2e (1e-4)",
                    conv_err, attn_err, hier_err, spatial_err, temporal_err)};
}

SceneDescription scene_from_text(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  return parse_scene(in, name);
}

// 3. Analytic reconstruction on 10 seeded helix/arc scenes at 64x64.
Outcome analytic_reconstruction() {
  constexpr int kSeeds = 10;
  constexpr int kFrames = 8;
  int complete = 0, beats_nn = 0;
  long repaired = 0, close = 0;
  std::string per_seed;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const SceneDescription scene = scene_from_text(
        fmt("width = 64\nheight = 64\nseed = %d\ncamera.auto_fit = true\ngenerate = %s count=12\n",
            seed + 1, seed % 2 ? "arc" : "helix"),
        "recon.scene");
    PipelineConfig c;
    c.frames = kFrames;
    c.spp_noisy = 1;
    c.spp_reference = 128;
    c.write_images = false;
    Pipeline pipeline(c, scene);
    FrameOutput out;
    FrameReport report;
    for (int f = 0; f < kFrames; ++f) report = pipeline.process(f, &out);
    const Camera& cam = pipeline.camera();
    if (report.ok && report.completed_percent == 100.0) ++complete;

    const TensorImage nn = nearest_neighbor_fill(out.noisy.position, out.coverage);
    double se = 0.0, se_nn = 0.0;
    int n = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (out.reference.coverage.at(y, x) <= 0 || out.coverage.at(y, x) <= 0) continue;
        const Eigen::Vector3d ref = out.reference.position.vec3(y, x);
        se += (out.recon.position.vec3(y, x) - ref).squaredNorm();
        se_nn += (nn.vec3(y, x) - ref).squaredNorm();
        ++n;
      }
    const double rmse = std::sqrt(se / std::max(n, 1)), rmse_nn = std::sqrt(se_nn / std::max(n, 1));
    if (rmse < rmse_nn) ++beats_nn;

    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const PositionSource src = out.recon.source[static_cast<std::size_t>(y) * 64 + x];
        if (src != PositionSource::Backward && src != PositionSource::Forward) continue;
        const Eigen::Vector3d p = out.recon.position.vec3(y, x);
        const Eigen::Vector3d q = test::nearest_strand_point(scene.scene, p, kFrames - 1);
        ++repaired;
        if ((p - q).norm() <= 2.0 * step_size(cam.depth(q), cam)) ++close;
      }
    per_seed += fmt(" %d:%.4f/%.4f", seed, rmse, rmse_nn);
  }
  const double frac = repaired ? static_cast<double>(close) / repaired : 0.0;
  return {complete == kSeeds && beats_nn >= 8 && repaired > 0 && frac >= 0.9,
          fmt("completion 100%% on %d/10; RMSE < NN-fill on %d/10 (need 8); repaired within 2 l_p: "
              "%ld/%ld = %.1f%% (need 90%%); rmse/nn per seed:",
              complete, beats_nn, close, repaired, 100.0 * frac) +
              per_seed};
}

// 4. Circle fit on noise-free arcs and collinear inputs.
Outcome circle_fit() {
  Rng rng(4);
  int cases = 0, good = 0, line_cases = 0, line_degenerate = 0;
  double worst = 0.0;
  for (int ri = 0; ri <= 45; ++ri) {
    const double r = 5.0 + ri;
    for (int rep = 0; rep < 10; ++rep) {
      // Arc through the window center, clipped to the 11x11 window.
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const Eigen::Vector2d center = r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
      std::vector<Eigen::Vector2d> pts;
      std::vector<double> w;
      for (int k = 0; k < 720; ++k) {
        const double a = phi + std::numbers::pi + (k - 360) * (std::numbers::pi / 720.0);
        const Eigen::Vector2d p = center + r * Eigen::Vector2d(std::cos(a), std::sin(a));
        if (std::abs(p.x()) > 5.5 || std::abs(p.y()) > 5.5) continue;
        pts.push_back(p);
        w.push_back(rng.uniform(0.1, 1.0));
      }
      const CircleFit fit = fit_circle(pts, w);
      ++cases;
      const double err = fit.degenerate ? INFINITY : (fit.center - center).norm();
      worst = std::max(worst, err);
      if (err < 0.5) ++good;
    }
  }
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d origin(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const double a = rng.uniform(0.0, std::numbers::pi);
    std::vector<Eigen::Vector2d> pts;
    std::vector<double> w;
    for (int k = 0, n = rng.integer(2, 30); k < n; ++k) {
      pts.push_back(origin + rng.uniform(-5, 5) * Eigen::Vector2d(std::cos(a), std::sin(a)));
      w.push_back(rng.uniform(0.1, 1.0));
    }
    ++line_cases;
    if (fit_circle(pts, w).degenerate) ++line_degenerate;
  }
  // Digitized straight lines through the curvature field.
  for (int dir = 0; dir < 3; ++dir) {
    TensorImage cov(21, 21, 1);
    for (int t = 0; t < 21; ++t) {
      const int y = dir == 0 ? 10 : t;
      const int x = dir == 1 ? 10 : t;
      cov.at(y, x) = 1.0f;
    }
    const CurvatureField field = curvature_centers(cov);
    for (int y = 0; y < 21; ++y)
      for (int x = 0; x < 21; ++x)
        if (cov.at(y, x) > 0) {
          ++line_cases;
          if (!field.finite(y, x)) ++line_degenerate;
        }
  }
  return {good == cases && line_degenerate == line_cases,
          fmt("arcs r=5..50: %d/%d with center error < 0.5 px (worst %.2e); collinear degenerate "
              "%d/%d",
              good, cases, worst, line_degenerate, line_cases)};
}

// 5. Analytic-only beats raw spp=1 over a 16-frame static sequence.
Outcome end_to_end() {
  const SceneDescription scene = scene_from_text(
      "width = 64\nheight = 64\nseed = 7\ncamera.auto_fit = true\ngenerate = helix count=12\n",
      "static.scene");
  PipelineConfig c;
  c.frames = 16;
  c.write_images = false;
  Pipeline pipeline(c, scene);
  double psnr = 0.0, raw = 0.0;
  for (int f = 0; f < 16; ++f) {
    const FrameReport r = pipeline.process(f);
    psnr += r.psnr / 16.0;
    raw += r.raw_psnr / 16.0;
  }
  return {std::isfinite(psnr) && psnr > raw,
          fmt("mean shaded PSNR vs spp128 reference: analytic-only %.3f dB, raw spp1 %.3f dB", psnr, raw)};
}

// 6. Zero-weight full mode equals analytic-only; first-frame temporal bypass is exact.
Outcome identity_degeneracies() {
  double worst = 0.0;
  for (AccumulateMode acc : {AccumulateMode::Off, AccumulateMode::On}) {
    for (const char* family : {"helix", "mixed"}) {
      const SceneDescription scene = scene_from_text(
          fmt("width = 32\nheight = 32\nseed = 11\ncamera.auto_fit = true\ngenerate = %s count=8\n"
              "keyframe = frame=0\nkeyframe = frame=4 translate=0.1,0,0 rotate_y=10\n",
              family),
          "moving.scene");
      PipelineConfig a;
      a.frames = 4;
      a.spp_reference = 16;
      a.write_images = false;
      a.accumulate = acc;
      PipelineConfig f = a;
      f.mode = PipelineMode::Full;
      Pipeline pa(a, scene);
      Pipeline pf(f, scene, zero_residual_weights());
      for (int frame = 0; frame < 4; ++frame) {
        FrameOutput oa, of;
        pa.process(frame, &oa);
        pf.process(frame, &of);
        for (auto [x, y] : {std::pair{&oa.coverage, &of.coverage}, {&oa.tangent, &of.tangent},
                            {&oa.recon.position, &of.recon.position}, {&oa.shaded, &of.shaded}}) {
          worst = std::max(worst, max_abs_diff(*x, *y));
        }
      }
    }
  }
  Rng rng(6);
  int bypass_exact = 0;
  constexpr int kBypass = 20;
  for (int i = 0; i < kBypass; ++i) {
    const TemporalNet net = TemporalNet::from_weights(random_weights(600 + i));
    const SpatialOutput s = SpatialOutput::unpack(test::random_image(rng, 8, 8, 5));
    TemporalState state;
    const TensorImage u = assemble_temporal_input(s, state, test::random_image(rng, 8, 8, 2));
    if (temporal_forward(net, u, s, state.first_frame()) == s.packed()) ++bypass_exact;
  }
  return {worst <= 1e-6 && bypass_exact == kBypass,
          fmt("zero-weight full vs analytic-only max |diff| %.2e over coverage/tangent/position/shaded "
              "(limit 1e-6, accumulate off and on); first-frame bypass exact %d/%d",
              worst, bypass_exact, kBypass)};
}

double central_difference(TensorImage x, std::size_t i, double h,
                          const std::function<double(const TensorImage&)>& loss) {
  const float x0 = x.data()[i];
  const float up = static_cast<float>(x0 + h), down = static_cast<float>(x0 - h);
  x.data()[i] = up;
  const double lu = loss(x);
  x.data()[i] = down;
  const double ld = loss(x);
  return (lu - ld) / (static_cast<double>(up) - static_cast<double>(down));
}

// 7. Loss gradients against central differences.
Outcome gradient_checks() {
  constexpr int kPoints = 100;
  constexpr double kH = 1e-3;
  Rng rng(7);
  const LossWeights weights;
  double worst[3] = {0, 0, 0};
  int points[3] = {0, 0, 0};
  auto rel = [](double g, double fd) { return std::abs(g - fd) / std::max({std::abs(fd), std::abs(g), 1e-12}); };
  auto mask = [&] {
    TensorImage m(4, 4, 1);
    for (float& v : m.data()) v = rng.chance(0.7) ? 1.0f : 0.0f;
    m.at(0, 0) = 1.0f;
    return m;
  };
  while (points[0] < kPoints) {
    const TensorImage m = mask();
    const TensorImage pred = test::random_image(rng, 4, 4, 4, 0, 1), ref = test::random_image(rng, 4, 4, 4, 0, 1);
    const std::size_t e = rng.integer(0, 63);
    if (m.data()[e / 4] == 0.0f) continue;  // no dependence on this element
    if (std::abs(pred.data()[e] - ref.data()[e]) < 1e-2) continue;  // L1 kink
    const double g = loss_cov_grad(pred, ref, m, weights).data()[e];
    const double fd = central_difference(pred, e, kH, [&](const TensorImage& p) { return loss_cov(p, ref, m, weights).value; });
    worst[0] = std::max(worst[0], rel(g, fd));
    ++points[0];
  }
  while (points[1] < kPoints) {
    const TensorImage m = mask();
    const TensorImage logits = test::random_image(rng, 4, 4, 1, -4, 4);
    const std::size_t e = rng.integer(0, 15);
    const double g = loss_mask_grad(logits, m, weights).data()[e];
    const double fd = central_difference(logits, e, kH, [&](const TensorImage& l) { return loss_mask(l, m, weights).value; });
    worst[1] = std::max(worst[1], rel(g, fd));
    ++points[1];
  }
  while (points[2] < kPoints) {
    const TensorImage m = mask();
    const TensorImage pred = test::random_image(rng, 4, 4, 3), ref = test::random_image(rng, 4, 4, 3);
    const std::size_t e = rng.integer(0, 47);
    if (m.data()[e / 3] == 0.0f) continue;
    if (std::abs(pred.data()[e] - ref.data()[e]) < 1e-2) continue;
    const double g = loss_tan_grad(pred, ref, m).data()[e];
    const double fd = central_difference(pred, e, kH, [&](const TensorImage& p) { return loss_tan(p, ref, m).value; });
    worst[2] = std::max(worst[2], rel(g, fd));
    ++points[2];
  }
  const bool pass = worst[0] <= 1e-3 && worst[1] <= 1e-3 && worst[2] <= 1e-3;
  return {pass, fmt("100 points per loss on 4x4 patches, h = 1e-3, worst relative error: coverage %.2e, "
                    "mask %.2e, tangent %.2e (limit 1e-3)",
                    worst[0], worst[1], worst[2])};
}

std::map<std::string, std::string> output_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    const std::string ext = entry.path().extension().string();
    if (entry.is_regular_file() && (entry.path().filename() == "metrics.csv" || ext == ".pfm")) {
      files[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
    }
  }
  return files;
}

// 8. Two CLI runs with the same config write identical CSV and PFM bytes.
Outcome cli_determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = quote(HAIRGBUF_CLI_PATH);
  std::ofstream(dir / "motion.scene")
      << "width = 32\nheight = 32\nseed = 21\ncamera.auto_fit = true\ngenerate = mixed count=10\n"
         "keyframe = frame=0\nkeyframe = frame=4 translate=0.05,0,0 rotate_y=8\n";
  std::ofstream(dir / "run.cfg") << "scene = motion.scene\nframes = 4\nspp_reference = 32\nmode = full\n"
                                    "weights = random.hgbw\n";
  if (run_command(cli + " init-weights --kind random --seed 5 --out " + quote(dir / "random.hgbw") +
                  " > /dev/null") != 0) {
    return {false, "init-weights failed"};
  }
  std::string detail;
  bool pass = true;
  for (const char* mode : {"full", "analytic-only"}) {
    std::map<std::string, std::string> runs[2];
    for (int i = 0; i < 2; ++i) {
      const fs::path out = dir / fmt("%s_%d", mode, i);
      const int code = run_command(cli + " run --config " + quote(dir / "run.cfg") + " --mode " + mode +
                                   (std::string(mode) == "analytic-only" ? "" : " --weights " + quote(dir / "random.hgbw")) +
                                   " --dump-debug --out " + quote(out) + " > " + quote(out.string() + ".log") + " 2>&1");
      if (code != 0) return {false, fmt("hairgbuf run --mode %s exited %d", mode, code)};
      runs[i] = output_files(out);
    }
    int differing = 0;
    for (const auto& [name, bytes] : runs[0]) {
      auto it = runs[1].find(name);
      if (it == runs[1].end() || it->second != bytes) ++differing;
    }
    const bool same = differing == 0 && runs[0].size() == runs[1].size() && runs[0].count("metrics.csv");
    pass = pass && same;
    detail += fmt("%s: %zu files, %d differ; ", mode, runs[0].size(), differing);
  }
  return {pass, detail + "two runs each of hairgbuf run with identical config"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hairgbuf acceptance checks"};
  std::string work_dir = (fs::temp_directory_path() / "hairgbuf_acceptance").string();
  std::string only;
  app.add_option("--work-dir", work_dir, "Scratch directory for runs and logs");
  app.add_option("--only", only, "Run a single criterion by number");
  CLI11_PARSE(app, argc, argv);
  const fs::path work = fs::absolute(work_dir);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"invariant suite", [&] { return invariant_suite(work); }},
      {"oracle equivalence", oracle_equivalence},
      {"analytic reconstruction quality", analytic_reconstruction},
      {"circle-fit accuracy", circle_fit},
      {"end-to-end improvement", end_to_end},
      {"identity degeneracies", identity_degeneracies},
      {"loss gradient checks", gradient_checks},
      {"determinism", [&] { return cli_determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && std::to_string(i + 1) != only) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s [%zu] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), s);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
