#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hairgbuf/raster.hpp"
#include "hairgbuf/recon.hpp"
#include "test_support.hpp"

using namespace hairgbuf;
using hairgbuf::test::Rng;

namespace {

Eigen::Vector2d center_of(int y, int x) { return {x + 0.5, y + 0.5}; }

// Minimal frame: `valid` pixels get positions unprojected at `depth`, `invalid`
// pixels get coverage only.
struct Frame {
  TensorImage coverage, position, depth, tangent;
  explicit Frame(int n) : coverage(n, n, 1), position(n, n, 3), depth(n, n, 1), tangent(n, n, 3) {}
  void valid(const Camera& cam, int y, int x, double d, const Eigen::Vector3d& t) {
    coverage.at(y, x) = 1.0f;
    position.set_vec3(y, x, cam.unproject(center_of(y, x), d));
    depth.at(y, x) = static_cast<float>(d);
    tangent.set_vec3(y, x, t);
  }
  void invalid(int y, int x, const Eigen::Vector3d& t) {
    coverage.at(y, x) = 1.0f;
    tangent.set_vec3(y, x, t);
  }
};

}  // namespace

TEST(Classify, HairAndValidity) {
  TensorImage cov(1, 4, 1);
  TensorImage pos(1, 4, 3);
  cov.at(0, 1) = 0.5f;
  cov.at(0, 2) = 0.25f;
  cov.at(0, 3) = 0.0f;
  pos.set_vec3(0, 1, {0.0, 0.0, 1.0});
  pos.set_vec3(0, 3, {1.0, 0.0, 0.0});
  const ClassMap m = classify_pixels(pos, cov, 1e-6);
  EXPECT_EQ(m.at(0, 0), PixelClass::Background);
  EXPECT_EQ(m.at(0, 1), PixelClass::HairValid);
  EXPECT_EQ(m.at(0, 2), PixelClass::HairInvalid);
  EXPECT_EQ(m.at(0, 3), PixelClass::Background);
  EXPECT_EQ(m.count(PixelClass::HairValid), 1);
  EXPECT_EQ(m.to_image().at(0, 2), 2.0f);
}

TEST(NearestFlagged, MatchesBruteForceWithRowMajorTies) {
  Rng rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = rng.integer(1, 12);
    const int w = rng.integer(1, 12);
    std::vector<std::uint8_t> flags(static_cast<std::size_t>(h) * w);
    for (auto& f : flags) f = rng.chance(0.1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        long best = -1;
        long best_d = 0;
        for (long i = 0; i < h * w; ++i) {
          if (!flags[i]) continue;
          const long dy = i / w - y;
          const long dx = i % w - x;
          const long d = dy * dy + dx * dx;
          if (best < 0 || d < best_d) {
            best = i;
            best_d = d;
          }
        }
        ASSERT_EQ(nearest_flagged_pixel(flags, h, w, y, x), best) << y << "," << x;
      }
  }
}

TEST(InpaintDepth, FillsFromNearestAndThrowsWhenNothingToCopy) {
  TensorImage depth(1, 5, 1);
  depth.at(0, 0) = 2.0f;
  depth.at(0, 4) = 6.0f;
  TensorImage pos(1, 5, 3);
  TensorImage cov(1, 5, 1, 1.0f);
  const ClassMap m = classify_pixels(pos, cov, 1e-6);
  const TensorImage d = inpaint_depth(depth, m);
  EXPECT_EQ(d.at(0, 1), 2.0f);
  EXPECT_EQ(d.at(0, 2), 2.0f);  // equidistant: first in row-major order
  EXPECT_EQ(d.at(0, 3), 6.0f);
  EXPECT_EQ(d.at(0, 4), 6.0f);
  EXPECT_THROW(inpaint_depth(TensorImage(1, 5, 1), m), DegenerateFrame);
}

TEST(StepSize, DiagonalPixelFootprint) {
  const Camera cam = test::test_camera(64, 48);
  const double d = 3.0;
  EXPECT_NEAR(step_size(d, cam), d * std::hypot(1.0 / cam.fx(), 1.0 / cam.fy()), 1e-15);
  EXPECT_THROW(step_size(0.0, cam), InvalidArgument);
}

TEST(FitCircle, ExactPointsRecoverCenterAndRadius) {
  std::vector<Eigen::Vector2d> pts;
  const Eigen::Vector2d c(3.0, -2.0);
  for (int i = 0; i < 12; ++i) {
    const double a = 0.1 * i;
    pts.push_back(c + 20.0 * Eigen::Vector2d(std::cos(a), std::sin(a)));
  }
  const std::vector<double> w(pts.size(), 1.0);
  const CircleFit fit = fit_circle(pts, w);
  ASSERT_FALSE(fit.degenerate);
  EXPECT_NEAR((fit.center - c).norm(), 0.0, 1e-6);
  EXPECT_NEAR(fit.radius, 20.0, 1e-6);
}

TEST(FitCircle, DegenerateCases) {
  const std::vector<Eigen::Vector2d> line = {{0, 0}, {1, 1}, {2, 2}, {3, 3}, {-4, -4}};
  EXPECT_TRUE(fit_circle(line, std::vector<double>(5, 1.0)).degenerate);
  const std::vector<Eigen::Vector2d> two = {{0, 0}, {1, 0}, {0, 1}};
  EXPECT_TRUE(fit_circle(two, std::vector<double>{1.0, 1.0, 0.0}).degenerate);
  EXPECT_THROW(fit_circle(two, std::vector<double>{1.0}), InvalidArgument);
}

TEST(CurvatureCenters, IsolatedPixelHasNoCenterAndRingPointsInward) {
  TensorImage cov(64, 64, 1);
  cov.at(3, 3) = 1.0f;
  // Ring of radius 20 around (32, 32): pixels whose center lies within 0.5 of it.
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (std::abs((center_of(y, x) - Eigen::Vector2d(32, 32)).norm() - 20.0) < 0.5) cov.at(y, x) = 1.0f;
  const CurvatureField f = curvature_centers(cov, 11);
  EXPECT_FALSE(f.finite(3, 3));
  EXPECT_FALSE(f.finite(32, 32));
  // Digitized flats can be exactly collinear within the window; those stay
  // degenerate. Everything else must point roughly at the ring center.
  int ring = 0, finite = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (!(cov.at(y, x) > 0) || (y < 8 && x < 8)) continue;
      ++ring;
      if (!f.finite(y, x)) continue;
      ++finite;
      const double r = (f.center(y, x) - center_of(y, x)).norm();
      EXPECT_GT(r, 5.0);
      EXPECT_LT(r, 60.0);
      EXPECT_LT((f.center(y, x) - Eigen::Vector2d(32, 32)).norm(), 12.0);
    }
  EXPECT_GT(ring, 100);
  EXPECT_GE(finite, 0.9 * ring);
  EXPECT_THROW(curvature_centers(cov, 4), InvalidArgument);
}

TEST(ProjectTangent, AxisAlignedAndAlongViewRay) {
  const Camera cam = test::test_camera();
  const Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  EXPECT_LT((*project_tangent({1, 0, 0}, origin, cam) - Eigen::Vector2d(1, 0)).norm(), 1e-12);
  EXPECT_LT((*project_tangent({0, 1, 0}, origin, cam) - Eigen::Vector2d(0, -1)).norm(), 1e-12);
  EXPECT_FALSE(project_tangent({0, 0, 1}, origin, cam).has_value());
  EXPECT_FALSE(project_tangent({1, 0, 0}, {0, 0, 10}, cam).has_value());
}

TEST(ProjectTangent, MatchesFiniteDifferenceOfProjection) {
  const Camera cam = test::test_camera(48, 32);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Eigen::Vector3d t = rng.unit_vector();
    const auto d = project_tangent(t, p, cam);
    if (!d) continue;
    const double h = 1e-6;
    const Eigen::Vector2d fd = cam.project(p + h * t)->pixel - cam.project(p - h * t)->pixel;
    if (fd.norm() < 1e-7) continue;
    EXPECT_LT((*d - fd.normalized()).norm(), 1e-5);
  }
}

TEST(VotePool, KeepsFrontmostCandidates) {
  VotePool pool(2);
  EXPECT_EQ(pool.offer({1, 0, 0}, 3.0), VotePool::Outcome::Inserted);
  EXPECT_EQ(pool.offer({2, 0, 0}, 1.0), VotePool::Outcome::Inserted);
  EXPECT_EQ(pool.offer({3, 0, 0}, 2.0), VotePool::Outcome::Evicted);
  EXPECT_EQ(pool.offer({4, 0, 0}, 5.0), VotePool::Outcome::Rejected);
  ASSERT_EQ(pool.candidates().size(), 2u);
  EXPECT_EQ(pool.frontmost()->position.x(), 2.0);
  VotePool ties(3);
  ties.offer({7, 0, 0}, 1.0);
  ties.offer({8, 0, 0}, 1.0);
  EXPECT_EQ(ties.frontmost()->position.x(), 7.0);
  EXPECT_THROW(VotePool(0), InvalidArgument);
}

TEST(BackwardRepair, SingleCandidateStepsTowardsPixel) {
  const Camera cam = test::test_camera();
  Frame f(32);
  f.valid(cam, 16, 15, 4.0, {1, 0, 0});
  f.invalid(16, 16, {1, 0, 0});
  const ClassMap m = classify_pixels(f.position, f.coverage, 1e-6);
  TensorImage steps(32, 32, 1, static_cast<float>(step_size(4.0, cam)));
  const RepairResult r =
      backward_repair(m, f.position, f.tangent, f.depth, CurvatureField(32, 32), steps, cam);
  ASSERT_EQ(r.repaired.size(), 1u);
  const Eigen::Vector3d expect = f.position.vec3(16, 15) + steps.at(0, 0) * Eigen::Vector3d(1, 0, 0);
  EXPECT_LT((r.position.vec3(16, 16) - expect).norm(), 1e-6);
  EXPECT_EQ(r.position.vec3(16, 15), f.position.vec3(16, 15));
}

TEST(ForwardVoting, RejectsDirectionsBeyondThetaMax) {
  const Camera cam = test::test_camera();
  Frame f(32);
  // Diagonal neighbour with a horizontal screen tangent: 45 degrees off.
  f.valid(cam, 15, 15, 4.0, {1, 0, 0});
  f.invalid(16, 16, {1, 0, 0});
  const ClassMap m = classify_pixels(f.position, f.coverage, 1e-6);
  const ScreenTangents st = screen_tangents(m, f.position, f.tangent, cam);
  TensorImage steps(32, 32, 1, static_cast<float>(step_size(4.0, cam)));
  std::vector<VoteRecord> log;
  EXPECT_TRUE(forward_voting(m, f.position, f.tangent, st, steps, cam, 30.0, 4, &log).repaired.empty());
  EXPECT_TRUE(log.empty());
  const RepairResult wide = forward_voting(m, f.position, f.tangent, st, steps, cam, 50.0, 4, &log);
  ASSERT_EQ(wide.repaired.size(), 1u);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_NEAR(log[0].cosine, std::sqrt(0.5), 1e-9);
  EXPECT_THROW(forward_voting(m, f.position, f.tangent, st, steps, cam, 90.0, 4), InvalidArgument);
}

TEST(ForwardVoting, FrontmostVoteWins) {
  const Camera cam = test::test_camera();
  Frame f(32);
  f.valid(cam, 16, 15, 4.0, {1, 0, 0});
  f.valid(cam, 16, 17, 3.0, {1, 0, 0});
  f.invalid(16, 16, {1, 0, 0});
  const ClassMap m = classify_pixels(f.position, f.coverage, 1e-6);
  const ScreenTangents st = screen_tangents(m, f.position, f.tangent, cam);
  TensorImage steps(32, 32, 1, 0.01f);
  const RepairResult r = forward_voting(m, f.position, f.tangent, st, steps, cam, 30.0, 4);
  ASSERT_EQ(r.repaired.size(), 1u);
  // The right neighbour votes towards -x from the nearer depth.
  const Eigen::Vector3d expect = f.position.vec3(16, 17) - 0.01 * Eigen::Vector3d(1, 0, 0);
  EXPECT_LT((r.position.vec3(16, 16) - expect).norm(), 1e-6);
}

TEST(Reconstruct, FullyValidInputIsCopiedBitForBit) {
  const Camera cam = test::test_camera();
  const StrandScene scene = make_seeded_scene(SceneFamily::Helix, 3, 6);
  const GBuffer g = rasterize(scene, cam, 4, JitterSequence::none(), 0);
  const ReconResult r = reconstruct_positions(g, g.coverage, g.tangent, cam);
  EXPECT_EQ(r.position, g.position);
  EXPECT_EQ(r.stats.repaired(), 0);
  EXPECT_EQ(r.stats.sweeps, 0);
  EXPECT_EQ(r.stats.hair_pixels, r.stats.initially_valid);
}

TEST(Reconstruct, RepairsDeletedPositionsNearTheStrands) {
  const Camera cam = test::test_camera(16, 16);
  int repaired = 0;
  int close = 0;
  for (std::uint64_t seed : {5u, 6u, 7u, 8u}) {
    const StrandScene scene = make_seeded_scene(SceneFamily::Helix, seed, 6);
    const GBuffer full = rasterize(scene, cam, 4, JitterSequence::none(), 0);
    GBuffer g = full;
    Rng rng(seed);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (g.coverage.at(y, x) > 0 && rng.chance(0.3)) {
          g.position.set_vec3(y, x, Eigen::Vector3d::Zero());
          g.depth.at(y, x) = 0.0f;
        }
    ReconSnapshots snaps;
    const ReconResult r = reconstruct_positions(g, g.coverage, g.tangent, cam, {}, &snaps);
    EXPECT_EQ(snaps.position, r.position);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const PositionSource src = r.source[static_cast<std::size_t>(y) * 16 + x];
        if (g.coverage.at(y, x) > 0 && g.depth.at(y, x) == 0.0f) {
          EXPECT_EQ(snaps.classes.at(y, x), 2.0f);
          EXPECT_NE(src, PositionSource::None);
        }
        if (src != PositionSource::Backward && src != PositionSource::Forward) continue;
        const Eigen::Vector3d p = r.position.vec3(y, x);
        const Eigen::Vector3d q = test::nearest_strand_point(scene, p);
        ++repaired;
        if ((p - q).norm() <= 2.0 * step_size(cam.depth(q), cam)) ++close;
      }
  }
  ASSERT_GT(repaired, 20);
  EXPECT_GE(close, 0.9 * repaired) << close << " of " << repaired;
}

TEST(ForwardVoting, CrossingTakesTheFrontStrand) {
  // Front strand horizontal at view depth 1, back strand vertical at depth 2.
  const Camera cam = test::test_camera(32, 32);
  StrandScene scene;
  scene.strands.push_back(Strand::line({-0.3, 0.006, 3.0}, {0.3, 0.006, 3.0}, 0.03));
  scene.strands.push_back(Strand::line({0.012, -0.6, 2.0}, {0.012, 0.6, 2.0}, 0.06));
  const GBuffer full = rasterize(scene, cam, 16, JitterSequence::none(), 0);
  StrandScene back_only;
  back_only.strands.push_back(scene.strands[1]);
  const GBuffer back = rasterize(back_only, cam, 16, JitterSequence::none(), 0);
  // Delete the pixels both strands cover.
  GBuffer g = full;
  std::vector<std::pair<int, int>> crossing;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (back.coverage.at(y, x) <= 0 || std::abs(full.depth.at(y, x) - 1.0f) > 0.01f) continue;
      g.position.set_vec3(y, x, Eigen::Vector3d::Zero());
      g.depth.at(y, x) = 0.0f;
      crossing.emplace_back(y, x);
    }
  ASSERT_GE(crossing.size(), 2u);
  const ClassMap m = classify_pixels(g.position, g.coverage, 1e-6);
  const TensorImage depth = inpaint_depth(g.depth, m);
  TensorImage steps(32, 32, 1);
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (depth.data()[i] > 0) steps.data()[i] = static_cast<float>(step_size(depth.data()[i], cam));
  const ScreenTangents st = screen_tangents(m, g.position, g.tangent, cam);
  const RepairResult r = forward_voting(m, g.position, g.tangent, st, steps, cam, 30.0, 4);
  int checked = 0;
  for (const auto& [y, x] : crossing) {
    if (std::find(r.repaired.begin(), r.repaired.end(), std::make_pair(y, x)) == r.repaired.end()) continue;
    ++checked;
    EXPECT_NEAR(r.position.at(y, x, 2), 3.0, 0.05) << y << "," << x;
  }
  EXPECT_EQ(checked, static_cast<int>(crossing.size()));
}

TEST(Reconstruct, RejectsBadParameters) {
  const Camera cam = test::test_camera(8, 8);
  const GBuffer g = GBuffer::zeros(8, 8);
  ReconParams p;
  p.pool_capacity = 0;
  EXPECT_THROW(reconstruct_positions(g, g.coverage, g.tangent, cam, p), InvalidArgument);
  EXPECT_THROW(reconstruct_positions(g, TensorImage(8, 8, 2), g.tangent, cam), InvalidArgument);
}
