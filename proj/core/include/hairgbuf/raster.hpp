#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "hairgbuf/gbuffer.hpp"
#include "hairgbuf/strand.hpp"

namespace hairgbuf {

/// Frontmost strand hit for one screen-space sample.
struct RasterHit {
  double depth;
  Eigen::Vector3d position;  // on the strand centerline, rigged to the frame
  Eigen::Vector3d tangent;   // unit, rigged to the frame
  int strand;
  double s;
};

/// Screen-space ribbon tracer for one (scene, camera, frame) triple.
///
/// Each strand is tessellated into roughly pixel-long segments and binned by
/// pixel. A sample hits a segment when its screen distance to the projected
/// centerline is at most half the projected strand width; attributes are
/// interpolated perspective-correctly.
class StrandRasterizer {
 public:
  StrandRasterizer(const StrandScene& scene, const Camera& camera, int frame);

  std::optional<RasterHit> trace(const Eigen::Vector2d& screen) const;
  /// All hits of a sample, one per intersected segment, in no particular order.
  std::vector<RasterHit> trace_all(const Eigen::Vector2d& screen) const;

  const Camera& camera() const { return camera_; }
  std::size_t segment_count() const { return segments_.size(); }

 private:
  struct Segment {
    Eigen::Vector3d a, b;         // rigged world endpoints
    Eigen::Vector2d sa, sb;       // screen endpoints
    double wa, wb;                // view depths
    double s0, s1;                // strand parameter range
    double half_width;            // world units
    int strand;
  };

  template <typename Fn>
  void visit_hits(const Eigen::Vector2d& screen, Fn&& fn) const;

  std::vector<Strand> strands_;
  Camera camera_;
  Eigen::Isometry3d rig_;
  std::vector<Segment> segments_;
  std::vector<int> cell_start_;  // CSR offsets, width * height + 1
  std::vector<int> cell_items_;
};

/// Offset of sub-sample k in frame `frame`: the jitter offset of the frame,
/// toroidally shifted by the k-th Halton (2,3) point (k = 0 gives no shift).
Eigen::Vector2d subsample_offset(int k, const JitterSequence& jitter, int frame);

/// Rasterizes the scene with `spp` sub-samples per pixel. Coverage is the hit
/// fraction; tangent/position/depth come from the frontmost hit; motion is the
/// analytic screen displacement of that hit between frame-1 and frame.
GBuffer rasterize(const StrandScene& scene, const Camera& camera, int spp,
                  const JitterSequence& jitter, int frame);

struct DatasetFrame {
  GBuffer noisy;
  GBuffer reference;
};

struct DatasetOptions {
  int spp_noisy = 1;
  int spp_reference = 128;
  JitterSequence jitter = JitterSequence::halton23();
};

/// Noisy/reference pairs for frames [0, frames). The noisy jitter advances by
/// one Halton phase per frame; references use stratified sub-samples without jitter.
std::vector<DatasetFrame> make_dataset(const StrandScene& scene, const Camera& camera, int frames,
                                       const DatasetOptions& options = {});

/// Writes the trainer-facing layout: manifest.json plus frame_NNNN/{noisy,reference}/*.pfm.
void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetFrame>& frames,
                   const Camera& camera, const DatasetOptions& options);

/// Reads one G-buffer directory (coverage/tangent/position/depth/motion PFMs).
GBuffer read_gbuffer_dir(const std::filesystem::path& dir);
void write_gbuffer_dir(const std::filesystem::path& dir, const GBuffer& gbuffer);

}  // namespace hairgbuf
