#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hairgbuf {

/// Radical inverse of `index` (>= 1) in `base` (>= 2).
double halton(std::uint64_t index, int base);

/// Sub-pixel jitter offsets in [0,1)^2, cycled per frame.
class JitterSequence {
 public:
  explicit JitterSequence(std::vector<Eigen::Vector2d> samples);

  /// First `length` Halton points with bases (2, 3). The default is 8 samples.
  static JitterSequence halton23(int length = 8);
  /// A single zero offset: used for references whose sub-samples are already stratified.
  static JitterSequence none();

  const std::vector<Eigen::Vector2d>& samples() const { return samples_; }
  int length() const { return static_cast<int>(samples_.size()); }
  const Eigen::Vector2d& for_frame(int frame) const;

 private:
  std::vector<Eigen::Vector2d> samples_;
};

enum class StrandKind { LineSegment, CircularArc, Helix };

struct LineParams {
  Eigen::Vector3d p0;
  Eigen::Vector3d p1;
};

/// Points c + r (cos a u + sin a v) for a in [start_angle, end_angle] (radians).
struct ArcParams {
  Eigen::Vector3d center;
  double radius;
  Eigen::Vector3d u;
  Eigen::Vector3d v;
  double start_angle;
  double end_angle;
};

/// Circular helix around `axis` through `base`; `pitch` is the axial rise per turn.
struct HelixParams {
  Eigen::Vector3d base;
  Eigen::Vector3d axis;
  double radius;
  double pitch;
  double turns;
  double phase;
};

struct StrandSample {
  Eigen::Vector3d position;
  Eigen::Vector3d tangent;
};

/// Regular parametric strand with a constant-speed parameter s in [0,1].
class Strand {
 public:
  using Params = std::variant<LineParams, ArcParams, HelixParams>;

  static Strand line(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, double width);
  /// `normal` defines the arc plane; `start_dir` (projected into the plane) is angle 0.
  static Strand arc(const Eigen::Vector3d& center, double radius, const Eigen::Vector3d& normal,
                    const Eigen::Vector3d& start_dir, double start_angle, double end_angle,
                    double width);
  static Strand helix(const Eigen::Vector3d& base, const Eigen::Vector3d& axis, double radius,
                      double pitch, double turns, double phase, double width);

  StrandKind kind() const;
  const Params& params() const { return params_; }
  double width() const { return width_; }
  double arc_length() const { return arc_length_; }

  Eigen::Vector3d position(double s) const;
  /// dP/ds; its norm equals arc_length() everywhere.
  Eigen::Vector3d derivative(double s) const;

 private:
  Strand(Params params, double width);

  Params params_;
  double width_;
  double arc_length_;
};

/// Position and unit tangent at s. Throws InvalidArgument when s is outside [0,1].
StrandSample eval_strand(const Strand& strand, double s);

/// Rigid keyframe: rotation about +y through the rig pivot, then translation.
struct RigKeyframe {
  double frame;
  Eigen::Vector3d translation;
  double rotate_y_degrees;
};

/// Piecewise-linear rigid motion; clamps outside the keyframe range.
class Rig {
 public:
  Rig() = default;
  Rig(std::vector<RigKeyframe> keys, const Eigen::Vector3d& pivot);

  bool is_static() const { return keys_.empty(); }
  const std::vector<RigKeyframe>& keys() const { return keys_; }
  const Eigen::Vector3d& pivot() const { return pivot_; }
  Eigen::Isometry3d transform(int frame) const;

 private:
  std::vector<RigKeyframe> keys_;
  Eigen::Vector3d pivot_ = Eigen::Vector3d::Zero();
};

struct StrandScene {
  std::vector<Strand> strands;
  Rig rig;
  std::uint64_t seed = 0;

  /// Bounding box of all strands at rest (sampled densely).
  Eigen::AlignedBox3d bounds() const;
};

enum class SceneFamily { Helix, Arc, Mixed };

/// Deterministic procedural scene of `count` strands inside [-1,1]^3.
StrandScene make_seeded_scene(SceneFamily family, std::uint64_t seed, int count = 12);

/// Small deterministic generator (SplitMix64) used for all seeded content.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

}  // namespace hairgbuf
