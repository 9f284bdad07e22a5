#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hairgbuf/gbuffer.hpp"
#include "hairgbuf/tensor_image.hpp"

namespace hairgbuf {

enum class PixelClass : std::uint8_t { Background = 0, HairValid = 1, HairInvalid = 2 };

class ClassMap {
 public:
  ClassMap() = default;
  ClassMap(int height, int width) : height_(height), width_(width), labels_(pixels(), PixelClass::Background) {}

  int height() const { return height_; }
  int width() const { return width_; }
  PixelClass at(int y, int x) const { return labels_[index(y, x)]; }
  void set(int y, int x, PixelClass c) { labels_[index(y, x)] = c; }
  bool is_hair(int y, int x) const { return at(y, x) != PixelClass::Background; }
  int count(PixelClass c) const;

  /// 0 background, 1 valid, 2 invalid.
  TensorImage to_image() const;

 private:
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }
  int height_ = 0;
  int width_ = 0;
  std::vector<PixelClass> labels_;
};

/// Hair iff coverage > 0; valid iff additionally |P| > eps_pos.
ClassMap classify_pixels(const TensorImage& position, const TensorImage& coverage, double eps_pos);

/// Row-major index of the flagged pixel nearest to (y, x) in Euclidean
/// distance, ties going to the smaller index; -1 when nothing is flagged.
long nearest_flagged_pixel(const std::vector<std::uint8_t>& flags, int height, int width, int y,
                           int x);

/// Gives every hair pixel without depth the depth of the Euclidean-nearest
/// pixel with depth > 0 (ties: first in row-major order). Throws
/// DegenerateFrame when hair exists but no pixel has depth.
TensorImage inpaint_depth(const TensorImage& depth, const ClassMap& classes);

/// World length of a one-pixel diagonal step at view depth `depth`.
double step_size(double depth, const Camera& camera);

struct CircleFit {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
  double condition = 0.0;  // of the 3x3 normal matrix
  bool degenerate = true;
};

/// Weighted algebraic (Kasa) fit: minimizes sum w (x^2 + y^2 + D x + E y + F)^2.
/// Degenerate when fewer than 3 points carry weight or the normal matrix
/// condition number exceeds `max_condition`.
CircleFit fit_circle(std::span<const Eigen::Vector2d> points, std::span<const double> weights,
                     double max_condition = 1e8);

class CurvatureField {
 public:
  CurvatureField() = default;
  CurvatureField(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  bool finite(int y, int x) const { return finite_[index(y, x)] != 0; }
  const Eigen::Vector2d& center(int y, int x) const { return centers_[index(y, x)]; }
  void set(int y, int x, const Eigen::Vector2d& c) {
    centers_[index(y, x)] = c;
    finite_[index(y, x)] = 1;
  }

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }
  int height_ = 0;
  int width_ = 0;
  std::vector<Eigen::Vector2d> centers_;
  std::vector<std::uint8_t> finite_;
};

/// Circle fit per hair pixel over the window x window neighborhood of pixel
/// centers, weighted by coverage. Centers are in screen pixels.
CurvatureField curvature_centers(const TensorImage& coverage, int window = 11);

/// Unit screen direction of `tangent` at `position` from the projective
/// differential; nullopt when its screen length is below 1e-9 or the point is
/// behind the camera.
std::optional<Eigen::Vector2d> project_tangent(const Eigen::Vector3d& tangent,
                                               const Eigen::Vector3d& position,
                                               const Camera& camera);

/// Bounded candidate pool keeping the K frontmost votes.
class VotePool {
 public:
  enum class Outcome { Inserted, Evicted, Rejected };
  struct Candidate {
    Eigen::Vector3d position;
    double depth;
  };

  explicit VotePool(int capacity);
  Outcome offer(const Eigen::Vector3d& position, double depth);
  std::span<const Candidate> candidates() const { return candidates_; }
  /// Smallest depth; the earliest offered wins ties.
  std::optional<Candidate> frontmost() const;
  int capacity() const { return capacity_; }

 private:
  int capacity_;
  std::vector<Candidate> candidates_;
};

struct VoteRecord {
  int source_y, source_x, target_y, target_x;
  double cosine;  // |T_screen(s) . normalize(p - s)|
};

struct RepairResult {
  TensorImage position;
  std::vector<std::pair<int, int>> repaired;  // (y, x)
};

/// Screen tangents for the pixels flagged in `classes` as valid.
struct ScreenTangents {
  int width = 0;
  std::vector<Eigen::Vector2d> direction;
  std::vector<std::uint8_t> ok;
  bool has(int y, int x) const { return ok[static_cast<std::size_t>(y) * width + x] != 0; }
  const Eigen::Vector2d& at(int y, int x) const {
    return direction[static_cast<std::size_t>(y) * width + x];
  }
};

ScreenTangents screen_tangents(const ClassMap& classes, const TensorImage& position,
                               const TensorImage& tangent, const Camera& camera);

/// Invalid pixels with a valid 3x3 neighbor take P(s*) +/- l_p T(p), s* being
/// the neighbor with the nearest curvature center (degenerate = +inf, then
/// smaller depth, then row-major). The sign whose projection lands closer to
/// the center of p wins.
RepairResult backward_repair(const ClassMap& classes, const TensorImage& position,
                             const TensorImage& tangent, const TensorImage& depth,
                             const CurvatureField& curvature, const TensorImage& steps,
                             const Camera& camera);

/// Each invalid pixel gathers votes P(s) +/- l_s T(s) from valid 3x3 neighbors
/// whose screen tangent is within theta_max of the direction s -> p, keeps up
/// to `capacity` frontmost ones, and takes the frontmost.
RepairResult forward_voting(const ClassMap& classes, const TensorImage& position,
                            const TensorImage& tangent, const ScreenTangents& screen,
                            const TensorImage& steps, const Camera& camera,
                            double theta_max_degrees, int capacity,
                            std::vector<VoteRecord>* log = nullptr);

struct ReconParams {
  double eps_pos = 1e-6;
  double theta_max_degrees = 30.0;
  int pool_capacity = 4;
  int sweep_cap = 4;
  int window = 11;

  void validate() const;
};

enum class PositionSource : std::uint8_t {
  None = 0,
  Original = 1,
  Backward = 2,
  Forward = 3,
  Fallback = 4,
};

struct ReconStats {
  int hair_pixels = 0;
  int initially_valid = 0;
  int backward_repaired = 0;
  int forward_repaired = 0;
  int stalled = 0;  // filled by unprojecting the inpainted depth
  int sweeps = 0;

  int repaired() const { return backward_repaired + forward_repaired; }
};

struct ReconSnapshots {
  TensorImage classes;          // initial classification
  TensorImage depth;            // inpainted depth
  TensorImage curvature_radius; // |c_p - p|, 0 where degenerate
  TensorImage position;         // final positions
};

struct ReconResult {
  TensorImage position;
  std::vector<PositionSource> source;
  ReconStats stats;
};

/// Completes positions for every hair pixel of (coverage_t > 0). Input
/// positions of valid pixels are copied bit-for-bit; background pixels are
/// zero in the output.
ReconResult reconstruct_positions(const GBuffer& gbuffer, const TensorImage& coverage_t,
                                  const TensorImage& tangent_t, const Camera& camera,
                                  const ReconParams& params = {},
                                  ReconSnapshots* snapshots = nullptr);

}  // namespace hairgbuf
