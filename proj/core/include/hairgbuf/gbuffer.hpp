#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "hairgbuf/tensor_image.hpp"

namespace hairgbuf {

/// Pinhole camera described by its view-projection matrix and focal lengths.
///
/// Screen coordinates are continuous pixels with +x right and +y down; pixel
/// (i, j) covers [i, i+1) x [j, j+1) and its center is (i + 0.5, j + 0.5).
/// View-space depth is the clip-space w, i.e. the distance along the view axis.
class Camera {
 public:
  Camera(const Eigen::Matrix4d& view_projection, double fx, double fy, int width,
         int height, const Eigen::Vector3d& eye);

  /// Right-handed look-at camera with a symmetric vertical field of view.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, double fov_y_degrees, int width,
                        int height, double near_plane = 0.01, double far_plane = 100.0);

  const Eigen::Matrix4d& view_projection() const { return view_projection_; }
  const Eigen::Matrix4d& inverse_view_projection() const { return inverse_; }
  double fx() const { return fx_; }
  double fy() const { return fy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const Eigen::Vector3d& eye() const { return eye_; }

  Eigen::Vector4d clip(const Eigen::Vector3d& world) const {
    return view_projection_ * world.homogeneous();
  }
  double depth(const Eigen::Vector3d& world) const {
    return view_projection_.row(3).dot(world.homogeneous());
  }

  struct Projection {
    Eigen::Vector2d pixel;
    double depth;
  };
  /// Projects to screen; nullopt when the point lies behind the camera.
  std::optional<Projection> project(const Eigen::Vector3d& world) const;

  /// World point on the ray through `pixel` at view depth `depth`.
  Eigen::Vector3d unproject(const Eigen::Vector2d& pixel, double depth) const;

 private:
  Eigen::Matrix4d view_projection_;
  Eigen::Matrix4d inverse_;
  double fx_;
  double fy_;
  int width_;
  int height_;
  Eigen::Vector3d eye_;
};

/// Per-frame hair G-buffer. Missing samples carry depth 0 and position (0,0,0).
struct GBuffer {
  TensorImage coverage;  // H x W x 1, in [0,1]
  TensorImage tangent;   // H x W x 3, unit world-space or zero
  TensorImage position;  // H x W x 3, world units
  TensorImage depth;     // H x W x 1, view depth or 0
  TensorImage motion;    // H x W x 2, pixels per frame (current - previous)

  static GBuffer zeros(int height, int width);

  int height() const { return coverage.height(); }
  int width() const { return coverage.width(); }

  /// Throws InvalidArgument on any dimension mismatch or broken invariant.
  void validate() const;
};

}  // namespace hairgbuf
