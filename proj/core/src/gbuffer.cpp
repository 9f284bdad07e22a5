#include "hairgbuf/gbuffer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/LU>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

Camera::Camera(const Eigen::Matrix4d& view_projection, double fx, double fy, int width,
               int height, const Eigen::Vector3d& eye)
    : view_projection_(view_projection),
      fx_(fx),
      fy_(fy),
      width_(width),
      height_(height),
      eye_(eye) {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("Camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidArgument("Camera: resolution must be positive");
  Eigen::FullPivLU<Eigen::Matrix4d> lu(view_projection);
  if (!lu.isInvertible()) throw InvalidArgument("Camera: view-projection is singular");
  inverse_ = lu.inverse();
  if (inverse_(3, 2) == 0.0) {
    throw InvalidArgument("Camera: view-projection is not a perspective transform");
  }
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double fov_y_degrees, int width,
                       int height, double near_plane, double far_plane) {
  if (!(fov_y_degrees > 0.0 && fov_y_degrees < 180.0)) {
    throw InvalidArgument("Camera: field of view must be in (0, 180) degrees");
  }
  const Eigen::Vector3d forward = (target - eye).normalized();
  const Eigen::Vector3d right = forward.cross(up).normalized();
  if (!right.allFinite() || right.norm() < 0.5) {
    throw InvalidArgument("Camera: up vector is parallel to the view direction");
  }
  const Eigen::Vector3d true_up = right.cross(forward);

  Eigen::Matrix4d view = Eigen::Matrix4d::Identity();
  view.block<1, 3>(0, 0) = right.transpose();
  view.block<1, 3>(1, 0) = true_up.transpose();
  view.block<1, 3>(2, 0) = -forward.transpose();
  view(0, 3) = -right.dot(eye);
  view(1, 3) = -true_up.dot(eye);
  view(2, 3) = forward.dot(eye);

  const double f = 1.0 / std::tan(fov_y_degrees * std::numbers::pi / 360.0);
  const double aspect = static_cast<double>(width) / height;
  Eigen::Matrix4d proj = Eigen::Matrix4d::Zero();
  proj(0, 0) = f / aspect;
  proj(1, 1) = f;
  proj(2, 2) = (near_plane + far_plane) / (near_plane - far_plane);
  proj(2, 3) = 2.0 * near_plane * far_plane / (near_plane - far_plane);
  proj(3, 2) = -1.0;

  const double fx = 0.5 * width * proj(0, 0);
  const double fy = 0.5 * height * proj(1, 1);
  return Camera(proj * view, fx, fy, width, height, eye);
}

std::optional<Camera::Projection> Camera::project(const Eigen::Vector3d& world) const {
  const Eigen::Vector4d c = clip(world);
  if (!(c.w() > 0.0)) return std::nullopt;
  const double nx = c.x() / c.w();
  const double ny = c.y() / c.w();
  return Projection{{0.5 * (nx + 1.0) * width_, 0.5 * (1.0 - ny) * height_}, c.w()};
}

Eigen::Vector3d Camera::unproject(const Eigen::Vector2d& pixel, double depth) const {
  const double nx = 2.0 * pixel.x() / width_ - 1.0;
  const double ny = 1.0 - 2.0 * pixel.y() / height_;
  const double cx = nx * depth;
  const double cy = ny * depth;
  // Pick clip z so that the homogeneous result lands on w = 1.
  const double cz =
      (1.0 - inverse_(3, 0) * cx - inverse_(3, 1) * cy - inverse_(3, 3) * depth) / inverse_(3, 2);
  const Eigen::Vector4d h = inverse_ * Eigen::Vector4d(cx, cy, cz, depth);
  return h.head<3>() / h.w();
}

GBuffer GBuffer::zeros(int height, int width) {
  return GBuffer{TensorImage(height, width, 1), TensorImage(height, width, 3),
                 TensorImage(height, width, 3), TensorImage(height, width, 1),
                 TensorImage(height, width, 2)};
}

void GBuffer::validate() const {
  const int h = coverage.height();
  const int w = coverage.width();
  auto check = [&](const TensorImage& img, int channels, const char* name) {
    if (img.height() != h || img.width() != w || img.channels() != channels) {
      throw InvalidArgument(std::string("GBuffer: ") + name + " has shape " +
                            std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                            "x" + std::to_string(img.channels()) + ", expected " +
                            std::to_string(h) + "x" + std::to_string(w) + "x" +
                            std::to_string(channels));
    }
    if (!img.all_finite()) throw InvalidArgument(std::string("GBuffer: non-finite ") + name);
  };
  check(coverage, 1, "coverage");
  check(tangent, 3, "tangent");
  check(position, 3, "position");
  check(depth, 1, "depth");
  check(motion, 2, "motion");

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float c = coverage.at(y, x);
      if (c < 0.0f || c > 1.0f) throw InvalidArgument("GBuffer: coverage outside [0,1]");
      const double tn = tangent.vec3(y, x).norm();
      if (tn != 0.0 && std::abs(tn - 1.0) > 1e-4) {
        throw InvalidArgument("GBuffer: non-unit tangent");
      }
      const bool no_depth = depth.at(y, x) == 0.0f;
      const bool no_pos = position.vec3(y, x).isZero(0.0);
      if (no_depth != no_pos) {
        throw InvalidArgument("GBuffer: depth and position disagree on missing sample");
      }
      if (depth.at(y, x) < 0.0f) throw InvalidArgument("GBuffer: negative depth");
    }
  }
}

}  // namespace hairgbuf
