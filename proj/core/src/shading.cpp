#include "hairgbuf/shading.hpp"

#include <algorithm>
#include <cmath>

#include "hairgbuf/error.hpp"
#include "hairgbuf/parallel.hpp"

namespace hairgbuf {

void ShadeParams::validate() const {
  if (std::abs(light_direction.norm() - 1.0) > 1e-6) {
    throw InvalidArgument("ShadeParams: light direction must be unit length");
  }
  if (diffuse_weight < 0.0 || specular_weight < 0.0) {
    throw InvalidArgument("ShadeParams: weights must be non-negative");
  }
  if (!(specular_exponent >= 1.0)) throw InvalidArgument("ShadeParams: exponent must be >= 1");
}

Eigen::Vector3d shade_sample(double coverage, const Eigen::Vector3d& tangent,
                             const Eigen::Vector3d& position, const Eigen::Vector3d& eye,
                             const ShadeParams& p) {
  const Eigen::Vector3d& l = p.light_direction;
  const Eigen::Vector3d v = (eye - position).normalized();
  const Eigen::Vector3d half = (l + v).normalized();
  const double tl = tangent.dot(l);
  const double th = tangent.dot(half);
  const double diffuse = std::sqrt(std::max(0.0, 1.0 - tl * tl));
  const double specular = std::pow(std::sqrt(std::max(0.0, 1.0 - th * th)), p.specular_exponent);
  const Eigen::Vector3d lobe = p.diffuse_weight * diffuse * p.base_color +
                               Eigen::Vector3d::Constant(p.specular_weight * specular);
  return coverage * p.light_color.cwiseProduct(lobe);
}

TensorImage shade(const TensorImage& coverage, const TensorImage& tangent,
                  const TensorImage& position, const Camera& camera, const ShadeParams& params) {
  params.validate();
  const int h = coverage.height();
  const int w = coverage.width();
  if (coverage.channels() != 1 || !tangent.same_extent(coverage) || tangent.channels() != 3 ||
      !position.same_extent(coverage) || position.channels() != 3) {
    throw InvalidArgument("shade: coverage/tangent/position shapes disagree");
  }
  TensorImage rgb(h, w, 3);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double c = coverage.at(y, x);
      if (!(c > 0.0)) continue;
      const Eigen::Vector3d p = position.vec3(y, x);
      if (p.isZero(0.0)) {
        throw InvalidArgument("shade: hair pixel (" + std::to_string(y) + ", " +
                              std::to_string(x) + ") has no position");
      }
      rgb.set_vec3(y, x, shade_sample(c, tangent.vec3(y, x), p, camera.eye(), params));
    }
  });
  return rgb;
}

}  // namespace hairgbuf
