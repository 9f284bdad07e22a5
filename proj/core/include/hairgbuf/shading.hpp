#pragma once

#include <Eigen/Core>

#include "hairgbuf/gbuffer.hpp"
#include "hairgbuf/tensor_image.hpp"

namespace hairgbuf {

/// Kajiya-Kay strand lighting with one directional light.
struct ShadeParams {
  Eigen::Vector3d light_direction = Eigen::Vector3d(0.3, 0.6, 0.74).normalized();  // toward the light
  Eigen::Vector3d light_color{1.0, 1.0, 1.0};
  Eigen::Vector3d base_color{0.55, 0.35, 0.2};
  double diffuse_weight = 0.7;
  double specular_weight = 0.3;
  double specular_exponent = 32.0;

  void validate() const;
};

/// Shaded RGB of one hair sample:
///   diffuse  = sqrt(1 - (t.l)^2)
///   specular = sqrt(1 - (t.h)^2)^exponent,  h = normalize(l + v), v toward the eye
///   rgb      = coverage * light * (kd * base * diffuse + ks * specular)
Eigen::Vector3d shade_sample(double coverage, const Eigen::Vector3d& tangent,
                             const Eigen::Vector3d& position, const Eigen::Vector3d& eye,
                             const ShadeParams& params);

/// Shades every pixel with coverage > 0; the rest stay black. Throws
/// InvalidArgument when a hair pixel has no position.
TensorImage shade(const TensorImage& coverage, const TensorImage& tangent,
                  const TensorImage& position, const Camera& camera, const ShadeParams& params = {});

}  // namespace hairgbuf
