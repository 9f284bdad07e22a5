#pragma once

#include <limits>

#include "hairgbuf/tensor_image.hpp"

namespace hairgbuf {

struct ImageMetrics {
  double mse = 0.0;
  double psnr = std::numeric_limits<double>::infinity();
  double ssim = 1.0;
  int pixels = 0;      // masked pixel count
  bool valid = false;  // false when the mask is empty
};

/// Mean squared error over masked pixels and all channels.
double masked_mse(const TensorImage& image, const TensorImage& reference, const TensorImage& mask);

/// 10 log10(1 / mse); +inf when mse is 0.
double psnr_from_mse(double mse);

/// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2
/// for unit dynamic range. Window weights falling outside the image are
/// dropped and the rest renormalized. Averaged over masked pixels and channels.
double masked_ssim(const TensorImage& image, const TensorImage& reference, const TensorImage& mask);

/// All three over mask > 0. Images must lie in [0, 1].
ImageMetrics image_metrics(const TensorImage& image, const TensorImage& reference,
                           const TensorImage& mask);

}  // namespace hairgbuf
