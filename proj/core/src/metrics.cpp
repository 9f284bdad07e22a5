#include "hairgbuf/metrics.hpp"

#include <array>
#include <cmath>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check(const TensorImage& image, const TensorImage& reference, const TensorImage& mask) {
  if (!image.same_shape(reference)) throw InvalidArgument("metrics: image/reference shape mismatch");
  if (mask.channels() != 1 || !mask.same_extent(image)) {
    throw InvalidArgument("metrics: mask must be H x W x 1 matching the image");
  }
}

std::array<double, 2 * kRadius + 1> gaussian_taps() {
  std::array<double, 2 * kRadius + 1> g{};
  for (int i = -kRadius; i <= kRadius; ++i) g[i + kRadius] = std::exp(-(i * i) / (2.0 * kSigma * kSigma));
  return g;
}

}  // namespace

double masked_mse(const TensorImage& image, const TensorImage& reference, const TensorImage& mask) {
  check(image, reference, mask);
  const int c = image.channels();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    if (!(mask.data()[p] > 0.0f)) continue;
    ++n;
    for (int ch = 0; ch < c; ++ch) {
      const double d = static_cast<double>(image.data()[p * c + ch]) - reference.data()[p * c + ch];
      sum += d * d;
    }
  }
  return n == 0 ? 0.0 : sum / (static_cast<double>(n) * c);
}

double psnr_from_mse(double mse) {
  if (mse < 0.0) throw InvalidArgument("psnr_from_mse: negative mse");
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double masked_ssim(const TensorImage& image, const TensorImage& reference, const TensorImage& mask) {
  check(image, reference, mask);
  const auto taps = gaussian_taps();
  const int h = image.height();
  const int w = image.width();
  const int c = image.channels();
  double total = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!(mask.at(y, x) > 0.0f)) continue;
      for (int ch = 0; ch < c; ++ch) {
        double wsum = 0.0, ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (int dy = -kRadius; dy <= kRadius; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -kRadius; dx <= kRadius; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            const double wt = taps[dy + kRadius] * taps[dx + kRadius];
            const double a = image.at(yy, xx, ch);
            const double b = reference.at(yy, xx, ch);
            wsum += wt;
            ma += wt * a;
            mb += wt * b;
            saa += wt * a * a;
            sbb += wt * b * b;
            sab += wt * a * b;
          }
        }
        ma /= wsum;
        mb /= wsum;
        const double va = saa / wsum - ma * ma;
        const double vb = sbb / wsum - mb * mb;
        const double cov = sab / wsum - ma * mb;
        total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
                 ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        ++count;
      }
    }
  return count == 0 ? 1.0 : total / static_cast<double>(count);
}

ImageMetrics image_metrics(const TensorImage& image, const TensorImage& reference,
                           const TensorImage& mask) {
  check(image, reference, mask);
  for (const TensorImage* img : {&image, &reference}) {
    for (float v : img->data()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("metrics: image values must lie in [0, 1]");
    }
  }
  ImageMetrics m;
  for (float v : mask.data()) m.pixels += v > 0.0f ? 1 : 0;
  m.valid = m.pixels > 0;
  if (!m.valid) return m;
  m.mse = masked_mse(image, reference, mask);
  m.psnr = psnr_from_mse(m.mse);
  m.ssim = masked_ssim(image, reference, mask);
  return m;
}

}  // namespace hairgbuf
