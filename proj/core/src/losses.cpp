#include "hairgbuf/losses.hpp"

#include <algorithm>
#include <cmath>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

namespace {

constexpr double kClamp = 1e-7;

void require_same(const TensorImage& a, const TensorImage& b, const char* what) {
  if (!a.same_shape(b)) throw InvalidArgument(std::string(what) + ": shape mismatch");
}

void require_mask(const TensorImage& mask, const TensorImage& image, const char* what) {
  if (mask.channels() != 1 || !mask.same_extent(image)) {
    throw InvalidArgument(std::string(what) + ": mask must be H x W x 1 matching the input");
  }
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double mask_sum(const TensorImage& mask) {
  double s = 0.0;
  for (float m : mask.data()) s += m;
  return s;
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {mse, l1, bce, iou, cov, mask, tan}) {
    if (!(w >= 0.0)) throw InvalidArgument("LossWeights: weights must be non-negative");
  }
}

LossValue loss_cov(const TensorImage& pred, const TensorImage& ref, const TensorImage& mask,
                   const LossWeights& weights) {
  require_same(pred, ref, "loss_cov");
  require_mask(mask, pred, "loss_cov");
  const int c = pred.channels();
  double sq = 0.0;
  double abs = 0.0;
  for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
    const double m = mask.data()[p];
    for (int ch = 0; ch < c; ++ch) {
      const double d = pred.data()[p * c + ch] * m - ref.data()[p * c + ch];
      sq += d * d;
      abs += std::abs(d);
    }
  }
  LossValue out;
  double denom = mask_sum(mask);
  if (denom == 0.0) {
    out.empty_mask = true;
    denom = static_cast<double>(pred.pixel_count());
  }
  out.value = (weights.mse * sq + weights.l1 * abs) / (denom * c);
  return out;
}

TensorImage loss_cov_grad(const TensorImage& pred, const TensorImage& ref, const TensorImage& mask,
                          const LossWeights& weights) {
  require_same(pred, ref, "loss_cov_grad");
  require_mask(mask, pred, "loss_cov_grad");
  const int c = pred.channels();
  double denom = mask_sum(mask);
  if (denom == 0.0) denom = static_cast<double>(pred.pixel_count());
  TensorImage g(pred.height(), pred.width(), c);
  for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
    const double m = mask.data()[p];
    for (int ch = 0; ch < c; ++ch) {
      const double d = pred.data()[p * c + ch] * m - ref.data()[p * c + ch];
      g.data()[p * c + ch] =
          static_cast<float>(m * (weights.mse * 2.0 * d + weights.l1 * sign(d)) / (denom * c));
    }
  }
  return g;
}

LossValue loss_mask(const TensorImage& logits, const TensorImage& mask_ref,
                    const LossWeights& weights) {
  require_same(logits, mask_ref, "loss_mask");
  if (logits.channels() != 1) throw InvalidArgument("loss_mask: logits must have 1 channel");
  double bce = 0.0;
  double inter = 0.0;
  double uni = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid_d(logits.data()[i]);
    const double m = mask_ref.data()[i];
    const double pc = std::clamp(p, kClamp, 1.0 - kClamp);
    bce -= m * std::log(pc) + (1.0 - m) * std::log(1.0 - pc);
    inter += p * m;
    uni += p + m - p * m;
  }
  const auto n = static_cast<double>(logits.size());
  const double iou = uni > 0.0 ? inter / uni : 1.0;
  LossValue out;
  out.empty_mask = mask_sum(mask_ref) == 0.0;
  out.value = weights.bce * bce / n + weights.iou * (1.0 - iou);
  return out;
}

TensorImage loss_mask_grad(const TensorImage& logits, const TensorImage& mask_ref,
                           const LossWeights& weights) {
  require_same(logits, mask_ref, "loss_mask_grad");
  const auto n = static_cast<double>(logits.size());
  double inter = 0.0;
  double uni = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid_d(logits.data()[i]);
    const double m = mask_ref.data()[i];
    inter += p * m;
    uni += p + m - p * m;
  }
  TensorImage g(logits.height(), logits.width(), logits.channels());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid_d(logits.data()[i]);
    const double m = mask_ref.data()[i];
    const double dp = p * (1.0 - p);
    double grad = 0.0;
    if (p > kClamp && p < 1.0 - kClamp) grad += weights.bce * (p - m) / n;
    if (uni > 0.0) {
      // d(1 - I/U)/dp = -(m U - I (1 - m)) / U^2
      grad += weights.iou * -(m * uni - inter * (1.0 - m)) / (uni * uni) * dp;
    }
    g.data()[i] = static_cast<float>(grad);
  }
  return g;
}

LossValue loss_tan(const TensorImage& pred, const TensorImage& ref, const TensorImage& mask) {
  require_same(pred, ref, "loss_tan");
  require_mask(mask, pred, "loss_tan");
  const int c = pred.channels();
  const double denom = mask_sum(mask);
  if (denom == 0.0) return {0.0, true};
  double sum = 0.0;
  for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
    const double m = mask.data()[p];
    if (m == 0.0) continue;
    for (int ch = 0; ch < c; ++ch) {
      sum += std::abs(static_cast<double>(pred.data()[p * c + ch]) - ref.data()[p * c + ch]) * m;
    }
  }
  return {sum / (c * denom), false};
}

TensorImage loss_tan_grad(const TensorImage& pred, const TensorImage& ref, const TensorImage& mask) {
  require_same(pred, ref, "loss_tan_grad");
  require_mask(mask, pred, "loss_tan_grad");
  const int c = pred.channels();
  const double denom = mask_sum(mask);
  TensorImage g(pred.height(), pred.width(), c);
  if (denom == 0.0) return g;
  for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
    const double m = mask.data()[p];
    for (int ch = 0; ch < c; ++ch) {
      const double d = static_cast<double>(pred.data()[p * c + ch]) - ref.data()[p * c + ch];
      g.data()[p * c + ch] = static_cast<float>(sign(d) * m / (c * denom));
    }
  }
  return g;
}

double loss_total(double cov, double mask, double tan, const LossWeights& weights) {
  return weights.cov * cov + weights.mask * mask + weights.tan * tan;
}

}  // namespace hairgbuf
