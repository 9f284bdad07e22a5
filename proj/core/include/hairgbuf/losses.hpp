#pragma once

#include "hairgbuf/tensor_image.hpp"

namespace hairgbuf {

struct LossWeights {
  double mse = 0.6;
  double l1 = 0.4;
  double bce = 0.7;
  double iou = 0.3;
  double cov = 0.4;
  double mask = 0.3;
  double tan = 0.3;

  void validate() const;
};

/// Loss value plus a flag set when the foreground mask was empty and the
/// documented fallback normalization was used.
struct LossValue {
  double value = 0.0;
  bool empty_mask = false;
};

/// w_mse * sum((C M - C*)^2) / sum(M) + w_l1 * sum(|C M - C*|) / sum(M).
/// An empty mask normalizes by the pixel count instead.
LossValue loss_cov(const TensorImage& pred, const TensorImage& ref, const TensorImage& mask,
                   const LossWeights& weights = {});

/// w_bce * BCE(sigmoid(L), M) + w_iou * (1 - softIoU), with
/// softIoU = sum(p M) / sum(p + M - p M) (1 when the denominator is 0) and the
/// BCE probabilities clamped to [1e-7, 1 - 1e-7]. BCE is a mean over pixels.
LossValue loss_mask(const TensorImage& logits, const TensorImage& mask_ref,
                    const LossWeights& weights = {});

/// sum(|T - T*| M) / (3 sum(M)); 0 and flagged when the mask is empty.
LossValue loss_tan(const TensorImage& pred, const TensorImage& ref, const TensorImage& mask);

/// w_cov L_cov + w_mask L_mask + w_tan L_tan.
double loss_total(double cov, double mask, double tan, const LossWeights& weights = {});

/// Gradients of the losses above with respect to their first argument. At an
/// L1 kink the subgradient 0 is used; inside the BCE clamp the BCE term
/// contributes 0.
TensorImage loss_cov_grad(const TensorImage& pred, const TensorImage& ref, const TensorImage& mask,
                          const LossWeights& weights = {});
TensorImage loss_mask_grad(const TensorImage& logits, const TensorImage& mask_ref,
                           const LossWeights& weights = {});
TensorImage loss_tan_grad(const TensorImage& pred, const TensorImage& ref, const TensorImage& mask);

}  // namespace hairgbuf
