#pragma once

#include <vector>

#include "hairgbuf/nn_layers.hpp"
#include "hairgbuf/tensor_image.hpp"
#include "hairgbuf/weights.hpp"

namespace hairgbuf {

struct SpatialArch {
  int base_channels = 32;  // N
  int heads = 4;
  int groups = 8;  // GroupNorm groups in the attention block
  int encoder_blocks = 2;
  int bottleneck_blocks = 2;
  int decoder_blocks = 2;
};

/// Tensor names and shapes expected under the "spatial." prefix.
std::vector<TensorSpec> spatial_schema(const SpatialArch& arch = {});

/// Dual-branch U-Net over X = [coverage, tangent]:
///
///   stems      3x3 conv+BN+ReLU: 1 -> N (coverage), 3 -> N (tangent)
///   encoder    per branch: res x2 @N (E0) -> down -> res x2 @2N (E1) -> down @4N (E2)
///   bottleneck concat(E2cov, E2tan) @8N -> res x2 -> attention block      (F4)
///   decoder    per stage: up x2 -> 1x1 reduce (halve) -> concat [reduced, cov skip, tan skip]
///              -> 1x1 fuse + ReLU -> res x2       (@4N, H/2 = F2; then @2N, H)
///   head       3x3 conv 2N -> 5
///   hier       1x1 K4 on F4, K2 on F2, 5 sigmoid outputs each
///
/// Downsampling is a stride-2 3x3 conv+BN+ReLU.
struct SpatialNet {
  struct Branch {
    ConvBnRelu stem;
    std::vector<ResidualBlock> stage0, stage1;
    ConvBnRelu down0, down1;
  };
  struct DecoderStage {
    ConvLayer reduce, fuse;
    std::vector<ResidualBlock> blocks;
  };

  SpatialArch arch;
  Branch coverage_branch, tangent_branch;
  std::vector<ResidualBlock> bottleneck;
  AttentionBlock attention;
  DecoderStage decoder[2];
  ConvLayer head, hier_k4, hier_k2;
  float residual_scale = 1.0f;

  static SpatialNet from_weights(const WeightSet& weights, const SpatialArch& arch = {});
};

struct SpatialOutput {
  TensorImage coverage;    // H x W x 1
  TensorImage tangent;     // H x W x 3
  TensorImage mask_logit;  // H x W x 1

  /// [coverage, tangent, mask_logit] as one H x W x 5 image.
  TensorImage packed() const;
  static SpatialOutput unpack(const TensorImage& five);
};

/// Intermediate maps, filled when a trace is passed to spatial_forward.
struct SpatialTrace {
  TensorImage coverage_e0, coverage_e1, coverage_e2;
  TensorImage tangent_e0, tangent_e1, tangent_e2;
  TensorImage f4, f2, decoded, residual, hierarchical;
};

/// Coarse-to-fine filtered estimate from the bottleneck (f4, H/4) and first
/// decoder (f2, H/2) features:
///   [k4, b4] = sigmoid(K4 f4)      H4 = k4 * avgpool4(x)
///   [k2, b2] = sigmoid(K2 f2)      H2 = k2 * avgpool2(x)
///   H2' = (1 - up(b4)) * H2 + up(b4) * up(H4)
///   H   = up(H2') * up(b2)
/// where up is 2x bilinear. x is H x W x 4.
TensorImage hierarchical_filter(const TensorImage& f4, const TensorImage& f2, const TensorImage& x,
                                const ConvLayer& k4, const ConvLayer& k2);

/// Z = X + s R + H on the four coverage/tangent channels; the mask logit is
/// the fifth head channel. Height and width must be multiples of 4.
SpatialOutput spatial_forward(const SpatialNet& net, const TensorImage& x,
                              SpatialTrace* trace = nullptr, const AttentionProbe& probe = {});

}  // namespace hairgbuf
