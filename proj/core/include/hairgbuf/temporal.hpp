#pragma once

#include <optional>
#include <vector>

#include "hairgbuf/nn_layers.hpp"
#include "hairgbuf/spatial.hpp"
#include "hairgbuf/tensor_image.hpp"
#include "hairgbuf/weights.hpp"

namespace hairgbuf {

constexpr int kTemporalInputChannels = 14;
constexpr int kTemporalHidden = 32;
constexpr int kTemporalBlocks = 4;

/// Tensor names and shapes expected under the "temporal." prefix.
std::vector<TensorSpec> temporal_schema();

/// Residual CNN: 3x3 conv+BN+ReLU 14 -> 32, four residual blocks, 3x3 conv
/// 32 -> 5, plus the output scale alpha.
struct TemporalNet {
  ConvBnRelu stem;
  std::vector<ResidualBlock> blocks;
  ConvLayer head;
  float alpha = 0.0f;

  static TemporalNet from_weights(const WeightSet& weights);
  TensorImage residual(const TensorImage& u) const;
};

/// Recurrent state between frames. `history` is empty exactly on the first frame.
class TemporalState {
 public:
  bool first_frame() const { return !history_.has_value(); }
  const TensorImage& history() const;
  const TensorImage& previous_motion() const;

  /// Stores this frame's (unsuppressed) output and motion for the next frame.
  void advance(TensorImage y, TensorImage motion);
  void reset();

 private:
  std::optional<TensorImage> history_;
  TensorImage previous_motion_;
};

struct Reprojection {
  TensorImage image;
  TensorImage valid;  // H x W x 1, 1 where all four taps were inside the frame
};

/// Bilinear fetch of `source` at (x - mx, y - my) per pixel, in pixel-index
/// coordinates. Taps outside the frame contribute zero and clear `valid`.
Reprojection reproject_with_validity(const TensorImage& source, const TensorImage& motion);
TensorImage reproject(const TensorImage& source, const TensorImage& motion);

/// V - reproject(V_prev, V); zero on the first frame.
TensorImage motion_difference(const TensorImage& motion, const TemporalState& state);

/// [S (5), reproject(Y_prev) (5), V (2), dV (2)]; history slots are zero on the
/// first frame.
TensorImage assemble_temporal_input(const SpatialOutput& spatial, const TemporalState& state,
                                    const TensorImage& motion);

/// Y = S + alpha * net(u), or S itself on the first frame.
TensorImage temporal_forward(const TemporalNet& net, const TensorImage& u,
                             const SpatialOutput& spatial, bool first_frame);

struct MaskedOutput {
  TensorImage coverage;  // H x W x 1, clamped to [0, 1]
  TensorImage tangent;   // H x W x 3, unit or zero
  TensorImage mask;      // H x W x 1 of {0, 1}
};

/// Keeps pixels whose logit exceeds `logit_threshold`; others get zero
/// coverage and tangent.
MaskedOutput apply_support_mask(const TensorImage& y, float logit_threshold = 0.0f);

}  // namespace hairgbuf
