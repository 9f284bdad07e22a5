#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hairgbuf/spatial.hpp"
#include "hairgbuf/temporal.hpp"
#include "hairgbuf/weights.hpp"

namespace hairgbuf {

/// Spatial followed by temporal tensor specs.
std::vector<TensorSpec> model_schema(const SpatialArch& arch = {});

struct ModelReport {
  SpatialArch spatial;
  int temporal_hidden = kTemporalHidden;
  int temporal_blocks = kTemporalBlocks;
  float residual_scale = 0.0f;
  float alpha = 0.0f;
  std::size_t tensors = 0;
  std::size_t parameters = 0;

  std::string describe() const;
};

/// Throws WeightFileError (MissingTensor / UnknownTensor / ShapeMismatch) when
/// `weights` does not match the architecture.
ModelReport validate_model_weights(const WeightSet& weights, const SpatialArch& arch = {});

/// read_weights + validate_model_weights.
ModelReport validate_weight_file(const std::filesystem::path& path, const SpatialArch& arch = {});

/// Weights under which both networks pass their inputs through unchanged:
/// every convolution is zero, norms are identity, the K2 blend gate is shut
/// (bias -1e4), the mask-logit bias is +1e4 and alpha is 0.
WeightSet zero_residual_weights(const SpatialArch& arch = {});

/// Seeded random weights scaled so activations stay O(1) through the nets.
WeightSet random_weights(std::uint64_t seed, const SpatialArch& arch = {});

}  // namespace hairgbuf
