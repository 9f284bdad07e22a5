#include "hairgbuf/model.hpp"

#include <cmath>
#include <sstream>

#include "hairgbuf/strand.hpp"

namespace hairgbuf {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

constexpr float kGateShut = -1e4f;
constexpr float kLogitOpen = 1e4f;

}  // namespace

std::vector<TensorSpec> model_schema(const SpatialArch& arch) {
  std::vector<TensorSpec> s = spatial_schema(arch);
  const std::vector<TensorSpec> t = temporal_schema();
  s.insert(s.end(), t.begin(), t.end());
  return s;
}

std::string ModelReport::describe() const {
  std::ostringstream out;
  out << "spatial: N=" << spatial.base_channels << " encoder_blocks=" << spatial.encoder_blocks
      << " bottleneck_blocks=" << spatial.bottleneck_blocks
      << " decoder_blocks=" << spatial.decoder_blocks << " heads=" << spatial.heads
      << " gn_groups=" << spatial.groups << " residual_scale=" << residual_scale << '\n'
      << "temporal: hidden=" << temporal_hidden << " blocks=" << temporal_blocks
      << " alpha=" << alpha << '\n'
      << "tensors=" << tensors << " parameters=" << parameters << '\n';
  return out.str();
}

ModelReport validate_model_weights(const WeightSet& weights, const SpatialArch& arch) {
  const std::vector<TensorSpec> schema = model_schema(arch);
  const std::vector<std::string> prefixes = {"spatial.", "temporal."};
  validate_weights_against(weights, schema, prefixes);
  const float groups = weights.at("spatial.meta.gn_groups").data[0];
  if (groups != static_cast<float>(arch.groups)) {
    throw WeightFileError(WeightFileError::Kind::ShapeMismatch, "spatial.meta.gn_groups",
                          "declares " + std::to_string(groups) + " groups, expected " +
                              std::to_string(arch.groups));
  }
  ModelReport r;
  r.spatial = arch;
  r.residual_scale = weights.at("spatial.residual_scale").data[0];
  r.alpha = weights.at("temporal.alpha").data[0];
  r.tensors = schema.size();
  for (const TensorSpec& spec : schema) {
    if (spec.name != "spatial.meta.gn_groups") r.parameters += weights.at(spec.name).element_count();
  }
  return r;
}

ModelReport validate_weight_file(const std::filesystem::path& path, const SpatialArch& arch) {
  return validate_model_weights(read_weights(path), arch);
}

WeightSet zero_residual_weights(const SpatialArch& arch) {
  WeightSet w;
  for (const TensorSpec& spec : model_schema(arch)) {
    Tensor t = Tensor::zeros(spec.dims);
    // Rank-1 ".weight" tensors are norm scales; running variances start at 1.
    if ((spec.dims.size() == 1 && ends_with(spec.name, ".weight")) ||
        ends_with(spec.name, ".running_var")) {
      t.data.assign(t.data.size(), 1.0f);
    }
    w.emplace(spec.name, std::move(t));
  }
  w["spatial.meta.gn_groups"].data[0] = static_cast<float>(arch.groups);
  w["spatial.residual_scale"].data[0] = 1.0f;
  w["spatial.hier.k2.bias"].data[4] = kGateShut;
  w["spatial.head.bias"].data[4] = kLogitOpen;
  return w;
}

WeightSet random_weights(std::uint64_t seed, const SpatialArch& arch) {
  SplitMix64 rng(seed);
  WeightSet w;
  for (const TensorSpec& spec : model_schema(arch)) {
    Tensor t = Tensor::zeros(spec.dims);
    auto fill = [&](double lo, double hi) {
      for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    };
    if (spec.dims.size() == 4) {
      const double fan_in = static_cast<double>(spec.dims[1]) * spec.dims[2] * spec.dims[3];
      const double bound = 1.0 / std::sqrt(fan_in);
      fill(-bound, bound);
    } else if (ends_with(spec.name, ".running_var")) {
      fill(0.5, 1.5);
    } else if (spec.dims.size() == 1 && ends_with(spec.name, ".weight")) {
      fill(0.8, 1.2);
    } else if (spec.dims.size() == 1) {
      fill(-0.1, 0.1);
    }
    w.emplace(spec.name, std::move(t));
  }
  w["spatial.meta.gn_groups"].data[0] = static_cast<float>(arch.groups);
  w["spatial.residual_scale"].data[0] = static_cast<float>(rng.uniform(0.5, 1.5));
  w["temporal.alpha"].data[0] = static_cast<float>(rng.uniform(0.05, 0.5));
  return w;
}

}  // namespace hairgbuf
