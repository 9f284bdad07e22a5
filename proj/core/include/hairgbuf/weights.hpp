#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

/// Dense float tensor with an explicit shape. Rank 0 holds one scalar.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  static Tensor zeros(std::vector<std::uint32_t> dims);
  static Tensor scalar(float value);
  std::size_t element_count() const;
};

/// Named tensor collection, ordered by name for deterministic serialization.
using WeightSet = std::map<std::string, Tensor>;

class WeightFileError : public IoError {
 public:
  enum class Kind { MalformedContainer, UnknownTensor, MissingTensor, ShapeMismatch };

  WeightFileError(Kind kind, std::string tensor, const std::string& detail);

  Kind kind() const { return kind_; }
  const std::string& tensor() const { return tensor_; }
  static const char* kind_name(Kind kind);

 private:
  Kind kind_;
  std::string tensor_;
};

/// HGBW container, all integers and floats little-endian:
///
///   "HGBW" | version u32 (=1) | tensor count u32 |
///   per tensor: name length u16 | UTF-8 name | rank u8 | dims u32[rank] |
///               float32 data[prod(dims)]
constexpr std::uint32_t kHgbwVersion = 1;

std::vector<std::uint8_t> serialize_weights(const WeightSet& weights);
WeightSet deserialize_weights(std::span<const std::uint8_t> bytes);

void write_weights(const std::filesystem::path& path, const WeightSet& weights);
WeightSet read_weights(const std::filesystem::path& path);

struct TensorSpec {
  std::string name;
  std::vector<std::uint32_t> dims;
};

/// Checks names and shapes against `schema`. Tensors whose name starts with one
/// of `prefixes` but are absent from the schema raise UnknownTensor; tensors
/// outside all prefixes are ignored.
void validate_weights_against(const WeightSet& weights, std::span<const TensorSpec> schema,
                              std::span<const std::string> prefixes);

std::string format_dims(const std::vector<std::uint32_t>& dims);

}  // namespace hairgbuf
