#include "hairgbuf/weights.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace hairgbuf {

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T read(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string read_string(std::size_t n) {
    need(n, "tensor name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void read_floats(std::vector<float>& out, std::size_t n, const std::string& name) {
    if (n > (bytes_.size() - pos_) / sizeof(float)) {
      throw WeightFileError(WeightFileError::Kind::MalformedContainer, name,
                            "data truncated");
    }
    out.resize(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw WeightFileError(WeightFileError::Kind::MalformedContainer, "",
                            std::string("truncated while reading ") + what);
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::uint32_t> dims) {
  Tensor t{std::move(dims), {}};
  t.data.assign(t.element_count(), 0.0f);
  return t;
}

Tensor Tensor::scalar(float value) { return Tensor{{}, {value}}; }

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

WeightFileError::WeightFileError(Kind kind, std::string tensor, const std::string& detail)
    : IoError(std::string(kind_name(kind)) + (tensor.empty() ? "" : " [" + tensor + "]") + ": " +
              detail),
      kind_(kind),
      tensor_(std::move(tensor)) {}

const char* WeightFileError::kind_name(Kind kind) {
  switch (kind) {
    case Kind::MalformedContainer: return "malformed container";
    case Kind::UnknownTensor: return "unknown tensor";
    case Kind::MissingTensor: return "missing tensor";
    case Kind::ShapeMismatch: return "shape mismatch";
  }
  return "weight file error";
}

std::string format_dims(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

std::vector<std::uint8_t> serialize_weights(const WeightSet& weights) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'H', 'G', 'B', 'W'});
  put<std::uint32_t>(out, kHgbwVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(weights.size()));
  for (const auto& [name, tensor] : weights) {
    if (name.size() > 0xFFFF) throw InvalidArgument("serialize_weights: name too long");
    if (tensor.dims.size() > 0xFF) throw InvalidArgument("serialize_weights: rank too large");
    if (tensor.data.size() != tensor.element_count()) {
      throw InvalidArgument("serialize_weights: " + name + " data does not match its shape");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put<std::uint32_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(tensor.data.data());
    out.insert(out.end(), p, p + tensor.data.size() * sizeof(float));
  }
  return out;
}

WeightSet deserialize_weights(std::span<const std::uint8_t> bytes) {
  using Kind = WeightFileError::Kind;
  Reader r(bytes);
  const auto m0 = r.read<char>("magic");
  const auto m1 = r.read<char>("magic");
  const auto m2 = r.read<char>("magic");
  const auto m3 = r.read<char>("magic");
  if (m0 != 'H' || m1 != 'G' || m2 != 'B' || m3 != 'W') {
    throw WeightFileError(Kind::MalformedContainer, "", "bad magic");
  }
  const auto version = r.read<std::uint32_t>("version");
  if (version != kHgbwVersion) {
    throw WeightFileError(Kind::MalformedContainer, "",
                          "unsupported version " + std::to_string(version));
  }
  const auto count = r.read<std::uint32_t>("tensor count");
  WeightSet weights;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.read<std::uint16_t>("name length");
    std::string name = r.read_string(len);
    const auto rank = r.read<std::uint8_t>("rank");
    Tensor t;
    for (int d = 0; d < rank; ++d) t.dims.push_back(r.read<std::uint32_t>("dims"));
    r.read_floats(t.data, t.element_count(), name);
    if (!weights.emplace(name, std::move(t)).second) {
      throw WeightFileError(Kind::MalformedContainer, name, "duplicate tensor name");
    }
  }
  if (!r.at_end()) throw WeightFileError(Kind::MalformedContainer, "", "trailing bytes");
  return weights;
}

void write_weights(const std::filesystem::path& path, const WeightSet& weights) {
  const auto bytes = serialize_weights(weights);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

WeightSet read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

void validate_weights_against(const WeightSet& weights, std::span<const TensorSpec> schema,
                              std::span<const std::string> prefixes) {
  using Kind = WeightFileError::Kind;
  std::set<std::string> known;
  for (const TensorSpec& spec : schema) {
    known.insert(spec.name);
    auto it = weights.find(spec.name);
    if (it == weights.end()) throw WeightFileError(Kind::MissingTensor, spec.name, "not present");
    if (it->second.dims != spec.dims) {
      throw WeightFileError(Kind::ShapeMismatch, spec.name,
                            "expected " + format_dims(spec.dims) + ", got " +
                                format_dims(it->second.dims));
    }
  }
  for (const auto& [name, tensor] : weights) {
    if (known.count(name)) continue;
    for (const std::string& prefix : prefixes) {
      if (name.rfind(prefix, 0) == 0) {
        throw WeightFileError(Kind::UnknownTensor, name, "not part of the architecture");
      }
    }
  }
}

}  // namespace hairgbuf
