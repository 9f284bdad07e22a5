#include "hairgbuf/tensor_image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

namespace {

std::size_t checked_size(int height, int width, int channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw InvalidArgument("TensorImage: negative dimension");
  }
  return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
         static_cast<std::size_t>(channels);
}

}  // namespace

TensorImage::TensorImage(int height, int width, int channels, float fill)
    : height_(height),
      width_(width),
      channels_(channels),
      data_(checked_size(height, width, channels), fill) {}

TensorImage::TensorImage(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != checked_size(height, width, channels)) {
    throw InvalidArgument("TensorImage: data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels));
  }
}

bool TensorImage::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

TensorImage slice_channels(const TensorImage& image, int first, int count) {
  if (first < 0 || count < 0 || first + count > image.channels()) {
    throw InvalidArgument("slice_channels: channel range out of bounds");
  }
  TensorImage out(image.height(), image.width(), count);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < count; ++c) out.at(y, x, c) = image.at(y, x, first + c);
    }
  }
  return out;
}

TensorImage concat_channels(std::span<const TensorImage* const> parts) {
  if (parts.empty()) return {};
  const int h = parts.front()->height();
  const int w = parts.front()->width();
  int total = 0;
  for (const TensorImage* p : parts) {
    if (p->height() != h || p->width() != w) {
      throw InvalidArgument("concat_channels: extent mismatch");
    }
    total += p->channels();
  }
  TensorImage out(h, w, total);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int c0 = 0;
      for (const TensorImage* p : parts) {
        for (int c = 0; c < p->channels(); ++c) out.at(y, x, c0 + c) = p->at(y, x, c);
        c0 += p->channels();
      }
    }
  }
  return out;
}

TensorImage concat_channels(std::initializer_list<const TensorImage*> parts) {
  return concat_channels(std::span<const TensorImage* const>(parts.begin(), parts.size()));
}

double max_abs_diff(const TensorImage& a, const TensorImage& b) {
  if (!a.same_shape(b)) throw InvalidArgument("max_abs_diff: shape mismatch");
  double worst = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(da[i]) - db[i]));
  }
  return worst;
}

TensorImage foreground_mask(const TensorImage& coverage, float threshold) {
  if (coverage.channels() != 1) throw InvalidArgument("foreground_mask: expected 1 channel");
  if (threshold < 0.0f) throw InvalidArgument("foreground_mask: negative threshold");
  TensorImage mask(coverage.height(), coverage.width(), 1);
  const auto src = coverage.data();
  auto dst = mask.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > threshold ? 1.0f : 0.0f;
  return mask;
}

Eigen::Vector3d encode_tangent(const Eigen::Vector3d& tangent) {
  const double n = tangent.norm();
  if (!(n >= 1.0 - 1e-3 && n <= 1.0 + 1e-3)) {
    throw InvalidArgument("encode_tangent: input is not a unit vector (norm " +
                          std::to_string(n) + ")");
  }
  return (tangent.array() + 1.0) * 0.5;
}

Eigen::Vector3d decode_tangent(const Eigen::Vector3d& encoded) {
  if ((encoded.array() < 0.0).any() || (encoded.array() > 1.0).any()) {
    throw InvalidArgument("decode_tangent: encoded value outside [0,1]");
  }
  return encoded.array() * 2.0 - 1.0;
}

TensorImage encode_tangent_image(const TensorImage& tangent) {
  if (tangent.channels() != 3) throw InvalidArgument("encode_tangent_image: expected 3 channels");
  TensorImage out(tangent.height(), tangent.width(), 3);
  for (int y = 0; y < tangent.height(); ++y) {
    for (int x = 0; x < tangent.width(); ++x) {
      const Eigen::Vector3d t = tangent.vec3(y, x);
      if (t.squaredNorm() == 0.0) continue;
      out.set_vec3(y, x, (t.normalized().array() + 1.0) * 0.5);
    }
  }
  return out;
}

}  // namespace hairgbuf
