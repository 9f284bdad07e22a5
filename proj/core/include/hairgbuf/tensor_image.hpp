#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace hairgbuf {

/// Dense H x W x C float32 image stored row-major with interleaved channels.
///
/// This is the carrier type between every pipeline stage. Construction checks
/// that the storage length matches the declared shape.
class TensorImage {
 public:
  TensorImage() = default;
  TensorImage(int height, int width, int channels, float fill = 0.0f);
  TensorImage(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  float& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<float> pixel(int y, int x) {
    return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const float> pixel(int y, int x) const {
    return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  Eigen::Vector3d vec3(int y, int x, int c0 = 0) const {
    return {at(y, x, c0), at(y, x, c0 + 1), at(y, x, c0 + 2)};
  }
  void set_vec3(int y, int x, const Eigen::Vector3d& v, int c0 = 0) {
    at(y, x, c0) = static_cast<float>(v.x());
    at(y, x, c0 + 1) = static_cast<float>(v.y());
    at(y, x, c0 + 2) = static_cast<float>(v.z());
  }

  bool same_shape(const TensorImage& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }
  bool same_extent(const TensorImage& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const;

  friend bool operator==(const TensorImage&, const TensorImage&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Copies channels [first, first + count) into a new image.
TensorImage slice_channels(const TensorImage& image, int first, int count);

/// Concatenates images of equal extent along the channel axis.
TensorImage concat_channels(std::span<const TensorImage* const> parts);
TensorImage concat_channels(std::initializer_list<const TensorImage*> parts);

/// Largest absolute per-element difference; shapes must match.
double max_abs_diff(const TensorImage& a, const TensorImage& b);

/// Per-pixel indicator of coverage > threshold.
TensorImage foreground_mask(const TensorImage& coverage, float threshold = 0.0f);

/// Storage encoding t -> (t + 1) / 2 for unit tangents. Throws on non-unit input.
Eigen::Vector3d encode_tangent(const Eigen::Vector3d& tangent);
/// Inverse of encode_tangent. Throws when a component lies outside [0, 1].
Eigen::Vector3d decode_tangent(const Eigen::Vector3d& encoded);

/// Image-wide encode for visualization; zero tangents (no hair) stay zero.
TensorImage encode_tangent_image(const TensorImage& tangent);

}  // namespace hairgbuf
