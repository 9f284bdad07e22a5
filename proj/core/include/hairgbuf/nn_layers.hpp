#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hairgbuf/tensor_image.hpp"
#include "hairgbuf/weights.hpp"

namespace hairgbuf {

/// Convolution with "same" padding (k / 2 on every side) and stride 1 or 2.
/// Output extent is ceil(H / stride) x ceil(W / stride).
class ConvLayer {
 public:
  ConvLayer() = default;
  /// `weight` is laid out [out][in][kh][kw]; `bias` has `out_channels` entries.
  ConvLayer(int in_channels, int out_channels, int kernel, int stride, std::vector<float> weight,
            std::vector<float> bias);

  static ConvLayer load(const WeightSet& weights, const std::string& prefix, int in_channels,
                        int out_channels, int kernel, int stride = 1);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  const std::vector<float>& weight() const { return weight_; }
  const std::vector<float>& bias() const { return bias_; }
  float weight_at(int o, int i, int ky, int kx) const {
    return weight_[((static_cast<std::size_t>(o) * in_ + i) * kernel_ + ky) * kernel_ + kx];
  }

  /// Weights repacked as a (k*k*in) x out matrix matching an HWC patch row.
  const Eigen::MatrixXf& packed() const { return packed_; }

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  std::vector<float> weight_;
  std::vector<float> bias_;
  Eigen::MatrixXf packed_;
};

TensorImage conv2d(const TensorImage& input, const ConvLayer& layer);

/// Inference-mode batch norm: gamma * (x - mean) / sqrt(var + eps) + beta.
struct BatchNorm {
  std::vector<float> gamma, beta, mean, var;
  float eps = 1e-5f;

  static BatchNorm identity(int channels);
  static BatchNorm load(const WeightSet& weights, const std::string& prefix, int channels);
};

void batch_norm_inplace(TensorImage& x, const BatchNorm& bn);

/// Group norm over (H, W, C / groups) with per-channel affine.
struct GroupNorm {
  int groups = 8;
  std::vector<float> gamma, beta;
  float eps = 1e-5f;

  static GroupNorm load(const WeightSet& weights, const std::string& prefix, int channels,
                        int groups);
};

TensorImage group_norm(const TensorImage& x, const GroupNorm& gn);

void relu_inplace(TensorImage& x);
float gelu(float x);  // exact: 0.5 x (1 + erf(x / sqrt 2))
void gelu_inplace(TensorImage& x);
float sigmoid(float x);

/// Bilinear resize with align_corners = false: source coordinate
/// (dst + 0.5) * in / out - 0.5, clamped at 0 and at the last row/column.
TensorImage upsample_bilinear(const TensorImage& x, int out_height, int out_width);

/// Mean over non-overlapping factor x factor blocks. Extent must divide evenly.
TensorImage avg_pool(const TensorImage& x, int factor);

TensorImage add(const TensorImage& a, const TensorImage& b);

/// conv -> BN -> ReLU.
struct ConvBnRelu {
  ConvLayer conv;
  BatchNorm bn;

  static ConvBnRelu load(const WeightSet& weights, const std::string& prefix, int in, int out,
                         int kernel, int stride = 1);
  TensorImage operator()(const TensorImage& x) const;
};

/// ReLU(BN2(conv2(ReLU(BN1(conv1(x))))) + x), 3x3 convolutions.
struct ResidualBlock {
  ConvLayer conv1, conv2;
  BatchNorm bn1, bn2;

  static ResidualBlock load(const WeightSet& weights, const std::string& prefix, int channels);
  TensorImage operator()(const TensorImage& x) const;
};

/// Receives one softmax row: (head, query index, weights over all keys).
using AttentionProbe = std::function<void(int, int, std::span<const float>)>;

/// Pre-norm transformer block on a feature map:
///   x1 = x + proj(MHA(GN1(x)))
///   y  = x1 + ffn2(GELU(ffn1(GN2(x1))))
/// q/k/v/proj/ffn are 1x1 convolutions; ffn1 expands channels by 2.
struct AttentionBlock {
  int heads = 4;
  GroupNorm norm1, norm2;
  ConvLayer q, k, v, proj, ffn1, ffn2;

  static AttentionBlock load(const WeightSet& weights, const std::string& prefix, int channels,
                             int heads, int groups);
  TensorImage operator()(const TensorImage& x, const AttentionProbe& probe = {}) const;
};

/// Multi-head scaled dot-product attention over all h*w positions given
/// projected q, k, v maps; returns the concatenated head outputs.
TensorImage multi_head_attention(const TensorImage& q, const TensorImage& k, const TensorImage& v,
                                 int heads, const AttentionProbe& probe = {});

/// Schema builders mirroring the loaders above.
void append_conv_spec(std::vector<TensorSpec>& out, const std::string& prefix, int in, int out_ch,
                      int kernel);
void append_batch_norm_spec(std::vector<TensorSpec>& out, const std::string& prefix, int channels);
void append_group_norm_spec(std::vector<TensorSpec>& out, const std::string& prefix,
                            int channels);
void append_conv_bn_spec(std::vector<TensorSpec>& out, const std::string& prefix, int in,
                         int out_ch, int kernel);
void append_residual_spec(std::vector<TensorSpec>& out, const std::string& prefix, int channels);
void append_attention_spec(std::vector<TensorSpec>& out, const std::string& prefix, int channels);

/// Shape-checked lookup used by the network loaders.
const Tensor& require_tensor(const WeightSet& weights, const std::string& name,
                             const std::vector<std::uint32_t>& dims);

}  // namespace hairgbuf
