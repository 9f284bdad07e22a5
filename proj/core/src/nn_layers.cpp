#include "hairgbuf/nn_layers.hpp"

#include <algorithm>
#include <cmath>

#include "hairgbuf/error.hpp"
#include "hairgbuf/parallel.hpp"

namespace hairgbuf {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<float> copy_vector(const WeightSet& weights, const std::string& name, int n) {
  return require_tensor(weights, name, {static_cast<std::uint32_t>(n)}).data;
}

}  // namespace

const Tensor& require_tensor(const WeightSet& weights, const std::string& name,
                             const std::vector<std::uint32_t>& dims) {
  auto it = weights.find(name);
  if (it == weights.end()) {
    throw WeightFileError(WeightFileError::Kind::MissingTensor, name, "not present");
  }
  if (it->second.dims != dims) {
    throw WeightFileError(WeightFileError::Kind::ShapeMismatch, name,
                          "expected " + format_dims(dims) + ", got " +
                              format_dims(it->second.dims));
  }
  return it->second;
}

ConvLayer::ConvLayer(int in_channels, int out_channels, int kernel, int stride,
                     std::vector<float> weight, std::vector<float> bias)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      weight_(std::move(weight)),
      bias_(std::move(bias)) {
  if (in_ < 1 || out_ < 1) throw InvalidArgument("ConvLayer: channel counts must be positive");
  if (kernel_ != 1 && kernel_ != 3) throw InvalidArgument("ConvLayer: kernel must be 1 or 3");
  if (stride_ != 1 && stride_ != 2) throw InvalidArgument("ConvLayer: stride must be 1 or 2");
  if (weight_.size() != static_cast<std::size_t>(out_) * in_ * kernel_ * kernel_) {
    throw InvalidArgument("ConvLayer: weight size does not match [out, in, k, k]");
  }
  if (bias_.size() != static_cast<std::size_t>(out_)) {
    throw InvalidArgument("ConvLayer: bias size does not match out channels");
  }
  packed_.resize(kernel_ * kernel_ * in_, out_);
  for (int o = 0; o < out_; ++o)
    for (int i = 0; i < in_; ++i)
      for (int ky = 0; ky < kernel_; ++ky)
        for (int kx = 0; kx < kernel_; ++kx)
          packed_((ky * kernel_ + kx) * in_ + i, o) = weight_at(o, i, ky, kx);
}

ConvLayer ConvLayer::load(const WeightSet& weights, const std::string& prefix, int in_channels,
                          int out_channels, int kernel, int stride) {
  const auto o = static_cast<std::uint32_t>(out_channels);
  const auto i = static_cast<std::uint32_t>(in_channels);
  const auto k = static_cast<std::uint32_t>(kernel);
  return ConvLayer(in_channels, out_channels, kernel, stride,
                   require_tensor(weights, prefix + ".weight", {o, i, k, k}).data,
                   require_tensor(weights, prefix + ".bias", {o}).data);
}

TensorImage conv2d(const TensorImage& input, const ConvLayer& layer) {
  if (input.channels() != layer.in_channels()) {
    throw InvalidArgument("conv2d: input has " + std::to_string(input.channels()) +
                          " channels, layer expects " + std::to_string(layer.in_channels()));
  }
  if (input.height() < 1 || input.width() < 1) throw InvalidArgument("conv2d: empty input");
  const int k = layer.kernel();
  const int s = layer.stride();
  const int pad = k / 2;
  const int h = input.height();
  const int w = input.width();
  const int cin = layer.in_channels();
  const int cout = layer.out_channels();
  const int oh = (h + s - 1) / s;
  const int ow = (w + s - 1) / s;
  TensorImage out(oh, ow, cout);
  const Eigen::Map<const Eigen::RowVectorXf> bias(layer.bias().data(), cout);
  const float* src = input.data().data();
  float* dst = out.data().data();

  parallel_for(0, oh, [&](int oy) {
    Eigen::Map<RowMatrix> out_row(dst + static_cast<std::size_t>(oy) * ow * cout, ow, cout);
    if (k == 1 && s == 1) {
      Eigen::Map<const RowMatrix> in_row(src + static_cast<std::size_t>(oy) * w * cin, w, cin);
      out_row.noalias() = in_row * layer.packed();
    } else {
      RowMatrix patch = RowMatrix::Zero(ow, k * k * cin);
      for (int ox = 0; ox < ow; ++ox) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * s + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * s + kx - pad;
            if (ix < 0 || ix >= w) continue;
            std::copy_n(src + input.index(iy, ix, 0), cin, &patch(ox, (ky * k + kx) * cin));
          }
        }
      }
      out_row.noalias() = patch * layer.packed();
    }
    out_row.rowwise() += bias;
  });
  return out;
}

BatchNorm BatchNorm::identity(int channels) {
  BatchNorm bn;
  bn.gamma.assign(channels, 1.0f);
  bn.beta.assign(channels, 0.0f);
  bn.mean.assign(channels, 0.0f);
  bn.var.assign(channels, 1.0f);
  return bn;
}

BatchNorm BatchNorm::load(const WeightSet& weights, const std::string& prefix, int channels) {
  BatchNorm bn;
  bn.gamma = copy_vector(weights, prefix + ".weight", channels);
  bn.beta = copy_vector(weights, prefix + ".bias", channels);
  bn.mean = copy_vector(weights, prefix + ".running_mean", channels);
  bn.var = copy_vector(weights, prefix + ".running_var", channels);
  for (int c = 0; c < channels; ++c) {
    if (!(bn.var[c] >= 0.0f)) {
      throw WeightFileError(WeightFileError::Kind::ShapeMismatch, prefix + ".running_var",
                            "negative or NaN variance");
    }
  }
  return bn;
}

void batch_norm_inplace(TensorImage& x, const BatchNorm& bn) {
  const int c = x.channels();
  if (static_cast<int>(bn.gamma.size()) != c) throw InvalidArgument("batch_norm: channel mismatch");
  std::vector<float> scale(c), shift(c);
  for (int i = 0; i < c; ++i) {
    const double sc = bn.gamma[i] / std::sqrt(static_cast<double>(bn.var[i]) + bn.eps);
    scale[i] = static_cast<float>(sc);
    shift[i] = static_cast<float>(bn.beta[i] - bn.mean[i] * sc);
  }
  auto data = x.data();
  for (std::size_t i = 0; i < data.size(); i += c)
    for (int j = 0; j < c; ++j) data[i + j] = data[i + j] * scale[j] + shift[j];
}

GroupNorm GroupNorm::load(const WeightSet& weights, const std::string& prefix, int channels,
                          int groups) {
  GroupNorm gn;
  gn.groups = groups;
  gn.gamma = copy_vector(weights, prefix + ".weight", channels);
  gn.beta = copy_vector(weights, prefix + ".bias", channels);
  return gn;
}

TensorImage group_norm(const TensorImage& x, const GroupNorm& gn) {
  const int c = x.channels();
  if (gn.groups < 1 || c % gn.groups != 0) {
    throw InvalidArgument("group_norm: channels not divisible by group count");
  }
  if (static_cast<int>(gn.gamma.size()) != c) throw InvalidArgument("group_norm: channel mismatch");
  const int per = c / gn.groups;
  const auto src = x.data();
  std::vector<double> mean(gn.groups, 0.0), inv_std(gn.groups, 0.0);
  const double n = static_cast<double>(x.pixel_count()) * per;
  for (int g = 0; g < gn.groups; ++g) {
    double sum = 0.0;
    for (std::size_t p = 0; p < x.pixel_count(); ++p)
      for (int j = 0; j < per; ++j) sum += src[p * c + g * per + j];
    const double m = sum / n;
    double sq = 0.0;
    for (std::size_t p = 0; p < x.pixel_count(); ++p)
      for (int j = 0; j < per; ++j) {
        const double d = src[p * c + g * per + j] - m;
        sq += d * d;
      }
    mean[g] = m;
    inv_std[g] = 1.0 / std::sqrt(sq / n + gn.eps);
  }
  TensorImage out(x.height(), x.width(), c);
  auto dst = out.data();
  for (std::size_t p = 0; p < x.pixel_count(); ++p)
    for (int ch = 0; ch < c; ++ch) {
      const int g = ch / per;
      dst[p * c + ch] =
          static_cast<float>((src[p * c + ch] - mean[g]) * inv_std[g] * gn.gamma[ch] + gn.beta[ch]);
    }
  return out;
}

void relu_inplace(TensorImage& x) {
  for (float& v : x.data()) v = std::max(v, 0.0f);
}

float gelu(float x) {
  const double v = x;
  return static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
}

void gelu_inplace(TensorImage& x) {
  for (float& v : x.data()) v = gelu(v);
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

TensorImage upsample_bilinear(const TensorImage& x, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) throw InvalidArgument("upsample_bilinear: empty output");
  const int c = x.channels();
  TensorImage out(out_height, out_width, c);
  const double sy = static_cast<double>(x.height()) / out_height;
  const double sx = static_cast<double>(x.width()) / out_width;
  auto source = [](int dst, double scale, int size, int& i0, int& i1, double& t) {
    const double src = std::max(0.0, (dst + 0.5) * scale - 0.5);
    i0 = std::min(static_cast<int>(src), size - 1);
    i1 = std::min(i0 + 1, size - 1);
    t = src - i0;
  };
  for (int y = 0; y < out_height; ++y) {
    int y0, y1;
    double ty;
    source(y, sy, x.height(), y0, y1, ty);
    for (int xo = 0; xo < out_width; ++xo) {
      int x0, x1;
      double tx;
      source(xo, sx, x.width(), x0, x1, tx);
      for (int ch = 0; ch < c; ++ch) {
        const double top = (1.0 - tx) * x.at(y0, x0, ch) + tx * x.at(y0, x1, ch);
        const double bottom = (1.0 - tx) * x.at(y1, x0, ch) + tx * x.at(y1, x1, ch);
        out.at(y, xo, ch) = static_cast<float>((1.0 - ty) * top + ty * bottom);
      }
    }
  }
  return out;
}

TensorImage avg_pool(const TensorImage& x, int factor) {
  if (factor < 1 || x.height() % factor != 0 || x.width() % factor != 0) {
    throw InvalidArgument("avg_pool: extent " + std::to_string(x.height()) + "x" +
                          std::to_string(x.width()) + " not divisible by " +
                          std::to_string(factor));
  }
  const int c = x.channels();
  TensorImage out(x.height() / factor, x.width() / factor, c);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height(); ++y)
    for (int xo = 0; xo < out.width(); ++xo)
      for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) sum += x.at(y * factor + dy, xo * factor + dx, ch);
        out.at(y, xo, ch) = static_cast<float>(sum * inv);
      }
  return out;
}

TensorImage add(const TensorImage& a, const TensorImage& b) {
  if (!a.same_shape(b)) throw InvalidArgument("add: shape mismatch");
  TensorImage out = a;
  auto dst = out.data();
  auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

ConvBnRelu ConvBnRelu::load(const WeightSet& weights, const std::string& prefix, int in, int out,
                            int kernel, int stride) {
  return {ConvLayer::load(weights, prefix + ".conv", in, out, kernel, stride),
          BatchNorm::load(weights, prefix + ".bn", out)};
}

TensorImage ConvBnRelu::operator()(const TensorImage& x) const {
  TensorImage y = conv2d(x, conv);
  batch_norm_inplace(y, bn);
  relu_inplace(y);
  return y;
}

ResidualBlock ResidualBlock::load(const WeightSet& weights, const std::string& prefix,
                                  int channels) {
  return {ConvLayer::load(weights, prefix + ".conv1", channels, channels, 3),
          ConvLayer::load(weights, prefix + ".conv2", channels, channels, 3),
          BatchNorm::load(weights, prefix + ".bn1", channels),
          BatchNorm::load(weights, prefix + ".bn2", channels)};
}

TensorImage ResidualBlock::operator()(const TensorImage& x) const {
  TensorImage y = conv2d(x, conv1);
  batch_norm_inplace(y, bn1);
  relu_inplace(y);
  y = conv2d(y, conv2);
  batch_norm_inplace(y, bn2);
  auto dst = y.data();
  auto src = x.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i] + src[i], 0.0f);
  return y;
}

AttentionBlock AttentionBlock::load(const WeightSet& weights, const std::string& prefix,
                                    int channels, int heads, int groups) {
  AttentionBlock b;
  b.heads = heads;
  b.norm1 = GroupNorm::load(weights, prefix + ".norm1", channels, groups);
  b.norm2 = GroupNorm::load(weights, prefix + ".norm2", channels, groups);
  b.q = ConvLayer::load(weights, prefix + ".q", channels, channels, 1);
  b.k = ConvLayer::load(weights, prefix + ".k", channels, channels, 1);
  b.v = ConvLayer::load(weights, prefix + ".v", channels, channels, 1);
  b.proj = ConvLayer::load(weights, prefix + ".proj", channels, channels, 1);
  b.ffn1 = ConvLayer::load(weights, prefix + ".ffn1", channels, 2 * channels, 1);
  b.ffn2 = ConvLayer::load(weights, prefix + ".ffn2", 2 * channels, channels, 1);
  return b;
}

TensorImage multi_head_attention(const TensorImage& q, const TensorImage& k, const TensorImage& v,
                                 int heads, const AttentionProbe& probe) {
  if (!q.same_shape(k) || !q.same_shape(v)) throw InvalidArgument("attention: q/k/v shape mismatch");
  const int c = q.channels();
  if (heads < 1 || c % heads != 0) {
    throw InvalidArgument("attention: " + std::to_string(c) + " channels not divisible by " +
                          std::to_string(heads) + " heads");
  }
  const int d = c / heads;
  const int n = static_cast<int>(q.pixel_count());
  Eigen::Map<const RowMatrix> qm(q.data().data(), n, c);
  Eigen::Map<const RowMatrix> km(k.data().data(), n, c);
  Eigen::Map<const RowMatrix> vm(v.data().data(), n, c);
  TensorImage out(q.height(), q.width(), c);
  Eigen::Map<RowMatrix> om(out.data().data(), n, c);
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));

  for (int h = 0; h < heads; ++h) {
    RowMatrix scores = (qm.middleCols(h * d, d) * km.middleCols(h * d, d).transpose()) * scale;
    for (int i = 0; i < n; ++i) {
      auto row = scores.row(i);
      const float mx = row.maxCoeff();
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        row(j) = std::exp(row(j) - mx);
        sum += row(j);
      }
      const auto inv = static_cast<float>(1.0 / sum);
      row *= inv;
      if (probe) probe(h, i, std::span<const float>(&row(0), static_cast<std::size_t>(n)));
    }
    om.middleCols(h * d, d).noalias() = scores * vm.middleCols(h * d, d);
  }
  return out;
}

TensorImage AttentionBlock::operator()(const TensorImage& x, const AttentionProbe& probe) const {
  const TensorImage normed = group_norm(x, norm1);
  const TensorImage attended =
      multi_head_attention(conv2d(normed, q), conv2d(normed, k), conv2d(normed, v), heads, probe);
  const TensorImage x1 = add(x, conv2d(attended, proj));
  TensorImage hidden = conv2d(group_norm(x1, norm2), ffn1);
  gelu_inplace(hidden);
  return add(x1, conv2d(hidden, ffn2));
}

void append_conv_spec(std::vector<TensorSpec>& out, const std::string& prefix, int in, int out_ch,
                      int kernel) {
  const auto o = static_cast<std::uint32_t>(out_ch);
  const auto i = static_cast<std::uint32_t>(in);
  const auto k = static_cast<std::uint32_t>(kernel);
  out.push_back({prefix + ".weight", {o, i, k, k}});
  out.push_back({prefix + ".bias", {o}});
}

void append_batch_norm_spec(std::vector<TensorSpec>& out, const std::string& prefix, int channels) {
  const auto c = static_cast<std::uint32_t>(channels);
  for (const char* field : {".weight", ".bias", ".running_mean", ".running_var"}) {
    out.push_back({prefix + field, {c}});
  }
}

void append_group_norm_spec(std::vector<TensorSpec>& out, const std::string& prefix,
                            int channels) {
  const auto c = static_cast<std::uint32_t>(channels);
  out.push_back({prefix + ".weight", {c}});
  out.push_back({prefix + ".bias", {c}});
}

void append_conv_bn_spec(std::vector<TensorSpec>& out, const std::string& prefix, int in,
                         int out_ch, int kernel) {
  append_conv_spec(out, prefix + ".conv", in, out_ch, kernel);
  append_batch_norm_spec(out, prefix + ".bn", out_ch);
}

void append_residual_spec(std::vector<TensorSpec>& out, const std::string& prefix, int channels) {
  append_conv_spec(out, prefix + ".conv1", channels, channels, 3);
  append_batch_norm_spec(out, prefix + ".bn1", channels);
  append_conv_spec(out, prefix + ".conv2", channels, channels, 3);
  append_batch_norm_spec(out, prefix + ".bn2", channels);
}

void append_attention_spec(std::vector<TensorSpec>& out, const std::string& prefix, int channels) {
  append_group_norm_spec(out, prefix + ".norm1", channels);
  for (const char* name : {".q", ".k", ".v", ".proj"}) {
    append_conv_spec(out, prefix + name, channels, channels, 1);
  }
  append_group_norm_spec(out, prefix + ".norm2", channels);
  append_conv_spec(out, prefix + ".ffn1", channels, 2 * channels, 1);
  append_conv_spec(out, prefix + ".ffn2", 2 * channels, channels, 1);
}

}  // namespace hairgbuf
