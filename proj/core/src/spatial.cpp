#include "hairgbuf/spatial.hpp"

#include <cmath>
#include <string>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

namespace {

constexpr int kOutputChannels = 5;

std::string block_name(const std::string& prefix, int i) {
  return prefix + ".res." + std::to_string(i);
}

void append_branch_spec(std::vector<TensorSpec>& out, const std::string& name, int in,
                        const SpatialArch& a) {
  const int n = a.base_channels;
  append_conv_bn_spec(out, "spatial." + name + "_stem", in, n, 3);
  const std::string enc = "spatial." + name + "_enc.";
  for (int i = 0; i < a.encoder_blocks; ++i) append_residual_spec(out, block_name(enc + "0", i), n);
  append_conv_bn_spec(out, enc + "0.down", n, 2 * n, 3);
  for (int i = 0; i < a.encoder_blocks; ++i) {
    append_residual_spec(out, block_name(enc + "1", i), 2 * n);
  }
  append_conv_bn_spec(out, enc + "1.down", 2 * n, 4 * n, 3);
}

SpatialNet::Branch load_branch(const WeightSet& w, const std::string& name, int in,
                               const SpatialArch& a) {
  const int n = a.base_channels;
  SpatialNet::Branch b;
  b.stem = ConvBnRelu::load(w, "spatial." + name + "_stem", in, n, 3);
  const std::string enc = "spatial." + name + "_enc.";
  for (int i = 0; i < a.encoder_blocks; ++i) {
    b.stage0.push_back(ResidualBlock::load(w, block_name(enc + "0", i), n));
    b.stage1.push_back(ResidualBlock::load(w, block_name(enc + "1", i), 2 * n));
  }
  b.down0 = ConvBnRelu::load(w, enc + "0.down", n, 2 * n, 3, 2);
  b.down1 = ConvBnRelu::load(w, enc + "1.down", 2 * n, 4 * n, 3, 2);
  return b;
}

TensorImage run_blocks(TensorImage x, const std::vector<ResidualBlock>& blocks) {
  for (const ResidualBlock& b : blocks) x = b(x);
  return x;
}

struct BranchFeatures {
  TensorImage e0, e1, e2;
};

BranchFeatures run_branch(const SpatialNet::Branch& b, const TensorImage& x) {
  BranchFeatures f;
  f.e0 = run_blocks(b.stem(x), b.stage0);
  f.e1 = run_blocks(b.down0(f.e0), b.stage1);
  f.e2 = b.down1(f.e1);
  return f;
}

TensorImage run_decoder(const SpatialNet::DecoderStage& stage, const TensorImage& x,
                        const TensorImage& skip_cov, const TensorImage& skip_tan) {
  const TensorImage up = upsample_bilinear(x, skip_cov.height(), skip_cov.width());
  const TensorImage reduced = conv2d(up, stage.reduce);
  TensorImage fused = conv2d(concat_channels({&reduced, &skip_cov, &skip_tan}), stage.fuse);
  relu_inplace(fused);
  return run_blocks(std::move(fused), stage.blocks);
}

TensorImage up2(const TensorImage& x) { return upsample_bilinear(x, 2 * x.height(), 2 * x.width()); }

}  // namespace

std::vector<TensorSpec> spatial_schema(const SpatialArch& a) {
  const int n = a.base_channels;
  std::vector<TensorSpec> s;
  append_branch_spec(s, "cov", 1, a);
  append_branch_spec(s, "tan", 3, a);
  for (int i = 0; i < a.bottleneck_blocks; ++i) {
    append_residual_spec(s, block_name("spatial.bottleneck", i), 8 * n);
  }
  append_attention_spec(s, "spatial.bottleneck.attn", 8 * n);
  // Stage 0 takes the bottleneck (8N) to 4N at H/2; stage 1 takes 4N to 2N at H.
  const int widths[2][2] = {{8 * n, 4 * n}, {4 * n, 2 * n}};
  const int skips[2] = {2 * n, n};
  for (int d = 0; d < 2; ++d) {
    const std::string p = "spatial.dec." + std::to_string(d);
    const int in = widths[d][0];
    const int out = widths[d][1];
    append_conv_spec(s, p + ".reduce", in, out, 1);
    append_conv_spec(s, p + ".fuse", out + 2 * skips[d], out, 1);
    for (int i = 0; i < a.decoder_blocks; ++i) append_residual_spec(s, block_name(p, i), out);
  }
  append_conv_spec(s, "spatial.head", 2 * n, kOutputChannels, 3);
  append_conv_spec(s, "spatial.hier.k4", 8 * n, kOutputChannels, 1);
  append_conv_spec(s, "spatial.hier.k2", 4 * n, kOutputChannels, 1);
  s.push_back({"spatial.residual_scale", {}});
  s.push_back({"spatial.meta.gn_groups", {}});
  return s;
}

SpatialNet SpatialNet::from_weights(const WeightSet& w, const SpatialArch& a) {
  const int n = a.base_channels;
  if (n < 1 || a.heads < 1 || a.groups < 1 || (8 * n) % a.heads != 0 || (8 * n) % a.groups != 0) {
    throw InvalidArgument("SpatialNet: inconsistent architecture parameters");
  }
  const float groups = require_tensor(w, "spatial.meta.gn_groups", {}).data[0];
  if (groups != static_cast<float>(a.groups)) {
    throw WeightFileError(WeightFileError::Kind::ShapeMismatch, "spatial.meta.gn_groups",
                          "file declares " + std::to_string(groups) + " groups, expected " +
                              std::to_string(a.groups));
  }
  SpatialNet net;
  net.arch = a;
  net.coverage_branch = load_branch(w, "cov", 1, a);
  net.tangent_branch = load_branch(w, "tan", 3, a);
  for (int i = 0; i < a.bottleneck_blocks; ++i) {
    net.bottleneck.push_back(ResidualBlock::load(w, block_name("spatial.bottleneck", i), 8 * n));
  }
  net.attention = AttentionBlock::load(w, "spatial.bottleneck.attn", 8 * n, a.heads, a.groups);
  const int widths[2][2] = {{8 * n, 4 * n}, {4 * n, 2 * n}};
  const int skips[2] = {2 * n, n};
  for (int d = 0; d < 2; ++d) {
    const std::string p = "spatial.dec." + std::to_string(d);
    const int in = widths[d][0];
    const int out = widths[d][1];
    net.decoder[d].reduce = ConvLayer::load(w, p + ".reduce", in, out, 1);
    net.decoder[d].fuse = ConvLayer::load(w, p + ".fuse", out + 2 * skips[d], out, 1);
    for (int i = 0; i < a.decoder_blocks; ++i) {
      net.decoder[d].blocks.push_back(ResidualBlock::load(w, block_name(p, i), out));
    }
  }
  net.head = ConvLayer::load(w, "spatial.head", 2 * n, kOutputChannels, 3);
  net.hier_k4 = ConvLayer::load(w, "spatial.hier.k4", 8 * n, kOutputChannels, 1);
  net.hier_k2 = ConvLayer::load(w, "spatial.hier.k2", 4 * n, kOutputChannels, 1);
  net.residual_scale = require_tensor(w, "spatial.residual_scale", {}).data[0];
  return net;
}

TensorImage SpatialOutput::packed() const {
  return concat_channels({&coverage, &tangent, &mask_logit});
}

SpatialOutput SpatialOutput::unpack(const TensorImage& five) {
  if (five.channels() != kOutputChannels) throw InvalidArgument("SpatialOutput: expected 5 channels");
  return {slice_channels(five, 0, 1), slice_channels(five, 1, 3), slice_channels(five, 4, 1)};
}

TensorImage hierarchical_filter(const TensorImage& f4, const TensorImage& f2, const TensorImage& x,
                                const ConvLayer& k4, const ConvLayer& k2) {
  if (x.channels() != 4) throw InvalidArgument("hierarchical_filter: input must have 4 channels");
  if (x.height() % 4 != 0 || x.width() % 4 != 0 || f4.height() * 4 != x.height() ||
      f4.width() * 4 != x.width() || f2.height() * 2 != x.height() ||
      f2.width() * 2 != x.width()) {
    throw InvalidArgument("hierarchical_filter: features must be at 1/4 and 1/2 of the input");
  }
  if (k4.out_channels() != kOutputChannels || k2.out_channels() != kOutputChannels) {
    throw InvalidArgument("hierarchical_filter: K heads must predict 5 channels");
  }
  auto coefficients = [](const TensorImage& f, const ConvLayer& k) {
    TensorImage g = conv2d(f, k);
    for (float& v : g.data()) v = sigmoid(v);
    return g;
  };
  const TensorImage g4 = coefficients(f4, k4);
  const TensorImage g2 = coefficients(f2, k2);
  TensorImage h4 = avg_pool(x, 4);
  TensorImage h2 = avg_pool(x, 2);
  for (int y = 0; y < h4.height(); ++y)
    for (int xx = 0; xx < h4.width(); ++xx)
      for (int c = 0; c < 4; ++c) h4.at(y, xx, c) *= g4.at(y, xx, c);
  for (int y = 0; y < h2.height(); ++y)
    for (int xx = 0; xx < h2.width(); ++xx)
      for (int c = 0; c < 4; ++c) h2.at(y, xx, c) *= g2.at(y, xx, c);

  const TensorImage beta4 = up2(slice_channels(g4, 4, 1));
  const TensorImage h4_up = up2(h4);
  TensorImage fused(h2.height(), h2.width(), 4);
  for (int y = 0; y < h2.height(); ++y)
    for (int xx = 0; xx < h2.width(); ++xx) {
      const float b = beta4.at(y, xx);
      for (int c = 0; c < 4; ++c) {
        fused.at(y, xx, c) = (1.0f - b) * h2.at(y, xx, c) + b * h4_up.at(y, xx, c);
      }
    }

  const TensorImage beta2 = up2(slice_channels(g2, 4, 1));
  TensorImage out = up2(fused);
  for (int y = 0; y < out.height(); ++y)
    for (int xx = 0; xx < out.width(); ++xx)
      for (int c = 0; c < 4; ++c) out.at(y, xx, c) *= beta2.at(y, xx);
  return out;
}

SpatialOutput spatial_forward(const SpatialNet& net, const TensorImage& x, SpatialTrace* trace,
                              const AttentionProbe& probe) {
  if (x.channels() != 4) {
    throw InvalidArgument("spatial_forward: expected [coverage, tangent] with 4 channels, got " +
                          std::to_string(x.channels()));
  }
  if (x.height() % 4 != 0 || x.width() % 4 != 0 || x.height() == 0 || x.width() == 0) {
    const int ph = (4 - x.height() % 4) % 4;
    const int pw = (4 - x.width() % 4) % 4;
    throw InvalidArgument("spatial_forward: " + std::to_string(x.height()) + "x" +
                          std::to_string(x.width()) +
                          " is not a multiple of 4; pad by " + std::to_string(ph) + " rows and " +
                          std::to_string(pw) + " columns");
  }
  const TensorImage coverage = slice_channels(x, 0, 1);
  const TensorImage tangent = slice_channels(x, 1, 3);
  const BranchFeatures cov = run_branch(net.coverage_branch, coverage);
  const BranchFeatures tan = run_branch(net.tangent_branch, tangent);

  TensorImage f4 = run_blocks(concat_channels({&cov.e2, &tan.e2}), net.bottleneck);
  f4 = net.attention(f4, probe);
  const TensorImage f2 = run_decoder(net.decoder[0], f4, cov.e1, tan.e1);
  const TensorImage decoded = run_decoder(net.decoder[1], f2, cov.e0, tan.e0);
  const TensorImage residual = conv2d(decoded, net.head);
  const TensorImage hier = hierarchical_filter(f4, f2, x, net.hier_k4, net.hier_k2);

  TensorImage z(x.height(), x.width(), kOutputChannels);
  const float s = net.residual_scale;
  for (int y = 0; y < x.height(); ++y)
    for (int xx = 0; xx < x.width(); ++xx) {
      for (int c = 0; c < 4; ++c) {
        z.at(y, xx, c) = x.at(y, xx, c) + s * residual.at(y, xx, c) + hier.at(y, xx, c);
      }
      z.at(y, xx, 4) = residual.at(y, xx, 4);
    }

  if (trace) {
    trace->coverage_e0 = cov.e0;
    trace->coverage_e1 = cov.e1;
    trace->coverage_e2 = cov.e2;
    trace->tangent_e0 = tan.e0;
    trace->tangent_e1 = tan.e1;
    trace->tangent_e2 = tan.e2;
    trace->f4 = f4;
    trace->f2 = f2;
    trace->decoded = decoded;
    trace->residual = residual;
    trace->hierarchical = hier;
  }
  return SpatialOutput::unpack(z);
}

}  // namespace hairgbuf
