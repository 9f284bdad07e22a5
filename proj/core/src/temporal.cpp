#include "hairgbuf/temporal.hpp"

#include <algorithm>
#include <cmath>

#include "hairgbuf/error.hpp"
#include "hairgbuf/parallel.hpp"

namespace hairgbuf {

std::vector<TensorSpec> temporal_schema() {
  std::vector<TensorSpec> s;
  append_conv_bn_spec(s, "temporal.stem", kTemporalInputChannels, kTemporalHidden, 3);
  for (int i = 0; i < kTemporalBlocks; ++i) {
    append_residual_spec(s, "temporal.res." + std::to_string(i), kTemporalHidden);
  }
  append_conv_spec(s, "temporal.head", kTemporalHidden, 5, 3);
  s.push_back({"temporal.alpha", {}});
  return s;
}

TemporalNet TemporalNet::from_weights(const WeightSet& w) {
  TemporalNet net;
  net.stem = ConvBnRelu::load(w, "temporal.stem", kTemporalInputChannels, kTemporalHidden, 3);
  for (int i = 0; i < kTemporalBlocks; ++i) {
    net.blocks.push_back(ResidualBlock::load(w, "temporal.res." + std::to_string(i), kTemporalHidden));
  }
  net.head = ConvLayer::load(w, "temporal.head", kTemporalHidden, 5, 3);
  net.alpha = require_tensor(w, "temporal.alpha", {}).data[0];
  return net;
}

TensorImage TemporalNet::residual(const TensorImage& u) const {
  TensorImage x = stem(u);
  for (const ResidualBlock& b : blocks) x = b(x);
  return conv2d(x, head);
}

const TensorImage& TemporalState::history() const {
  if (!history_) throw InvalidArgument("TemporalState: no history on the first frame");
  return *history_;
}

const TensorImage& TemporalState::previous_motion() const {
  if (!history_) throw InvalidArgument("TemporalState: no motion on the first frame");
  return previous_motion_;
}

void TemporalState::advance(TensorImage y, TensorImage motion) {
  if (!y.same_extent(motion) || motion.channels() != 2) {
    throw InvalidArgument("TemporalState::advance: history and motion extents differ");
  }
  history_ = std::move(y);
  previous_motion_ = std::move(motion);
}

void TemporalState::reset() {
  history_.reset();
  previous_motion_ = TensorImage();
}

Reprojection reproject_with_validity(const TensorImage& source, const TensorImage& motion) {
  if (!source.same_extent(motion) || motion.channels() != 2) {
    throw InvalidArgument("reproject: motion must be H x W x 2 matching the source");
  }
  if (!motion.all_finite()) throw InvalidArgument("reproject: motion has non-finite values");
  const int h = source.height();
  const int w = source.width();
  const int c = source.channels();
  Reprojection r{TensorImage(h, w, c), TensorImage(h, w, 1)};
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double mx = motion.at(y, x, 0);
      const double my = motion.at(y, x, 1);
      if (mx == 0.0 && my == 0.0) {
        std::copy_n(source.pixel(y, x).data(), c, r.image.pixel(y, x).data());
        r.valid.at(y, x) = 1.0f;
        continue;
      }
      const double sx = x - mx;
      const double sy = y - my;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double tx = sx - x0;
      const double ty = sy - y0;
      const double weights[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      bool valid = true;
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = 0; t < 4; ++t) {
          if (weights[t] == 0.0) continue;
          if (xs[t] < 0 || ys[t] < 0 || xs[t] >= w || ys[t] >= h) {
            valid = false;
            continue;
          }
          acc += weights[t] * source.at(ys[t], xs[t], ch);
        }
        r.image.at(y, x, ch) = static_cast<float>(acc);
      }
      r.valid.at(y, x) = valid ? 1.0f : 0.0f;
    }
  });
  return r;
}

TensorImage reproject(const TensorImage& source, const TensorImage& motion) {
  return reproject_with_validity(source, motion).image;
}

TensorImage motion_difference(const TensorImage& motion, const TemporalState& state) {
  if (motion.channels() != 2) throw InvalidArgument("motion_difference: motion must have 2 channels");
  if (state.first_frame()) return TensorImage(motion.height(), motion.width(), 2);
  const TensorImage warped = reproject(state.previous_motion(), motion);
  TensorImage out = motion;
  auto dst = out.data();
  auto src = warped.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= src[i];
  return out;
}

TensorImage assemble_temporal_input(const SpatialOutput& spatial, const TemporalState& state,
                                    const TensorImage& motion) {
  const TensorImage s = spatial.packed();
  if (!s.same_extent(motion) || motion.channels() != 2) {
    throw InvalidArgument("assemble_temporal_input: motion extent does not match");
  }
  TensorImage history(s.height(), s.width(), 5);
  if (!state.first_frame()) {
    if (!state.history().same_shape(history)) {
      throw InvalidArgument("assemble_temporal_input: history shape does not match");
    }
    history = reproject(state.history(), motion);
  }
  const TensorImage delta = motion_difference(motion, state);
  return concat_channels({&s, &history, &motion, &delta});
}

TensorImage temporal_forward(const TemporalNet& net, const TensorImage& u,
                             const SpatialOutput& spatial, bool first_frame) {
  TensorImage s = spatial.packed();
  if (first_frame) return s;
  if (u.channels() != kTemporalInputChannels || !u.same_extent(s)) {
    throw InvalidArgument("temporal_forward: input must be H x W x 14 matching the spatial output");
  }
  const TensorImage r = net.residual(u);
  auto dst = s.data();
  auto src = r.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += net.alpha * src[i];
  return s;
}

MaskedOutput apply_support_mask(const TensorImage& y, float logit_threshold) {
  if (y.channels() != 5) throw InvalidArgument("apply_support_mask: expected 5 channels");
  const int h = y.height();
  const int w = y.width();
  MaskedOutput out{TensorImage(h, w, 1), TensorImage(h, w, 3), TensorImage(h, w, 1)};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!(y.at(r, c, 4) > logit_threshold)) continue;
      out.mask.at(r, c) = 1.0f;
      out.coverage.at(r, c) = std::clamp(y.at(r, c, 0), 0.0f, 1.0f);
      const Eigen::Vector3d t = y.vec3(r, c, 1);
      const double n = t.norm();
      // Already-unit tangents pass through untouched.
      if (std::abs(n - 1.0) <= 1e-6) {
        out.tangent.set_vec3(r, c, t);
      } else if (n > 1e-12) {
        out.tangent.set_vec3(r, c, t / n);
      }
    }
  return out;
}

}  // namespace hairgbuf
