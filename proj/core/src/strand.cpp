#include "hairgbuf/strand.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Unit vector orthogonal to `axis`, chosen from the least aligned coordinate axis.
Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& axis) {
  Eigen::Vector3d ref = Eigen::Vector3d::UnitX();
  if (std::abs(axis.x()) > std::abs(axis.y())) ref = Eigen::Vector3d::UnitY();
  if (std::abs(axis.dot(ref)) > std::abs(axis.z())) ref = Eigen::Vector3d::UnitZ();
  return (ref - axis.dot(ref) * axis).normalized();
}

}  // namespace

double halton(std::uint64_t index, int base) {
  if (base < 2) throw InvalidArgument("halton: base must be >= 2");
  if (index < 1) throw InvalidArgument("halton: index must be >= 1");
  // Reverse the digits as an integer and divide once so the result is the
  // correctly rounded rational, independent of platform accumulation order.
  std::uint64_t reversed = 0;
  std::uint64_t denom = 1;
  const auto b = static_cast<std::uint64_t>(base);
  while (index > 0) {
    reversed = reversed * b + index % b;
    denom *= b;
    index /= b;
  }
  return static_cast<double>(reversed) / static_cast<double>(denom);
}

JitterSequence::JitterSequence(std::vector<Eigen::Vector2d> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw InvalidArgument("JitterSequence: empty");
  for (const auto& s : samples_) {
    if ((s.array() < 0.0).any() || (s.array() >= 1.0).any()) {
      throw InvalidArgument("JitterSequence: offsets must lie in [0,1)");
    }
  }
}

JitterSequence JitterSequence::halton23(int length) {
  if (length < 1) throw InvalidArgument("JitterSequence: length must be >= 1");
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(length);
  for (int i = 1; i <= length; ++i) pts.emplace_back(halton(i, 2), halton(i, 3));
  return JitterSequence(std::move(pts));
}

JitterSequence JitterSequence::none() { return JitterSequence({Eigen::Vector2d::Zero()}); }

const Eigen::Vector2d& JitterSequence::for_frame(int frame) const {
  const int n = length();
  return samples_[((frame % n) + n) % n];
}

Strand::Strand(Params params, double width) : params_(std::move(params)), width_(width) {
  if (!(width > 0.0)) throw InvalidArgument("Strand: width must be positive");
  arc_length_ = derivative(0.0).norm();
  if (!(arc_length_ > 0.0) || !std::isfinite(arc_length_)) {
    throw InvalidArgument("Strand: degenerate parametrization (zero length)");
  }
}

Strand Strand::line(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, double width) {
  return Strand(LineParams{p0, p1}, width);
}

Strand Strand::arc(const Eigen::Vector3d& center, double radius, const Eigen::Vector3d& normal,
                   const Eigen::Vector3d& start_dir, double start_angle, double end_angle,
                   double width) {
  if (!(radius > 0.0)) throw InvalidArgument("Strand::arc: radius must be positive");
  const Eigen::Vector3d n = normal.normalized();
  Eigen::Vector3d u = start_dir - n.dot(start_dir) * n;
  if (u.norm() < 1e-9) throw InvalidArgument("Strand::arc: start_dir parallel to normal");
  u.normalize();
  const Eigen::Vector3d v = n.cross(u);
  return Strand(ArcParams{center, radius, u, v, start_angle, end_angle}, width);
}

Strand Strand::helix(const Eigen::Vector3d& base, const Eigen::Vector3d& axis, double radius,
                     double pitch, double turns, double phase, double width) {
  if (!(radius > 0.0) || !(turns > 0.0)) {
    throw InvalidArgument("Strand::helix: radius and turns must be positive");
  }
  return Strand(HelixParams{base, axis.normalized(), radius, pitch, turns, phase}, width);
}

StrandKind Strand::kind() const {
  switch (params_.index()) {
    case 0: return StrandKind::LineSegment;
    case 1: return StrandKind::CircularArc;
    default: return StrandKind::Helix;
  }
}

Eigen::Vector3d Strand::position(double s) const {
  return std::visit(
      [s](const auto& p) -> Eigen::Vector3d {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LineParams>) {
          return p.p0 + s * (p.p1 - p.p0);
        } else if constexpr (std::is_same_v<T, ArcParams>) {
          const double a = p.start_angle + s * (p.end_angle - p.start_angle);
          return p.center + p.radius * (std::cos(a) * p.u + std::sin(a) * p.v);
        } else {
          const Eigen::Vector3d u = any_orthogonal(p.axis);
          const Eigen::Vector3d v = p.axis.cross(u);
          const double a = p.phase + s * kTwoPi * p.turns;
          return p.base + p.radius * (std::cos(a) * u + std::sin(a) * v) +
                 (s * p.turns * p.pitch) * p.axis;
        }
      },
      params_);
}

Eigen::Vector3d Strand::derivative(double s) const {
  return std::visit(
      [s](const auto& p) -> Eigen::Vector3d {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LineParams>) {
          return p.p1 - p.p0;
        } else if constexpr (std::is_same_v<T, ArcParams>) {
          const double sweep = p.end_angle - p.start_angle;
          const double a = p.start_angle + s * sweep;
          return p.radius * sweep * (-std::sin(a) * p.u + std::cos(a) * p.v);
        } else {
          const Eigen::Vector3d u = any_orthogonal(p.axis);
          const Eigen::Vector3d v = p.axis.cross(u);
          const double w = kTwoPi * p.turns;
          const double a = p.phase + s * w;
          return p.radius * w * (-std::sin(a) * u + std::cos(a) * v) + (p.turns * p.pitch) * p.axis;
        }
      },
      params_);
}

StrandSample eval_strand(const Strand& strand, double s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw InvalidArgument("eval_strand: s = " + std::to_string(s) + " outside [0,1]");
  }
  return {strand.position(s), strand.derivative(s).normalized()};
}

Rig::Rig(std::vector<RigKeyframe> keys, const Eigen::Vector3d& pivot)
    : keys_(std::move(keys)), pivot_(pivot) {
  std::stable_sort(keys_.begin(), keys_.end(),
                   [](const RigKeyframe& a, const RigKeyframe& b) { return a.frame < b.frame; });
}

Eigen::Isometry3d Rig::transform(int frame) const {
  if (keys_.empty()) return Eigen::Isometry3d::Identity();
  Eigen::Vector3d translation;
  double angle_deg;
  const double f = frame;
  if (f <= keys_.front().frame) {
    translation = keys_.front().translation;
    angle_deg = keys_.front().rotate_y_degrees;
  } else if (f >= keys_.back().frame) {
    translation = keys_.back().translation;
    angle_deg = keys_.back().rotate_y_degrees;
  } else {
    auto hi = std::upper_bound(keys_.begin(), keys_.end(), f,
                               [](double v, const RigKeyframe& k) { return v < k.frame; });
    auto lo = std::prev(hi);
    const double t = (f - lo->frame) / (hi->frame - lo->frame);
    translation = (1.0 - t) * lo->translation + t * hi->translation;
    angle_deg = (1.0 - t) * lo->rotate_y_degrees + t * hi->rotate_y_degrees;
  }
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.translate(pivot_ + translation);
  iso.rotate(Eigen::AngleAxisd(angle_deg * std::numbers::pi / 180.0, Eigen::Vector3d::UnitY()));
  iso.translate(-pivot_);
  return iso;
}

Eigen::AlignedBox3d StrandScene::bounds() const {
  Eigen::AlignedBox3d box;
  for (const Strand& strand : strands) {
    for (int i = 0; i <= 256; ++i) box.extend(strand.position(i / 256.0));
  }
  return box;
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

StrandScene make_seeded_scene(SceneFamily family, std::uint64_t seed, int count) {
  if (count < 1) throw InvalidArgument("make_seeded_scene: count must be >= 1");
  SplitMix64 rng(seed);
  StrandScene scene;
  scene.seed = seed;
  for (int i = 0; i < count; ++i) {
    bool use_helix = family == SceneFamily::Helix;
    if (family == SceneFamily::Mixed) use_helix = rng.uniform() < 0.5;
    const double width = rng.uniform(0.015, 0.05);
    if (use_helix) {
      const Eigen::Vector3d base(rng.uniform(-0.75, 0.75), rng.uniform(-1.0, -0.7),
                                 rng.uniform(-0.3, 0.3));
      const Eigen::Vector3d axis =
          Eigen::Vector3d(rng.uniform(-0.25, 0.25), 1.0, rng.uniform(-0.25, 0.25)).normalized();
      const double radius = rng.uniform(0.06, 0.22);
      const double turns = rng.uniform(1.2, 2.8);
      const double pitch = rng.uniform(1.3, 1.7) / turns;
      scene.strands.push_back(Strand::helix(base, axis, radius, pitch, turns,
                                            rng.uniform(0.0, kTwoPi), width));
    } else {
      const Eigen::Vector3d center(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                                   rng.uniform(-0.3, 0.3));
      const Eigen::Vector3d normal(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), 1.0);
      const Eigen::Vector3d start(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0);
      const double radius = rng.uniform(0.3, 0.6);
      const double a0 = rng.uniform(0.0, kTwoPi);
      const double sweep = rng.uniform(1.0, 2.6);
      scene.strands.push_back(Strand::arc(center, radius, normal,
                                          start.norm() < 1e-3 ? Eigen::Vector3d::UnitX() : start,
                                          a0, a0 + sweep, width));
    }
  }
  return scene;
}

}  // namespace hairgbuf
