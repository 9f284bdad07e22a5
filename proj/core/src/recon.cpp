#include "hairgbuf/recon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "hairgbuf/error.hpp"
#include "hairgbuf/parallel.hpp"

namespace hairgbuf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_extent(const TensorImage& img, int h, int w, int c, const char* what) {
  if (img.height() != h || img.width() != w || img.channels() != c) {
    throw InvalidArgument(std::string("reconstruction: ") + what + " has the wrong shape");
  }
}

Eigen::Vector2d pixel_center(int y, int x) { return {x + 0.5, y + 0.5}; }

}  // namespace

int ClassMap::count(PixelClass c) const {
  return static_cast<int>(std::count(labels_.begin(), labels_.end(), c));
}

TensorImage ClassMap::to_image() const {
  TensorImage out(height_, width_, 1);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out.at(y, x) = static_cast<float>(at(y, x));
  return out;
}

ClassMap classify_pixels(const TensorImage& position, const TensorImage& coverage, double eps_pos) {
  if (!(eps_pos > 0.0)) throw InvalidArgument("classify_pixels: eps_pos must be positive");
  check_extent(position, coverage.height(), coverage.width(), 3, "position");
  check_extent(coverage, coverage.height(), coverage.width(), 1, "coverage");
  ClassMap classes(coverage.height(), coverage.width());
  for (int y = 0; y < coverage.height(); ++y)
    for (int x = 0; x < coverage.width(); ++x) {
      if (!(coverage.at(y, x) > 0.0f)) continue;
      classes.set(y, x, position.vec3(y, x).norm() > eps_pos ? PixelClass::HairValid
                                                             : PixelClass::HairInvalid);
    }
  return classes;
}

long nearest_flagged_pixel(const std::vector<std::uint8_t>& flags, int h, int w, int y, int x) {
  if (flags.size() != static_cast<std::size_t>(h) * w) {
    throw InvalidArgument("nearest_flagged_pixel: flag count does not match the extent");
  }
  // Expanding square rings; stop once a ring cannot beat the best match.
  long best_d2 = std::numeric_limits<long>::max();
  long best_index = -1;
  const int max_r = std::max(h, w);
  for (int r = 0; r <= max_r; ++r) {
    if (static_cast<long>(r) * r > best_d2) break;
    for (int yy = y - r; yy <= y + r; ++yy) {
      if (yy < 0 || yy >= h) continue;
      const bool edge_row = (yy == y - r || yy == y + r);
      const int step = edge_row || r == 0 ? 1 : 2 * r;
      for (int xx = x - r; xx <= x + r; xx += step) {
        if (xx < 0 || xx >= w) continue;
        const long index = static_cast<long>(yy) * w + xx;
        if (!flags[static_cast<std::size_t>(index)]) continue;
        const long dy = yy - y;
        const long dx = xx - x;
        const long d2 = dy * dy + dx * dx;
        if (d2 < best_d2 || (d2 == best_d2 && index < best_index)) {
          best_d2 = d2;
          best_index = index;
        }
      }
    }
  }
  return best_index;
}

TensorImage inpaint_depth(const TensorImage& depth, const ClassMap& classes) {
  const int h = depth.height();
  const int w = depth.width();
  check_extent(depth, classes.height(), classes.width(), 1, "depth");
  TensorImage out = depth;
  bool any_hair = false;
  bool any_depth = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      any_hair |= classes.is_hair(y, x);
      any_depth |= depth.at(y, x) > 0.0f;
    }
  if (!any_hair) return out;
  if (!any_depth) throw DegenerateFrame("inpaint_depth: hair pixels present but no depth sample");

  std::vector<std::uint8_t> has_depth(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) has_depth[static_cast<std::size_t>(y) * w + x] = depth.at(y, x) > 0.0f;
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (!classes.is_hair(y, x) || depth.at(y, x) > 0.0f) continue;
      const long i = nearest_flagged_pixel(has_depth, h, w, y, x);
      out.at(y, x) = depth.data()[static_cast<std::size_t>(i)];
    }
  });
  return out;
}

double step_size(double depth, const Camera& camera) {
  if (!(depth > 0.0)) throw InvalidArgument("step_size: depth must be positive");
  const double a = depth / camera.fx();
  const double b = depth / camera.fy();
  return std::sqrt(a * a + b * b);
}

CircleFit fit_circle(std::span<const Eigen::Vector2d> points, std::span<const double> weights,
                     double max_condition) {
  if (points.size() != weights.size()) {
    throw InvalidArgument("fit_circle: points and weights differ in length");
  }
  CircleFit fit;
  int used = 0;
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double wgt = weights[i];
    if (!(wgt > 0.0)) continue;
    ++used;
    const Eigen::Vector3d a(points[i].x(), points[i].y(), 1.0);
    m.noalias() += wgt * a * a.transpose();
    rhs -= wgt * points[i].squaredNorm() * a;
  }
  if (used < 3) return fit;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  fit.condition = lo > 0.0 ? hi / lo : kInf;
  if (!(fit.condition <= max_condition)) return fit;
  const Eigen::Vector3d def = m.ldlt().solve(rhs);
  fit.center = Eigen::Vector2d(-0.5 * def.x(), -0.5 * def.y());
  const double r2 = fit.center.squaredNorm() - def.z();
  if (!(r2 > 0.0) || !fit.center.allFinite()) return fit;
  fit.radius = std::sqrt(r2);
  fit.degenerate = false;
  return fit;
}

CurvatureField::CurvatureField(int height, int width)
    : height_(height),
      width_(width),
      centers_(static_cast<std::size_t>(height) * width, Eigen::Vector2d::Zero()),
      finite_(static_cast<std::size_t>(height) * width, 0) {}

CurvatureField curvature_centers(const TensorImage& coverage, int window) {
  if (window < 3 || window % 2 == 0) throw InvalidArgument("curvature_centers: window must be odd and >= 3");
  if (coverage.channels() != 1) throw InvalidArgument("curvature_centers: coverage must have 1 channel");
  const int h = coverage.height();
  const int w = coverage.width();
  const int half = window / 2;
  CurvatureField field(h, w);
  parallel_for(0, h, [&](int y) {
    std::vector<Eigen::Vector2d> pts;
    std::vector<double> wts;
    for (int x = 0; x < w; ++x) {
      if (!(coverage.at(y, x) > 0.0f)) continue;
      pts.clear();
      wts.clear();
      for (int yy = std::max(0, y - half); yy <= std::min(h - 1, y + half); ++yy)
        for (int xx = std::max(0, x - half); xx <= std::min(w - 1, x + half); ++xx) {
          const float c = coverage.at(yy, xx);
          if (!(c > 0.0f)) continue;
          // Relative coordinates keep the normal matrix well scaled.
          pts.emplace_back(xx - x, yy - y);
          wts.push_back(c);
        }
      const CircleFit fit = fit_circle(pts, wts);
      if (!fit.degenerate) field.set(y, x, fit.center + pixel_center(y, x));
    }
  });
  return field;
}

std::optional<Eigen::Vector2d> project_tangent(const Eigen::Vector3d& tangent,
                                               const Eigen::Vector3d& position,
                                               const Camera& camera) {
  const Eigen::Vector4d c = camera.clip(position);
  if (!(c.w() > 0.0)) return std::nullopt;
  const Eigen::Vector4d dc = camera.view_projection() * Eigen::Vector4d(tangent.x(), tangent.y(), tangent.z(), 0.0);
  const double w2 = c.w() * c.w();
  const Eigen::Vector2d d(0.5 * camera.width() * (dc.x() * c.w() - c.x() * dc.w()) / w2,
                          -0.5 * camera.height() * (dc.y() * c.w() - c.y() * dc.w()) / w2);
  const double n = d.norm();
  if (!(n >= 1e-9)) return std::nullopt;
  return d / n;
}

VotePool::VotePool(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw InvalidArgument("VotePool: capacity must be >= 1");
  candidates_.reserve(capacity);
}

VotePool::Outcome VotePool::offer(const Eigen::Vector3d& position, double depth) {
  if (static_cast<int>(candidates_.size()) < capacity_) {
    candidates_.push_back({position, depth});
    return Outcome::Inserted;
  }
  auto worst = std::max_element(candidates_.begin(), candidates_.end(),
                                [](const Candidate& a, const Candidate& b) { return a.depth < b.depth; });
  if (depth < worst->depth) {
    candidates_.erase(worst);
    candidates_.push_back({position, depth});
    return Outcome::Evicted;
  }
  return Outcome::Rejected;
}

std::optional<VotePool::Candidate> VotePool::frontmost() const {
  if (candidates_.empty()) return std::nullopt;
  return *std::min_element(candidates_.begin(), candidates_.end(),
                           [](const Candidate& a, const Candidate& b) { return a.depth < b.depth; });
}

ScreenTangents screen_tangents(const ClassMap& classes, const TensorImage& position,
                               const TensorImage& tangent, const Camera& camera) {
  const int h = classes.height();
  const int w = classes.width();
  ScreenTangents st;
  st.width = w;
  st.direction.assign(static_cast<std::size_t>(h) * w, Eigen::Vector2d::Zero());
  st.ok.assign(static_cast<std::size_t>(h) * w, 0);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (classes.at(y, x) != PixelClass::HairValid) continue;
      const Eigen::Vector3d t = tangent.vec3(y, x);
      if (t.squaredNorm() == 0.0) continue;
      if (auto d = project_tangent(t.normalized(), position.vec3(y, x), camera)) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        st.direction[i] = *d;
        st.ok[i] = 1;
      }
    }
  });
  return st;
}

RepairResult backward_repair(const ClassMap& classes, const TensorImage& position,
                             const TensorImage& tangent, const TensorImage& depth,
                             const CurvatureField& curvature, const TensorImage& steps,
                             const Camera& camera) {
  const int h = classes.height();
  const int w = classes.width();
  RepairResult result{position, {}};
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(h) * w, 0);

  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (classes.at(y, x) != PixelClass::HairInvalid) continue;
      const bool own_finite = curvature.finite(y, x);
      int best_y = -1;
      int best_x = -1;
      double best_dist = kInf;
      double best_depth = kInf;
      for (int yy = std::max(0, y - 1); yy <= std::min(h - 1, y + 1); ++yy)
        for (int xx = std::max(0, x - 1); xx <= std::min(w - 1, x + 1); ++xx) {
          if (classes.at(yy, xx) != PixelClass::HairValid) continue;
          const double dist = own_finite && curvature.finite(yy, xx)
                                  ? (curvature.center(yy, xx) - curvature.center(y, x)).norm()
                                  : kInf;
          const double d = depth.at(yy, xx);
          // Row-major visiting order makes "first seen" the row-major tie-break.
          if (best_y < 0 || dist < best_dist || (dist == best_dist && d < best_depth)) {
            best_y = yy;
            best_x = xx;
            best_dist = dist;
            best_depth = d;
          }
        }
      if (best_y < 0) continue;

      const Eigen::Vector3d source = position.vec3(best_y, best_x);
      Eigen::Vector3d t = tangent.vec3(y, x);
      Eigen::Vector3d repaired = source;
      if (t.squaredNorm() > 0.0) {
        t.normalize();
        const double l = steps.at(y, x);
        const Eigen::Vector3d plus = source + l * t;
        const Eigen::Vector3d minus = source - l * t;
        const auto pp = camera.project(plus);
        const auto pm = camera.project(minus);
        const Eigen::Vector2d target = pixel_center(y, x);
        const double ep = pp ? (pp->pixel - target).squaredNorm() : kInf;
        const double em = pm ? (pm->pixel - target).squaredNorm() : kInf;
        repaired = em < ep ? minus : plus;
      }
      result.position.set_vec3(y, x, repaired);
      hit[static_cast<std::size_t>(y) * w + x] = 1;
    }
  });
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (hit[static_cast<std::size_t>(y) * w + x]) result.repaired.emplace_back(y, x);
  return result;
}

RepairResult forward_voting(const ClassMap& classes, const TensorImage& position,
                            const TensorImage& tangent, const ScreenTangents& screen,
                            const TensorImage& steps, const Camera& camera,
                            double theta_max_degrees, int capacity,
                            std::vector<VoteRecord>* log) {
  if (!(theta_max_degrees > 0.0 && theta_max_degrees < 90.0)) {
    throw InvalidArgument("forward_voting: theta_max must lie in (0, 90) degrees");
  }
  if (capacity < 1) throw InvalidArgument("forward_voting: pool capacity must be >= 1");
  const int h = classes.height();
  const int w = classes.width();
  const double cos_max = std::cos(theta_max_degrees * std::numbers::pi / 180.0);
  RepairResult result{position, {}};
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(h) * w, 0);
  std::vector<std::vector<VoteRecord>> row_logs(h);

  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (classes.at(y, x) != PixelClass::HairInvalid) continue;
      VotePool pool(capacity);
      for (int sy = std::max(0, y - 1); sy <= std::min(h - 1, y + 1); ++sy)
        for (int sx = std::max(0, x - 1); sx <= std::min(w - 1, x + 1); ++sx) {
          if ((sy == y && sx == x) || classes.at(sy, sx) != PixelClass::HairValid) continue;
          if (!screen.has(sy, sx)) continue;
          const Eigen::Vector2d dir = Eigen::Vector2d(x - sx, y - sy).normalized();
          const double c = screen.at(sy, sx).dot(dir);
          if (!(std::abs(c) >= cos_max)) continue;
          const Eigen::Vector3d t = tangent.vec3(sy, sx).normalized();
          const double sign = c >= 0.0 ? 1.0 : -1.0;
          const Eigen::Vector3d vote = position.vec3(sy, sx) + sign * steps.at(sy, sx) * t;
          pool.offer(vote, camera.depth(vote));
          if (log) row_logs[y].push_back({sy, sx, y, x, std::abs(c)});
        }
      if (auto best = pool.frontmost()) {
        result.position.set_vec3(y, x, best->position);
        hit[static_cast<std::size_t>(y) * w + x] = 1;
      }
    }
  });
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (hit[static_cast<std::size_t>(y) * w + x]) result.repaired.emplace_back(y, x);
  if (log) {
    for (auto& row : row_logs) log->insert(log->end(), row.begin(), row.end());
  }
  return result;
}

void ReconParams::validate() const {
  if (!(eps_pos > 0.0)) throw InvalidArgument("eps_pos must be positive");
  if (!(theta_max_degrees > 0.0 && theta_max_degrees < 90.0)) {
    throw InvalidArgument("theta_max must lie in (0, 90) degrees");
  }
  if (pool_capacity < 1) throw InvalidArgument("K must be >= 1");
  if (sweep_cap < 1) throw InvalidArgument("sweep_cap must be >= 1");
  if (window < 3 || window % 2 == 0) throw InvalidArgument("curvature window must be odd and >= 3");
}

ReconResult reconstruct_positions(const GBuffer& gbuffer, const TensorImage& coverage_t,
                                  const TensorImage& tangent_t, const Camera& camera,
                                  const ReconParams& params, ReconSnapshots* snapshots) {
  params.validate();
  const int h = gbuffer.height();
  const int w = gbuffer.width();
  check_extent(coverage_t, h, w, 1, "coverage_t");
  check_extent(tangent_t, h, w, 3, "tangent_t");
  check_extent(gbuffer.position, h, w, 3, "position");
  check_extent(gbuffer.depth, h, w, 1, "depth");

  ClassMap classes = classify_pixels(gbuffer.position, coverage_t, params.eps_pos);
  const TensorImage depth = inpaint_depth(gbuffer.depth, classes);
  TensorImage steps(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (classes.is_hair(y, x)) steps.at(y, x) = static_cast<float>(step_size(depth.at(y, x), camera));
  const CurvatureField curvature = curvature_centers(coverage_t, params.window);

  ReconResult result;
  result.position = TensorImage(h, w, 3);
  result.source.assign(static_cast<std::size_t>(h) * w, PositionSource::None);
  auto source_at = [&](int y, int x) -> PositionSource& {
    return result.source[static_cast<std::size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (classes.at(y, x) == PixelClass::HairValid) {
        for (int c = 0; c < 3; ++c) result.position.at(y, x, c) = gbuffer.position.at(y, x, c);
        source_at(y, x) = PositionSource::Original;
      }
    }
  ReconStats& stats = result.stats;
  stats.hair_pixels = classes.count(PixelClass::HairValid) + classes.count(PixelClass::HairInvalid);
  stats.initially_valid = classes.count(PixelClass::HairValid);

  if (snapshots) {
    snapshots->classes = classes.to_image();
    snapshots->depth = depth;
    snapshots->curvature_radius = TensorImage(h, w, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (curvature.finite(y, x)) {
          snapshots->curvature_radius.at(y, x) =
              static_cast<float>((curvature.center(y, x) - pixel_center(y, x)).norm());
        }
  }

  auto promote = [&](const RepairResult& r, PositionSource src) {
    for (const auto& [y, x] : r.repaired) {
      classes.set(y, x, PixelClass::HairValid);
      source_at(y, x) = src;
    }
  };

  while (stats.sweeps < params.sweep_cap && classes.count(PixelClass::HairInvalid) > 0) {
    ++stats.sweeps;
    RepairResult back = backward_repair(classes, result.position, tangent_t, depth, curvature,
                                        steps, camera);
    result.position = std::move(back.position);
    promote(back, PositionSource::Backward);
    stats.backward_repaired += static_cast<int>(back.repaired.size());

    const ScreenTangents screen = screen_tangents(classes, result.position, tangent_t, camera);
    RepairResult fwd = forward_voting(classes, result.position, tangent_t, screen, steps, camera,
                                      params.theta_max_degrees, params.pool_capacity);
    result.position = std::move(fwd.position);
    promote(fwd, PositionSource::Forward);
    stats.forward_repaired += static_cast<int>(fwd.repaired.size());

    if (back.repaired.empty() && fwd.repaired.empty()) break;
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (classes.at(y, x) != PixelClass::HairInvalid) continue;
      result.position.set_vec3(y, x, camera.unproject(pixel_center(y, x), depth.at(y, x)));
      source_at(y, x) = PositionSource::Fallback;
      ++stats.stalled;
    }

  if (snapshots) snapshots->position = result.position;
  return result;
}

}  // namespace hairgbuf
