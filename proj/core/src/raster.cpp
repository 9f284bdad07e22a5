#include "hairgbuf/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "hairgbuf/error.hpp"
#include "hairgbuf/image_io.hpp"
#include "hairgbuf/parallel.hpp"

namespace hairgbuf {

namespace {

constexpr double kNearDepth = 1e-4;

double radical_inverse(int k, int base) { return k == 0 ? 0.0 : halton(k, base); }

double wrap01(double v) { return v - std::floor(v); }

}  // namespace

StrandRasterizer::StrandRasterizer(const StrandScene& scene, const Camera& camera, int frame)
    : strands_(scene.strands), camera_(camera), rig_(scene.rig.transform(frame)) {
  const int w = camera.width();
  const int h = camera.height();

  for (int si = 0; si < static_cast<int>(strands_.size()); ++si) {
    const Strand& strand = strands_[si];
    // Estimate the projected length to pick about eight segments per pixel.
    double screen_len = 0.0;
    std::optional<Camera::Projection> prev;
    for (int i = 0; i <= 64; ++i) {
      auto p = camera.project(rig_ * strand.position(i / 64.0));
      if (p && prev) screen_len += (p->pixel - prev->pixel).norm();
      prev = p;
    }
    const int n = std::clamp(static_cast<int>(std::ceil(8.0 * screen_len)), 16, 32768);

    Eigen::Vector3d a = rig_ * strand.position(0.0);
    for (int i = 1; i <= n; ++i) {
      const double s0 = static_cast<double>(i - 1) / n;
      const double s1 = static_cast<double>(i) / n;
      const Eigen::Vector3d b = rig_ * strand.position(s1);
      const double wa = camera.depth(a);
      const double wb = camera.depth(b);
      if (wa > kNearDepth && wb > kNearDepth) {
        Segment seg;
        seg.a = a;
        seg.b = b;
        seg.sa = camera.project(a)->pixel;
        seg.sb = camera.project(b)->pixel;
        seg.wa = wa;
        seg.wb = wb;
        seg.s0 = s0;
        seg.s1 = s1;
        seg.half_width = 0.5 * strand.width();
        seg.strand = si;
        segments_.push_back(seg);
      }
      a = b;
    }
  }

  // Bin segments by the pixels their widened screen bounding boxes touch.
  auto cell_range = [&](const Segment& seg, int& x0, int& x1, int& y0, int& y1) {
    const double r = seg.half_width * camera.fy() / std::min(seg.wa, seg.wb) + 1e-6;
    const double lo_x = std::min(seg.sa.x(), seg.sb.x()) - r;
    const double hi_x = std::max(seg.sa.x(), seg.sb.x()) + r;
    const double lo_y = std::min(seg.sa.y(), seg.sb.y()) - r;
    const double hi_y = std::max(seg.sa.y(), seg.sb.y()) + r;
    x0 = std::max(0, static_cast<int>(std::floor(lo_x)));
    x1 = std::min(w - 1, static_cast<int>(std::floor(hi_x)));
    y0 = std::max(0, static_cast<int>(std::floor(lo_y)));
    y1 = std::min(h - 1, static_cast<int>(std::floor(hi_y)));
  };
  cell_start_.assign(static_cast<std::size_t>(w) * h + 1, 0);
  for (const Segment& seg : segments_) {
    int x0, x1, y0, y1;
    cell_range(seg, x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) ++cell_start_[static_cast<std::size_t>(y) * w + x + 1];
  }
  for (std::size_t i = 1; i < cell_start_.size(); ++i) cell_start_[i] += cell_start_[i - 1];
  cell_items_.resize(cell_start_.back());
  std::vector<int> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (int id = 0; id < static_cast<int>(segments_.size()); ++id) {
    int x0, x1, y0, y1;
    cell_range(segments_[id], x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) cell_items_[fill[static_cast<std::size_t>(y) * w + x]++] = id;
  }
}

template <typename Fn>
void StrandRasterizer::visit_hits(const Eigen::Vector2d& screen, Fn&& fn) const {
  const int cx = static_cast<int>(std::floor(screen.x()));
  const int cy = static_cast<int>(std::floor(screen.y()));
  if (cx < 0 || cy < 0 || cx >= camera_.width() || cy >= camera_.height()) return;
  const std::size_t cell = static_cast<std::size_t>(cy) * camera_.width() + cx;
  for (int i = cell_start_[cell]; i < cell_start_[cell + 1]; ++i) {
    const Segment& seg = segments_[cell_items_[i]];
    const Eigen::Vector2d d = seg.sb - seg.sa;
    const double len2 = d.squaredNorm();
    double u = len2 > 0.0 ? (screen - seg.sa).dot(d) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const double dist = (seg.sa + u * d - screen).norm();
    // Perspective-correct parameter along the world segment.
    const double t = (u / seg.wb) / ((1.0 - u) / seg.wa + u / seg.wb);
    const double depth = seg.wa + t * (seg.wb - seg.wa);
    if (dist > seg.half_width * camera_.fy() / depth) continue;
    RasterHit hit;
    hit.depth = depth;
    hit.position = seg.a + t * (seg.b - seg.a);
    hit.s = seg.s0 + t * (seg.s1 - seg.s0);
    hit.tangent = (rig_.linear() * strands_[seg.strand].derivative(hit.s)).normalized();
    hit.strand = seg.strand;
    fn(hit);
  }
}

std::optional<RasterHit> StrandRasterizer::trace(const Eigen::Vector2d& screen) const {
  std::optional<RasterHit> best;
  visit_hits(screen, [&](const RasterHit& hit) {
    if (!best || hit.depth < best->depth) best = hit;
  });
  return best;
}

std::vector<RasterHit> StrandRasterizer::trace_all(const Eigen::Vector2d& screen) const {
  std::vector<RasterHit> hits;
  visit_hits(screen, [&](const RasterHit& hit) { hits.push_back(hit); });
  return hits;
}

Eigen::Vector2d subsample_offset(int k, const JitterSequence& jitter, int frame) {
  const Eigen::Vector2d& j = jitter.for_frame(frame);
  return {wrap01(j.x() + radical_inverse(k, 2)), wrap01(j.y() + radical_inverse(k, 3))};
}

GBuffer rasterize(const StrandScene& scene, const Camera& camera, int spp,
                  const JitterSequence& jitter, int frame) {
  if (spp < 1) throw InvalidArgument("rasterize: spp must be >= 1");
  const int w = camera.width();
  const int h = camera.height();
  GBuffer g = GBuffer::zeros(h, w);
  if (scene.strands.empty()) return g;

  const StrandRasterizer tracer(scene, camera, frame);
  const Eigen::Isometry3d now = scene.rig.transform(frame);
  const Eigen::Isometry3d before = scene.rig.transform(frame > 0 ? frame - 1 : frame);
  const Eigen::Isometry3d to_previous = before * now.inverse();

  std::vector<Eigen::Vector2d> offsets(spp);
  for (int k = 0; k < spp; ++k) offsets[k] = subsample_offset(k, jitter, frame);

  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      int hits = 0;
      std::optional<RasterHit> front;
      for (int k = 0; k < spp; ++k) {
        auto hit = tracer.trace(Eigen::Vector2d(x, y) + offsets[k]);
        if (!hit) continue;
        ++hits;
        if (!front || hit->depth < front->depth) front = hit;
      }
      if (!front) continue;
      g.coverage.at(y, x) = static_cast<float>(static_cast<double>(hits) / spp);
      g.tangent.set_vec3(y, x, front->tangent);
      g.position.set_vec3(y, x, front->position);
      g.depth.at(y, x) = static_cast<float>(front->depth);
      if (!scene.rig.is_static()) {
        const auto cur = camera.project(front->position);
        const auto prev = camera.project(to_previous * front->position);
        if (cur && prev) {
          g.motion.at(y, x, 0) = static_cast<float>(cur->pixel.x() - prev->pixel.x());
          g.motion.at(y, x, 1) = static_cast<float>(cur->pixel.y() - prev->pixel.y());
        }
      }
    }
  });
  return g;
}

std::vector<DatasetFrame> make_dataset(const StrandScene& scene, const Camera& camera, int frames,
                                       const DatasetOptions& options) {
  if (frames < 1) throw InvalidArgument("make_dataset: frames must be >= 1");
  std::vector<DatasetFrame> out;
  out.reserve(frames);
  const JitterSequence reference_jitter = JitterSequence::none();
  for (int f = 0; f < frames; ++f) {
    out.push_back({rasterize(scene, camera, options.spp_noisy, options.jitter, f),
                   rasterize(scene, camera, options.spp_reference, reference_jitter, f)});
  }
  return out;
}

void write_gbuffer_dir(const std::filesystem::path& dir, const GBuffer& g) {
  std::filesystem::create_directories(dir);
  write_pfm(dir / "coverage.pfm", g.coverage);
  write_pfm(dir / "tangent.pfm", g.tangent);
  write_pfm(dir / "position.pfm", g.position);
  write_pfm(dir / "depth.pfm", g.depth);
  write_pfm(dir / "motion.pfm", g.motion);
}

GBuffer read_gbuffer_dir(const std::filesystem::path& dir) {
  GBuffer g{read_pfm(dir / "coverage.pfm"), read_pfm(dir / "tangent.pfm"),
            read_pfm(dir / "position.pfm"), read_pfm(dir / "depth.pfm"),
            read_pfm(dir / "motion.pfm")};
  g.validate();
  return g;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetFrame>& frames,
                   const Camera& camera, const DatasetOptions& options) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "hairgbuf-dataset";
  manifest["version"] = 1;
  manifest["frames"] = frames.size();
  manifest["width"] = camera.width();
  manifest["height"] = camera.height();
  manifest["spp_noisy"] = options.spp_noisy;
  manifest["spp_reference"] = options.spp_reference;
  manifest["tangent_encoding"] = "raw_unit_vector";
  manifest["motion_convention"] = "pixels, current minus previous, +x right, +y down";
  nlohmann::json jitter = nlohmann::json::array();
  for (const auto& j : options.jitter.samples()) jitter.push_back({j.x(), j.y()});
  manifest["jitter"] = jitter;
  nlohmann::json cam;
  std::vector<double> vp;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) vp.push_back(camera.view_projection()(r, c));
  cam["view_projection_row_major"] = vp;
  cam["fx"] = camera.fx();
  cam["fy"] = camera.fy();
  cam["eye"] = {camera.eye().x(), camera.eye().y(), camera.eye().z()};
  manifest["camera"] = cam;
  nlohmann::json dirs = nlohmann::json::array();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu", f);
    write_gbuffer_dir(dir / name / "noisy", frames[f].noisy);
    write_gbuffer_dir(dir / name / "reference", frames[f].reference);
    dirs.push_back(name);
  }
  manifest["frame_dirs"] = dirs;
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing dataset manifest");
}

}  // namespace hairgbuf
