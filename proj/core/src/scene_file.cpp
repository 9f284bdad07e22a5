#include "hairgbuf/scene_file.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "hairgbuf/error.hpp"

namespace hairgbuf {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(const KeyValue& kv, const std::string& what) {
  throw IoError(kv.source + ":" + std::to_string(kv.line) + " (" + kv.key + "): " + what);
}

double to_double(const std::string& text, const std::string& context) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw IoError(context + ": expected a number, got '" + text + "'");
  }
  return v;
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

// Parses "kind k=v k=v ..." into the leading word and a parameter map.
std::pair<std::string, std::map<std::string, std::string>> split_params(const KeyValue& kv) {
  std::istringstream in(kv.value);
  std::string kind;
  in >> kind;
  std::map<std::string, std::string> params;
  std::string item;
  while (in >> item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) fail(kv, "expected name=value, got '" + item + "'");
    params[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return {kind, params};
}

struct ParamReader {
  const KeyValue& kv;
  std::map<std::string, std::string>& params;

  std::string take(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) fail(kv, "missing parameter '" + name + "'");
    std::string v = it->second;
    params.erase(it);
    return v;
  }
  std::optional<std::string> maybe(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) return std::nullopt;
    std::string v = it->second;
    params.erase(it);
    return v;
  }
  double number(const std::string& name) { return to_double(take(name), where(name)); }
  Eigen::Vector3d vec(const std::string& name) { return parse_vec3(take(name), where(name)); }
  std::string where(const std::string& name) const {
    return kv.source + ":" + std::to_string(kv.line) + " parameter " + name;
  }
  void finish() {
    if (!params.empty()) fail(kv, "unknown parameter '" + params.begin()->first + "'");
  }
};

Strand parse_strand(const KeyValue& kv) {
  auto [kind, params] = split_params(kv);
  ParamReader r{kv, params};
  try {
    if (kind == "line") {
      const auto p0 = r.vec("p0");
      const auto p1 = r.vec("p1");
      const double width = r.number("width");
      r.finish();
      return Strand::line(p0, p1, width);
    }
    if (kind == "arc") {
      const auto center = r.vec("center");
      const double radius = r.number("radius");
      const auto normal = r.vec("normal");
      const auto start_dir = r.vec("start_dir");
      const double start = r.number("start");
      const double end = r.number("end");
      const double width = r.number("width");
      r.finish();
      return Strand::arc(center, radius, normal, start_dir, deg(start), deg(end), width);
    }
    if (kind == "helix") {
      const auto base = r.vec("base");
      const auto axis = r.vec("axis");
      const double radius = r.number("radius");
      const double pitch = r.number("pitch");
      const double turns = r.number("turns");
      const auto phase = r.maybe("phase");
      const double width = r.number("width");
      r.finish();
      return Strand::helix(base, axis, radius, pitch, turns,
                           phase ? deg(to_double(*phase, r.where("phase"))) : 0.0, width);
    }
  } catch (const InvalidArgument& e) {
    fail(kv, e.what());
  }
  fail(kv, "unknown strand kind '" + kind + "'");
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source) {
  std::vector<KeyValue> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw IoError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    KeyValue kv{trim(std::string_view(text).substr(0, eq)),
                trim(std::string_view(text).substr(eq + 1)), number, source};
    if (kv.key.empty()) throw IoError(source + ":" + std::to_string(number) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

double parse_double(const KeyValue& kv) {
  return to_double(kv.value, kv.source + ":" + std::to_string(kv.line) + " (" + kv.key + ")");
}

int parse_int(const KeyValue& kv) {
  int v = 0;
  const char* first = kv.value.data();
  const char* last = first + kv.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) fail(kv, "expected an integer, got '" + kv.value + "'");
  return v;
}

bool parse_bool(const KeyValue& kv) {
  std::string v = kv.value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(kv, "expected a boolean, got '" + kv.value + "'");
}

Eigen::Vector3d parse_vec3(const std::string& text, const std::string& context) {
  std::string spaced = text;
  std::replace(spaced.begin(), spaced.end(), ',', ' ');
  std::istringstream in(spaced);
  std::string parts[3];
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!(in >> parts[i])) throw IoError(context + ": expected three numbers, got '" + text + "'");
    v[i] = to_double(parts[i], context);
  }
  std::string extra;
  if (in >> extra) throw IoError(context + ": expected three numbers, got '" + text + "'");
  return v;
}

Camera SceneDescription::make_camera() const {
  CameraSpec spec = camera;
  if (spec.auto_fit && !scene.strands.empty()) {
    const auto box = scene.bounds();
    const Eigen::Vector3d center = box.center();
    const double radius = 0.5 * box.diagonal().norm();
    const double half_fov = 0.5 * deg(spec.fov_y_degrees);
    const double aspect = std::min(1.0, static_cast<double>(spec.width) / spec.height);
    const double distance = 1.05 * radius / std::sin(std::atan(std::tan(half_fov) * aspect));
    spec.target = center;
    spec.eye = center + Eigen::Vector3d(0.0, 0.0, distance);
  }
  return Camera::look_at(spec.eye, spec.target, spec.up, spec.fov_y_degrees, spec.width,
                         spec.height);
}

SceneDescription parse_scene(std::istream& in, const std::string& source) {
  SceneDescription desc;
  std::vector<RigKeyframe> keys;
  Eigen::Vector3d pivot = Eigen::Vector3d::Zero();
  std::vector<std::pair<SceneFamily, int>> generators;

  for (const KeyValue& kv : parse_key_values(in, source)) {
    const std::string where = source + ":" + std::to_string(kv.line);
    if (kv.key == "width") {
      desc.camera.width = parse_int(kv);
    } else if (kv.key == "height") {
      desc.camera.height = parse_int(kv);
    } else if (kv.key == "seed") {
      desc.scene.seed = static_cast<std::uint64_t>(parse_int(kv));
    } else if (kv.key == "camera.eye") {
      desc.camera.eye = parse_vec3(kv.value, where);
    } else if (kv.key == "camera.target") {
      desc.camera.target = parse_vec3(kv.value, where);
    } else if (kv.key == "camera.up") {
      desc.camera.up = parse_vec3(kv.value, where);
    } else if (kv.key == "camera.fov_y") {
      desc.camera.fov_y_degrees = parse_double(kv);
    } else if (kv.key == "camera.auto_fit") {
      desc.camera.auto_fit = parse_bool(kv);
    } else if (kv.key == "strand") {
      desc.scene.strands.push_back(parse_strand(kv));
    } else if (kv.key == "generate") {
      auto [kind, params] = split_params(kv);
      ParamReader r{kv, params};
      SceneFamily family;
      if (kind == "helix") {
        family = SceneFamily::Helix;
      } else if (kind == "arc") {
        family = SceneFamily::Arc;
      } else if (kind == "mixed") {
        family = SceneFamily::Mixed;
      } else {
        fail(kv, "unknown generator '" + kind + "'");
      }
      const auto count = r.maybe("count");
      r.finish();
      generators.emplace_back(family,
                              count ? static_cast<int>(to_double(*count, where)) : 12);
    } else if (kv.key == "rig.pivot") {
      pivot = parse_vec3(kv.value, where);
    } else if (kv.key == "keyframe") {
      std::map<std::string, std::string> params;
      std::istringstream items(kv.value);
      std::string item;
      while (items >> item) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(kv, "expected name=value, got '" + item + "'");
        params[item.substr(0, eq)] = item.substr(eq + 1);
      }
      ParamReader r{kv, params};
      RigKeyframe key{r.number("frame"), Eigen::Vector3d::Zero(), 0.0};
      if (auto t = r.maybe("translate")) key.translation = parse_vec3(*t, where);
      if (auto a = r.maybe("rotate_y")) key.rotate_y_degrees = to_double(*a, where);
      r.finish();
      keys.push_back(key);
    } else {
      fail(kv, "unknown key");
    }
  }

  for (const auto& [family, count] : generators) {
    StrandScene generated = make_seeded_scene(family, desc.scene.seed, count);
    for (auto& s : generated.strands) desc.scene.strands.push_back(std::move(s));
  }
  if (desc.camera.width <= 0 || desc.camera.height <= 0) {
    throw IoError(source + ": width and height must be positive");
  }
  desc.scene.rig = Rig(std::move(keys), pivot);
  return desc;
}

SceneDescription load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file " + path.string());
  return parse_scene(in, path.string());
}

}  // namespace hairgbuf
