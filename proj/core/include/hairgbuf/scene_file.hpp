#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hairgbuf/gbuffer.hpp"
#include "hairgbuf/strand.hpp"

namespace hairgbuf {

/// One `key = value` line. Blank lines and `#` comments are skipped.
struct KeyValue {
  std::string key;
  std::string value;
  int line;
  std::string source;
};

std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source);

/// Parsing helpers shared by the scene and pipeline config readers. They throw
/// IoError naming the source line on malformed input.
double parse_double(const KeyValue& kv);
int parse_int(const KeyValue& kv);
bool parse_bool(const KeyValue& kv);
/// Three numbers separated by commas and/or spaces.
Eigen::Vector3d parse_vec3(const std::string& text, const std::string& context);

struct CameraSpec {
  Eigen::Vector3d eye{0.0, 0.0, 4.0};
  Eigen::Vector3d target{0.0, 0.0, 0.0};
  Eigen::Vector3d up{0.0, 1.0, 0.0};
  double fov_y_degrees = 40.0;
  int width = 64;
  int height = 64;
  bool auto_fit = false;
};

struct SceneDescription {
  StrandScene scene;
  CameraSpec camera;

  /// Builds the camera; with `camera.auto_fit` the eye is moved along +z so the
  /// scene bounds fill the view.
  Camera make_camera() const;
};

/// Scene grammar (one entry per line):
///
///   width = 64                     height = 64
///   seed = 7
///   camera.eye = 0 0 4             camera.target = 0 0 0
///   camera.up = 0 1 0              camera.fov_y = 40
///   camera.auto_fit = true
///   strand = line  p0=x,y,z p1=x,y,z width=w
///   strand = arc   center=x,y,z radius=r normal=x,y,z start_dir=x,y,z
///                  start=deg end=deg width=w
///   strand = helix base=x,y,z axis=x,y,z radius=r pitch=p turns=t
///                  [phase=deg] width=w
///   generate = helix|arc|mixed [count=N]      (procedural, uses seed)
///   rig.pivot = x y z
///   keyframe = frame=f [translate=x,y,z] [rotate_y=deg]
SceneDescription parse_scene(std::istream& in, const std::string& source = "<scene>");
SceneDescription load_scene(const std::filesystem::path& path);

}  // namespace hairgbuf
