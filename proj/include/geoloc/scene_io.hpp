#pragma once

// Scene files: one JSON document per scene, "schema": 1.
// See docs/scene_schema.md for the field reference.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "geoloc/atomic_file.hpp"
#include "geoloc/error.hpp"
#include "geoloc/scene.hpp"

namespace geoloc {

inline constexpr int kSceneSchemaVersion = 1;

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson vec_json(const Vec2& v) { return ojson::array({v[0], v[1]}); }
inline ojson vec_json(const Vec3& v) { return ojson::array({v[0], v[1], v[2]}); }
inline ojson bbox_json(const BBox& b) { return ojson::array({b.left, b.top, b.width, b.height}); }

template <typename Json>
std::vector<double> number_array(const Json& j, std::size_t expected, const std::string& where) {
  if (!j.is_array()) fail(ErrorKind::Schema, where + ": expected an array");
  if (expected != 0 && j.size() != expected)
    fail(ErrorKind::Schema, where + ": expected " + std::to_string(expected) + " numbers, got " + std::to_string(j.size()));
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) fail(ErrorKind::Schema, where + "[" + std::to_string(k) + "]: expected a number");
    out.push_back(j[k].template get<double>());
  }
  return out;
}

template <typename Json>
const Json& field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::Schema, where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorKind::Schema, where + ": missing field '" + key + "'");
  return *it;
}

template <typename Json>
double number(const Json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_number()) fail(ErrorKind::Schema, where + "." + key + ": expected a number");
  return v.template get<double>();
}

template <typename Json>
int integer(const Json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_number_integer()) fail(ErrorKind::Schema, where + "." + key + ": expected an integer");
  return v.template get<int>();
}

inline Vec2 vec2(const std::vector<double>& v) { return {v[0], v[1]}; }
inline Vec3 vec3(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

/// Unit vectors within 1e-3 of unit norm are renormalized; exact ones are kept bit-for-bit.
inline Vec2 unit_direction(const Vec2& r, const std::string& where) {
  const double n = r.norm();
  if (std::abs(n - 1.0) > 1e-3) fail(ErrorKind::InvariantViolation, where + ": facing direction is not unit length");
  return std::abs(n - 1.0) > 1e-12 ? Vec2(r / n) : r;
}

inline Eigen::Quaterniond unit_quaternion(const Eigen::Quaterniond& q, const std::string& where) {
  const double n = q.norm();
  if (std::abs(n - 1.0) > 1e-3)
    fail(ErrorKind::InvariantViolation, where + ": ego quaternion norm " + std::to_string(n) + " is not within 1e-3 of 1");
  if (std::abs(n - 1.0) > 1e-12) return q.normalized();
  return q;
}

template <typename Json>
EgoPose parse_ego(const Json& j, const std::string& where) {
  EgoPose ego;
  if (j.contains("matrix")) {
    const auto& m = field(j, "matrix", where);
    if (!m.is_array() || m.size() != 4) fail(ErrorKind::Schema, where + ".matrix: expected 4 rows");
    Eigen::Matrix4d mat;
    for (int r = 0; r < 4; ++r) {
      const auto row = number_array(m[r], 4, where + ".matrix[" + std::to_string(r) + "]");
      for (int c = 0; c < 4; ++c) mat(r, c) = row[c];
    }
    const Mat3 q = mat.topLeftCorner<3, 3>();
    const double err = (q.transpose() * q - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (err >= 1e-6 || q.determinant() <= 0.0)
      fail(ErrorKind::InvariantViolation, where + ".matrix: rotation block is not orthonormal");
    ego.rotation = Eigen::Quaterniond(q).normalized();
    ego.translation = mat.topRightCorner<3, 1>();
    return ego;
  }
  const auto q = number_array(field(j, "rotation", where), 4, where + ".rotation");
  ego.rotation = unit_quaternion(Eigen::Quaterniond(q[0], q[1], q[2], q[3]), where + ".rotation");
  ego.translation = vec3(number_array(field(j, "translation", where), 3, where + ".translation"));
  return ego;
}

template <typename Json>
BBox parse_bbox(const Json& j, const std::string& where) {
  const auto b = number_array(j, 4, where);
  return {b[0], b[1], b[2], b[3]};
}

}  // namespace detail

inline nlohmann::ordered_json scene_to_json(const SceneSequence& s) {
  using detail::ojson;
  ojson frames = ojson::array();
  for (const auto& f : s.frames) {
    ojson jf;
    jf["frame_index"] = f.frame_index;
    jf["timestamp"] = f.timestamp;
    if (!f.image.empty()) jf["image"] = f.image;
    jf["intrinsics"] = {{"fx", f.intrinsics.fx}, {"fy", f.intrinsics.fy}, {"px", f.intrinsics.px},
                        {"py", f.intrinsics.py}, {"width", f.intrinsics.width}, {"height", f.intrinsics.height}};
    const auto& q = f.ego.rotation;
    jf["ego"] = {{"rotation", ojson::array({q.w(), q.x(), q.y(), q.z()})},
                 {"translation", detail::vec_json(f.ego.translation)}};
    ojson dets = ojson::array();
    for (const auto& d : f.detections) {
      ojson jd;
      jd["bbox"] = detail::bbox_json(d.bbox);
      jd["confidence"] = d.confidence;
      if (d.center) jd["center"] = detail::vec_json(*d.center);
      if (d.observation)
        jd["observation"] = {{"center", detail::vec_json(d.observation->center)},
                             {"depth", d.observation->depth},
                             {"rotation", detail::vec_json(d.observation->R)}};
      if (d.object_id) jd["object_id"] = *d.object_id;
      if (!d.appearance.empty()) jd["appearance"] = d.appearance;
      if (!d.embedding.empty()) jd["embedding"] = d.embedding;
      dets.push_back(std::move(jd));
    }
    jf["detections"] = std::move(dets);
    if (f.gt_objects) {
      ojson gts = ojson::array();
      for (const auto& g : *f.gt_objects) {
        ojson jg;
        jg["object_id"] = g.object_id;
        jg["type"] = g.type;
        jg["translation"] = detail::vec_json(g.pose.T);
        jg["rotation"] = detail::vec_json(g.pose.R);
        if (g.bbox) jg["bbox"] = detail::bbox_json(*g.bbox);
        gts.push_back(std::move(jg));
      }
      jf["gt_objects"] = std::move(gts);
    }
    frames.push_back(std::move(jf));
  }
  ojson root;
  root["schema"] = kSceneSchemaVersion;
  root["scene_id"] = s.scene_id;
  root["frames"] = std::move(frames);
  return root;
}

/// Parses and validates a scene document. Frames holding more than
/// `capacity` detections keep the most confident ones and log a warning.
template <typename Json>
SceneSequence scene_from_json(const Json& root, int capacity = kDefaultCapacity, std::ostream* warnings = &std::cerr) {
  using namespace detail;
  if (!root.is_object()) fail(ErrorKind::Schema, "scene document must be a JSON object");
  const int version = integer(root, "schema", "scene");
  if (version != kSceneSchemaVersion) fail(ErrorKind::Schema, "unsupported scene schema " + std::to_string(version));
  SceneSequence s;
  const auto& id = field(root, "scene_id", "scene");
  if (!id.is_string()) fail(ErrorKind::Schema, "scene.scene_id: expected a string");
  s.scene_id = id.template get<std::string>();
  const auto& frames = field(root, "frames", "scene");
  if (!frames.is_array()) fail(ErrorKind::Schema, "scene.frames: expected an array");
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& jf = frames[k];
    const std::string where = "frames[" + std::to_string(k) + "]";
    FrameRecord f;
    f.frame_index = integer(jf, "frame_index", where);
    f.timestamp = number(jf, "timestamp", where);
    if (jf.contains("image")) f.image = jf["image"].template get<std::string>();
    const auto& ji = field(jf, "intrinsics", where);
    const std::string wi = where + ".intrinsics";
    f.intrinsics = {number(ji, "fx", wi), number(ji, "fy", wi), number(ji, "px", wi),
                    number(ji, "py", wi), integer(ji, "width", wi), integer(ji, "height", wi)};
    f.ego = parse_ego(field(jf, "ego", where), where + ".ego");
    const auto& jd = field(jf, "detections", where);
    if (!jd.is_array()) fail(ErrorKind::Schema, where + ".detections: expected an array");
    for (std::size_t d = 0; d < jd.size(); ++d) {
      const auto& x = jd[d];
      const std::string wd = where + ".detections[" + std::to_string(d) + "]";
      Detection det;
      det.bbox = parse_bbox(field(x, "bbox", wd), wd + ".bbox");
      det.confidence = number(x, "confidence", wd);
      if (x.contains("center")) det.center = vec2(number_array(x["center"], 2, wd + ".center"));
      if (x.contains("observation")) {
        const auto& o = x["observation"];
        const std::string wo = wd + ".observation";
        PixelObservation obs;
        obs.center = vec2(number_array(field(o, "center", wo), 2, wo + ".center"));
        obs.depth = number(o, "depth", wo);
        obs.R = unit_direction(vec2(number_array(field(o, "rotation", wo), 2, wo + ".rotation")), wo + ".rotation");
        det.observation = obs;
      }
      if (x.contains("object_id")) det.object_id = integer(x, "object_id", wd);
      if (x.contains("appearance")) det.appearance = number_array(x["appearance"], 0, wd + ".appearance");
      if (x.contains("embedding")) det.embedding = number_array(x["embedding"], 0, wd + ".embedding");
      f.detections.push_back(std::move(det));
    }
    if (jf.contains("gt_objects")) {
      const auto& jg = jf["gt_objects"];
      if (!jg.is_array()) fail(ErrorKind::Schema, where + ".gt_objects: expected an array");
      std::vector<GtObject> gts;
      for (std::size_t g = 0; g < jg.size(); ++g) {
        const std::string wg = where + ".gt_objects[" + std::to_string(g) + "]";
        GtObject obj;
        obj.object_id = integer(jg[g], "object_id", wg);
        if (jg[g].contains("type")) obj.type = jg[g]["type"].template get<std::string>();
        obj.pose.T = vec3(number_array(field(jg[g], "translation", wg), 3, wg + ".translation"));
        obj.pose.R = unit_direction(vec2(number_array(field(jg[g], "rotation", wg), 2, wg + ".rotation")), wg + ".rotation");
        obj.pose.frame = FrameKind::World;
        if (jg[g].contains("bbox")) obj.bbox = parse_bbox(jg[g]["bbox"], wg + ".bbox");
        gts.push_back(std::move(obj));
      }
      f.gt_objects = std::move(gts);
    }
    const std::size_t dropped = apply_capacity(f, capacity);
    if (dropped > 0 && warnings)
      *warnings << "warning: " << where << " kept the " << capacity << " most confident detections, dropped "
                << dropped << "\n";
    s.frames.push_back(std::move(f));
  }
  validate_scene(s, capacity);
  return s;
}

inline SceneSequence parse_scene(const std::string& text, int capacity = kDefaultCapacity,
                                 std::ostream* warnings = &std::cerr) {
  nlohmann::ordered_json root;
  try {
    root = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Parse, e.what());
  }
  return scene_from_json(root, capacity, warnings);
}

inline SceneSequence load_scene(const std::filesystem::path& path, int capacity = kDefaultCapacity,
                                std::ostream* warnings = &std::cerr) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open scene file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scene(buf.str(), capacity, warnings);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

inline std::string serialize_scene(const SceneSequence& s) { return scene_to_json(s).dump(1) + "\n"; }

inline void save_scene(const SceneSequence& s, const std::filesystem::path& path) {
  write_file_atomically(path, serialize_scene(s));
}

}  // namespace geoloc
