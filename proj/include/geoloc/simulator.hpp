#pragma once

// Synthetic drive past static traffic lights.
//
// World axes: x east, y down, z north; the camera rides 1.5 m above the
// ground (y = -1.5). Lights stand beside the road facing oncoming traffic.
// All randomness derives from SimConfig::seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "geoloc/error.hpp"
#include "geoloc/geometry.hpp"
#include "geoloc/matcher_model.hpp"
#include "geoloc/scene.hpp"
#include "geoloc/tensor.hpp"

namespace geoloc {

enum class Trajectory { Straight, Turn };

struct SimConfig {
  std::uint64_t seed = 0;
  int n_frames = 40;
  double frame_rate = 2.0;  // Hz
  Trajectory trajectory = Trajectory::Straight;
  double speed = 8.0;       // m/s
  double turn_rate = 4.0;   // deg/s, Turn only
  int n_objects = 4;
  double lateral_min = 3.0, lateral_max = 8.0;
  double height_min = 3.0, height_max = 6.0;
  double min_separation = 3.0;
  double facing_jitter = 0.0;  // deg
  double object_width = 0.35, object_height = 1.0;
  double camera_height = 1.5;
  double visibility_max_range = 100.0;
  double min_depth = 1.0;
  int min_visible_frames = 5;
  CameraIntrinsics intrinsics;
  // noise
  double center_sigma = 0.0;      // px
  double depth_sigma = 0.0;       // relative
  double rotation_sigma = 0.0;    // deg
  double appearance_sigma = 0.0;
  double embedding_sigma = 0.0;
  // detector corruption
  double miss_rate = 0.0;
  double false_positive_rate = 0.0;  // probability of one false positive per frame
  double bbox_jitter = 0.0;          // px
  // descriptor providers
  int appearance_dim = 64;
  int embedding_dim = 8;
  std::uint64_t encoder_seed = 7;
  int capacity = kDefaultCapacity;

  void validate() const {
    auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::Config, field + " " + why); };
    if (n_frames < 2) bad("n_frames", "must be >= 2");
    if (!(frame_rate > 0.0)) bad("frame_rate", "must be > 0");
    if (!(speed >= 0.0)) bad("speed", "must be >= 0");
    if (n_objects < 0) bad("n_objects", "must be >= 0");
    if (!(lateral_min >= 0.0 && lateral_max >= lateral_min)) bad("lateral range", "must satisfy 0 <= min <= max");
    if (!(height_max >= height_min)) bad("height range", "must satisfy min <= max");
    if (!(min_separation >= 0.0)) bad("min_separation", "must be >= 0");
    if (!(object_width > 0.0 && object_height > 0.0)) bad("object size", "must be > 0");
    if (!(visibility_max_range > 0.0)) bad("visibility_max_range", "must be > 0");
    if (!(min_depth > 0.0)) bad("min_depth", "must be > 0");
    for (auto [name, v] : {std::pair{"center_sigma", center_sigma}, {"depth_sigma", depth_sigma},
                           {"rotation_sigma", rotation_sigma}, {"appearance_sigma", appearance_sigma},
                           {"embedding_sigma", embedding_sigma}, {"bbox_jitter", bbox_jitter},
                           {"facing_jitter", facing_jitter}})
      if (!(v >= 0.0)) bad(name, "must be >= 0");
    for (auto [name, v] : {std::pair{"miss_rate", miss_rate}, {"false_positive_rate", false_positive_rate}})
      if (!(v >= 0.0 && v <= 1.0)) bad(name, "must be in [0, 1]");
    if (appearance_dim < 0 || embedding_dim < 0) bad("descriptor dims", "must be >= 0");
    if (capacity < 1) bad("capacity", "must be >= 1");
    intrinsics.validate();
  }
};

inline nlohmann::json to_json(const SimConfig& c) {
  return {{"seed", c.seed},
          {"n_frames", c.n_frames},
          {"frame_rate", c.frame_rate},
          {"trajectory", c.trajectory == Trajectory::Straight ? "straight" : "turn"},
          {"speed", c.speed},
          {"turn_rate", c.turn_rate},
          {"n_objects", c.n_objects},
          {"lateral_min", c.lateral_min},
          {"lateral_max", c.lateral_max},
          {"height_min", c.height_min},
          {"height_max", c.height_max},
          {"min_separation", c.min_separation},
          {"facing_jitter", c.facing_jitter},
          {"object_width", c.object_width},
          {"object_height", c.object_height},
          {"camera_height", c.camera_height},
          {"visibility_max_range", c.visibility_max_range},
          {"min_depth", c.min_depth},
          {"min_visible_frames", c.min_visible_frames},
          {"intrinsics",
           {{"fx", c.intrinsics.fx},
            {"fy", c.intrinsics.fy},
            {"px", c.intrinsics.px},
            {"py", c.intrinsics.py},
            {"width", c.intrinsics.width},
            {"height", c.intrinsics.height}}},
          {"center_sigma", c.center_sigma},
          {"depth_sigma", c.depth_sigma},
          {"rotation_sigma", c.rotation_sigma},
          {"appearance_sigma", c.appearance_sigma},
          {"embedding_sigma", c.embedding_sigma},
          {"miss_rate", c.miss_rate},
          {"false_positive_rate", c.false_positive_rate},
          {"bbox_jitter", c.bbox_jitter},
          {"appearance_dim", c.appearance_dim},
          {"embedding_dim", c.embedding_dim},
          {"encoder_seed", c.encoder_seed},
          {"capacity", c.capacity}};
}

/// Keys present in `j` override `c`; unknown keys are a config error.
inline SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig c = {}) {
  if (!j.is_object()) fail(ErrorKind::Config, "simulator config must be a JSON object");
  const nlohmann::json known = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) fail(ErrorKind::Config, "unknown simulator config key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("seed", c.seed);
    get("n_frames", c.n_frames);
    get("frame_rate", c.frame_rate);
    get("speed", c.speed);
    get("turn_rate", c.turn_rate);
    get("n_objects", c.n_objects);
    get("lateral_min", c.lateral_min);
    get("lateral_max", c.lateral_max);
    get("height_min", c.height_min);
    get("height_max", c.height_max);
    get("min_separation", c.min_separation);
    get("facing_jitter", c.facing_jitter);
    get("object_width", c.object_width);
    get("object_height", c.object_height);
    get("camera_height", c.camera_height);
    get("visibility_max_range", c.visibility_max_range);
    get("min_depth", c.min_depth);
    get("min_visible_frames", c.min_visible_frames);
    get("center_sigma", c.center_sigma);
    get("depth_sigma", c.depth_sigma);
    get("rotation_sigma", c.rotation_sigma);
    get("appearance_sigma", c.appearance_sigma);
    get("embedding_sigma", c.embedding_sigma);
    get("miss_rate", c.miss_rate);
    get("false_positive_rate", c.false_positive_rate);
    get("bbox_jitter", c.bbox_jitter);
    get("appearance_dim", c.appearance_dim);
    get("embedding_dim", c.embedding_dim);
    get("encoder_seed", c.encoder_seed);
    get("capacity", c.capacity);
    if (j.contains("trajectory")) {
      const auto t = j.at("trajectory").get<std::string>();
      if (t != "straight" && t != "turn") fail(ErrorKind::Config, "trajectory must be straight or turn");
      c.trajectory = t == "straight" ? Trajectory::Straight : Trajectory::Turn;
    }
    if (j.contains("intrinsics")) {
      const auto& k = j.at("intrinsics");
      auto geti = [&](const char* key, auto& field) {
        if (k.contains(key)) k.at(key).get_to(field);
      };
      geti("fx", c.intrinsics.fx);
      geti("fy", c.intrinsics.fy);
      geti("px", c.intrinsics.px);
      geti("py", c.intrinsics.py);
      geti("width", c.intrinsics.width);
      geti("height", c.intrinsics.height);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("simulator config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace detail {

/// Independent random stream per (seed, purpose, index).
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

enum Stream : std::uint64_t { kPlacement = 1, kDetector = 2, kAppearance = 3, kEmbedding = 4, kLatent = 5 };

inline constexpr int kLatentDim = 6;
inline constexpr std::size_t kMapSide = 4;

inline std::vector<double> gaussian_vector(std::mt19937_64& rng, int n, double sigma = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = sigma * g(rng);
  return v;
}

}  // namespace detail

/// Camera pose at frame k: heading psi (about +y), position on the ground track.
inline std::vector<EgoPose> simulate_trajectory(const SimConfig& c, int frames) {
  std::vector<EgoPose> out;
  const double dt = 1.0 / c.frame_rate;
  const double omega = c.trajectory == Trajectory::Turn ? c.turn_rate * std::numbers::pi / 180.0 : 0.0;
  Vec3 p(0.0, -c.camera_height, 0.0);
  double yaw = 0.0;
  for (int k = 0; k < frames; ++k) {
    out.push_back(EgoPose::from_yaw(yaw, p));
    const double mid = yaw + 0.5 * omega * dt;
    p += c.speed * dt * Vec3(std::sin(mid), 0.0, std::cos(mid));
    yaw += omega * dt;
  }
  return out;
}

struct SimObject {
  int object_id = 0;
  Pose5D pose;  // world
};

/// Camera-frame pose if the object is visible from `ego`.
inline std::optional<Pose5D> visible_pose(const SimConfig& c, const SimObject& o, const EgoPose& ego) {
  const Pose5D cam = world_to_camera(o.pose, ego);
  if (!(cam.T.z() > c.min_depth) || cam.T.norm() > c.visibility_max_range) return std::nullopt;
  const Vec2 px = project(cam.T, c.intrinsics);
  if (px.x() < 0.0 || px.x() >= c.intrinsics.width || px.y() < 0.0 || px.y() >= c.intrinsics.height)
    return std::nullopt;
  return cam;
}

inline BBox object_bbox(const SimConfig& c, const Pose5D& cam) {
  const Vec2 px = project(cam.T, c.intrinsics);
  const double w = c.intrinsics.fx * c.object_width / cam.T.z();
  const double h = c.intrinsics.fy * c.object_height / cam.T.z();
  return {px.x() - 0.5 * w, px.y() - 0.5 * h, w, h};
}

/// Lights placed along the driven path (plus a look-ahead), resampled until
/// separation and visibility constraints hold.
inline std::vector<SimObject> place_objects(const SimConfig& c) {
  const std::vector<EgoPose> path = simulate_trajectory(c, c.n_frames);
  const int lookahead = static_cast<int>(std::ceil(c.visibility_max_range / std::max(c.speed / c.frame_rate, 1e-9)));
  const std::vector<EgoPose> extended = simulate_trajectory(c, c.n_frames + std::min(lookahead, 400));
  auto rng = detail::stream(c.seed, detail::kPlacement);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, c.facing_jitter * std::numbers::pi / 180.0);

  std::vector<SimObject> objects;
  for (int id = 1; id <= c.n_objects; ++id) {
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const double s = u01(rng) * static_cast<double>(extended.size() - 1);
      const auto k = static_cast<std::size_t>(s);
      const EgoPose& a = extended[k];
      const EgoPose& b = extended[std::min(k + 1, extended.size() - 1)];
      const double f = s - static_cast<double>(k);
      const Vec3 ground = (1.0 - f) * a.translation + f * b.translation;
      const double yaw = (1.0 - f) * a.yaw() + f * b.yaw();
      const Vec3 right(std::cos(yaw), 0.0, -std::sin(yaw));
      const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
      const double lateral = c.lateral_min + u01(rng) * (c.lateral_max - c.lateral_min);
      const double height = c.height_min + u01(rng) * (c.height_max - c.height_min);
      const double facing = yaw + std::numbers::pi + jitter(rng);
      SimObject o{id, {ground + side * lateral * right, Vec2(std::sin(facing), std::cos(facing)), FrameKind::World}};
      o.pose.T.y() = -height;
      bool separated = true;
      for (const auto& other : objects) {
        const Vec3 d = other.pose.T - o.pose.T;
        if (std::hypot(d.x(), d.z()) < c.min_separation) separated = false;
      }
      if (!separated) continue;
      int visible = 0;
      for (const auto& ego : path) visible += visible_pose(c, o, ego).has_value();
      if (visible < std::min(c.min_visible_frames, c.n_frames)) continue;
      objects.push_back(o);
      placed = true;
    }
    if (!placed) fail(ErrorKind::Config, "cannot place object " + std::to_string(id) + " under the placement constraints");
  }
  return objects;
}

/// Fixed random attention logits and latent-to-feature encoder shared by every scene.
struct EmbeddingEncoder {
  Eigen::MatrixXd B;  // E x latent
  Tensor attention;   // side x side logits

  explicit EmbeddingEncoder(const SimConfig& c)
      : B(c.embedding_dim, detail::kLatentDim), attention({detail::kMapSide, detail::kMapSide}) {
    auto rng = detail::stream(c.encoder_seed, detail::kEmbedding, 0xE7C0DEULL);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < B.rows(); ++i)
      for (Eigen::Index j = 0; j < B.cols(); ++j) B(i, j) = g(rng);
    for (double& a : attention.data) a = g(rng);
  }

  /// F[p] = B z + noise at every cell, then G = attention_pool(F, a).
  std::vector<double> embed(const std::vector<double>& latent, std::mt19937_64& noise_rng, double sigma) const {
    const auto E = static_cast<std::size_t>(B.rows());
    const Eigen::VectorXd base = B * Eigen::Map<const Eigen::VectorXd>(latent.data(), detail::kLatentDim);
    Tensor F({detail::kMapSide, detail::kMapSide, E});
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t p = 0; p < detail::kMapSide * detail::kMapSide; ++p)
      for (std::size_t e = 0; e < E; ++e) F.data[p * E + e] = base[static_cast<Eigen::Index>(e)] + sigma * g(noise_rng);
    return attention_pool(F, attention);
  }
};

/// Per-object base appearance: a seeded N(0, 1) vector keyed by object id.
inline std::vector<double> base_appearance(const SimConfig& c, int object_id) {
  auto rng = detail::stream(c.seed, detail::kAppearance, static_cast<std::uint64_t>(object_id));
  return detail::gaussian_vector(rng, c.appearance_dim);
}

inline std::vector<double> object_latent(const SimConfig& c, int object_id) {
  auto rng = detail::stream(c.seed, detail::kLatent, static_cast<std::uint64_t>(object_id));
  return detail::gaussian_vector(rng, detail::kLatentDim);
}

/// Appearance vectors for every detection of the scene, frame-major:
/// base vector of the object id plus N(0, sigma) per component; detections
/// without an id get fresh N(0, 1) vectors.
inline std::vector<std::vector<std::vector<double>>> oracle_descriptors(const SceneSequence& scene, const SimConfig& c) {
  auto rng = detail::stream(c.seed, detail::kAppearance, 0xFFFFFFFFULL);
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& f : scene.frames) {
    auto& frame = out.emplace_back();
    for (const auto& d : f.detections) {
      if (!d.object_id) {
        frame.push_back(detail::gaussian_vector(rng, c.appearance_dim));
        continue;
      }
      std::vector<double> v = base_appearance(c, *d.object_id);
      const auto noise = detail::gaussian_vector(rng, c.appearance_dim, c.appearance_sigma);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] += noise[k];
      frame.push_back(std::move(v));
    }
  }
  return out;
}

/// Geometry embeddings G for every detection, frame-major. True objects
/// encode their own latent, so with zero noise G is constant per object.
inline std::vector<std::vector<std::vector<double>>> oracle_embeddings(const SceneSequence& scene, const SimConfig& c) {
  const EmbeddingEncoder enc(c);
  auto rng = detail::stream(c.seed, detail::kEmbedding);
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& f : scene.frames) {
    auto& frame = out.emplace_back();
    for (const auto& d : f.detections) {
      const std::vector<double> latent =
          d.object_id ? object_latent(c, *d.object_id) : detail::gaussian_vector(rng, detail::kLatentDim);
      frame.push_back(enc.embed(latent, rng, c.embedding_sigma));
    }
  }
  return out;
}

inline SceneSequence generate_scene(const SimConfig& c) {
  c.validate();
  const std::vector<SimObject> objects = place_objects(c);
  const std::vector<EgoPose> path = simulate_trajectory(c, c.n_frames);
  auto rng = detail::stream(c.seed, detail::kDetector);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const CameraIntrinsics& K = c.intrinsics;

  SceneSequence scene;
  scene.scene_id = "sim-" + std::to_string(c.seed);
  for (int k = 0; k < c.n_frames; ++k) {
    FrameRecord f;
    f.frame_index = k + 1;
    f.timestamp = k / c.frame_rate;
    f.intrinsics = K;
    f.ego = path[static_cast<std::size_t>(k)];
    f.gt_objects.emplace();
    for (const auto& o : objects) {
      const auto cam = visible_pose(c, o, f.ego);
      if (!cam) continue;
      const BBox box = object_bbox(c, *cam);
      f.gt_objects->push_back({o.object_id, o.pose, "vertical", box});
      if (u01(rng) < c.miss_rate) continue;

      Detection d;
      d.object_id = o.object_id;
      d.confidence = 0.5 + 0.5 * u01(rng);
      Vec2 center = project(cam->T, K) + c.center_sigma * Vec2(g(rng), g(rng));
      center.x() = std::clamp(center.x(), 0.0, static_cast<double>(K.width));
      center.y() = std::clamp(center.y(), 0.0, static_cast<double>(K.height));
      const double depth = cam->T.z() * std::max(1.0 + c.depth_sigma * g(rng), 0.05);
      const double rot_noise = c.rotation_sigma * std::numbers::pi / 180.0 * g(rng);
      d.observation = PixelObservation{center, depth, normalize_rotation(rotate_horizontal(cam->R, rot_noise))};
      d.center = center;
      d.bbox = box;
      if (c.bbox_jitter > 0.0) {
        d.bbox.left += c.bbox_jitter * g(rng);
        d.bbox.top += c.bbox_jitter * g(rng);
        d.bbox.width = std::max(1.0, d.bbox.width + c.bbox_jitter * g(rng));
        d.bbox.height = std::max(1.0, d.bbox.height + c.bbox_jitter * g(rng));
      }
      f.detections.push_back(std::move(d));
    }
    if (u01(rng) < c.false_positive_rate) {
      Detection d;
      d.confidence = 0.3 + 0.4 * u01(rng);
      const Vec2 center(u01(rng) * K.width, u01(rng) * K.height);
      const double depth = 5.0 + 75.0 * u01(rng);
      const double heading = 2.0 * std::numbers::pi * u01(rng);
      d.observation = PixelObservation{center, depth, Vec2(std::sin(heading), std::cos(heading))};
      d.center = center;
      const double w = K.fx * c.object_width / depth, h = K.fy * c.object_height / depth;
      d.bbox = {center.x() - 0.5 * w, center.y() - 0.5 * h, w, h};
      f.detections.push_back(std::move(d));
    }
    apply_capacity(f, c.capacity);
    scene.frames.push_back(std::move(f));
  }

  const auto appearance = oracle_descriptors(scene, c);
  const auto embedding = oracle_embeddings(scene, c);
  for (std::size_t k = 0; k < scene.frames.size(); ++k)
    for (std::size_t i = 0; i < scene.frames[k].detections.size(); ++i) {
      scene.frames[k].detections[i].appearance = appearance[k][i];
      scene.frames[k].detections[i].embedding = embedding[k][i];
    }
  return scene;
}

/// Seeds of a batch of scenes: base, base + 1, ...
inline std::vector<SceneSequence> generate_scenes(SimConfig c, int count) {
  std::vector<SceneSequence> out;
  const std::uint64_t base = c.seed;
  for (int k = 0; k < count; ++k) {
    c.seed = base + static_cast<std::uint64_t>(k);
    out.push_back(generate_scene(c));
  }
  return out;
}

struct DatasetEntry {
  std::size_t scene = 0;
  TrainingPair pair;
};

/// Frame pairs sampled per scene, each scene with its own derived seed.
inline std::vector<DatasetEntry> sample_dataset(const std::vector<SceneSequence>& scenes, int n_max, int pairs_per_scene,
                                                std::uint64_t seed, int capacity = kDefaultCapacity) {
  std::vector<DatasetEntry> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    if (!scenes[s].has_ground_truth())
      fail(ErrorKind::InvariantViolation, "scene '" + scenes[s].scene_id + "' has no ground truth");
    for (auto& p : sample_training_pairs(scenes[s], n_max, pairs_per_scene, seed * 1000003ULL + s, capacity))
      out.push_back({s, std::move(p)});
  }
  return out;
}

inline MatchingSample make_matching_sample(const SceneSequence& scene, const TrainingPair& p,
                                           double depth_scale = 50.0) {
  const EgoPose& ref = scene.reference_ego();
  return {make_frame_sample(scene.frames[static_cast<std::size_t>(p.frame_a)], ref, depth_scale),
          make_frame_sample(scene.frames[static_cast<std::size_t>(p.frame_b)], ref, depth_scale), p.match,
          p.separation};
}

inline std::vector<MatchingSample> make_matching_dataset(const std::vector<SceneSequence>& scenes, int n_max,
                                                         int pairs_per_scene, std::uint64_t seed,
                                                         int capacity = kDefaultCapacity, double depth_scale = 50.0) {
  std::vector<MatchingSample> out;
  for (const auto& e : sample_dataset(scenes, n_max, pairs_per_scene, seed, capacity))
    out.push_back(make_matching_sample(scenes[e.scene], e.pair, depth_scale));
  return out;
}

}  // namespace geoloc
