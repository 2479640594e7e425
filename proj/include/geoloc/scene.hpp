#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "geoloc/error.hpp"
#include "geoloc/geometry.hpp"

namespace geoloc {

inline constexpr int kDefaultCapacity = 30;  // N, max objects per frame
inline constexpr int kDefaultMaxSeparation = 35;  // n_max

struct BBox {
  double left = 0.0;
  double top = 0.0;
  double width = 1.0;
  double height = 1.0;

  double right() const { return left + width; }
  double bottom() const { return top + height; }
  Vec2 center() const { return {left + 0.5 * width, top + 0.5 * height}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline double iou(const BBox& a, const BBox& b) {
  const double w = std::min(a.right(), b.right()) - std::max(a.left, b.left);
  const double h = std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.width * a.height + b.width * b.height - inter);
}

struct Detection {
  BBox bbox;
  double confidence = 1.0;
  std::optional<Vec2> center;                   // pose-head center estimate
  std::optional<PixelObservation> observation;  // center + depth + facing
  std::optional<int> object_id;                 // ground-truth identity, absent for false positives
  std::vector<double> appearance;
  std::vector<double> embedding;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GtObject {
  int object_id = 0;
  Pose5D pose{Vec3::Zero(), Vec2(0.0, 1.0), FrameKind::World};
  std::string type = "vertical";
  std::optional<BBox> bbox;

  friend bool operator==(const GtObject&, const GtObject&) = default;
};

struct FrameRecord {
  int frame_index = 0;
  double timestamp = 0.0;
  CameraIntrinsics intrinsics;
  EgoPose ego;
  std::vector<Detection> detections;
  std::optional<std::vector<GtObject>> gt_objects;
  std::string image;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct SceneSequence {
  std::string scene_id;
  std::vector<FrameRecord> frames;

  /// The first frame's camera defines the reference frame.
  const EgoPose& reference_ego() const { return frames.front().ego; }

  bool has_ground_truth() const {
    return !frames.empty() &&
           std::all_of(frames.begin(), frames.end(), [](const FrameRecord& f) { return f.gt_objects.has_value(); });
  }

  friend bool operator==(const SceneSequence&, const SceneSequence&) = default;
};

inline void validate_detection(const Detection& d, const CameraIntrinsics& K, const std::string& where) {
  if (!(d.bbox.width > 0.0) || !(d.bbox.height > 0.0))
    fail(ErrorKind::InvariantViolation, where + ": bbox width and height must be positive");
  if (d.bbox.right() <= 0.0 || d.bbox.bottom() <= 0.0 || d.bbox.left >= K.width || d.bbox.top >= K.height)
    fail(ErrorKind::InvariantViolation, where + ": bbox does not intersect the image");
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
    fail(ErrorKind::InvariantViolation, where + ": confidence outside [0, 1]");
  if (d.observation && !(d.observation->depth > 0.0))
    fail(ErrorKind::InvariantViolation, where + ": observation depth must be positive");
  if (d.observation && std::abs(d.observation->R.norm() - 1.0) > 1e-9)
    fail(ErrorKind::InvariantViolation, where + ": observation facing direction must be unit length");
}

inline void validate_scene(const SceneSequence& s, int capacity = kDefaultCapacity) {
  if (s.frames.empty()) fail(ErrorKind::InvariantViolation, "scene has no frames");
  for (std::size_t k = 0; k < s.frames.size(); ++k) {
    const auto& f = s.frames[k];
    const std::string where = "frames[" + std::to_string(k) + "]";
    if (k > 0 && f.frame_index <= s.frames[k - 1].frame_index)
      fail(ErrorKind::InvariantViolation, where + ": frame_index must be strictly increasing");
    f.intrinsics.validate();
    if (std::abs(f.ego.rotation.norm() - 1.0) > 1e-9)
      fail(ErrorKind::InvariantViolation, where + ": ego quaternion is not unit length");
    if (static_cast<int>(f.detections.size()) > capacity)
      fail(ErrorKind::CapacityExceeded, where + ": more than " + std::to_string(capacity) + " detections");
    for (std::size_t d = 0; d < f.detections.size(); ++d)
      validate_detection(f.detections[d], f.intrinsics, where + ".detections[" + std::to_string(d) + "]");
  }
}

/// Keeps the `capacity` most confident detections (stable on ties) and
/// returns how many were dropped.
inline std::size_t apply_capacity(FrameRecord& frame, int capacity) {
  if (static_cast<int>(frame.detections.size()) <= capacity) return 0;
  std::vector<std::size_t> order(frame.detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frame.detections[a].confidence > frame.detections[b].confidence;
  });
  order.resize(static_cast<std::size_t>(capacity));
  std::sort(order.begin(), order.end());
  std::vector<Detection> kept;
  kept.reserve(order.size());
  for (std::size_t i : order) kept.push_back(std::move(frame.detections[i]));
  const std::size_t dropped = frame.detections.size() - kept.size();
  frame.detections = std::move(kept);
  return dropped;
}

/// Context padding N_p = clamp(round(0.15 * max(w, h)), 5, 25) per side,
/// clipped to the image.
inline int padding_pixels(const BBox& b) {
  const double scaled = std::round(0.15 * std::max(b.width, b.height));
  return static_cast<int>(std::clamp(scaled, 5.0, 25.0));
}

inline BBox pad_bbox(const BBox& b, int image_width, int image_height) {
  const double np = padding_pixels(b);
  const double left = std::max(0.0, b.left - np);
  const double top = std::max(0.0, b.top - np);
  const double right = std::min<double>(image_width, b.right() + np);
  const double bottom = std::min<double>(image_height, b.bottom() + np);
  return {left, top, right - left, bottom - top};
}

/// (N+1) x (N+1) ground-truth association matrix; index N is the null slot.
using MatchMatrix = Eigen::MatrixXi;

/// Entry (i, j) is 1 when detection i of `a` and j of `b` share an object id.
/// Unmatched detections of `a` mark column N, unmatched ones of `b` row N.
/// Detections without an id (false positives) never match.
inline MatchMatrix build_match_matrix(const FrameRecord& a, const FrameRecord& b, int capacity = kDefaultCapacity) {
  const int na = static_cast<int>(a.detections.size()), nb = static_cast<int>(b.detections.size());
  if (na > capacity || nb > capacity)
    fail(ErrorKind::CapacityExceeded, "frame has more detections than the capacity " + std::to_string(capacity));
  MatchMatrix m = MatchMatrix::Zero(capacity + 1, capacity + 1);
  std::vector<bool> col_used(nb, false);
  for (int i = 0; i < na; ++i) {
    const auto& id = a.detections[i].object_id;
    int partner = -1;
    if (id) {
      for (int j = 0; j < nb; ++j)
        if (!col_used[j] && b.detections[j].object_id == id) {
          partner = j;
          break;
        }
    }
    if (partner >= 0) {
      m(i, partner) = 1;
      col_used[partner] = true;
    } else {
      m(i, capacity) = 1;
    }
  }
  for (int j = 0; j < nb; ++j)
    if (!col_used[j]) m(capacity, j) = 1;
  return m;
}

/// Checks the row/column sums of a match matrix for the given real counts.
inline bool match_matrix_is_valid(const MatchMatrix& m, int na, int nb) {
  const int n = static_cast<int>(m.rows()) - 1;
  if (m.rows() != m.cols() || na > n || nb > n) return false;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const int v = m(i, j);
      if (v != 0 && v != 1) return false;
      const bool row_ok = i < na || i == n;
      const bool col_ok = j < nb || j == n;
      if (v == 1 && (!row_ok || !col_ok || (i == n && j == n))) return false;
    }
  for (int i = 0; i < na; ++i)
    if (m.row(i).sum() != 1) return false;
  for (int j = 0; j < nb; ++j)
    if (m.col(j).sum() != 1) return false;
  return true;
}

struct TrainingPair {
  int frame_a = 0;  // position in scene.frames, earlier frame (t - n)
  int frame_b = 0;  // position in scene.frames, later frame (t)
  int separation = 1;
  MatchMatrix match;

  friend bool operator==(const TrainingPair& x, const TrainingPair& y) {
    return x.frame_a == y.frame_a && x.frame_b == y.frame_b && x.separation == y.separation &&
           x.match.rows() == y.match.rows() && x.match == y.match;
  }
};

/// Frame separation n ~ Uniform{1..min(n_max, len-1)}, then the later frame
/// uniformly among those with an n-frame predecessor.
inline std::vector<TrainingPair> sample_training_pairs(const SceneSequence& scene, int n_max, int count,
                                                       std::uint64_t seed, int capacity = kDefaultCapacity) {
  const int len = static_cast<int>(scene.frames.size());
  if (len < 2) fail(ErrorKind::TooShort, "scene '" + scene.scene_id + "' needs at least 2 frames");
  if (n_max < 1) fail(ErrorKind::Config, "n_max must be at least 1");
  const int upper = std::min(n_max, len - 1);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> sep(1, upper);
  std::vector<TrainingPair> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    const int n = sep(rng);
    std::uniform_int_distribution<int> later(n, len - 1);
    const int b = later(rng);
    const int a = b - n;
    out.push_back({a, b, n, build_match_matrix(scene.frames[a], scene.frames[b], capacity)});
  }
  return out;
}

}  // namespace geoloc
