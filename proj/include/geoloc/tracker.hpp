#pragma once

// Online tracking of static objects. Each track keeps its most recent
// instances (descriptor + reference-frame pose). A new frame is matched
// against every past frame that still owns instances; a track's score for a
// detection is the best fused similarity over its instances, its null score
// the mean null probability, and the Hungarian solver picks the assignment.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "geoloc/error.hpp"
#include "geoloc/geometry.hpp"
#include "geoloc/hungarian.hpp"
#include "geoloc/matcher_model.hpp"
#include "geoloc/matching.hpp"
#include "geoloc/mot_format.hpp"
#include "geoloc/scene.hpp"

namespace geoloc {

/// Output of describing one detection.
struct Described {
  ObjectDescriptor descriptor;
  Pose5D pose;         // reference frame
  double depth = 1.0;  // camera-frame depth at observation time
};

template <typename M>
concept Matcher = requires(const M& m, const FrameRecord& f, const Detection& d, const EgoPose& ref,
                           const std::vector<ObjectDescriptor>& a) {
  { m.describe(f, d, ref) } -> std::same_as<Described>;
  { m.similarity(a, a) } -> std::same_as<SimilarityBundle>;
};

/// Tracker-facing view of a trained MatcherModel.
class ModelMatcher {
 public:
  explicit ModelMatcher(const MatcherModel& model) : model_(&model) {}

  Described describe(const FrameRecord& f, const Detection& d, const EgoPose& ref) const {
    const DetectionSample s = make_detection_sample(f, d, ref, model_->config.depth_scale);
    auto [desc, pose] = geoloc::describe(*model_, s);
    const double depth = (s.to_reference.rotation.transpose() * (pose.T - s.to_reference.translation)).z();
    return {std::move(desc), pose, depth};
  }

  SimilarityBundle similarity(const std::vector<ObjectDescriptor>& a, const std::vector<ObjectDescriptor>& b) const {
    return geoloc::similarity(*model_, a, b);
  }

  const MatcherModel& model() const { return *model_; }

 private:
  const MatcherModel* model_;
};

static_assert(Matcher<ModelMatcher>);

enum class Aggregation { Mean, Median, InverseDepth };

inline std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Mean: return "mean";
    case Aggregation::Median: return "median";
    case Aggregation::InverseDepth: return "inverse-depth";
  }
  return "median";
}

inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "median") return Aggregation::Median;
  if (s == "inverse-depth") return Aggregation::InverseDepth;
  fail(ErrorKind::Config, "unknown aggregation '" + s + "' (mean, median, inverse-depth)");
}

struct TrackInstance {
  int frame_index = 0;
  int detection_index = 0;
  ObjectDescriptor descriptor;
  Pose5D pose;
  double depth = 1.0;
  BBox bbox;
  double confidence = 1.0;
};

struct Track {
  int track_id = 0;
  std::deque<TrackInstance> instances;  // most recent last
  int observations = 0;                 // including instances evicted from the buffer
  Pose5D aggregated;
};

struct TrackerConfig {
  int instance_cap = 10;
  Aggregation aggregation = Aggregation::Median;
  int min_instances = 2;
  std::optional<double> min_similarity;  // extra gate on detection columns
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

template <typename Range>
Pose5D aggregate_pose(const Range& instances, Aggregation method) {
  const std::size_t n = std::size(instances);
  if (n == 0) fail(ErrorKind::EmptyTrack, "cannot aggregate a track without instances");
  Pose5D out{Vec3::Zero(), Vec2::Zero(), FrameKind::Reference};
  if (n == 1) {
    out = std::begin(instances)->pose;
    out.frame = FrameKind::Reference;
    return out;
  }
  if (method == Aggregation::Median) {
    for (int a = 0; a < 5; ++a) {
      std::vector<double> v;
      for (const TrackInstance& inst : instances) v.push_back(a < 3 ? inst.pose.T[a] : inst.pose.R[a - 3]);
      (a < 3 ? out.T[a] : out.R[a - 3]) = detail::median(std::move(v));
    }
  } else {
    double total = 0.0;
    for (const TrackInstance& inst : instances) {
      const double w = method == Aggregation::Mean ? 1.0 : 1.0 / inst.depth;
      out.T += w * inst.pose.T;
      out.R += w * inst.pose.R;
      total += w;
    }
    out.T /= total;
    out.R /= total;
  }
  out.R = normalize_rotation(out.R);
  return out;
}

inline Pose5D aggregate_pose(const Track& t, Aggregation method) { return aggregate_pose(t.instances, method); }

struct TrackerState {
  TrackerConfig config;
  std::optional<EgoPose> reference;
  std::optional<int> last_frame;
  int next_track_id = 1;
  std::vector<Track> tracks;

  friend bool operator==(const TrackerState& a, const TrackerState& b) {
    auto same_tracks = [&] {
      if (a.tracks.size() != b.tracks.size()) return false;
      for (std::size_t k = 0; k < a.tracks.size(); ++k) {
        const Track& x = a.tracks[k];
        const Track& y = b.tracks[k];
        if (x.track_id != y.track_id || x.observations != y.observations || !(x.aggregated == y.aggregated) ||
            x.instances.size() != y.instances.size())
          return false;
        for (std::size_t i = 0; i < x.instances.size(); ++i) {
          const auto& p = x.instances[i];
          const auto& q = y.instances[i];
          if (p.frame_index != q.frame_index || p.detection_index != q.detection_index || !(p.descriptor == q.descriptor) ||
              !(p.pose == q.pose) || p.depth != q.depth)
            return false;
        }
      }
      return true;
    };
    return a.last_frame == b.last_frame && a.next_track_id == b.next_track_id &&
           a.reference.has_value() == b.reference.has_value() && (!a.reference || *a.reference == *b.reference) &&
           same_tracks();
  }
};

/// m x (n + m) tracker score matrix for the current frame's descriptors.
template <Matcher M>
Eigen::MatrixXd score_matrix(const std::vector<Track>& tracks, const std::vector<ObjectDescriptor>& detections,
                             const M& matcher) {
  const int m = static_cast<int>(tracks.size()), n = static_cast<int>(detections.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(m, n + m, kNegInf);
  std::vector<double> null_sum(static_cast<std::size_t>(m), 0.0);
  std::vector<int> null_count(static_cast<std::size_t>(m), 0);

  // Group instances by source frame: each group is one matcher call.
  std::map<int, std::vector<std::pair<int, std::size_t>>> groups;
  for (int t = 0; t < m; ++t)
    for (std::size_t i = 0; i < tracks[static_cast<std::size_t>(t)].instances.size(); ++i)
      groups[tracks[static_cast<std::size_t>(t)].instances[i].frame_index].emplace_back(t, i);

  for (const auto& [frame, members] : groups) {
    std::vector<ObjectDescriptor> past;
    for (auto [t, i] : members) past.push_back(tracks[static_cast<std::size_t>(t)].instances[i].descriptor);
    const SimilarityBundle b = matcher.similarity(past, detections);
    const auto N = static_cast<std::size_t>(b.capacity);
    for (std::size_t r = 0; r < members.size(); ++r) {
      const int t = members[r].first;
      for (int j = 0; j < n; ++j) s(t, j) = std::max(s(t, j), b.fused(r, static_cast<std::size_t>(j)));
      null_sum[static_cast<std::size_t>(t)] += b.S1n(r, N);
      ++null_count[static_cast<std::size_t>(t)];
    }
  }
  for (int t = 0; t < m; ++t)
    s(t, n + t) = null_count[static_cast<std::size_t>(t)] ? null_sum[static_cast<std::size_t>(t)] / null_count[static_cast<std::size_t>(t)] : 0.0;
  return s;
}

struct FrameAssignment {
  int frame_index = 0;
  std::vector<std::pair<int, int>> pairs;  // (track id, detection index)
};

template <Matcher M>
FrameAssignment step(TrackerState& state, const FrameRecord& frame, const M& matcher) {
  if (state.last_frame && frame.frame_index <= *state.last_frame)
    fail(ErrorKind::OutOfOrderFrame, "frame " + std::to_string(frame.frame_index) + " arrives after frame " +
                                         std::to_string(*state.last_frame));
  if (!state.reference) state.reference = frame.ego;
  state.last_frame = frame.frame_index;

  std::vector<Described> described;
  std::vector<ObjectDescriptor> descriptors;
  for (const auto& d : frame.detections) {
    described.push_back(matcher.describe(frame, d, *state.reference));
    descriptors.push_back(described.back().descriptor);
  }
  const int n = static_cast<int>(descriptors.size());
  Eigen::MatrixXd s = score_matrix(state.tracks, descriptors, matcher);
  if (state.config.min_similarity)
    for (Eigen::Index t = 0; t < s.rows(); ++t)
      for (int j = 0; j < n; ++j)
        if (s(t, j) < *state.config.min_similarity) s(t, j) = kNegInf;

  const AssignmentResult a = hungarian(s, n);
  FrameAssignment out{frame.frame_index, {}};
  auto instance = [&](int j) {
    const auto k = static_cast<std::size_t>(j);
    return TrackInstance{frame.frame_index, j, described[k].descriptor, described[k].pose, described[k].depth,
                         frame.detections[k].bbox, frame.detections[k].confidence};
  };
  for (auto [t, j] : a.matches) {
    Track& track = state.tracks[static_cast<std::size_t>(t)];
    track.instances.push_back(instance(j));
    ++track.observations;
    while (static_cast<int>(track.instances.size()) > state.config.instance_cap) track.instances.pop_front();
    track.aggregated = aggregate_pose(track, state.config.aggregation);
    out.pairs.emplace_back(track.track_id, j);
  }
  for (int j : a.unmatched_detections) {
    Track track;
    track.track_id = state.next_track_id++;
    track.instances.push_back(instance(j));
    track.observations = 1;
    track.aggregated = aggregate_pose(track, state.config.aggregation);
    out.pairs.emplace_back(track.track_id, j);
    state.tracks.push_back(std::move(track));
  }
  std::sort(out.pairs.begin(), out.pairs.end(), [](auto x, auto y) { return x.second < y.second; });
  return out;
}

struct GeoLocation {
  int track_id = 0;
  Pose5D pose;  // world
  int instances = 0;
};

/// World-frame poses of the tracks observed at least `min_instances` times.
inline std::vector<GeoLocation> finalize(const TrackerState& state, std::optional<int> min_instances = std::nullopt) {
  std::vector<GeoLocation> out;
  if (!state.reference) return out;
  const int keep = min_instances.value_or(state.config.min_instances);
  for (const auto& t : state.tracks)
    if (t.observations >= keep) out.push_back({t.track_id, reference_to_world(t.aggregated, *state.reference), t.observations});
  return out;
}

struct TrackingResult {
  TrackerState state;
  std::vector<FrameAssignment> assignments;
  std::vector<GeoLocation> geolocations;
  std::vector<MotRow> hypotheses;
};

/// Runs the tracker over a scene. Hypothesis rows carry each instance's own
/// world position and are emitted only for tracks that pass the
/// min-instances filter.
template <Matcher M>
TrackingResult track_scene(const SceneSequence& scene, const M& matcher, const TrackerConfig& config = {}) {
  TrackingResult r;
  r.state.config = config;
  for (const auto& f : scene.frames) r.assignments.push_back(step(r.state, f, matcher));
  r.geolocations = finalize(r.state);
  std::map<int, int> observations;
  for (const auto& t : r.state.tracks) observations[t.track_id] = t.observations;
  for (std::size_t k = 0; k < scene.frames.size(); ++k) {
    const FrameRecord& f = scene.frames[k];
    for (auto [id, j] : r.assignments[k].pairs) {
      if (observations[id] < config.min_instances) continue;
      const Detection& d = f.detections[static_cast<std::size_t>(j)];
      const Described desc = matcher.describe(f, d, *r.state.reference);
      r.hypotheses.push_back({f.frame_index, id, d.bbox, d.confidence, reference_to_world(desc.pose, *r.state.reference).T});
    }
  }
  sort_mot_rows(r.hypotheses);
  return r;
}

inline nlohmann::ordered_json geolocation_json(const std::vector<GeoLocation>& g) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& x : g)
    out.push_back({{"track_id", x.track_id},
                   {"T", {x.pose.T.x(), x.pose.T.y(), x.pose.T.z()}},
                   {"R", {x.pose.R[0], x.pose.R[1]}},
                   {"instances", x.instances}});
  return out;
}

inline std::vector<GeoLocation> geolocations_from_json(const nlohmann::json& j) {
  std::vector<GeoLocation> out;
  try {
    for (const auto& x : j) {
      const auto T = x.at("T").get<std::vector<double>>();
      const auto R = x.at("R").get<std::vector<double>>();
      if (T.size() != 3 || R.size() != 2) fail(ErrorKind::Schema, "geolocation T must have 3 and R 2 entries");
      out.push_back({x.at("track_id").get<int>(), {Vec3(T[0], T[1], T[2]), Vec2(R[0], R[1]), FrameKind::World},
                     x.at("instances").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed geolocation report: ") + e.what());
  }
  return out;
}

}  // namespace geoloc
