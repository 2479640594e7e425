#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "geoloc/error.hpp"
#include "geoloc/geometry.hpp"
#include "geoloc/hungarian.hpp"
#include "geoloc/mot_format.hpp"
#include "geoloc/scene.hpp"

namespace geoloc {

// ---------------------------------------------------------------- CLEAR-MOT

struct MotReport {
  int gt = 0;  // ground-truth boxes
  int fp = 0;
  int fn = 0;
  int ids = 0;
  int matches = 0;
  double iou_sum = 0.0;
  int frames = 0;
  int gt_trajectories = 0;
  int mostly_tracked = 0;
  int mostly_lost = 0;

  double mota() const { return gt == 0 ? 1.0 : 1.0 - static_cast<double>(fn + fp + ids) / gt; }
  double motp() const { return matches == 0 ? 0.0 : iou_sum / matches; }
  double mt_fraction() const { return gt_trajectories == 0 ? 0.0 : static_cast<double>(mostly_tracked) / gt_trajectories; }
  double ml_fraction() const { return gt_trajectories == 0 ? 0.0 : static_cast<double>(mostly_lost) / gt_trajectories; }

  /// Sums counts; ratios are recomputed from the merged counts.
  MotReport& operator+=(const MotReport& o) {
    gt += o.gt;
    fp += o.fp;
    fn += o.fn;
    ids += o.ids;
    matches += o.matches;
    iou_sum += o.iou_sum;
    frames += o.frames;
    gt_trajectories += o.gt_trajectories;
    mostly_tracked += o.mostly_tracked;
    mostly_lost += o.mostly_lost;
    return *this;
  }
};

inline nlohmann::ordered_json to_json(const MotReport& r) {
  return {{"MOTA", r.mota()},         {"MOTP", r.motp()},     {"MT", r.mostly_tracked},
          {"ML", r.mostly_lost},      {"MT_fraction", r.mt_fraction()}, {"ML_fraction", r.ml_fraction()},
          {"IDS", r.ids},             {"FP", r.fp},           {"FN", r.fn},
          {"GT", r.gt},               {"matches", r.matches}, {"frames", r.frames},
          {"gt_trajectories", r.gt_trajectories}};
}

namespace detail {

inline std::map<int, std::vector<MotRow>> rows_by_frame(const std::vector<MotRow>& rows, const char* what) {
  std::map<int, std::vector<MotRow>> out;
  std::set<std::pair<int, int>> seen;
  for (const auto& r : rows) {
    if (!seen.emplace(r.frame, r.id).second)
      fail(ErrorKind::Format, std::string(what) + " has two boxes for id " + std::to_string(r.id) + " in frame " +
                                  std::to_string(r.frame));
    if (!(r.bbox.width > 0.0 && r.bbox.height > 0.0))
      fail(ErrorKind::Format, std::string(what) + " box with non-positive size in frame " + std::to_string(r.frame));
    out[r.frame].push_back(r);
  }
  for (auto& [f, v] : out) std::sort(v.begin(), v.end(), [](const MotRow& a, const MotRow& b) { return a.id < b.id; });
  return out;
}

}  // namespace detail

/// CLEAR-MOT over MOT rows. Correspondences persist while IoU stays above
/// the threshold; the rest are re-solved each frame by a max-IoU assignment.
/// An identity switch is counted when a ground-truth object is matched to a
/// hypothesis other than the one it was last matched to.
inline MotReport mot_metrics(const std::vector<MotRow>& gt_rows, const std::vector<MotRow>& hyp_rows,
                             double iou_threshold = 0.5) {
  const auto gt = detail::rows_by_frame(gt_rows, "ground truth");
  const auto hyp = detail::rows_by_frame(hyp_rows, "hypotheses");
  std::set<int> frames;
  for (const auto& [f, v] : gt) frames.insert(f);
  for (const auto& [f, v] : hyp) frames.insert(f);

  MotReport r;
  r.frames = static_cast<int>(frames.size());
  std::map<int, int> last_match;                   // gt id -> hyp id of its latest match
  std::map<int, std::pair<int, int>> coverage;     // gt id -> (frames present, frames matched)
  const std::vector<MotRow> none;
  for (int f : frames) {
    const auto git = gt.find(f);
    const auto hit = hyp.find(f);
    const std::vector<MotRow>& g = git == gt.end() ? none : git->second;
    const std::vector<MotRow>& h = hit == hyp.end() ? none : hit->second;
    std::vector<int> g_to_h(g.size(), -1);
    std::vector<char> h_used(h.size(), 0);

    // Keep last frame's correspondences that are still valid.
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto lm = last_match.find(g[i].id);
      if (lm == last_match.end()) continue;
      for (std::size_t j = 0; j < h.size(); ++j)
        if (!h_used[j] && h[j].id == lm->second && iou(g[i].bbox, h[j].bbox) >= iou_threshold) {
          g_to_h[i] = static_cast<int>(j);
          h_used[j] = 1;
        }
    }
    // Max-IoU assignment of the remaining boxes; dummy columns allow "no match".
    std::vector<std::size_t> gi, hj;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g_to_h[i] < 0) gi.push_back(i);
    for (std::size_t j = 0; j < h.size(); ++j)
      if (!h_used[j]) hj.push_back(j);
    if (!gi.empty()) {
      const auto rows = static_cast<Eigen::Index>(gi.size()), cols = static_cast<Eigen::Index>(hj.size());
      Eigen::MatrixXd s = Eigen::MatrixXd::Constant(rows, cols + rows, kNegInf);
      for (Eigen::Index a = 0; a < rows; ++a) {
        for (Eigen::Index b = 0; b < cols; ++b) {
          const double v = iou(g[gi[static_cast<std::size_t>(a)]].bbox, h[hj[static_cast<std::size_t>(b)]].bbox);
          if (v >= iou_threshold) s(a, b) = v;
        }
        s(a, cols + a) = 0.0;
      }
      const auto col = solve_assignment(s);
      for (Eigen::Index a = 0; a < rows; ++a)
        if (col[static_cast<std::size_t>(a)] < cols) {
          const std::size_t j = hj[static_cast<std::size_t>(col[static_cast<std::size_t>(a)])];
          g_to_h[gi[static_cast<std::size_t>(a)]] = static_cast<int>(j);
          h_used[j] = 1;
        }
    }

    for (std::size_t i = 0; i < g.size(); ++i) {
      auto& cov = coverage[g[i].id];
      ++cov.first;
      ++r.gt;
      if (g_to_h[i] < 0) {
        ++r.fn;
        continue;
      }
      const MotRow& m = h[static_cast<std::size_t>(g_to_h[i])];
      ++cov.second;
      ++r.matches;
      r.iou_sum += iou(g[i].bbox, m.bbox);
      const auto lm = last_match.find(g[i].id);
      if (lm != last_match.end() && lm->second != m.id) ++r.ids;
      last_match[g[i].id] = m.id;
    }
    for (std::size_t j = 0; j < h.size(); ++j) r.fp += !h_used[j];
  }
  r.gt_trajectories = static_cast<int>(coverage.size());
  for (const auto& [id, c] : coverage) {
    const double ratio = static_cast<double>(c.second) / c.first;
    r.mostly_tracked += ratio >= 0.8;
    r.mostly_lost += ratio < 0.2;
  }
  return r;
}

// ------------------------------------------------------------ geolocation

/// d = limit * sqrt(sum (delta_a / semi_a)^2): points on the ellipsoid with
/// the given semi-axes are exactly `limit` away.
inline double mahalanobis_distance(const Vec3& delta, const Vec3& semi_axes, double limit) {
  if (!(semi_axes.array() > 0.0).all()) fail(ErrorKind::Config, "semi-axes must be positive");
  return limit * delta.cwiseQuotient(semi_axes).norm();
}

struct GeoCriterion {
  enum class Kind { Euclidean, Mahalanobis };
  Kind kind = Kind::Euclidean;
  double radius = 2.0;                    // Euclidean
  double limit = 3.0;                     // Mahalanobis
  Vec3 semi_axes = Vec3(0.4, 0.39, 3.84);  // Mahalanobis
  std::optional<double> rotation_gate;    // degrees

  static GeoCriterion euclidean(double radius) {
    if (!(radius > 0.0)) fail(ErrorKind::Config, "radius must be positive");
    GeoCriterion c;
    c.radius = radius;
    return c;
  }
  static GeoCriterion mahalanobis(double limit, const Vec3& semi_axes) {
    if (!(limit > 0.0)) fail(ErrorKind::Config, "limit must be positive");
    if (!(semi_axes.array() > 0.0).all()) fail(ErrorKind::Config, "semi-axes must be positive");
    GeoCriterion c;
    c.kind = Kind::Mahalanobis;
    c.limit = limit;
    c.semi_axes = semi_axes;
    return c;
  }

  /// Distance in the criterion's units; `delta` is already in evaluation axes.
  double distance(const Vec3& delta) const {
    return kind == Kind::Euclidean ? delta.norm() : mahalanobis_distance(delta, semi_axes, limit);
  }
  double threshold() const { return kind == Kind::Euclidean ? radius : limit; }

  bool accepts(const Vec3& delta, const Vec2& r, const Vec2& r_gt) const {
    if (distance(delta) > threshold()) return false;
    return !rotation_gate || angular_error(r, r_gt) <= *rotation_gate;
  }
};

struct ScoredPrediction {
  Pose5D pose;  // world
  double score = 0.0;
};

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};

/// Precision/recall sweep over descending score. Each prediction, in score
/// order (input order among ties), takes the closest still-unmatched ground
/// truth that passes the criterion. One point per distinct score.
/// `axes` maps world deltas into the evaluation axes.
inline std::vector<PrPoint> pr_curve(const std::vector<ScoredPrediction>& predictions,
                                     const std::vector<Pose5D>& ground_truth, const GeoCriterion& criterion,
                                     const Mat3& axes = Mat3::Identity()) {
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predictions[a].score > predictions[b].score; });
  std::vector<char> taken(ground_truth.size(), 0);
  std::vector<PrPoint> out;
  int tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const ScoredPrediction& p = predictions[order[k]];
    std::optional<std::size_t> best;
    double best_d = 0.0;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (taken[g]) continue;
      const Vec3 delta = axes * (p.pose.T - ground_truth[g].T);
      if (!criterion.accepts(delta, p.pose.R, ground_truth[g].R)) continue;
      const double d = criterion.distance(delta);
      if (!best || d < best_d) {
        best = g;
        best_d = d;
      }
    }
    if (best) {
      taken[*best] = 1;
      ++tp;
    }
    const bool last_of_score = k + 1 == order.size() || predictions[order[k + 1]].score != p.score;
    if (last_of_score)
      out.push_back({static_cast<double>(tp) / static_cast<double>(k + 1),
                     ground_truth.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(ground_truth.size()),
                     p.score});
  }
  return out;
}

struct MatchedPair {
  std::size_t prediction = 0;
  std::size_t ground_truth = 0;
};

/// Greedy one-to-one association by descending score within a Euclidean gate.
inline std::vector<MatchedPair> match_geolocations(const std::vector<ScoredPrediction>& predictions,
                                                   const std::vector<Pose5D>& ground_truth, double gate) {
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predictions[a].score > predictions[b].score; });
  std::vector<char> taken(ground_truth.size(), 0);
  std::vector<MatchedPair> out;
  for (std::size_t k : order) {
    std::optional<std::size_t> best;
    double best_d = gate;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (taken[g]) continue;
      const double d = (predictions[k].pose.T - ground_truth[g].T).norm();
      if (d <= best_d && (!best || d < best_d)) {
        best = g;
        best_d = d;
      }
    }
    if (best) {
      taken[*best] = 1;
      out.push_back({k, *best});
    }
  }
  return out;
}

struct AxisStats {
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;  // population
};

struct TranslationErrorStats {
  AxisStats x, y, z;
  std::size_t count = 0;
};

/// Absolute per-axis errors |axes * (T_pred - T_gt)| summarized per axis.
inline TranslationErrorStats translation_error_stats(const std::vector<std::pair<Vec3, Vec3>>& pairs,
                                                     const Mat3& axes = Mat3::Identity()) {
  if (pairs.empty()) fail(ErrorKind::InvariantViolation, "translation error needs at least one matched pair");
  std::vector<double> e[3];
  for (const auto& [pred, gt] : pairs) {
    const Vec3 d = (axes * (pred - gt)).cwiseAbs();
    for (int a = 0; a < 3; ++a) e[a].push_back(d[a]);
  }
  auto stats = [](std::vector<double> v) {
    AxisStats s;
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / n);
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    s.median = m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
    return s;
  };
  return {stats(e[0]), stats(e[1]), stats(e[2]), pairs.size()};
}

inline nlohmann::ordered_json to_json(const TranslationErrorStats& s) {
  auto axis = [](const AxisStats& a) {
    return nlohmann::ordered_json{{"mean", a.mean}, {"median", a.median}, {"std", a.stddev}};
  };
  return {{"count", s.count}, {"x", axis(s.x)}, {"y", axis(s.y)}, {"z", axis(s.z)}};
}

/// Distinct ground-truth objects of a scene (first appearance wins).
inline std::vector<GtObject> scene_objects(const SceneSequence& scene) {
  std::vector<GtObject> out;
  std::set<int> seen;
  for (const auto& f : scene.frames)
    if (f.gt_objects)
      for (const auto& g : *f.gt_objects)
        if (seen.insert(g.object_id).second) out.push_back(g);
  return out;
}

}  // namespace geoloc
