#pragma once

// Trainable matcher: a per-pair similarity scorer plus a small pose head
// regressing (c_x/W, c_y/H, depth/Z_s, R) from box geometry and the
// embedding G. Trained with SGD + momentum on L_aff + lambda * mean(L_pose).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "geoloc/error.hpp"
#include "geoloc/geometry.hpp"
#include "geoloc/losses.hpp"
#include "geoloc/matching.hpp"
#include "geoloc/mlp.hpp"
#include "geoloc/scene.hpp"

namespace geoloc {

/// What the scorer hands to the softmax: its pre-sigmoid logit or the
/// sigmoid similarity itself.
enum class ScoreSpace { Logit, Probability };
/// Where descriptor poses come from: the detection's observation, or the
/// pose head's regression (which puts the head inside the affinity loss).
enum class PoseSource { Observation, Head };

inline std::string to_string(ScoreSpace s) { return s == ScoreSpace::Logit ? "logit" : "probability"; }
inline std::string to_string(PoseSource s) { return s == PoseSource::Observation ? "observation" : "head"; }
inline std::string to_string(SoftmaxAxis a) { return a == SoftmaxAxis::Candidates ? "candidates" : "literal"; }

struct MatcherConfig {
  int capacity = kDefaultCapacity;
  double delta = kDefaultDelta;
  double lambda = 0.005;
  double beta = kDefaultPoseBeta;
  int n_max = kDefaultMaxSeparation;
  int appearance_dim = 64;
  int embedding_dim = 8;
  std::vector<int> scorer_hidden{128, 64, 32, 16, 8};  // + output layer = 6 layers
  std::vector<int> pose_hidden{32};
  ScoreSpace score_space = ScoreSpace::Logit;
  SoftmaxAxis softmax_axis = SoftmaxAxis::Candidates;
  PoseSource pose_source = PoseSource::Observation;
  double translation_scale = 15.0;  // metres per unit scorer input
  double depth_scale = 50.0;        // Z_s in the pose head target
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 8e-4;
  double decay_at = 2.0 / 3.0;  // fraction of epochs after which lr drops x0.1
  int epochs = 130;
  int batch_size = 8;
  bool augment_swap = true;  // also train on every pair with its frames swapped
  std::uint64_t seed = 0;

  int descriptor_dim() const { return appearance_dim + kPoseSlots + embedding_dim; }

  void validate() const {
    auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::Config, field + " " + why); };
    if (capacity < 1) bad("capacity", "must be >= 1");
    if (!std::isfinite(delta)) bad("delta", "must be finite");
    if (!(lambda >= 0.0)) bad("lambda", "must be >= 0");
    if (!(beta >= 0.0)) bad("beta", "must be >= 0");
    if (n_max < 1) bad("n_max", "must be >= 1");
    if (appearance_dim < 0 || embedding_dim < 0) bad("descriptor dims", "must be >= 0");
    if (scorer_hidden.size() != 5) bad("scorer_hidden", "must list 5 hidden widths (6 layers)");
    for (int h : scorer_hidden)
      if (h < 1) bad("scorer_hidden", "widths must be positive");
    for (int h : pose_hidden)
      if (h < 1) bad("pose_hidden", "widths must be positive");
    if (!(translation_scale > 0.0)) bad("translation_scale", "must be > 0");
    if (!(depth_scale > 0.0)) bad("depth_scale", "must be > 0");
    if (!(learning_rate > 0.0)) bad("learning_rate", "must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum", "must be in [0, 1)");
    if (!(weight_decay >= 0.0)) bad("weight_decay", "must be >= 0");
    if (!(decay_at >= 0.0 && decay_at <= 1.0)) bad("decay_at", "must be in [0, 1]");
    if (epochs < 0) bad("epochs", "must be >= 0");
    if (batch_size < 1) bad("batch_size", "must be >= 1");
  }
};

inline nlohmann::json to_json(const MatcherConfig& c) {
  return {{"capacity", c.capacity},
          {"delta", c.delta},
          {"lambda", c.lambda},
          {"beta", c.beta},
          {"n_max", c.n_max},
          {"appearance_dim", c.appearance_dim},
          {"embedding_dim", c.embedding_dim},
          {"scorer_hidden", c.scorer_hidden},
          {"pose_hidden", c.pose_hidden},
          {"score_space", to_string(c.score_space)},
          {"softmax_axis", to_string(c.softmax_axis)},
          {"pose_source", to_string(c.pose_source)},
          {"translation_scale", c.translation_scale},
          {"depth_scale", c.depth_scale},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"decay_at", c.decay_at},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"augment_swap", c.augment_swap},
          {"seed", c.seed}};
}

/// Reads the keys present in `j` over `base`; unknown keys are rejected.
inline MatcherConfig matcher_config_from_json(const nlohmann::json& j, MatcherConfig c = {}) {
  if (!j.is_object()) fail(ErrorKind::Config, "matcher config must be a JSON object");
  const nlohmann::json known = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) fail(ErrorKind::Config, "unknown matcher config key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("capacity", c.capacity);
    get("delta", c.delta);
    get("lambda", c.lambda);
    get("beta", c.beta);
    get("n_max", c.n_max);
    get("appearance_dim", c.appearance_dim);
    get("embedding_dim", c.embedding_dim);
    get("scorer_hidden", c.scorer_hidden);
    get("pose_hidden", c.pose_hidden);
    get("translation_scale", c.translation_scale);
    get("depth_scale", c.depth_scale);
    get("learning_rate", c.learning_rate);
    get("momentum", c.momentum);
    get("weight_decay", c.weight_decay);
    get("decay_at", c.decay_at);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("augment_swap", c.augment_swap);
    get("seed", c.seed);
    if (j.contains("score_space")) {
      const auto s = j.at("score_space").get<std::string>();
      if (s != "logit" && s != "probability") fail(ErrorKind::Config, "score_space must be logit or probability");
      c.score_space = s == "logit" ? ScoreSpace::Logit : ScoreSpace::Probability;
    }
    if (j.contains("softmax_axis")) {
      const auto s = j.at("softmax_axis").get<std::string>();
      if (s != "candidates" && s != "literal") fail(ErrorKind::Config, "softmax_axis must be candidates or literal");
      c.softmax_axis = s == "candidates" ? SoftmaxAxis::Candidates : SoftmaxAxis::Literal;
    }
    if (j.contains("pose_source")) {
      const auto s = j.at("pose_source").get<std::string>();
      if (s != "observation" && s != "head") fail(ErrorKind::Config, "pose_source must be observation or head");
      c.pose_source = s == "observation" ? PoseSource::Observation : PoseSource::Head;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("matcher config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Everything the matcher needs about one detection.
struct DetectionSample {
  std::vector<double> appearance;
  std::vector<double> embedding;
  std::vector<double> head_features;  // pose head input: box features ++ G
  Pose5D observed{Vec3::Zero(), Vec2(0.0, 1.0), FrameKind::Reference};  // observation mapped to the reference frame
  RelativeTransform to_reference;
  CameraIntrinsics intrinsics;
  std::optional<PoseTarget> target;  // pose-head label, ground-truth objects only
};

using FrameSample = std::vector<DetectionSample>;

struct MatchingSample {
  FrameSample a;
  FrameSample b;
  MatchMatrix match;
  int separation = 0;
};

/// Pose-head regression target of a camera-frame pose.
inline PoseTarget pose_target(const Pose5D& camera_pose, const CameraIntrinsics& K, double depth_scale) {
  const Vec2 c = project(camera_pose.T, K);
  return {Eigen::Vector3d(c.x() / K.width, c.y() / K.height, camera_pose.T.z() / depth_scale), camera_pose.R};
}

inline constexpr int kBoxFeatures = 4;

/// (center x / W, center y / H, f_y / (height * Z_s), width / height).
inline std::vector<double> box_features(const BBox& b, const CameraIntrinsics& K, double depth_scale) {
  const Vec2 c = b.center();
  return {c.x() / K.width, c.y() / K.height, K.fy / (b.height * depth_scale), b.width / b.height};
}

inline DetectionSample make_detection_sample(const FrameRecord& frame, const Detection& d, const EgoPose& reference,
                                             double depth_scale = 50.0) {
  if (!d.observation) fail(ErrorKind::InvariantViolation, "detection has no pose observation");
  DetectionSample s;
  s.appearance = d.appearance;
  s.embedding = d.embedding;
  s.head_features = box_features(d.bbox, frame.intrinsics, depth_scale);
  s.head_features.insert(s.head_features.end(), d.embedding.begin(), d.embedding.end());
  s.intrinsics = frame.intrinsics;
  s.to_reference = RelativeTransform::between(frame.ego, reference);
  const Pose5D cam{recover_translation(*d.observation, frame.intrinsics), normalize_rotation(d.observation->R),
                   FrameKind::Camera};
  s.observed = s.to_reference.apply(cam);
  if (d.object_id && frame.gt_objects) {
    for (const auto& g : *frame.gt_objects)
      if (g.object_id == *d.object_id) {
        const Pose5D gc = world_to_camera(g.pose, frame.ego);
        if (gc.T.z() > 0.0) s.target = pose_target(gc, frame.intrinsics, depth_scale);
        break;
      }
  }
  return s;
}

inline FrameSample make_frame_sample(const FrameRecord& frame, const EgoPose& reference, double depth_scale = 50.0) {
  FrameSample out;
  out.reserve(frame.detections.size());
  for (const auto& d : frame.detections) out.push_back(make_detection_sample(frame, d, reference, depth_scale));
  return out;
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Pose decoded from the head output y in R^5.
struct DecodedPose {
  PoseTarget hat;   // (y0, y1, softplus(y2)), normalize(y3, y4)
  Pose5D reference;
  Eigen::Matrix<double, 5, 5> jacobian;  // d(T_ref, R_ref) / dy
};

inline DecodedPose decode_pose(const VecX& y, const DetectionSample& s, double depth_scale) {
  if (y.size() != 5) fail(ErrorKind::ShapeMismatch, "pose head must output 5 values");
  const CameraIntrinsics& K = s.intrinsics;
  DecodedPose d;
  const double depth = softplus(y[2]) * depth_scale;
  const Vec2 center(y[0] * K.width, y[1] * K.height);
  const Vec2 v(y[3], y[4]);
  const Vec2 r = normalize_rotation(v);
  d.hat = {Eigen::Vector3d(y[0], y[1], softplus(y[2])), r};
  d.reference = s.to_reference.apply({recover_translation(center, depth, K), r, FrameKind::Camera});

  Eigen::Matrix3d dT = Eigen::Matrix3d::Zero();
  dT(0, 0) = K.width * depth / K.fx;
  dT(1, 1) = K.height * depth / K.fy;
  dT.col(2) = sigmoid(y[2]) * depth_scale * Vec3((center.x() - K.px) / K.fx, (center.y() - K.py) / K.fy, 1.0);
  const double c = std::cos(s.to_reference.yaw), sn = std::sin(s.to_reference.yaw);
  Eigen::Matrix2d rh;
  rh << c, sn, -sn, c;
  const Eigen::Matrix2d dr = (Eigen::Matrix2d::Identity() - r * r.transpose()) / v.norm();
  d.jacobian.setZero();
  d.jacobian.topLeftCorner<3, 3>() = s.to_reference.rotation * dT;
  d.jacobian.bottomRightCorner<2, 2>() = rh * dr;
  return d;
}

/// d loss_pose(target, hat(y)) / dy.
inline Eigen::Matrix<double, 5, 1> loss_pose_grad_y(const PoseTarget& target, const VecX& y, double beta) {
  const Vec2 v(y[3], y[4]);
  const Vec2 r = normalize_rotation(v);
  const Eigen::Vector3d hat_t(y[0], y[1], softplus(y[2]));
  Eigen::Vector3d gt = beta * loss_trans_grad<3>(target.trans, hat_t);
  gt[2] *= sigmoid(y[2]);
  const Vec2 gr = (Eigen::Matrix2d::Identity() - r * r.transpose()) / v.norm() * loss_rot_grad(target.rot, r);
  Eigen::Matrix<double, 5, 1> g;
  g << gt, gr;
  return g;
}

struct MatcherModel {
  MatcherConfig config;
  Scorer scorer;
  MlpParams pose_head;
  int epochs_completed = 0;
  // SGD momentum buffers, same shapes as the parameters.
  MlpParams scorer_velocity;
  MlpParams pose_velocity;

  friend bool operator==(const MatcherModel& a, const MatcherModel& b) {
    return a.scorer == b.scorer && a.pose_head == b.pose_head && a.epochs_completed == b.epochs_completed &&
           a.scorer_velocity == b.scorer_velocity && a.pose_velocity == b.pose_velocity;
  }
};

inline std::vector<double> scorer_input_scale(const MatcherConfig& c) {
  std::vector<double> half(static_cast<std::size_t>(c.descriptor_dim()), 1.0);
  for (int k = 0; k < 3; ++k) half[static_cast<std::size_t>(k)] = 1.0 / c.translation_scale;
  std::vector<double> scale = half;
  scale.insert(scale.end(), half.begin(), half.end());
  return scale;
}

inline MatcherModel make_matcher(const MatcherConfig& config) {
  config.validate();
  MatcherModel m;
  m.config = config;
  std::vector<int> sizes{2 * config.descriptor_dim()};
  sizes.insert(sizes.end(), config.scorer_hidden.begin(), config.scorer_hidden.end());
  sizes.push_back(1);
  m.scorer.mlp = make_mlp(sizes, Activation::Tanh, Activation::Sigmoid, config.seed);
  m.scorer.input_scale = scorer_input_scale(config);
  std::vector<int> head{kBoxFeatures + config.embedding_dim};
  head.insert(head.end(), config.pose_hidden.begin(), config.pose_hidden.end());
  head.push_back(5);
  m.pose_head = make_mlp(head, Activation::Tanh, Activation::Linear, config.seed + 1);
  m.scorer_velocity = m.scorer.mlp.zeros_like();
  m.pose_velocity = m.pose_head.zeros_like();
  return m;
}

inline VecX pose_head_input(const DetectionSample& s) {
  return Eigen::Map<const VecX>(s.head_features.data(), static_cast<Eigen::Index>(s.head_features.size()));
}

struct DetectionForward {
  ObjectDescriptor descriptor;
  Pose5D reference;
  std::optional<MlpTrace> head;
  std::optional<DecodedPose> decoded;
};

inline DetectionForward forward_detection(const MatcherModel& m, const DetectionSample& s, bool run_head) {
  if (static_cast<int>(s.appearance.size()) != m.config.appearance_dim ||
      static_cast<int>(s.embedding.size()) != m.config.embedding_dim)
    fail(ErrorKind::ShapeMismatch, "detection features do not match the matcher's descriptor dims");
  DetectionForward f;
  f.reference = s.observed;
  if (run_head || m.config.pose_source == PoseSource::Head) {
    f.head = mlp_trace(m.pose_head, pose_head_input(s));
    f.decoded = decode_pose(f.head->output, s, m.config.depth_scale);
    if (m.config.pose_source == PoseSource::Head) f.reference = f.decoded->reference;
  }
  f.descriptor = build_descriptor(s.appearance, f.reference, s.embedding);
  return f;
}

/// Descriptor and reference-frame pose used for matching and aggregation.
inline std::pair<ObjectDescriptor, Pose5D> describe(const MatcherModel& m, const DetectionSample& s) {
  DetectionForward f = forward_detection(m, s, false);
  return {std::move(f.descriptor), f.reference};
}

namespace detail {

inline VecX pair_input(const Scorer& scorer, const ObjectDescriptor& a, const ObjectDescriptor& b) {
  std::vector<double> fiber = a.fused();
  const auto fb = b.fused();
  fiber.insert(fiber.end(), fb.begin(), fb.end());
  return scorer.prepare(fiber);
}

}  // namespace detail

/// Similarity bundle between two descriptor sets. Only real cells are
/// scored; padded cells are masked out of every softmax, so their value is
/// irrelevant and left at zero.
inline SimilarityBundle similarity(const MatcherModel& m, const std::vector<ObjectDescriptor>& a,
                                   const std::vector<ObjectDescriptor>& b, std::vector<MlpTrace>* traces = nullptr) {
  const int N = m.config.capacity;
  if (static_cast<int>(a.size()) > N || static_cast<int>(b.size()) > N)
    fail(ErrorKind::CapacityExceeded, "frame has more detections than the matcher capacity " + std::to_string(N));
  Tensor S({static_cast<std::size_t>(N), static_cast<std::size_t>(N)});
  if (traces) traces->clear();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      MlpTrace t = mlp_trace(m.scorer.mlp, detail::pair_input(m.scorer, a[i], b[j]));
      S(i, j) = m.config.score_space == ScoreSpace::Logit ? t.final_pre()[0] : t.output[0];
      if (traces) traces->push_back(std::move(t));
    }
  return augment_normalize(S, m.config.delta, static_cast<int>(a.size()), static_cast<int>(b.size()),
                           m.config.softmax_axis);
}

struct ModelGradients {
  MlpParams scorer;
  MlpParams pose_head;
};

inline ModelGradients zero_gradients(const MatcherModel& m) { return {m.scorer.mlp.zeros_like(), m.pose_head.zeros_like()}; }

struct SampleResult {
  double loss = 0.0;
  double affinity = 0.0;
  double pose = 0.0;  // mean pose loss, 0 when no detection carries a target
  int pose_count = 0;
  MatchCounts counts;
};

/// Joint loss of one frame pair; accumulates parameter gradients into
/// `grads` when given.
inline SampleResult evaluate_sample(const MatcherModel& m, const MatchingSample& sample, ModelGradients* grads = nullptr) {
  const MatcherConfig& c = m.config;
  const bool want_pose = c.lambda > 0.0;
  std::vector<DetectionForward> fa, fb;
  for (const auto& s : sample.a) fa.push_back(forward_detection(m, s, want_pose && s.target));
  for (const auto& s : sample.b) fb.push_back(forward_detection(m, s, want_pose && s.target));
  std::vector<ObjectDescriptor> da, db;
  for (const auto& f : fa) da.push_back(f.descriptor);
  for (const auto& f : fb) db.push_back(f.descriptor);

  std::vector<MlpTrace> traces;
  const SimilarityBundle bundle = similarity(m, da, db, grads ? &traces : nullptr);

  SampleResult r;
  r.affinity = loss_affinity(bundle, sample.match);
  std::vector<double> pose_losses;
  auto collect = [&](const FrameSample& fs, const std::vector<DetectionForward>& fw) {
    for (std::size_t k = 0; k < fs.size(); ++k)
      if (want_pose && fs[k].target) pose_losses.push_back(loss_pose(*fs[k].target, fw[k].decoded->hat, c.beta));
  };
  collect(sample.a, fa);
  collect(sample.b, fb);
  r.pose_count = static_cast<int>(pose_losses.size());
  r.pose = pose_losses.empty() ? 0.0 : std::accumulate(pose_losses.begin(), pose_losses.end(), 0.0) / r.pose_count;
  r.loss = loss_joint(r.affinity, pose_losses, c.lambda);
  r.counts = match_decisions(bundle, sample.match);
  if (!std::isfinite(r.loss)) {
    std::ostringstream msg;
    msg << "loss is not finite (affinity " << r.affinity << ", mean pose " << r.pose << ", n1 " << sample.a.size()
        << ", n2 " << sample.b.size() << ")";
    fail(ErrorKind::NonFiniteLoss, msg.str());
  }
  if (!grads) return r;

  const Tensor dS = loss_affinity_grad(bundle, sample.match);
  const std::size_t d = static_cast<std::size_t>(c.descriptor_dim());
  const bool head_geometry = c.pose_source == PoseSource::Head;
  std::vector<Eigen::Matrix<double, 5, 1>> ga(fa.size(), Eigen::Matrix<double, 5, 1>::Zero()),
      gb(fb.size(), Eigen::Matrix<double, 5, 1>::Zero());
  VecX up(1);
  for (std::size_t i = 0; i < da.size(); ++i)
    for (std::size_t j = 0; j < db.size(); ++j) {
      const MlpTrace& t = traces[i * db.size() + j];
      const double g = dS(i, j);
      if (g == 0.0) continue;
      up[0] = c.score_space == ScoreSpace::Logit ? g : g * t.output[0] * (1.0 - t.output[0]);
      const VecX dx = mlp_backward_from_pre(m.scorer.mlp, t, up, grads->scorer);
      if (!head_geometry) continue;
      for (int k = 0; k < 5; ++k) {
        ga[i][k] += dx[k] * m.scorer.input_scale[static_cast<std::size_t>(k)];
        gb[j][k] += dx[static_cast<Eigen::Index>(d) + k] * m.scorer.input_scale[d + static_cast<std::size_t>(k)];
      }
    }

  const double pose_weight = r.pose_count > 0 ? c.lambda / r.pose_count : 0.0;
  auto head_backward = [&](const FrameSample& fs, const std::vector<DetectionForward>& fw,
                           const std::vector<Eigen::Matrix<double, 5, 1>>& gg) {
    for (std::size_t k = 0; k < fs.size(); ++k) {
      if (!fw[k].head) continue;
      VecX dy = VecX::Zero(5);
      if (head_geometry) dy += fw[k].decoded->jacobian.transpose() * gg[k];
      if (want_pose && fs[k].target) dy += pose_weight * loss_pose_grad_y(*fs[k].target, fw[k].head->output, c.beta);
      mlp_backward(m.pose_head, *fw[k].head, dy, grads->pose_head);
    }
  };
  head_backward(sample.a, fa, ga);
  head_backward(sample.b, fb, gb);
  return r;
}

/// Scorer then pose-head parameters, flattened.
inline std::vector<double> flatten(const MatcherModel& m) {
  std::vector<double> v = flatten(m.scorer.mlp);
  const auto h = flatten(m.pose_head);
  v.insert(v.end(), h.begin(), h.end());
  return v;
}

inline void assign(MatcherModel& m, std::span<const double> values) {
  const std::size_t k = assign(m.scorer.mlp, values);
  assign(m.pose_head, values.subspan(k));
}

inline std::vector<double> flatten(const ModelGradients& g) {
  std::vector<double> v = flatten(g.scorer);
  const auto h = flatten(g.pose_head);
  v.insert(v.end(), h.begin(), h.end());
  return v;
}

struct EpochMetrics {
  int epoch = 0;
  double loss_affinity = 0.0;
  double pose_loss = 0.0;
  double accuracy = 0.0;
  double learning_rate = 0.0;
};

inline double learning_rate_at(const MatcherConfig& c, int epoch) {
  const int decay_epoch = static_cast<int>(std::lround(c.decay_at * c.epochs));
  return epoch >= decay_epoch ? 0.1 * c.learning_rate : c.learning_rate;
}

namespace detail {

inline void sgd_step(MlpParams& p, MlpParams& velocity, const MlpParams& g, double scale, double lr, double momentum,
                     double weight_decay) {
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    auto& l = p.layers[k];
    auto& v = velocity.layers[k];
    v.weight = momentum * v.weight - lr * (scale * g.layers[k].weight + weight_decay * l.weight);
    v.bias = momentum * v.bias - lr * (scale * g.layers[k].bias + weight_decay * l.bias);
    l.weight += v.weight;
    l.bias += v.bias;
  }
}

}  // namespace detail

/// The same pair seen from the other side: frames exchanged, M transposed.
inline MatchingSample swapped(const MatchingSample& s) { return {s.b, s.a, s.match.transpose(), s.separation}; }

/// Runs `epochs` more epochs starting at model.epochs_completed. Shuffling
/// depends only on (seed, epoch), so a resumed run retraces a continuous one.
inline std::vector<EpochMetrics> train_matcher(MatcherModel& m, const std::vector<MatchingSample>& pairs, int epochs,
                                               const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  if (pairs.empty()) fail(ErrorKind::InvariantViolation, "training set is empty");
  const MatcherConfig& c = m.config;
  std::vector<MatchingSample> augmented;
  if (c.augment_swap) {
    augmented.reserve(2 * pairs.size());
    for (const auto& s : pairs) {
      augmented.push_back(s);
      augmented.push_back(swapped(s));
    }
  }
  const std::vector<MatchingSample>& data = c.augment_swap ? augmented : pairs;
  std::vector<EpochMetrics> history;
  std::vector<std::size_t> order(data.size());
  for (int e = 0; e < epochs; ++e) {
    const int epoch = m.epochs_completed;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(c.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate_at(c, epoch);

    EpochMetrics em;
    em.epoch = epoch + 1;
    em.learning_rate = lr;
    MatchCounts counts;
    int pose_samples = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(c.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(c.batch_size));
      ModelGradients g = zero_gradients(m);
      for (std::size_t k = start; k < stop; ++k) {
        SampleResult r;
        try {
          r = evaluate_sample(m, data[order[k]], &g);
        } catch (const Error& err) {
          if (err.kind() != ErrorKind::NonFiniteLoss) throw;
          fail(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch + 1) + ", sample " +
                                             std::to_string(order[k]) + ": " + err.detail());
        }
        em.loss_affinity += r.affinity;
        if (r.pose_count > 0) {
          em.pose_loss += r.pose;
          ++pose_samples;
        }
        counts += r.counts;
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      detail::sgd_step(m.scorer.mlp, m.scorer_velocity, g.scorer, scale, lr, c.momentum, c.weight_decay);
      detail::sgd_step(m.pose_head, m.pose_velocity, g.pose_head, scale, lr, c.momentum, c.weight_decay);
    }
    em.loss_affinity /= static_cast<double>(data.size());
    em.pose_loss = pose_samples > 0 ? em.pose_loss / pose_samples : 0.0;
    em.accuracy = counts.accuracy();
    ++m.epochs_completed;
    history.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return history;
}

struct EvaluationSummary {
  MatchCounts counts;
  double loss = 0.0;
  double affinity = 0.0;
  double accuracy() const { return counts.accuracy(); }
};

inline EvaluationSummary evaluate_matcher(const MatcherModel& m, const std::vector<MatchingSample>& data) {
  EvaluationSummary s;
  for (const auto& sample : data) {
    const SampleResult r = evaluate_sample(m, sample);
    s.counts += r.counts;
    s.loss += r.loss;
    s.affinity += r.affinity;
  }
  if (!data.empty()) {
    s.loss /= static_cast<double>(data.size());
    s.affinity /= static_cast<double>(data.size());
  }
  return s;
}

/// Fused bundles and match matrices of every sample, for mAP.
inline std::vector<std::pair<SimilarityBundle, MatchMatrix>> score_samples(const MatcherModel& m,
                                                                           const std::vector<MatchingSample>& data) {
  std::vector<std::pair<SimilarityBundle, MatchMatrix>> out;
  for (const auto& s : data) {
    std::vector<ObjectDescriptor> da, db;
    for (const auto& d : s.a) da.push_back(describe(m, d).first);
    for (const auto& d : s.b) db.push_back(describe(m, d).first);
    out.emplace_back(similarity(m, da, db), s.match);
  }
  return out;
}

inline std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss_affinity,pose_loss,accuracy,learning_rate\n";
  for (const auto& e : history)
    out << e.epoch << ',' << e.loss_affinity << ',' << e.pose_loss << ',' << e.accuracy << ',' << e.learning_rate
        << '\n';
  return out.str();
}

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_to_json(const MatcherModel& m) {
  return {{"format", "geoloc-matcher"},
          {"version", kCheckpointVersion},
          {"config", to_json(m.config)},
          {"epochs_completed", m.epochs_completed},
          {"scorer", to_json(m.scorer.mlp)},
          {"scorer_input_scale", m.scorer.input_scale},
          {"pose_head", to_json(m.pose_head)},
          {"scorer_velocity", to_json(m.scorer_velocity)},
          {"pose_velocity", to_json(m.pose_velocity)}};
}

inline MatcherModel checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "geoloc-matcher") fail(ErrorKind::Schema, "not a matcher checkpoint");
    if (j.at("version") != kCheckpointVersion) fail(ErrorKind::Schema, "unsupported checkpoint version");
    MatcherModel m;
    m.config = matcher_config_from_json(j.at("config"));
    m.epochs_completed = j.at("epochs_completed").get<int>();
    m.scorer.mlp = mlp_from_json(j.at("scorer"));
    m.scorer.input_scale = j.at("scorer_input_scale").get<std::vector<double>>();
    m.pose_head = mlp_from_json(j.at("pose_head"));
    m.scorer_velocity = mlp_from_json(j.at("scorer_velocity"));
    m.pose_velocity = mlp_from_json(j.at("pose_velocity"));
    if (m.scorer.mlp.input_dim() != 2 * m.config.descriptor_dim() ||
        static_cast<Eigen::Index>(m.scorer.input_scale.size()) != m.scorer.mlp.input_dim())
      fail(ErrorKind::Schema, "scorer shape disagrees with the checkpoint config");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Schema, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace geoloc
