// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "geoloc/geoloc.hpp"

using namespace geoloc;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int number, const std::string& name, double budget_seconds, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (seconds > budget_seconds) {
    o.pass = false;
    o.detail << " [over budget " << budget_seconds << " s]";
  }
  failures += !o.pass;
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << number << " " << name << " (" << std::fixed << std::setprecision(1)
            << seconds << " s)" << std::defaultfloat << std::setprecision(6) << o.detail.str() << std::endl;
}

// ------------------------------------------------------------------ 1

double brute_force_best(const Eigen::MatrixXd& s) {
  std::vector<int> perm(static_cast<std::size_t>(s.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = kNegInf;
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) total += s(i, perm[static_cast<std::size_t>(i)]);
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

void hungarian_oracle(Outcome& o) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int k = 0; k < 100; ++k) {
    const int m = size(rng);
    const int n = std::uniform_int_distribution<int>(0, 7 - m)(rng);
    Eigen::MatrixXd s = Eigen::MatrixXd::Constant(m, n + m, kNegInf);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) s(i, j) = u(rng) < 0.15 ? kNegInf : u(rng);
      s(i, n + i) = u(rng);
    }
    mismatches += hungarian(s, n).total_score != brute_force_best(s);
  }
  o.detail << "100 matrices, " << mismatches << " mismatches";
  o.require(mismatches == 0, "assignment total differs from exhaustive optimum");
}

// ------------------------------------------------------------------ 2

double worst = 0.0;

void check_gradient(Outcome& o, const std::string& name, const std::function<double(std::span<const double>)>& f,
                    const std::vector<double>& analytic, const std::vector<double>& x) {
  const auto r = grad_check(f, analytic, x, 1e-4, 1e-5);
  worst = std::max(worst, r.max_relative_error);
  o.require(r.passed, name + " relative error " + std::to_string(r.max_relative_error));
}

std::vector<double> to_std(const VecX& v) { return {v.data(), v.data() + v.size()}; }

void gradient_suite(Outcome& o) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;

  // Elementary losses with respect to their prediction argument.
  const Eigen::Vector3d t(0.4, -1.2, 0.7);
  const Eigen::Vector2d r = Vec2(0.6, 0.8);
  const std::vector<double> th{1.1, 0.3, -0.2}, rh{-0.5, 0.9};
  check_gradient(
      o, "L_trans", [&](std::span<const double> x) { return loss_trans<3>(t, Eigen::Vector3d(x[0], x[1], x[2])); },
      to_std(loss_trans_grad<3>(t, Eigen::Vector3d(th[0], th[1], th[2]))), th);
  check_gradient(
      o, "L_rot", [&](std::span<const double> x) { return loss_rot(r, Eigen::Vector2d(x[0], x[1])); },
      to_std(loss_rot_grad(r, Eigen::Vector2d(rh[0], rh[1]))), rh);

  // L_pose through the pose-head decoding (softplus depth, normalized direction).
  SimConfig sc;
  sc.seed = 3;
  const SceneSequence scene = generate_scene(sc);
  const DetectionSample ds = make_detection_sample(scene.frames[2], scene.frames[2].detections[0], scene.reference_ego());
  const PoseTarget target = *ds.target;
  std::vector<double> y0(5);
  for (double& v : y0) v = g(rng);
  auto pose_of = [&](std::span<const double> y) {
    const VecX yv = Eigen::Map<const VecX>(y.data(), 5);
    return loss_pose(target, decode_pose(yv, ds, 50.0).hat);
  };
  check_gradient(o, "L_pose", pose_of, to_std(loss_pose_grad_y(target, Eigen::Map<const VecX>(y0.data(), 5), kDefaultPoseBeta)),
                 y0);

  // L_Aff with respect to the raw similarity matrix, both softmax conventions.
  const int N = 6, n1 = 4, n2 = 5;
  MatchMatrix m = MatchMatrix::Zero(N + 1, N + 1);
  m(0, 2) = m(1, 0) = m(2, 4) = m(3, N) = m(N, 1) = m(N, 3) = 1;
  std::vector<double> S(N * N);
  for (double& v : S) v = 2.0 * g(rng);
  for (SoftmaxAxis axis : {SoftmaxAxis::Candidates, SoftmaxAxis::Literal}) {
    auto aff = [&](std::span<const double> x) {
      return loss_affinity(augment_normalize(Tensor({N, N}, std::vector<double>(x.begin(), x.end())), 1.0, n1, n2, axis), m);
    };
    check_gradient(o, "L_aff", aff, loss_affinity_grad(augment_normalize(Tensor({N, N}, S), 1.0, n1, n2, axis), m).data,
                   S);
  }

  // L_joint composed with the scorer and pose head, every parameter.
  SimConfig small;
  small.seed = 11;
  small.n_objects = 4;
  small.n_frames = 10;
  small.appearance_dim = 4;
  small.embedding_dim = 3;
  small.appearance_sigma = 0.1;
  small.center_sigma = 2.0;
  small.depth_sigma = 0.05;
  small.miss_rate = 0.1;
  small.capacity = 6;
  small.min_visible_frames = 3;
  const auto data = make_matching_dataset(generate_scenes(small, 2), 5, 1, 5, 6);
  for (PoseSource source : {PoseSource::Observation, PoseSource::Head})
    for (ScoreSpace space : {ScoreSpace::Logit, ScoreSpace::Probability}) {
      MatcherConfig c;
      c.capacity = 6;
      c.appearance_dim = 4;
      c.embedding_dim = 3;
      c.scorer_hidden = {8, 6, 5, 4, 3};
      c.pose_hidden = {6};
      c.lambda = 0.5;
      c.pose_source = source;
      c.score_space = space;
      const MatcherModel model = make_matcher(c);
      for (const auto& sample : data) {
        ModelGradients grads = zero_gradients(model);
        evaluate_sample(model, sample, &grads);
        auto joint = [&](std::span<const double> p) {
          MatcherModel copy = model;
          assign(copy, p);
          return evaluate_sample(copy, sample).loss;
        };
        check_gradient(o, "L_joint[" + to_string(source) + "," + to_string(space) + "]", joint, flatten(grads),
                       flatten(model));
      }
    }
  o.detail << "max relative error " << worst;
}

// ------------------------------------------------------------------ 3

void geometry_closure(Outcome& o) {
  const CameraIntrinsics K{1266.4, 1266.4, 816.3, 491.5, 1600, 900};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> xy(-40.0, 40.0), z(0.5, 120.0);
  double worst_rt = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 T(xy(rng), xy(rng), z(rng));
    worst_rt = std::max(worst_rt, (recover_translation(project(T, K), T.z(), K) - T).norm() / T.norm());
  }
  o.require(worst_rt < 1e-9, "round trip");

  double worst_same = 0.0;
  int compared = 0;
  for (Trajectory traj : {Trajectory::Straight, Trajectory::Turn})
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SimConfig c;
      c.seed = seed;
      c.trajectory = traj;
      c.n_objects = 6;
      const SceneSequence s = generate_scene(c);
      std::map<int, Pose5D> first;
      for (const auto& f : s.frames)
        for (const auto& d : f.detections) {
          const Pose5D cam{recover_translation(*d.observation, f.intrinsics), d.observation->R, FrameKind::Camera};
          const Pose5D p = to_reference_frame(cam, f.ego, s.reference_ego());
          auto [it, fresh] = first.emplace(*d.object_id, p);
          if (fresh) continue;
          worst_same = std::max({worst_same, (it->second.T - p.T).norm(), (it->second.R - p.R).norm()});
          ++compared;
        }
    }
  o.require(worst_same < 1e-9 && compared > 0, "same-object agreement");
  o.detail << "round trip rel " << worst_rt << ", same-object " << worst_same << " over " << compared << " pairs";
}

// ------------------------------------------------------------------ 4, 5

// Matcher used by both end-to-end criteria, trained on noisy simulated pairs.
MatcherModel tracking_matcher() {
  SimConfig c;
  c.seed = 9000;
  c.n_objects = 8;
  c.appearance_sigma = 0.05;
  c.center_sigma = 2.0;
  c.depth_sigma = 0.05;
  c.miss_rate = 0.05;
  MatcherConfig mc;
  mc.n_max = 10;
  MatcherModel m = make_matcher(mc);
  train_matcher(m, make_matching_dataset(generate_scenes(c, 200), mc.n_max, 1, 3), 60);
  return m;
}

void zero_noise_end_to_end(Outcome& o, const MatcherModel& model) {
  const ModelMatcher matcher(model);
  MotReport mot;
  double worst_t = 0.0, worst_r = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SimConfig c;
    c.seed = seed;
    c.n_frames = 40;
    c.n_objects = 4;
    const SceneSequence scene = generate_scene(c);
    const TrackingResult r = track_scene(scene, matcher);
    mot += mot_metrics(ground_truth_rows(scene), r.hypotheses);
    const auto gt = scene_objects(scene);
    o.require(r.geolocations.size() == gt.size(), "scene " + std::to_string(seed) + " object count");
    std::vector<char> used(gt.size(), 0);
    for (const auto& g : r.geolocations) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < gt.size(); ++k)
        if ((gt[k].pose.T - g.pose.T).norm() < (gt[best].pose.T - g.pose.T).norm()) best = k;
      o.require(!used[best], "two tracks on one object");
      used[best] = 1;
      worst_t = std::max(worst_t, (gt[best].pose.T - g.pose.T).norm());
      worst_r = std::max(worst_r, angular_error(g.pose.R, gt[best].pose.R));
    }
  }
  o.require(worst_t < 1e-6, "translation error");
  o.require(worst_r < 1e-6, "angular error");
  o.require(mot.mota() == 1.0, "MOTA");
  o.require(mot.ids == 0, "IDS");
  o.detail << "MOTA " << mot.mota() << ", IDS " << mot.ids << ", max |dT| " << worst_t << " m, max dR " << worst_r
           << " deg";
}

void noisy_end_to_end(Outcome& o, const MatcherModel& model) {
  const ModelMatcher matcher(model);
  std::vector<std::pair<Vec3, Vec3>> pairs;  // reference-camera axes
  int gt_total = 0, recalled = 0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    SimConfig c;
    c.seed = seed;
    c.appearance_sigma = 0.05;
    c.center_sigma = 2.0;
    c.depth_sigma = 0.05;
    c.miss_rate = 0.05;
    const SceneSequence scene = generate_scene(c);
    const TrackingResult r = track_scene(scene, matcher);
    std::vector<ScoredPrediction> preds;
    for (const auto& g : r.geolocations) preds.push_back({g.pose, static_cast<double>(g.instances)});
    std::vector<Pose5D> gts;
    for (const auto& g : scene_objects(scene)) gts.push_back(g.pose);
    const Mat3 axes = scene.reference_ego().matrix().transpose();
    const auto pr = pr_curve(preds, gts, GeoCriterion::euclidean(2.0), axes);
    gt_total += static_cast<int>(gts.size());
    recalled += pr.empty() ? 0 : static_cast<int>(std::lround(pr.back().recall * static_cast<double>(gts.size())));
    for (const auto& m : match_geolocations(preds, gts, 10.0))
      pairs.emplace_back(axes * preds[m.prediction].pose.T, axes * gts[m.ground_truth].T);
  }
  const auto te = translation_error_stats(pairs);
  const double recall = static_cast<double>(recalled) / gt_total;
  o.require(te.x.median < 0.5 && te.y.median < 0.5, "X/Y median below 0.5 m");
  o.require(te.z.median > te.x.median && te.z.median > te.y.median, "Z median largest");
  o.require(recall >= 0.9, "recall at 2 m");
  o.detail << "median |TE| x " << te.x.median << " y " << te.y.median << " z " << te.z.median << " m, recall "
           << recall << " (" << recalled << "/" << gt_total << ")";
}

// ------------------------------------------------------------------ 6

void matcher_training(Outcome& o) {
  SimConfig train_c;
  train_c.seed = 100;
  train_c.n_objects = 8;
  train_c.appearance_sigma = 0.05;
  SimConfig test_c = train_c;
  test_c.seed = 50000;
  MatcherConfig mc;
  mc.n_max = 10;
  mc.epochs = 100;
  const auto train = make_matching_dataset(generate_scenes(train_c, 200), mc.n_max, 1, 1);
  const auto test = make_matching_dataset(generate_scenes(test_c, 50), mc.n_max, 4, 2);

  MatcherModel base = make_matcher(mc);
  const double initial = evaluate_matcher(base, test).accuracy();
  train_matcher(base, train, mc.epochs);
  const double trained = evaluate_matcher(base, test).accuracy();
  o.require(initial <= 0.6, "initial accuracy above 0.6");
  o.require(trained >= 0.95, "trained accuracy below 0.95");

  // Joint vs matching-only with the pose head supplying the matched geometry.
  mc.pose_source = PoseSource::Head;
  double acc[2];
  for (int k = 0; k < 2; ++k) {
    mc.lambda = k == 0 ? 0.005 : 0.0;
    MatcherModel m = make_matcher(mc);
    train_matcher(m, train, mc.epochs);
    acc[k] = evaluate_matcher(m, test).accuracy();
  }
  o.require(acc[0] >= acc[1] - 0.01, "joint training more than 1 point below matching-only");

  mc.pose_source = PoseSource::Observation;
  mc.lambda = 0.005;
  MatcherModel a = make_matcher(mc), b = make_matcher(mc);
  const std::vector<MatchingSample> subset(train.begin(), train.begin() + 40);
  train_matcher(a, subset, 5);
  train_matcher(b, subset, 5);
  o.require(a == b, "training not deterministic");
  o.detail << "held-out accuracy " << initial << " -> " << trained << "; head mode joint " << acc[0]
           << " vs matching-only " << acc[1];
}

// ------------------------------------------------------------------ 7

void metric_oracle(Outcome& o) {
  std::vector<MotRow> gt, hyp;
  for (int f = 1; f <= 10; ++f)
    for (int id = 1; id <= 2; ++id) {
      const MotRow row{f, id, {100.0 * id + f, 200, 40, 80}, 1.0, std::nullopt};
      gt.push_back(row);
      if (f == 4 && id == 2) continue;  // one miss
      MotRow h = row;
      if (id == 1 && f > 6) h.id = 11;  // identity switch at frame 7
      hyp.push_back(h);
    }
  const MotReport r = mot_metrics(gt, hyp);
  o.require(r.gt == 20 && r.fn == 1 && r.ids == 1 && r.fp == 0, "fixture counts");
  o.require(r.mota() == 0.9, "MOTA");
  const double d = mahalanobis_distance(Vec3(0.4, 0, 0), Vec3(0.4, 0.39, 3.84), 3.0);
  o.require(d == 3.0, "Mahalanobis distance");
  o.detail << "MOTA " << r.mota() << " (GT " << r.gt << ", FN " << r.fn << ", IDS " << r.ids << ", FP " << r.fp
           << "), Mahalanobis " << d;
}

// ------------------------------------------------------------------ 8

void format_round_trips(Outcome& o) {
  const auto dir = std::filesystem::temp_directory_path() / "geoloc_acceptance_formats";
  std::filesystem::remove_all(dir);
  int scenes_ok = 0, mot_ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SimConfig c;
    c.seed = 300 + seed;
    c.trajectory = seed % 2 ? Trajectory::Turn : Trajectory::Straight;
    c.center_sigma = 2.0;
    c.depth_sigma = 0.05;
    c.rotation_sigma = 3.0;
    c.appearance_sigma = 0.1;
    c.embedding_sigma = 0.1;
    c.miss_rate = 0.1;
    c.false_positive_rate = 0.3;
    c.bbox_jitter = 1.5;
    const SceneSequence scene = generate_scene(c);
    const std::string text = serialize_scene(scene);
    const SceneSequence back = parse_scene(text);
    scenes_ok += back == scene && serialize_scene(back) == text;

    std::vector<MotRow> hyp;
    for (const auto& f : scene.frames)
      for (std::size_t k = 0; k < f.detections.size(); ++k) {
        const Detection& d = f.detections[k];
        hyp.push_back({f.frame_index, static_cast<int>(k) + 1, d.bbox, d.confidence,
                       camera_to_world({recover_translation(*d.observation, f.intrinsics), d.observation->R,
                                        FrameKind::Camera},
                                       f.ego)
                           .T});
      }
    const MotFiles files = export_mot(scene, hyp, dir / std::to_string(seed));
    sort_mot_rows(hyp);
    const auto hyp_back = import_mot(files.hypotheses);
    const auto gt_back = import_mot(files.ground_truth);
    mot_ok += hyp_back == hyp && gt_back == ground_truth_rows(scene) && write_mot(hyp_back) == write_mot(hyp);
  }
  o.require(scenes_ok == 10, "scene JSON");
  o.require(mot_ok == 10, "MOT CSV");
  o.detail << scenes_ok << "/10 scenes, " << mot_ok << "/10 MOT exports bit-exact";
}

}  // namespace

int main() {
  criterion(1, "hungarian oracle equivalence", 5, hungarian_oracle);
  criterion(2, "gradient suite", 30, gradient_suite);
  criterion(3, "geometry closure", 60, geometry_closure);

  const auto t0 = std::chrono::steady_clock::now();
  const MatcherModel model = tracking_matcher();
  std::cout << "     tracking matcher trained in " << std::fixed << std::setprecision(1)
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s" << std::defaultfloat
            << std::setprecision(6) << std::endl;
  criterion(4, "zero-noise end-to-end", 60, [&](Outcome& o) { zero_noise_end_to_end(o, model); });
  criterion(5, "noisy end-to-end", 300, [&](Outcome& o) { noisy_end_to_end(o, model); });

  criterion(6, "matcher training", 180, matcher_training);
  criterion(7, "metric oracle", 5, metric_oracle);
  criterion(8, "format round trips", 60, format_round_trips);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
