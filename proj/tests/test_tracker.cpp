#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "geoloc/evaluation.hpp"
#include "geoloc/simulator.hpp"
#include "geoloc/tracker.hpp"

using namespace geoloc;

namespace {

// Identity-keyed matcher: the descriptor holds a scalar key (the object id
// for simulated detections), similarity falls off with key distance.
struct KeyMatcher {
  int capacity = 8;
  double delta = 0.0;

  static ObjectDescriptor key(double k) { return {{k}, {}}; }

  Described describe(const FrameRecord& f, const Detection& d, const EgoPose& ref) const {
    const Pose5D cam{recover_translation(*d.observation, f.intrinsics), normalize_rotation(d.observation->R),
                     FrameKind::Camera};
    return {key(d.object_id.value_or(-1)), to_reference_frame(cam, f.ego, ref), cam.T.z()};
  }

  SimilarityBundle similarity(const std::vector<ObjectDescriptor>& a, const std::vector<ObjectDescriptor>& b) const {
    Tensor S({static_cast<std::size_t>(capacity), static_cast<std::size_t>(capacity)});
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) S(i, j) = 4.0 - 8.0 * std::abs(a[i].geometry[0] - b[j].geometry[0]);
    return augment_normalize(S, delta, static_cast<int>(a.size()), static_cast<int>(b.size()));
  }
};

static_assert(Matcher<KeyMatcher>);

TrackInstance instance_at(const Vec3& T, double depth = 1.0, Vec2 R = Vec2(0, 1)) {
  TrackInstance i;
  i.pose = {T, R, FrameKind::Reference};
  i.depth = depth;
  return i;
}

Track track_with(int id, std::vector<std::pair<int, double>> frame_keys) {
  Track t;
  t.track_id = id;
  for (auto [frame, k] : frame_keys) {
    TrackInstance i = instance_at(Vec3::Zero());
    i.frame_index = frame;
    i.descriptor = KeyMatcher::key(k);
    t.instances.push_back(i);
  }
  t.observations = static_cast<int>(t.instances.size());
  return t;
}

Detection keyed_detection(int id, double z = 10.0) {
  Detection d;
  d.bbox = {700, 400, 20, 40};
  d.object_id = id;
  d.observation = PixelObservation{Vec2(800 + 10.0 * id, 450), z, Vec2(0, 1)};
  return d;
}

FrameRecord keyed_frame(int index, std::vector<int> ids) {
  FrameRecord f;
  f.frame_index = index;
  f.intrinsics = {1000, 1000, 800, 450, 1600, 900};
  for (int id : ids) f.detections.push_back(keyed_detection(id));
  return f;
}

// Exhaustive maximum over injective row -> column maps.
double brute_force_best(const Eigen::MatrixXd& s) {
  const int rows = static_cast<int>(s.rows()), cols = static_cast<int>(s.cols());
  std::vector<int> perm(cols);
  std::iota(perm.begin(), perm.end(), 0);
  double best = kNegInf;
  do {
    double total = 0.0;
    for (int i = 0; i < rows; ++i) total += s(i, perm[i]);
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST(ScoreMatrix, MaxOverInstancesAndMeanNull) {
  const KeyMatcher matcher;
  // Track 0 has instances from frames 1 and 2, track 1 only from frame 2.
  const std::vector<Track> tracks{track_with(1, {{1, 0.0}, {2, 0.6}}), track_with(2, {{2, 3.0}})};
  const std::vector<ObjectDescriptor> dets{KeyMatcher::key(0.5), KeyMatcher::key(3.0)};
  const Eigen::MatrixXd s = score_matrix(tracks, dets, matcher);
  ASSERT_EQ(s.rows(), 2);
  ASSERT_EQ(s.cols(), 4);

  // Oracle: one similarity call per source frame.
  const SimilarityBundle f1 = matcher.similarity({KeyMatcher::key(0.0)}, dets);
  const SimilarityBundle f2 = matcher.similarity({KeyMatcher::key(0.6), KeyMatcher::key(3.0)}, dets);
  const std::size_t N = 8;
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(s(0, static_cast<Eigen::Index>(j)), std::max(f1.fused(0, j), f2.fused(0, j)));
    EXPECT_EQ(s(1, static_cast<Eigen::Index>(j)), f2.fused(1, j));
  }
  EXPECT_EQ(s(0, 2), 0.5 * (f1.S1n(0, N) + f2.S1n(0, N)));
  EXPECT_EQ(s(1, 3), f2.S1n(1, N));
  EXPECT_EQ(s(0, 3), kNegInf);
  EXPECT_EQ(s(1, 2), kNegInf);
}

TEST(ScoreMatrix, SingleTrackNoDetections) {
  const std::vector<Track> tracks{track_with(1, {{1, 0.0}})};
  const Eigen::MatrixXd s = score_matrix(tracks, {}, KeyMatcher{});
  ASSERT_EQ(s.rows(), 1);
  ASSERT_EQ(s.cols(), 1);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);  // the only candidate is null
  const AssignmentResult a = hungarian(s, 0);
  EXPECT_TRUE(a.matches.empty());
  EXPECT_EQ(a.unmatched_tracks, std::vector<int>{0});
}

TEST(Hungarian, Examples) {
  Eigen::MatrixXd s(2, 4);
  s << 0.9, 0.1, 0.2, kNegInf,  //
      0.8, 0.7, kNegInf, 0.2;
  const AssignmentResult a = hungarian(s, 2);
  EXPECT_EQ(a.matches, (std::vector<std::pair<int, int>>{{0, 0}, {1, 1}}));
  EXPECT_NEAR(a.total_score, 1.6, 1e-15);

  // 0.9 + null 0.2 beats 0.9 + 0.0 and null 0.2 + 0.8.
  s(1, 1) = 0.0;
  const AssignmentResult b = hungarian(s, 2);
  EXPECT_EQ(b.matches, (std::vector<std::pair<int, int>>{{0, 0}}));
  EXPECT_EQ(b.unmatched_tracks, std::vector<int>{1});
  EXPECT_EQ(b.unmatched_detections, std::vector<int>{1});

  // A strong null for track 0 hands detection 0 to track 1: 0.5 + 0.8 > 0.9 + 0.0.
  Eigen::MatrixXd steal(2, 3);
  steal << 0.9, 0.5, kNegInf,  //
      0.8, kNegInf, 0.0;
  const AssignmentResult c = hungarian(steal, 1);
  EXPECT_EQ(c.matches, (std::vector<std::pair<int, int>>{{1, 0}}));
  EXPECT_EQ(c.unmatched_tracks, std::vector<int>{0});
  EXPECT_NEAR(c.total_score, 1.3, 1e-15);

  EXPECT_THROW(hungarian(s, 3), Error);
  Eigen::MatrixXd blocked = Eigen::MatrixXd::Constant(2, 2, kNegInf);
  blocked(0, 0) = blocked(1, 0) = 1.0;
  try {
    solve_assignment(blocked);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
  }
}

TEST(Hungarian, MatchesBruteForce) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int cases = 0;
  for (int m = 1; m <= 4; ++m)
    for (int n = 0; m + n + m <= 10 && m + n <= 7; ++n)
      for (int trial = 0; trial < 40; ++trial) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Constant(m, n + m, kNegInf);
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) s(i, j) = u(rng) < 0.2 ? kNegInf : u(rng);
          s(i, n + i) = u(rng);
        }
        const AssignmentResult a = hungarian(s, n);
        EXPECT_NEAR(a.total_score, brute_force_best(s), 1e-12) << "m=" << m << " n=" << n;
        EXPECT_EQ(a.matches.size() + a.unmatched_tracks.size(), static_cast<std::size_t>(m));
        EXPECT_EQ(a.matches.size() + a.unmatched_detections.size(), static_cast<std::size_t>(n));
        ++cases;
      }
  EXPECT_GT(cases, 300);
}

TEST(Step, FirstFrameOpensTracks) {
  TrackerState state;
  const FrameAssignment a = step(state, keyed_frame(1, {5, 7, 9}), KeyMatcher{});
  EXPECT_EQ(a.pairs, (std::vector<std::pair<int, int>>{{1, 0}, {2, 1}, {3, 2}}));
  EXPECT_EQ(state.tracks.size(), 3u);
  EXPECT_EQ(state.next_track_id, 4);
  EXPECT_TRUE(state.reference.has_value());
}

TEST(Step, OutOfOrderFrame) {
  TrackerState state;
  step(state, keyed_frame(3, {1}), KeyMatcher{});
  for (int bad : {3, 2}) {
    try {
      step(state, keyed_frame(bad, {1}), KeyMatcher{});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::OutOfOrderFrame);
    }
  }
}

TEST(Step, OccludedObjectResumesItsTrack) {
  TrackerState state;
  const KeyMatcher matcher;
  step(state, keyed_frame(1, {1, 2}), matcher);
  const FrameAssignment gap = step(state, keyed_frame(2, {1}), matcher);
  EXPECT_EQ(gap.pairs, (std::vector<std::pair<int, int>>{{1, 0}}));
  const FrameAssignment back = step(state, keyed_frame(3, {2, 1, 6}), matcher);
  EXPECT_EQ(back.pairs, (std::vector<std::pair<int, int>>{{2, 0}, {1, 1}, {3, 2}}));
  EXPECT_EQ(state.tracks[1].observations, 2);
  EXPECT_EQ(state.tracks[0].observations, 3);
}

TEST(Step, InstanceCapEvictsOldest) {
  TrackerState state;
  state.config.instance_cap = 3;
  for (int k = 1; k <= 5; ++k) step(state, keyed_frame(k, {4}), KeyMatcher{});
  ASSERT_EQ(state.tracks.size(), 1u);
  EXPECT_EQ(state.tracks[0].instances.size(), 3u);
  EXPECT_EQ(state.tracks[0].instances.front().frame_index, 3);
  EXPECT_EQ(state.tracks[0].observations, 5);
}

TEST(Step, MinSimilarityGateOpensNewTrack) {
  TrackerState state;
  state.config.min_similarity = 0.99;
  const KeyMatcher matcher;
  step(state, keyed_frame(1, {1}), matcher);
  step(state, keyed_frame(2, {1}), matcher);
  EXPECT_EQ(state.tracks.size(), 2u);
}

TEST(Tracking, DeterministicAndExactOnZeroNoise) {
  SimConfig c;
  c.seed = 8;
  c.n_objects = 5;
  c.trajectory = Trajectory::Turn;
  const SceneSequence scene = generate_scene(c);
  const KeyMatcher matcher{40, 0.0};
  const TrackingResult a = track_scene(scene, matcher), b = track_scene(scene, matcher);
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.hypotheses, b.hypotheses);

  const auto gt = scene_objects(scene);
  ASSERT_EQ(a.geolocations.size(), gt.size());
  for (const auto& g : a.geolocations) {
    // Track ids follow first appearance; look the object up by position.
    const auto hit = std::min_element(gt.begin(), gt.end(), [&](const GtObject& x, const GtObject& y) {
      return (x.pose.T - g.pose.T).norm() < (y.pose.T - g.pose.T).norm();
    });
    EXPECT_LT((hit->pose.T - g.pose.T).norm(), 1e-9);
    EXPECT_LT((hit->pose.R - g.pose.R).norm(), 1e-9);
    EXPECT_EQ(g.pose.frame, FrameKind::World);
  }
  std::size_t detections = 0;
  for (const auto& f : scene.frames) detections += f.detections.size();
  EXPECT_EQ(a.hypotheses.size(), detections);
}

TEST(AggregatePose, SingleInstanceAndMedian) {
  const std::vector<TrackInstance> one{instance_at(Vec3(1, 2, 3), 1.0, Vec2(0.6, 0.8))};
  const Pose5D p = aggregate_pose(one, Aggregation::Median);
  EXPECT_EQ(p.T, Vec3(1, 2, 3));
  EXPECT_EQ(p.R, Vec2(0.6, 0.8));

  const std::vector<TrackInstance> two{instance_at(Vec3(0, 0, 10)), instance_at(Vec3(0, 0, 12))};
  EXPECT_NEAR((aggregate_pose(two, Aggregation::Median).T - Vec3(0, 0, 11)).norm(), 0.0, 1e-15);

  std::vector<TrackInstance> outlier{instance_at(Vec3(0, 0, 10)), instance_at(Vec3(0, 0, 11)),
                                     instance_at(Vec3(0, 0, 90))};
  EXPECT_EQ(aggregate_pose(outlier, Aggregation::Median).T, Vec3(0, 0, 11));
  EXPECT_NEAR(aggregate_pose(outlier, Aggregation::Mean).T.z(), 37.0, 1e-12);
  outlier[2].depth = 9.0;  // weights 1, 1, 1/9
  EXPECT_NEAR(aggregate_pose(outlier, Aggregation::InverseDepth).T.z(), (10.0 + 11.0 + 10.0) / (2.0 + 1.0 / 9.0), 1e-12);
  EXPECT_NEAR(aggregate_pose(outlier, Aggregation::Median).R.norm(), 1.0, 1e-15);

  try {
    aggregate_pose(std::vector<TrackInstance>{}, Aggregation::Median);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyTrack);
  }
  EXPECT_THROW(aggregation_from_string("mode"), Error);
  EXPECT_EQ(aggregation_from_string("inverse-depth"), Aggregation::InverseDepth);
}

TEST(AggregatePose, MedianBeatsSingleObservationUnderDepthNoise) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> noise(0.0, 0.05);
  const Vec3 truth(2, 1, 20);
  double single = 0.0, median = 0.0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    std::vector<TrackInstance> inst;
    for (int k = 0; k < 10; ++k) inst.push_back(instance_at(truth * (1.0 + noise(rng))));
    single += (inst.front().pose.T - truth).norm();
    median += (aggregate_pose(inst, Aggregation::Median).T - truth).norm();
  }
  EXPECT_LT(median, 0.6 * single);
}

TEST(Finalize, EmptyStateAndMinInstances) {
  EXPECT_TRUE(finalize(TrackerState{}).empty());
  TrackerState state;
  const KeyMatcher matcher;
  step(state, keyed_frame(1, {1, 2}), matcher);
  step(state, keyed_frame(2, {1}), matcher);
  EXPECT_EQ(finalize(state).size(), 1u);
  EXPECT_EQ(finalize(state, 1).size(), 2u);
  EXPECT_EQ(finalize(state, 3).size(), 0u);
  const auto g = finalize(state);
  EXPECT_EQ(g.front().track_id, 1);
  EXPECT_EQ(g.front().instances, 2);

  const auto back = geolocations_from_json(nlohmann::json::parse(geolocation_json(g).dump()));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.front().pose.T, g.front().pose.T);
  EXPECT_THROW(geolocations_from_json(nlohmann::json::parse(R"([{"track_id": 1, "T": [1, 2], "R": [0, 1], "instances": 2}])")),
               Error);
}
