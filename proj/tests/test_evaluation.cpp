#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "geoloc/evaluation.hpp"
#include "geoloc/plot.hpp"

using namespace geoloc;

namespace {

MotRow box(int frame, int id, double left, double top = 100.0) { return {frame, id, {left, top, 40, 80}, 1.0, std::nullopt}; }

// Two objects over ten frames: 20 ground-truth boxes.
std::vector<MotRow> two_object_gt() {
  std::vector<MotRow> rows;
  for (int f = 1; f <= 10; ++f) {
    rows.push_back(box(f, 1, 100 + 2 * f));
    rows.push_back(box(f, 2, 400 - 2 * f));
  }
  return rows;
}

Pose5D world(double x, double y, double z, Vec2 R = Vec2(0, 1)) { return {Vec3(x, y, z), R, FrameKind::World}; }

}  // namespace

TEST(MotMetrics, IdentityIsPerfect) {
  const auto gt = two_object_gt();
  const MotReport r = mot_metrics(gt, gt);
  EXPECT_EQ(r.mota(), 1.0);
  EXPECT_EQ(r.motp(), 1.0);
  EXPECT_EQ(r.ids, 0);
  EXPECT_EQ(r.gt, 20);
  EXPECT_EQ(r.mostly_tracked, 2);
  EXPECT_EQ(r.frames, 10);
}

TEST(MotMetrics, OneMissAndOneFalsePositive) {
  const auto gt = two_object_gt();
  auto hyp = gt;
  hyp.erase(hyp.begin() + 5);             // frame 3, object 2 missed
  hyp.push_back(box(7, 9, 1000, 500));   // spurious box far from everything
  const MotReport r = mot_metrics(gt, hyp);
  EXPECT_EQ(r.fn, 1);
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.ids, 0);
  EXPECT_DOUBLE_EQ(r.mota(), 0.9);
}

TEST(MotMetrics, IdentitySwitchAndAllDropped) {
  const auto gt = two_object_gt();
  auto hyp = gt;
  for (auto& row : hyp)
    if (row.frame > 5 && row.id == 1) row.id = 7;
  const MotReport r = mot_metrics(gt, hyp);
  EXPECT_EQ(r.ids, 1);
  EXPECT_DOUBLE_EQ(r.mota(), 1.0 - 1.0 / 20.0);

  const MotReport none = mot_metrics(gt, {});
  EXPECT_EQ(none.fn, 20);
  EXPECT_EQ(none.mota(), 0.0);
  EXPECT_EQ(none.motp(), 0.0);
  EXPECT_EQ(none.mostly_lost, 2);

  // Below the IoU threshold a box counts as a miss plus a false positive.
  std::vector<MotRow> shifted{box(1, 1, 130)};  // IoU 10/70 with the gt box at 102
  const MotReport loose = mot_metrics({box(1, 1, 102)}, shifted);
  EXPECT_EQ(loose.fn + loose.fp, 2);
  EXPECT_THROW(mot_metrics(gt, {box(1, 1, 0), box(1, 1, 5)}), Error);
}

TEST(MotMetrics, OneMissAndOneSwitchIsExactlyPointNine) {
  const auto gt = two_object_gt();
  std::vector<MotRow> hyp;
  for (const auto& row : gt) {
    if (row.frame == 4 && row.id == 2) continue;
    hyp.push_back(row);
    if (row.frame > 6 && row.id == 1) hyp.back().id = 11;
  }
  const MotReport r = mot_metrics(gt, hyp);
  EXPECT_EQ(r.fn, 1);
  EXPECT_EQ(r.ids, 1);
  EXPECT_EQ(r.fp, 0);
  EXPECT_EQ(r.mota(), 0.9);
}

TEST(Mahalanobis, Examples) {
  const Vec3 semi(0.4, 0.39, 3.84);
  EXPECT_DOUBLE_EQ(mahalanobis_distance(Vec3(0.4, 0, 0), semi, 3.0), 3.0);
  EXPECT_DOUBLE_EQ(mahalanobis_distance(Vec3(0, 0, 3.84), semi, 3.0), 3.0);
  EXPECT_EQ(mahalanobis_distance(Vec3::Zero(), semi, 3.0), 0.0);
  EXPECT_NEAR(mahalanobis_distance(semi / std::sqrt(3.0), semi, 3.0), 3.0, 1e-12);
  // Equal axes reduce to a scaled Euclidean distance.
  const Vec3 d(0.3, -1.2, 2.0);
  EXPECT_NEAR(mahalanobis_distance(d, Vec3::Constant(2.0), 3.0), 3.0 * d.norm() / 2.0, 1e-14);
  EXPECT_THROW(mahalanobis_distance(d, Vec3(1, 0, 1), 3.0), Error);
}

TEST(Criterion, RotationGate) {
  GeoCriterion c = GeoCriterion::euclidean(2.0);
  c.rotation_gate = 30.0;
  EXPECT_TRUE(c.accepts(Vec3(1, 0, 0), Vec2(0, 1), Vec2(std::sin(0.5), std::cos(0.5))));
  EXPECT_FALSE(c.accepts(Vec3(1, 0, 0), Vec2(0, 1), Vec2(1, 0)));
  EXPECT_FALSE(c.accepts(Vec3(2.5, 0, 0), Vec2(0, 1), Vec2(0, 1)));
  EXPECT_THROW(GeoCriterion::euclidean(0.0), Error);
}

TEST(PrCurve, ExactAndFar) {
  const std::vector<Pose5D> gt{world(1, 2, 30)};
  const auto exact = pr_curve({{world(1, 2, 30), 0.9}}, gt, GeoCriterion::euclidean(2.0));
  ASSERT_EQ(exact.size(), 1u);
  EXPECT_EQ(exact[0].precision, 1.0);
  EXPECT_EQ(exact[0].recall, 1.0);

  const auto far = pr_curve({{world(4, 2, 30), 0.9}}, gt, GeoCriterion::euclidean(2.0));
  EXPECT_EQ(far[0].precision, 0.0);
  EXPECT_EQ(far[0].recall, 0.0);
  // 3 m along the depth axis stays inside the elongated Mahalanobis ellipsoid (3 / 3.84 < 1).
  const auto deep = pr_curve({{world(1, 2, 33), 0.9}}, gt, GeoCriterion::mahalanobis(3.0, Vec3(0.4, 0.39, 3.84)));
  EXPECT_EQ(deep[0].recall, 1.0);
}

TEST(PrCurve, ThreePredictionsTwoObjects) {
  const std::vector<Pose5D> gt{world(0, 0, 10), world(10, 0, 10)};
  const std::vector<ScoredPrediction> preds{{world(0.5, 0, 10), 0.9}, {world(50, 0, 10), 0.8}, {world(10, 0, 11), 0.7}};
  const auto pr = pr_curve(preds, gt, GeoCriterion::euclidean(2.0));
  ASSERT_EQ(pr.size(), 3u);
  EXPECT_EQ(pr[0].precision, 1.0);
  EXPECT_EQ(pr[0].recall, 0.5);
  EXPECT_EQ(pr[1].precision, 0.5);
  EXPECT_EQ(pr[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(pr[2].precision, 2.0 / 3.0);
  EXPECT_EQ(pr[2].recall, 1.0);
  EXPECT_EQ(pr[2].threshold, 0.7);

  // A duplicate of the first prediction cannot claim the same object twice.
  const auto dup = pr_curve({{world(0, 0, 10), 0.9}, {world(0, 0, 10), 0.5}}, gt, GeoCriterion::euclidean(2.0));
  EXPECT_EQ(dup.back().recall, 0.5);
}

TEST(PrCurve, RecallIsMonotone) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20, 20), s(0, 1);
  std::vector<Pose5D> gt;
  std::vector<ScoredPrediction> preds;
  for (int k = 0; k < 30; ++k) gt.push_back(world(u(rng), 0, 30 + u(rng)));
  for (int k = 0; k < 60; ++k) {
    const Pose5D& g = gt[static_cast<std::size_t>(k % 30)];
    preds.push_back({world(g.T.x() + 0.2 * u(rng), 0, g.T.z() + 0.2 * u(rng)), s(rng)});
  }
  const auto pr = pr_curve(preds, gt, GeoCriterion::euclidean(2.0));
  for (std::size_t k = 1; k < pr.size(); ++k) {
    EXPECT_GE(pr[k].recall, pr[k - 1].recall);
    EXPECT_LT(pr[k].threshold, pr[k - 1].threshold);
  }
  for (const auto& p : pr) {
    EXPECT_GE(p.precision, 0.0);
    EXPECT_LE(p.precision, 1.0);
  }
}

TEST(PrCurve, EvaluationAxesRotateDeltas) {
  // A 3 m offset along world x is depth-axis error for a camera looking along +x.
  const std::vector<Pose5D> gt{world(0, 0, 0)};
  Mat3 axes;
  axes << 0, 0, -1, 0, 1, 0, 1, 0, 0;  // world x -> camera z
  const auto crit = GeoCriterion::mahalanobis(3.0, Vec3(0.4, 0.39, 3.84));
  EXPECT_EQ(pr_curve({{world(3, 0, 0), 1.0}}, gt, crit, axes)[0].recall, 1.0);
  EXPECT_EQ(pr_curve({{world(3, 0, 0), 1.0}}, gt, crit)[0].recall, 0.0);
}

TEST(MatchGeolocations, GreedyWithinGate) {
  const std::vector<Pose5D> gt{world(0, 0, 10), world(3, 0, 10)};
  const std::vector<ScoredPrediction> preds{{world(2, 0, 10), 0.4}, {world(1, 0, 10), 0.9}, {world(30, 0, 10), 1.0}};
  const auto m = match_geolocations(preds, gt, 5.0);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].prediction, 1u);
  EXPECT_EQ(m[0].ground_truth, 0u);
  EXPECT_EQ(m[1].prediction, 0u);
  EXPECT_EQ(m[1].ground_truth, 1u);
}

TEST(TranslationError, StatsAndPermutationInvariance) {
  std::vector<std::pair<Vec3, Vec3>> pairs{{Vec3(1, 0, 0), Vec3(0, 0, 0)},
                                           {Vec3(0, -2, 0), Vec3(0, 0, 0)},
                                           {Vec3(0, 0, 10), Vec3(0, 0, 4)},
                                           {Vec3(-3, 0, 1), Vec3(0, 0, 0)}};
  const TranslationErrorStats s = translation_error_stats(pairs);
  EXPECT_EQ(s.count, 4u);
  EXPECT_DOUBLE_EQ(s.x.mean, 1.0);   // |1|, 0, 0, |-3|
  EXPECT_DOUBLE_EQ(s.x.median, 0.5);
  EXPECT_DOUBLE_EQ(s.x.stddev, std::sqrt((0.0 + 1.0 + 1.0 + 4.0) / 4.0));
  EXPECT_DOUBLE_EQ(s.y.mean, 0.5);
  EXPECT_DOUBLE_EQ(s.z.median, 0.5);

  std::reverse(pairs.begin(), pairs.end());
  std::swap(pairs[0], pairs[2]);
  const TranslationErrorStats t = translation_error_stats(pairs);
  EXPECT_EQ(t.x.mean, s.x.mean);
  EXPECT_EQ(t.z.median, s.z.median);
  EXPECT_EQ(t.y.stddev, s.y.stddev);
  EXPECT_THROW(translation_error_stats({}), Error);
}

TEST(PlotSvg, OneMarkerPerPoint) {
  const std::vector<PrPoint> pts{{1.0, 0.25, 0.9}, {0.8, 0.5, 0.7}, {0.6, 0.75, 0.2}};
  const std::string svg = pr_curve_svg(pts, "demo");
  std::size_t markers = 0;
  for (std::size_t at = svg.find("class=\"marker\""); at != std::string::npos; at = svg.find("class=\"marker\"", at + 1))
    ++markers;
  EXPECT_EQ(markers, 3u);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("demo"), std::string::npos);
}
