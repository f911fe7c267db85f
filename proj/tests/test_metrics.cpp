#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "oracles.hpp"
#include "s3t/metrics.hpp"
#include "s3t/rng.hpp"

using namespace s3t;

namespace {

Detection pred(const std::string& cls, double score, BBox b) { return {cls, score, b, std::nullopt, {}}; }

// Star-shaped polygon around (cx, cy): simple by construction.
Polygon star(Rng& rng, double cx, double cy, double r_max) {
  const auto n = 3 + rng.index(6);
  std::vector<double> angles(n);
  for (auto& a : angles) a = rng.uniform(0, 2 * M_PI);
  std::sort(angles.begin(), angles.end());
  Polygon p;
  for (double a : angles) {
    const double r = rng.uniform(0.3, 1.0) * r_max;
    p.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return p;
}

struct Instance {
  DetectionStream pred;
  GroundTruth gt;
  std::size_t n_pred = 0;
};

Instance random_instance(std::uint64_t seed, int frames, int max_per_class) {
  Rng rng(seed);
  Instance in;
  for (FrameId f = 0; f < frames; ++f) {
    FrameRecord fr{f, {}, {}};
    for (const std::string cls : {"a", "b"}) {
      const auto ng = rng.index(static_cast<std::uint64_t>(max_per_class) + 1);
      for (std::uint64_t g = 0; g < ng; ++g) {
        const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
        in.gt.frames[f].push_back(th::gt(cls, x, y, x + rng.uniform(8, 25), y + rng.uniform(8, 25)));
      }
      const auto np = rng.index(static_cast<std::uint64_t>(max_per_class) + 1);
      for (std::uint64_t p = 0; p < np; ++p) {
        const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
        fr.detections.push_back(
            pred(cls, rng.uniform(), {x, y, x + rng.uniform(8, 25), y + rng.uniform(8, 25)}));
      }
    }
    in.n_pred += fr.detections.size();
    in.pred.frames.push_back(std::move(fr));
  }
  return in;
}

// Score-descending greedy, written out independently.
std::size_t greedy_tp(const Instance& in, double threshold) {
  std::size_t tp = 0;
  for (const auto& fr : in.pred.frames) {
    const auto git = in.gt.frames.find(fr.frame_index);
    std::vector<GtObject> gts = git == in.gt.frames.end() ? std::vector<GtObject>{} : git->second;
    std::vector<bool> used(gts.size(), false);
    std::vector<std::size_t> order(fr.detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return fr.detections[a].score > fr.detections[b].score;
    });
    for (auto p : order) {
      double best = -1;
      std::size_t pick = gts.size();
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || gts[g].class_id != fr.detections[p].class_id) continue;
        const double iou = oracle::box_iou(fr.detections[p].bbox, gts[g].bbox);
        if (iou >= threshold && iou > best) best = iou, pick = g;
      }
      if (pick < gts.size()) used[pick] = true, ++tp;
    }
  }
  return tp;
}

std::size_t optimal_tp(const Instance& in, double threshold) {
  std::size_t tp = 0;
  for (const auto& fr : in.pred.frames) {
    const auto git = in.gt.frames.find(fr.frame_index);
    if (git == in.gt.frames.end()) continue;
    for (const std::string cls : {"a", "b"}) {
      std::vector<BBox> p, g;
      for (const auto& d : fr.detections)
        if (d.class_id == cls) p.push_back(d.bbox);
      for (const auto& o : git->second)
        if (o.class_id == cls) g.push_back(o.bbox);
      tp += oracle::max_matching(p, g, threshold);
    }
  }
  return tp;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("box IoU") {
  CHECK(box_iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(box_iou({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
  CHECK(box_iou({0, 0, 10, 10}, {10, 0, 20, 10}) == 0.0);
  CHECK(box_iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  Rng rng(1);
  for (int n = 0; n < 200; ++n) {
    const BBox a{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(11, 20), rng.uniform(11, 20)};
    const BBox b{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(11, 20), rng.uniform(11, 20)};
    CHECK(box_iou(a, b) == doctest::Approx(oracle::box_iou(a, b)).epsilon(1e-12));
    CHECK(box_iou(a, b) == box_iou(b, a));
  }
}

TEST_CASE("mask IoU") {
  const auto sq = th::rect(0, 0, 10, 10);
  CHECK(mask_iou(sq, sq) == 1.0);
  CHECK(mask_iou(sq, th::rect(20, 0, 30, 10)) == 0.0);
  CHECK(mask_iou(sq, th::rect(5, 0, 15, 10)) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  // sub-pixel offset: within one pixel column of quantization
  const double q = mask_iou(th::rect(0.2, 0, 10.2, 10), th::rect(5.2, 0, 15.2, 10));
  CHECK(std::abs(q - 1.0 / 3) <= 10.0 / 140);
  // a sliver covering no pixel center
  const Polygon sliver{{0.1, 0.1}, {0.4, 0.1}, {0.4, 0.4}};
  CHECK(mask_iou(sliver, sq) == 0.0);
  CHECK(mask_iou(sliver, sliver) == 1.0);
}

TEST_CASE("mask IoU agrees with a per-pixel raster") {
  Rng rng(21);
  for (int n = 0; n < 200; ++n) {
    const Polygon a = star(rng, rng.uniform(15, 45), rng.uniform(15, 45), 15);
    const Polygon b = star(rng, rng.uniform(15, 45), rng.uniform(15, 45), 15);
    CHECK(mask_iou(a, b, {60, 60}) == doctest::Approx(oracle::raster_iou(a, b, 60, 60)).epsilon(1e-12));
  }
  // clipping to the grid
  const auto big = th::rect(-10, -10, 30, 30);
  const auto small = th::rect(0, 0, 20, 20);
  CHECK(mask_iou(big, small, {20, 20}) == 1.0);
}

TEST_CASE("rate helpers") {
  CHECK(precision_of(0, 0) == 0.0);
  CHECK(recall_of(0, 0) == 0.0);
  CHECK(f1_of(0, 0) == 0.0);
  CHECK(f1_of(0.918, 0.936) == doctest::Approx(0.927).epsilon(0.0005 / 0.927));
  CHECK(std::abs(f1_of(0.918, 0.936) - 0.927) <= 0.0005);
}

TEST_CASE("hand-matched fixture") {
  DetectionStream p;
  p.frames = {{0,
               {pred("A", 0.9, {0, 0, 10, 8}), pred("A", 0.8, {100, 0, 110, 4}),
                pred("A", 0.7, {500, 500, 510, 510})},
               {}}};
  GroundTruth g;
  g.frames[0] = {th::gt("A", 0, 0, 10, 10), th::gt("A", 100, 0, 110, 10)};
  const auto report = evaluate(p, g);
  const auto* row = report.at(0.5);
  REQUIRE(row != nullptr);
  CHECK(row->tp == 1);
  CHECK(row->fp == 2);
  CHECK(row->fn == 1);
  CHECK(row->precision == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(row->recall == 0.5);
  CHECK(row->f1 == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(report.at(0.4)->tp == 2);
  CHECK(report.at(0.9)->tp == 0);
}

TEST_CASE("perfect predictions score one everywhere") {
  GroundTruth g;
  g.frames[0] = {th::gt("A", 0, 0, 10, 10), th::gt("B", 5, 5, 30, 40)};
  g.frames[4] = {{"A", {20, 20, 40, 50}, th::rect(20, 20, 40, 50)}};
  DetectionStream p;
  for (const auto& [f, objs] : g.frames) {
    FrameRecord fr{f, {}, {}};
    for (const auto& o : objs) fr.detections.push_back({o.class_id, 1.0, o.bbox, o.polygon, {}});
    p.frames.push_back(fr);
  }
  for (auto mode : {MaskMode::box, MaskMode::polygon_raster}) {
    MatchPolicy policy;
    policy.mask_mode = mode;
    const auto report = evaluate(p, g, policy);
    REQUIRE(report.rows.size() == 9);
    for (const auto& row : report.rows) {
      CHECK(row.precision == 1.0);
      CHECK(row.recall == 1.0);
      CHECK(row.f1 == 1.0);
      CHECK(row.mean_precision == 1.0);
    }
  }
}

TEST_CASE("missing prediction frames count all truth as missed; unknown classes are false positives") {
  GroundTruth g;
  g.frames[0] = {th::gt("A", 0, 0, 10, 10)};
  g.frames[1] = {th::gt("A", 0, 0, 10, 10)};
  DetectionStream p;
  p.frames = {{0, {pred("A", 0.9, {0, 0, 10, 10}), pred("zzz", 0.9, {0, 0, 10, 10})}, {}}};
  const auto* row = evaluate(p, g).at(0.5);
  CHECK(row->tp == 1);
  CHECK(row->fp == 1);
  CHECK(row->fn == 1);
}

TEST_CASE("minimum score filter") {
  GroundTruth g;
  g.frames[0] = {th::gt("A", 0, 0, 10, 10)};
  DetectionStream p;
  p.frames = {{0, {pred("A", 0.6, {0, 0, 10, 10}), pred("A", 0.95, {50, 50, 60, 60})}, {}}};
  MatchPolicy policy;
  policy.min_score = 0.9;
  const auto* row = evaluate(p, g, policy).at(0.5);
  CHECK(row->tp == 0);
  CHECK(row->fp == 1);
}

TEST_CASE("mean precision skips classes without predictions") {
  GroundTruth g;
  g.frames[0] = {th::gt("A", 0, 0, 10, 10), th::gt("B", 50, 50, 60, 60), th::gt("C", 80, 80, 90, 90)};
  DetectionStream p;
  p.frames = {{0,
               {pred("A", 0.9, {0, 0, 10, 10}), pred("B", 0.9, {50, 50, 60, 60}),
                pred("B", 0.8, {0, 50, 10, 60})},
               {}}};
  MatchPolicy policy;
  policy.mask_mode = MaskMode::polygon_raster;
  const auto* row = evaluate(p, g, policy).at(0.5);
  CHECK(row->per_class.at("A").precision == 1.0);
  CHECK(row->per_class.at("B").precision == 0.5);
  CHECK(!row->per_class.at("C").precision);
  CHECK(row->mean_precision == 0.75);
}

TEST_CASE("random instances: counting identities, monotone sweep, greedy reference") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto in = random_instance(seed, 4, 4);
    const auto report = evaluate(in.pred, in.gt);
    const std::size_t total_gt = in.gt.object_count();
    for (std::size_t t = 0; t < report.rows.size(); ++t) {
      const auto& row = report.rows[t];
      CHECK(row.tp + row.fn == total_gt);
      CHECK(row.tp + row.fp == in.n_pred);
      CHECK(row.tp == greedy_tp(in, row.iou));
      CHECK(row.tp <= optimal_tp(in, row.iou));
      if (row.precision + row.recall > 0)
        CHECK(row.f1 == doctest::Approx(2 * row.precision * row.recall / (row.precision + row.recall))
                            .epsilon(1e-12));
      if (t > 0) {
        CHECK(row.tp <= report.rows[t - 1].tp);
        CHECK(row.fn >= report.rows[t - 1].fn);
      }
    }
  }
}

TEST_CASE("policy validation and report JSON") {
  MatchPolicy bad;
  bad.iou_thresholds = {0.5, 0.3};
  CHECK_THROWS_AS(evaluate({}, {}, bad), std::invalid_argument);
  bad.iou_thresholds = {0.0};
  CHECK_THROWS_AS(evaluate({}, {}, bad), std::invalid_argument);
  CHECK(mask_mode_from_string("polygon-raster") == MaskMode::polygon_raster);
  CHECK_THROWS(mask_mode_from_string("pixels"));
  const auto j = to_json(evaluate({}, {}));
  CHECK(j["thresholds"].size() == 9);
  CHECK(j["mask_mode"] == "box");
}

}
