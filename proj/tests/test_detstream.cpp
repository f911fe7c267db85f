#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "s3t/detstream.hpp"
#include "s3t/rng.hpp"

using namespace s3t;

TEST_SUITE("detstream") {

TEST_CASE("empty input gives an empty stream") {
  std::istringstream in("");
  CHECK(read_stream(in).frame_count() == 0);
}

TEST_CASE("frames come back sorted") {
  std::istringstream in(
      R"({"frame": 2, "detections": []}
{"frame": 0, "detections": [{"class": "a", "score": 0.5, "bbox": [0, 0, 1, 1], "mask": null}]}
{"frame": 1, "detections": []}
)");
  const auto s = read_stream(in);
  REQUIRE(s.frame_count() == 3);
  CHECK(s.frames[0].frame_index == 0);
  CHECK(s.frames[1].frame_index == 1);
  CHECK(s.frames[2].frame_index == 2);
  CHECK(s.frames[0].detections.size() == 1);
}

TEST_CASE("out of range score names the field and the frame") {
  std::istringstream in(
      R"({"frame": 0, "detections": []}
{"frame": 4, "detections": [{"class": "a", "score": 1.3, "bbox": [0, 0, 1, 1], "mask": null}]}
)");
  try {
    read_stream(in, "s.jsonl");
    FAIL("expected an error");
  } catch (const InvariantError& e) {
    CHECK(e.field() == "score");
    CHECK(std::string(e.what()).find("frame 4") != std::string::npos);
    CHECK(std::string(e.what()).find("s.jsonl:2") != std::string::npos);
  }
}

TEST_CASE("malformed line reports its number") {
  std::istringstream in("{\"frame\": 0, \"detections\": []}\n{not json\n");
  try {
    read_stream(in);
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("duplicate frame index is rejected") {
  std::istringstream in("{\"frame\": 1, \"detections\": []}\n{\"frame\": 1, \"detections\": []}\n");
  CHECK_THROWS_AS(read_stream(in), InvariantError);
}

TEST_CASE("geometry invariants") {
  CHECK_THROWS_AS(validate(BBox{5, 0, 5, 1}), InvariantError);
  CHECK_THROWS_AS(validate(BBox{0, 3, 1, 2}), InvariantError);
  CHECK_THROWS_AS(validate_polygon({{0, 0}, {1, 1}}), InvariantError);
  // bow tie
  CHECK_THROWS_AS(validate_polygon({{0, 0}, {10, 10}, {10, 0}, {0, 10}}), InvariantError);
  CHECK_NOTHROW(validate_polygon(th::rect(0, 0, 4, 3)));
  Detection d = th::det("a", -0.1, 5, 5);
  CHECK_THROWS_AS(validate(d), InvariantError);
}

TEST_CASE("box center") {
  CHECK(center(BBox{0, 0, 10, 10}) == Point{5, 5});
  CHECK(center(BBox{100, 40, 160, 100}) == Point{130, 70});
  const double a = 12.25, b = -3.5, w = 7.0, h = 0.5;
  CHECK(center(BBox{a, b, a + w, b + h}) == Point{a + w / 2, b + h / 2});
}

TEST_CASE("save then load is the identity on valid streams") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    DetectionStream s = th::random_stream(seed, 20, 5);
    Rng rng(seed);
    for (auto& f : s.frames)
      for (auto& d : f.detections) {
        if (rng.bernoulli(0.3)) d.mask = th::rect(d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max);
        if (rng.bernoulli(0.2)) d.provenance = Provenance::recovered;
      }
    if (seed % 2) {
      s.capture_rate = 30;
      s.resolution = {1920, 1080};
    }
    s.frames.front().image_ref = "img/0.png";
    std::stringstream io;
    write_stream(io, s);
    CHECK(read_stream(io) == s);
  }
}

TEST_CASE("ground truth round trip") {
  GroundTruth gt;
  gt.frames[3] = {th::gt("a", 0, 0, 5, 5), {"b", {1, 1, 4, 4}, th::rect(1, 1, 4, 4)}};
  gt.frames[9] = {};
  std::stringstream io;
  write_ground_truth(io, gt);
  CHECK(read_ground_truth(io) == gt);
}

TEST_CASE("fuzz: loaded detections always satisfy the invariants") {
  Rng rng(99);
  int accepted = 0, rejected = 0;
  for (int n = 0; n < 500; ++n) {
    const double score = rng.uniform(-0.5, 1.5);
    const double x0 = rng.uniform(-5, 5), x1 = rng.uniform(-5, 5);
    const double y0 = rng.uniform(-5, 5), y1 = rng.uniform(-5, 5);
    nlohmann::json mask = nullptr;
    if (rng.bernoulli(0.5)) {
      mask = nlohmann::json::array();
      const auto k = rng.index(6);
      for (std::uint64_t v = 0; v < k; ++v) mask.push_back({rng.uniform(0, 9), rng.uniform(0, 9)});
    }
    nlohmann::json line = {{"frame", n},
                           {"detections",
                            {{{"class", "c"}, {"score", score}, {"bbox", {x0, y0, x1, y1}}, {"mask", mask}}}}};
    std::istringstream in(line.dump());
    try {
      const auto s = read_stream(in);
      ++accepted;
      for (const auto& f : s.frames)
        for (const auto& d : f.detections) {
          CHECK(d.score >= 0.0);
          CHECK(d.score <= 1.0);
          CHECK(d.bbox.x_min < d.bbox.x_max);
          CHECK(d.bbox.y_min < d.bbox.y_max);
          if (d.mask) {
            CHECK(d.mask->size() >= 3);
            CHECK(is_simple(*d.mask));
          }
        }
    } catch (const DataError&) {
      ++rejected;
    }
  }
  CHECK(accepted > 0);
  CHECK(rejected > 0);
}

}
