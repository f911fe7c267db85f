#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "s3t/cli.hpp"
#include "s3t/coherence.hpp"
#include "s3t/fileio.hpp"
#include "s3t/simulator.hpp"

using namespace s3t;
using nlohmann::json;

namespace {

const std::string kData = S3T_TEST_DATA;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> v;
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
  auto r = run({});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"recover", "--in", "a", "--out", "b", "--bogus"}).code == cli::kExitUsage);
  CHECK(run({"delta-d", "--focal-mm", "10"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("data errors exit 2") {
  const auto dir = th::temp_dir("cli_bad");
  const auto bad = (dir / "bad.jsonl").string();
  write_file_atomic(bad, R"({"frame": 0, "detections": [{"class": "a", "score": 1.3, "bbox": [0,0,1,1], "mask": null}]})"
                         "\n");
  auto r = run({"recover", "--in", bad, "--out", (dir / "o.jsonl").string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("score") != std::string::npos);
  CHECK(run({"recover", "--in", (dir / "missing.jsonl").string(), "--out", (dir / "o.jsonl").string()}).code ==
        cli::kExitData);
  CHECK(run({"recover", "--in", bad, "--out", "x", "--t-lower", "0.95"}).code == cli::kExitData);
}

TEST_CASE("recover matches the golden files and the reference implementation") {
  const auto dir = th::temp_dir("cli_recover");
  const auto out = (dir / "out.jsonl").string();
  const auto report = (dir / "report.jsonl").string();
  auto r = run({"recover", "--in", kData + "/stream.jsonl", "--out", out, "--report", report, "--t-lower", "0.5",
                "--t-upper", "0.9", "--k", "4", "--delta-d", "60"});
  REQUIRE(r.code == 0);
  CHECK(lines_of(out) == lines_of(kData + "/recovered.golden.jsonl"));
  CHECK(lines_of(report) == lines_of(kData + "/report.golden.jsonl"));

  const auto reference = oracle_recover(load_stream(kData + "/stream.jsonl"), {});
  std::ostringstream expected;
  write_stream(expected, reference.output);
  CHECK(read_file(out) == expected.str());
  CHECK(load_recovery_report(report) == reference.records);
}

TEST_CASE("delta-d") {
  auto r = run({"delta-d", "--focal-mm", "10", "--pixel-mm", "0.005", "--epsilon-m", "0.15", "--z-min-m", "5"});
  CHECK(r.code == 0);
  CHECK(std::stod(r.out) == 60.0);
  r = run({"delta-d", "--focal-mm", "10", "--pixel-mm", "0.005", "--v-max", "9", "--fps", "30", "--z-min-m", "5"});
  CHECK(std::stod(r.out) == doctest::Approx(120.0));
  CHECK(run({"delta-d", "--focal-mm", "10", "--pixel-mm", "0", "--epsilon-m", "1", "--z-min-m", "5"}).code ==
        cli::kExitData);
}

TEST_CASE("evaluate with identical prediction and truth") {
  const auto dir = th::temp_dir("cli_eval");
  const auto gt = load_ground_truth(kData + "/truth.jsonl");
  DetectionStream pred;
  for (const auto& [f, objs] : gt.frames) {
    FrameRecord fr{f, {}, {}};
    for (const auto& o : objs) fr.detections.push_back({o.class_id, 1.0, o.bbox, o.polygon, {}});
    pred.frames.push_back(fr);
  }
  save_stream((dir / "pred.jsonl").string(), pred);
  for (const std::string mode : {"box", "polygon-raster"}) {
    const auto out = (dir / ("report-" + mode + ".json")).string();
    auto r = run({"evaluate", "--pred", (dir / "pred.jsonl").string(), "--gt", kData + "/truth.jsonl",
                  "--mask-mode", mode, "--out", out, "--width", "640", "--height", "480"});
    REQUIRE(r.code == 0);
    const auto j = json::parse(read_file(out));
    CHECK(j["mask_mode"] == mode);
    REQUIRE(j["thresholds"].size() == 9);
    for (const auto& row : j["thresholds"]) {
      CHECK(row["precision"] == 1.0);
      CHECK(row["recall"] == 1.0);
      CHECK(row["f1"] == 1.0);
      CHECK(row["mP"] == 1.0);
    }
  }
}

TEST_CASE("sample writes the split frame lists") {
  const auto dir = th::temp_dir("cli_sample");
  const auto a = (dir / "auto.txt").string();
  const auto h = (dir / "human.txt").string();
  auto r = run({"sample", "--recovered", kData + "/report.golden.jsonl", "--n-frames", "40", "--skip", "2",
                "--alpha", "0.7", "--seed", "42", "--out-auto", a, "--out-human", h});
  REQUIRE(r.code == 0);
  std::set<std::size_t> recovered;
  for (const auto& rec : load_recovery_report(kData + "/report.golden.jsonl"))
    recovered.insert(static_cast<std::size_t>(rec.frame_index));
  std::vector<FrameId> expected;
  for (auto n : recovered)
    if (n % 3 == 0) expected.push_back(static_cast<FrameId>(n));
  std::vector<FrameId> got;
  for (const auto& l : lines_of(a)) got.push_back(std::stoll(l));
  const auto n_auto = got.size();
  for (const auto& l : lines_of(h)) got.push_back(std::stoll(l));
  std::sort(got.begin(), got.end());
  CHECK(got == expected);
  CHECK(n_auto == auto_count(0.7, expected.size()));
  CHECK(run({"sample", "--recovered", kData + "/report.golden.jsonl", "--n-frames", "10", "--out-auto", a,
             "--out-human", h})
            .code == cli::kExitData);
}

TEST_CASE("simulate is reproducible") {
  const auto dir = th::temp_dir("cli_sim");
  const auto s = (dir / "s.jsonl").string();
  const auto t = (dir / "t.jsonl").string();
  const auto m = (dir / "m.jsonl").string();
  REQUIRE(run({"simulate", "--scenario", kData + "/scenario.json", "--out-stream", s, "--out-truth", t,
               "--out-misslog", m})
              .code == 0);
  CHECK(read_file(s) == read_file(kData + "/stream.jsonl"));
  CHECK(read_file(t) == read_file(kData + "/truth.jsonl"));
  CHECK(read_file(m) == read_file(kData + "/misses.jsonl"));
}

TEST_CASE("loop commands drive the mock loop to completion") {
  const auto dir = th::temp_dir("cli_loop");
  const auto state = (dir / "state.json").string();
  const auto reviews = (dir / "reviews.jsonl").string();
  REQUIRE(run({"loop", "init", "--config", kData + "/small_loop.json", "--state", state}).code == 0);
  CHECK(run({"loop", "init", "--config", kData + "/small_loop.json", "--state", state}).code == cli::kExitData);
  CHECK(run({"loop", "export-pending", "--state", state, "--out", (dir / "p.jsonl").string()}).code ==
        cli::kExitData);

  for (int guard = 0; guard < 10; ++guard) {
    REQUIRE(run({"loop", "step", "--state", state}).code == 0);
    auto s = load_state(state);
    for (const auto& e : s.train.entries()) CHECK(s.unlabeled.count(e.frame_id) == 0);
    if (s.status == LoopStatus::awaiting_review) {
      const auto pend = (dir / "pending.jsonl").string();
      REQUIRE(run({"loop", "export-pending", "--state", state, "--out", pend}).code == 0);
      CHECK(load_stream(pend).frame_count() == s.pending->frames.size());
      REQUIRE(run({"loop", "simulate-reviews", "--state", state, "--out", reviews}).code == 0);
      // stepping is blocked until the reviews are in
      REQUIRE(run({"loop", "step", "--state", state}).code == 0);
      CHECK(load_state(state).iteration == s.iteration);
      auto r = run({"loop", "ingest-reviews", "--state", state, "--reviews", reviews});
      REQUIRE(r.code == 0);
      // ingesting the same file again finds nothing pending
      CHECK(run({"loop", "ingest-reviews", "--state", state, "--reviews", reviews}).code == cli::kExitData);
    }
    if (s.status == LoopStatus::done || s.status == LoopStatus::exhausted) break;
  }
  const auto r = run({"loop", "status", "--state", state});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["status"] == "done");
  CHECK(j["history"].back()["terminated"] == true);
}

TEST_CASE("ingest without finalize keeps the iteration open") {
  const auto dir = th::temp_dir("cli_ingest");
  const auto state = (dir / "state.json").string();
  const auto reviews = (dir / "reviews.jsonl").string();
  REQUIRE(run({"loop", "init", "--config", kData + "/small_loop.json", "--state", state}).code == 0);
  REQUIRE(run({"loop", "step", "--state", state}).code == 0);
  REQUIRE(load_state(state).status == LoopStatus::awaiting_review);
  // a hand-written file reviewing only one frame
  const auto s = load_state(state);
  const FrameId f = s.pending->frames.front();
  write_file_atomic(reviews, json({{"frame", f}, {"request_id", "hand-1"}, {"decisions", json::array()}}).dump() + "\n");
  auto r = run({"loop", "ingest-reviews", "--state", state, "--reviews", reviews});
  CHECK(r.code == cli::kExitData);  // others still unreviewed
  CHECK(load_state(state).pending->reviews.empty());
  r = run({"loop", "ingest-reviews", "--state", state, "--reviews", reviews, "--no-finalize"});
  CHECK(r.code == 0);
  CHECK(load_state(state).pending->reviews.size() == 1);
}

TEST_CASE("command adapter runs the configured programs") {
  const auto dir = th::temp_dir("cli_command");
  // train echoes a model id; infer copies a fixed stream restricted to nothing
  const auto script = (dir / "infer.sh").string();
  write_file_atomic(script, "#!/bin/sh\nwhile read f; do echo \"{\\\"frame\\\": $f, \\\"detections\\\": []}\"; done < \"$1\" > \"$2\"\n");
  CommandAdapter adapter({"echo model-{train_manifest}", "sh " + script + " {frames_in} {detections_out}",
                          dir.string()});
  DatasetManifest m;
  m.add({7, AnnotationSource::human, 0});
  const auto model = adapter.train(m, {});
  CHECK(model.train_size == 1);
  CHECK(model.id.rfind("model-", 0) == 0);
  const auto out = adapter.infer(model, {3, 4});
  CHECK(out.frame_count() == 2);
  CommandAdapter failing({"false", "false", dir.string()});
  CHECK_THROWS_AS(failing.train(m, {}), AdapterError);
}

}
