#include "s3t/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "s3t/camera.hpp"
#include "s3t/coherence.hpp"
#include "s3t/fileio.hpp"
#include "s3t/metrics.hpp"
#include "s3t/sampling.hpp"
#include "s3t/server.hpp"

namespace s3t::cli {

using nlohmann::json;
namespace fs = std::filesystem;

MockWorld build_mock_world(const json& cfg) {
  MockWorld w;
  w.video = generate(scenario_from_json(cfg.at("video")));
  w.resolution = w.video.stream.resolution;
  w.all_truth = w.video.truth;
  if (cfg.contains("test")) {
    const auto offset = cfg.value("test_offset", FrameId{1000000});
    const SimOutput test = generate(scenario_from_json(cfg["test"]));
    for (const auto& [f, objs] : test.truth.frames) {
      w.test_truth.frames[f + offset] = objs;
      w.all_truth.frames[f + offset] = objs;
    }
  }
  return w;
}

std::unique_ptr<DetectorAdapter> make_adapter(const json& cfg) {
  if (!cfg.is_object()) throw DataError("adapter configuration missing");
  const std::string kind = cfg.value("kind", "");
  if (kind == "mock") {
    MockWorld w = build_mock_world(cfg);
    return mock_adapter(std::move(w.all_truth), skill_curve_from_json(cfg.at("skill_curve")),
                        noise_from_json(cfg.value("noise", json::object())), w.resolution,
                        cfg.value("seed", std::uint64_t{0}));
  }
  if (kind == "command")
    return std::make_unique<CommandAdapter>(CommandTemplates{cfg.at("train").get<std::string>(),
                                                             cfg.at("infer").get<std::string>(),
                                                             cfg.value("workdir", ".")});
  throw DataError("unknown adapter kind '" + kind + "' (expected mock or command)");
}

namespace {

std::string resolve(const std::string& base, const std::string& path) {
  return fs::path(path).is_absolute() ? path : (fs::path(base) / path).string();
}

}  // namespace

LoopState init_from_config(const json& config, const std::string& base_dir) {
  LoopConfig loop_cfg = loop_config_from_json(config);
  json adapter = config.at("adapter");

  std::size_t timeline = 0;
  GroundTruth test_truth;
  if (adapter.value("kind", "") == "mock") {
    MockWorld w = build_mock_world(adapter);
    timeline = w.video.stream.frames.size();
    test_truth = std::move(w.test_truth);
  } else {
    timeline = config.at("video_frames").get<std::size_t>();
    if (adapter.contains("workdir"))
      adapter["workdir"] = resolve(base_dir, adapter["workdir"].get<std::string>());
  }
  if (config.contains("test_truth"))
    test_truth = load_ground_truth(resolve(base_dir, config["test_truth"].get<std::string>()));

  DatasetManifest initial;
  Annotations labels;
  if (config.contains("initial_training")) {
    const auto& t = config["initial_training"];
    std::vector<FrameId> ids;
    if (t.contains("frames")) {
      ids = t["frames"].get<std::vector<FrameId>>();
    } else {
      const auto count = t.value("count", FrameId{0});
      const auto first = t.value("first_id", FrameId{2000000});
      for (FrameId i = 0; i < count; ++i) ids.push_back(first + i);
    }
    for (FrameId id : ids) initial.add({id, AnnotationSource::human, -1});
    if (t.contains("annotations")) {
      const GroundTruth gt = load_ground_truth(resolve(base_dir, t["annotations"].get<std::string>()));
      for (const auto& [f, objs] : gt.frames) labels[f] = objs;
    }
  }

  LoopState s = init_loop(std::move(loop_cfg), timeline, std::move(initial), std::move(labels),
                          std::move(test_truth));
  s.adapter = adapter;
  return s;
}

namespace {

void write_id_list(const std::string& path, const std::vector<FrameId>& ids) {
  std::ostringstream out;
  for (FrameId id : ids) out << id << '\n';
  write_file_atomic(path, out.str());
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON in " + path + ": " + e.what());
  }
}

struct RecoverArgs {
  std::string in, out, report;
  CoherenceParams params;
};

int do_recover(const RecoverArgs& a, std::ostream& out) {
  a.params.validate();
  const DetectionStream stream = load_stream(a.in);
  const RecoveryResult r = recover(stream, a.params);
  save_stream(a.out, r.output);
  if (!a.report.empty()) save_recovery_report(a.report, r.records);
  out << "frames: " << stream.frame_count() << "\nrecovered detections: " << r.records.size()
      << "\nrecovered frames: " << r.recovered_frames.size() << '\n';
  return kExitOk;
}

struct DeltaDArgs {
  double focal = 0, pixel = 0, z_min = 0;
  std::optional<double> epsilon, v_max, fps;
  double rotational = 0;
};

int do_delta_d(const DeltaDArgs& a, std::ostream& out, std::ostream& err) {
  CameraModel cam;
  cam.focal_mm = a.focal;
  cam.pixel_mm = a.pixel;
  cam.z_min_m = a.z_min;
  if (a.epsilon) {
    cam.epsilon_m = *a.epsilon;
  } else if (a.v_max && a.fps) {
    cam.epsilon_m = epsilon_from_motion(*a.v_max, *a.fps, a.rotational);
    cam.v_max_mps = a.v_max;
    cam.fps = *a.fps;
  } else {
    err << "delta-d: give --epsilon-m, or --v-max together with --fps\n";
    return kExitUsage;
  }
  out << delta_d(cam) << '\n';
  return kExitOk;
}

struct SampleArgs {
  std::string recovered, out_auto, out_human;
  std::size_t n_frames = 0;
  int skip = 2;
  double alpha = 0.7;
  std::uint64_t seed = 0;
};

int do_sample(const SampleArgs& a, std::ostream& out) {
  RecoveryResult r;
  for (const auto& rec : load_recovery_report(a.recovered)) {
    r.records.push_back(rec);
    r.recovered_frames.insert(rec.frame_index);
  }
  const IndicatorVector selected =
      select_frames(recovered_indicator(r, a.n_frames), sp_indicator({a.skip}, a.n_frames));
  std::vector<FrameId> frames;
  for (auto n : selected.support()) frames.push_back(static_cast<FrameId>(n));
  const SplitResult split = alpha_split(frames, {a.alpha, a.seed});
  write_id_list(a.out_auto, split.automatic);
  write_id_list(a.out_human, split.human);
  out << "recovered frames: " << r.recovered_frames.size() << "\nsampled: " << frames.size()
      << "\nauto: " << split.automatic.size() << "\nhuman: " << split.human.size() << '\n';
  return kExitOk;
}

struct EvaluateArgs {
  std::string pred, gt, mask_mode = "box", out;
  double min_score = 0.0;
  std::vector<double> thresholds;
  int width = 0, height = 0;
};

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  MatchPolicy policy;
  policy.mask_mode = mask_mode_from_string(a.mask_mode);
  policy.min_score = a.min_score;
  if (!a.thresholds.empty()) policy.iou_thresholds = a.thresholds;
  policy.resolution = {a.width, a.height};
  const MetricsReport report = evaluate(load_stream(a.pred), load_ground_truth(a.gt), policy);
  const std::string text = to_json(report).dump(2) + "\n";
  if (a.out.empty())
    out << text;
  else
    write_file_atomic(a.out, text);
  if (const auto* row = report.at(0.5))
    out << "IoU 0.5: precision " << row->precision << " recall " << row->recall << " f1 " << row->f1
        << '\n';
  return kExitOk;
}

struct SimulateArgs {
  std::string scenario, out_stream, out_truth, out_misslog;
};

int do_simulate(const SimulateArgs& a, std::ostream& out) {
  const SimOutput sim = generate(scenario_from_json(read_json_file(a.scenario)));
  save_stream(a.out_stream, sim.stream);
  save_ground_truth(a.out_truth, sim.truth);
  if (!a.out_misslog.empty()) {
    std::ostringstream m;
    for (const auto& e : sim.miss_log) m << to_json(e).dump() << '\n';
    write_file_atomic(a.out_misslog, m.str());
  }
  out << "frames: " << sim.stream.frame_count() << "\ntruth objects: " << sim.truth.object_count()
      << "\nmisses: " << sim.miss_log.size() << '\n';
  return kExitOk;
}

struct LoopArgs {
  std::string state, config, out, reviews, truth;
  bool all = false;
  bool no_finalize = false;
};

void print_summary(std::ostream& out, const LoopState& s) { out << state_summary(s).dump(2) << '\n'; }

int do_loop_init(const LoopArgs& a, std::ostream& out) {
  if (fs::exists(a.state)) throw DataError("state file " + a.state + " already exists");
  const json cfg = read_json_file(a.config);
  const std::string base = fs::path(a.config).parent_path().string();
  LoopState s = init_from_config(cfg, base.empty() ? "." : base);
  StateLock lock(a.state);
  save_state(a.state, s);
  print_summary(out, s);
  return kExitOk;
}

int do_loop_step(const LoopArgs& a, std::ostream& out) {
  StateLock lock(a.state);
  LoopState s = load_state(a.state);
  auto adapter = make_adapter(s.adapter);
  do {
    s = run_iteration(std::move(s), *adapter);
    save_state(a.state, s);
  } while (a.all && s.status == LoopStatus::ready);
  print_summary(out, s);
  return kExitOk;
}

int do_loop_status(const LoopArgs& a, std::ostream& out) {
  StateLock lock(a.state);
  print_summary(out, load_state(a.state));
  return kExitOk;
}

int do_loop_export(const LoopArgs& a, std::ostream& out) {
  LoopState s;
  {
    StateLock lock(a.state);
    s = load_state(a.state);
  }
  if (!s.pending) throw LoopError("no iteration is awaiting review");
  DetectionStream pending;
  for (const auto& [f, dets] : s.pending->model_detections) pending.frames.push_back({f, dets, {}});
  save_stream(a.out, pending);
  out << "iteration " << s.pending->iteration << ": " << pending.frames.size()
      << " frames pending review\n";
  return kExitOk;
}

int do_loop_ingest(const LoopArgs& a, std::ostream& out) {
  std::ifstream in(a.reviews);
  if (!in) throw DataError("cannot open " + a.reviews);
  const auto reviews = read_reviews(in, a.reviews);
  StateLock lock(a.state);
  LoopState s = load_state(a.state);
  std::size_t stored = 0, duplicate = 0;
  for (const auto& r : reviews)
    (submit_review(s, r) == SubmitOutcome::stored ? stored : duplicate)++;
  if (!a.no_finalize) finalize_reviews(s);
  save_state(a.state, s);
  out << "stored: " << stored << "\nduplicates: " << duplicate << '\n';
  print_summary(out, s);
  return kExitOk;
}

int do_loop_simulate_reviews(const LoopArgs& a, std::ostream& out) {
  LoopState s;
  {
    StateLock lock(a.state);
    s = load_state(a.state);
  }
  if (!s.pending) throw LoopError("no iteration is awaiting review");
  GroundTruth truth;
  if (!a.truth.empty())
    truth = load_ground_truth(a.truth);
  else if (s.adapter.is_object() && s.adapter.value("kind", "") == "mock")
    truth = build_mock_world(s.adapter).all_truth;
  else
    throw DataError("--truth is required unless the loop uses the mock adapter");

  std::vector<FrameReview> reviews;
  static const std::vector<GtObject> kNone;
  for (FrameId f : s.pending->frames) {
    const auto it = truth.frames.find(f);
    reviews.push_back(simulated_review(
        f, s.pending->model_detections.at(f), it == truth.frames.end() ? kNone : it->second,
        "sim-" + std::to_string(s.pending->iteration) + "-" + std::to_string(f)));
  }
  std::ostringstream text;
  write_reviews(text, reviews);
  write_file_atomic(a.out, text.str());
  out << "reviews written: " << reviews.size() << '\n';
  return kExitOk;
}

struct ServeArgs {
  std::string state, host = "127.0.0.1", static_dir;
  int port = 8080;
};

int do_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  {
    StateLock lock(a.state);
    load_state(a.state);
  }
  ReviewServer server(a.state, a.static_dir);
  const int port = server.bind(a.host, a.port);
  if (port < 0) {
    err << "serve: cannot bind " << a.host << ":" << a.port << '\n';
    return kExitData;
  }
  out << "serving " << a.state << " on http://" << a.host << ":" << port << std::endl;
  server.listen();
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal-coherence recovery and human-in-the-loop self-training tools", "s3t"};
  app.require_subcommand(1, 1);

  RecoverArgs rec;
  auto* c_recover = app.add_subcommand("recover", "Recover weak detections via temporal coherence");
  c_recover->add_option("--in", rec.in, "Input detection stream (JSONL)")->required();
  c_recover->add_option("--out", rec.out, "Output stream (JSONL)")->required();
  c_recover->add_option("--report", rec.report, "Recovery report (JSONL)");
  c_recover->add_option("--t-lower", rec.params.t_lower, "Lower score threshold")->capture_default_str();
  c_recover->add_option("--t-upper", rec.params.t_upper, "Upper score threshold")->capture_default_str();
  c_recover->add_option("--k", rec.params.window, "Temporal window")->capture_default_str();
  c_recover->add_option("--delta-d", rec.params.delta_d, "Max per-frame displacement (px)")
      ->capture_default_str();

  DeltaDArgs dd;
  auto* c_dd = app.add_subcommand("delta-d", "Per-frame displacement bound from the camera model");
  c_dd->add_option("--focal-mm", dd.focal, "Focal length (mm)")->required();
  c_dd->add_option("--pixel-mm", dd.pixel, "Pixel size (mm/pixel)")->required();
  c_dd->add_option("--z-min-m", dd.z_min, "Minimum object distance (m)")->required();
  auto* eps = c_dd->add_option("--epsilon-m", dd.epsilon, "Motion ball radius (m)");
  auto* vmax = c_dd->add_option("--v-max", dd.v_max, "Max camera speed (m/s)");
  c_dd->add_option("--fps", dd.fps, "Capture rate (frames/s)");
  c_dd->add_option("--rotational-m", dd.rotational, "Extra rotational motion term (m)");
  eps->excludes(vmax);

  SampleArgs smp;
  auto* c_sample = app.add_subcommand("sample", "Skip-sample recovered frames and split by alpha");
  c_sample->add_option("--recovered", smp.recovered, "Recovery report (JSONL)")->required();
  c_sample->add_option("--n-frames", smp.n_frames, "Timeline length N_v")->required();
  c_sample->add_option("--skip", smp.skip, "Frames skipped after each sample")->capture_default_str();
  c_sample->add_option("--alpha", smp.alpha, "Automatically annotated fraction")->capture_default_str();
  c_sample->add_option("--seed", smp.seed, "Split seed")->capture_default_str();
  c_sample->add_option("--out-auto", smp.out_auto, "Frame ids for automatic annotation")->required();
  c_sample->add_option("--out-human", smp.out_human, "Frame ids for human review")->required();

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Precision/recall/f1 per IoU threshold");
  c_eval->add_option("--pred", ev.pred, "Predicted stream (JSONL)")->required();
  c_eval->add_option("--gt", ev.gt, "Ground truth (JSONL)")->required();
  c_eval->add_option("--mask-mode", ev.mask_mode, "box or polygon-raster")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Report file (JSON); stdout when omitted");
  c_eval->add_option("--min-score", ev.min_score, "Ignore predictions below this score");
  c_eval->add_option("--thresholds", ev.thresholds, "IoU thresholds (ascending)")->delimiter(',');
  c_eval->add_option("--width", ev.width, "Raster width for polygon IoU");
  c_eval->add_option("--height", ev.height, "Raster height for polygon IoU");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic detection stream");
  c_sim->add_option("--scenario", sim.scenario, "Scenario (JSON)")->required();
  c_sim->add_option("--out-stream", sim.out_stream, "Detection stream (JSONL)")->required();
  c_sim->add_option("--out-truth", sim.out_truth, "Ground truth (JSONL)")->required();
  c_sim->add_option("--out-misslog", sim.out_misslog, "Weak/missed detections (JSONL)");

  LoopArgs lp;
  auto* c_loop = app.add_subcommand("loop", "Iterative self-training loop");
  c_loop->require_subcommand(1, 1);
  auto* l_init = c_loop->add_subcommand("init", "Create a loop state file from a configuration");
  l_init->add_option("--config", lp.config, "Loop configuration (JSON)")->required();
  l_init->add_option("--state", lp.state, "State file to create")->required();
  auto* l_step = c_loop->add_subcommand("step", "Run one iteration");
  l_step->add_option("--state", lp.state, "State file")->required();
  l_step->add_flag("--all", lp.all, "Keep stepping until blocked or finished");
  auto* l_status = c_loop->add_subcommand("status", "Print the loop state summary");
  l_status->add_option("--state", lp.state, "State file")->required();
  auto* l_export = c_loop->add_subcommand("export-pending", "Write frames awaiting review");
  l_export->add_option("--state", lp.state, "State file")->required();
  l_export->add_option("--out", lp.out, "Output stream (JSONL)")->required();
  auto* l_ingest = c_loop->add_subcommand("ingest-reviews", "Apply reviews from a file");
  l_ingest->add_option("--state", lp.state, "State file")->required();
  l_ingest->add_option("--reviews", lp.reviews, "Reviews (JSONL)")->required();
  l_ingest->add_flag("--no-finalize", lp.no_finalize, "Store reviews without finalizing");
  auto* l_simrev = c_loop->add_subcommand("simulate-reviews",
                                          "Write reviews an inspector with the truth would give");
  l_simrev->add_option("--state", lp.state, "State file")->required();
  l_simrev->add_option("--out", lp.out, "Reviews (JSONL)")->required();
  l_simrev->add_option("--truth", lp.truth, "Ground truth (JSONL); defaults to the mock world");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "HTTP review service");
  c_serve->add_option("--state", sv.state, "State file")->required();
  c_serve->add_option("--port", sv.port, "Port")->capture_default_str();
  c_serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
  c_serve->add_option("--static", sv.static_dir, "Directory with the built review UI");

  std::vector<std::string> argv_store{"s3t"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*c_recover) return do_recover(rec, out);
    if (*c_dd) return do_delta_d(dd, out, err);
    if (*c_sample) return do_sample(smp, out);
    if (*c_eval) return do_evaluate(ev, out);
    if (*c_sim) return do_simulate(sim, out);
    if (*c_serve) return do_serve(sv, out, err);
    if (*l_init) return do_loop_init(lp, out);
    if (*l_step) return do_loop_step(lp, out);
    if (*l_status) return do_loop_status(lp, out);
    if (*l_export) return do_loop_export(lp, out);
    if (*l_ingest) return do_loop_ingest(lp, out);
    if (*l_simrev) return do_loop_simulate_reviews(lp, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace s3t::cli
