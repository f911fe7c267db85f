#include "s3t/loop.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <sstream>

#include "s3t/fileio.hpp"
#include "s3t/rng.hpp"

namespace s3t {

using nlohmann::json;

void TerminationCriteria::validate() const {
  const auto in_range = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_range(min_precision) || !in_range(min_recall) || !in_range(min_f1) || !in_range(iou))
    throw std::invalid_argument("termination criteria must lie in (0,1]");
}

bool check_termination(const MetricsReport& report, const TerminationCriteria& criteria) {
  const ThresholdMetrics* row = report.at(criteria.iou);
  if (row == nullptr)
    throw std::invalid_argument("metrics report has no row for IoU " +
                                std::to_string(criteria.iou));
  return row->precision >= criteria.min_precision && row->recall >= criteria.min_recall &&
         row->f1 >= criteria.min_f1;
}

DatasetManifest update_training_set(const DatasetManifest& train, const DatasetManifest& human,
                                    const DatasetManifest& automatic) {
  for (const auto& e : human.entries())
    if (e.source != AnnotationSource::human)
      throw std::invalid_argument("frame " + std::to_string(e.frame_id) +
                                  " in the human set is not human-annotated");
  for (const auto& e : automatic.entries())
    if (e.source != AnnotationSource::model)
      throw std::invalid_argument("frame " + std::to_string(e.frame_id) +
                                  " in the automatic set is not model-annotated");

  std::vector<FrameId> duplicates;
  std::set<FrameId> seen;
  for (const auto* m : {&train, &human, &automatic})
    for (const auto& e : m->entries())
      if (!seen.insert(e.frame_id).second) duplicates.push_back(e.frame_id);
  if (!duplicates.empty()) {
    std::ostringstream msg;
    msg << "training set update overlaps on frame_ids:";
    for (auto id : duplicates) msg << ' ' << id;
    throw std::invalid_argument(msg.str());
  }

  DatasetManifest out = train;
  for (const auto& e : human.entries()) out.add(e);
  for (const auto& e : automatic.entries()) out.add(e);
  return out;
}

double LoopConfig::alpha_for(int iteration) const {
  if (alpha_schedule.empty()) return 0.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(iteration, 0)),
                                       alpha_schedule.size() - 1);
  return alpha_schedule[i];
}

void LoopConfig::validate() const {
  coherence.validate();
  criteria.validate();
  eval_policy.validate();
  if (sampler.skip < 0) throw std::invalid_argument("skip must be >= 0");
  if (initial.skip < 0) throw std::invalid_argument("initial skip must be >= 0");
  if (alpha_schedule.empty()) throw std::invalid_argument("alpha schedule must not be empty");
  for (double a : alpha_schedule)
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("alpha values must lie in [0,1]");
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(eval_min_score >= 0.0 && eval_min_score <= 1.0))
    throw std::invalid_argument("eval_min_score must lie in [0,1]");
  const bool has_row = std::any_of(eval_policy.iou_thresholds.begin(),
                                   eval_policy.iou_thresholds.end(),
                                   [&](double t) { return std::abs(t - criteria.iou) <= 1e-9; });
  if (!has_row) throw std::invalid_argument("evaluation thresholds must include the criteria IoU");
}

std::vector<FrameId> PendingReview::unreviewed() const {
  std::vector<FrameId> out;
  for (FrameId f : frames)
    if (!reviews.count(f)) out.push_back(f);
  return out;
}

std::string to_string(LoopStatus s) {
  switch (s) {
    case LoopStatus::ready: return "ready";
    case LoopStatus::awaiting_review: return "awaiting-review";
    case LoopStatus::done: return "done";
    case LoopStatus::exhausted: return "exhausted";
  }
  return "ready";
}

namespace {

LoopStatus status_from_string(const std::string& s) {
  if (s == "ready") return LoopStatus::ready;
  if (s == "awaiting-review") return LoopStatus::awaiting_review;
  if (s == "done") return LoopStatus::done;
  if (s == "exhausted") return LoopStatus::exhausted;
  throw DataError("unknown loop status '" + s + "'");
}

std::string join_ids(const std::vector<FrameId>& ids) {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? "," : "") << ids[i];
  return out.str();
}

std::vector<GtObject> labels_of(const std::vector<Detection>& detections) {
  std::vector<GtObject> out;
  out.reserve(detections.size());
  for (const auto& d : detections) out.push_back({d.class_id, d.bbox, d.mask});
  return out;
}

}  // namespace

void LoopState::check_invariants() const {
  for (const auto& e : train.entries())
    if (unlabeled.count(e.frame_id))
      throw std::logic_error("frame " + std::to_string(e.frame_id) + " is in both T and V");
  if (!unlabeled.empty() &&
      (*unlabeled.begin() < 0 || static_cast<std::size_t>(*unlabeled.rbegin()) >= timeline_length))
    throw std::logic_error("V holds frames outside the timeline");
  if (pending)
    for (FrameId f : pending->frames)
      if (unlabeled.count(f) || train.contains(f))
        throw std::logic_error("pending frame " + std::to_string(f) + " still in T or V");
}

PendingReviewsError::PendingReviewsError(std::vector<FrameId> frames)
    : LoopError("frames awaiting review: " + join_ids(frames)), frames_(std::move(frames)) {}

LoopState init_loop(LoopConfig config, std::size_t timeline_length, DatasetManifest initial_train,
                    Annotations initial_annotations, GroundTruth test_truth) {
  config.validate();
  LoopState s;
  s.config = std::move(config);
  s.timeline_length = timeline_length;
  for (std::size_t f = 0; f < timeline_length; ++f) s.unlabeled.insert(static_cast<FrameId>(f));
  for (const auto& e : initial_train.entries())
    if (s.unlabeled.count(e.frame_id))
      throw std::invalid_argument("initial training frame " + std::to_string(e.frame_id) +
                                  " lies inside the unlabeled timeline");
  s.train = std::move(initial_train);
  for (auto& [frame, labels] : initial_annotations)
    if (s.train.contains(frame)) s.annotations[frame] = std::move(labels);
  for (const auto& [frame, _] : test_truth.frames) s.test_frames.push_back(frame);
  s.test_truth = std::move(test_truth);
  s.check_invariants();
  return s;
}

LoopState run_iteration(LoopState s, DetectorAdapter& adapter) {
  if (s.status != LoopStatus::ready) return s;
  s.check_invariants();
  const int l = s.iteration;
  const LoopConfig& cfg = s.config;

  IterationRecord rec;
  rec.iteration = l;
  rec.train_size = s.train.size();

  const auto context = [l](const std::string& stage, const std::exception& e) {
    return LoopError("iteration " + std::to_string(l) + ", " + stage + ": " + e.what());
  };

  ModelHandle model;
  DetectionStream test_pred;
  try {
    model = adapter.train(s.train, s.annotations);
    test_pred = adapter.infer(model, s.test_frames);
  } catch (const std::exception& e) {
    throw context("adapter", e);
  }

  MatchPolicy policy = cfg.eval_policy;
  policy.min_score = cfg.eval_min_score;
  const MetricsReport report = evaluate(test_pred, s.test_truth, policy);
  const ThresholdMetrics& row = *report.at(cfg.criteria.iou);
  rec.precision = row.precision;
  rec.recall = row.recall;
  rec.f1 = row.f1;

  if (check_termination(report, cfg.criteria)) {
    rec.terminated = true;
    s.history.push_back(rec);
    s.status = LoopStatus::done;
    return s;
  }
  if (l + 1 >= cfg.max_iterations || s.unlabeled.empty()) {
    s.history.push_back(rec);
    s.status = LoopStatus::exhausted;
    return s;
  }

  const std::vector<FrameId> pool(s.unlabeled.begin(), s.unlabeled.end());
  DetectionStream pool_pred;
  try {
    pool_pred = adapter.infer(model, pool);
  } catch (const std::exception& e) {
    throw context("adapter", e);
  }
  for (const auto& f : pool_pred.frames)
    if (!s.unlabeled.count(f.frame_index))
      throw LoopError("iteration " + std::to_string(l) + ": adapter returned frame " +
                      std::to_string(f.frame_index) + " outside V");

  const RecoveryResult recovery = recover(pool_pred, cfg.coherence);
  rec.recovered = recovery.recovered_frames.size();

  const std::size_t n_v = s.timeline_length;
  IndicatorVector in_pool(n_v);
  for (FrameId f : pool) in_pool.set(static_cast<std::size_t>(f));

  std::vector<FrameId> sample;
  if (l == 0 && cfg.initial.frames) {
    for (FrameId f : *cfg.initial.frames) {
      if (!s.unlabeled.count(f))
        throw LoopError("initial sample frame " + std::to_string(f) + " is not in V");
      sample.push_back(f);
    }
    std::sort(sample.begin(), sample.end());
    sample.erase(std::unique(sample.begin(), sample.end()), sample.end());
  } else {
    const IndicatorVector selected =
        l == 0 ? select_frames(in_pool, sp_indicator({cfg.initial.skip}, n_v))
               : select_frames(recovered_indicator(recovery, n_v), sp_indicator(cfg.sampler, n_v));
    for (std::size_t n : selected.support()) sample.push_back(static_cast<FrameId>(n));
  }
  rec.sampled = sample.size();
  for (FrameId f : sample) s.unlabeled.erase(f);

  rec.alpha = cfg.alpha_for(l);
  const SplitResult split =
      alpha_split(sample, {rec.alpha, mix_seed(cfg.seed, static_cast<std::uint64_t>(l))});
  rec.auto_annotated = split.automatic.size();
  rec.human_annotated = split.human.size();

  const auto detections_of = [&](FrameId f) -> std::vector<Detection> {
    const FrameRecord* fr = recovery.output.find(f);
    return fr ? fr->detections : std::vector<Detection>{};
  };

  PendingReview pending;
  pending.iteration = l;
  pending.record = rec;
  for (FrameId f : split.automatic) {
    pending.automatic.add({f, AnnotationSource::model, l});
    pending.automatic_labels[f] = labels_of(detections_of(f));
  }
  for (FrameId f : split.human) {
    pending.frames.push_back(f);
    pending.model_detections[f] = detections_of(f);
  }
  s.pending = std::move(pending);
  s.status = LoopStatus::awaiting_review;

  if (split.human.empty()) finalize_reviews(s);
  s.check_invariants();
  return s;
}

SubmitOutcome submit_review(LoopState& s, const FrameReview& review) {
  if (s.status != LoopStatus::awaiting_review || !s.pending)
    throw LoopError("no iteration is awaiting review");
  auto& p = *s.pending;
  if (p.request_ids.count(review.request_id)) return SubmitOutcome::duplicate;
  const auto it = p.model_detections.find(review.frame);
  if (it == p.model_detections.end())
    throw LoopError("frame " + std::to_string(review.frame) + " is not pending review");
  validate_review(review, it->second.size());
  p.reviews[review.frame] = review;
  p.request_ids.insert(review.request_id);
  return SubmitOutcome::stored;
}

void finalize_reviews(LoopState& s) {
  if (s.status != LoopStatus::awaiting_review || !s.pending)
    throw LoopError("no iteration is awaiting review");
  auto& p = *s.pending;
  if (auto missing = p.unreviewed(); !missing.empty()) throw PendingReviewsError(missing);

  DatasetManifest human;
  Annotations human_labels;
  for (FrameId f : p.frames) {
    human.add({f, AnnotationSource::human, p.iteration});
    human_labels[f] = apply_review(p.model_detections.at(f), p.reviews.at(f));
  }
  s.train = update_training_set(s.train, human, p.automatic);
  for (auto& [f, labels] : human_labels) s.annotations[f] = std::move(labels);
  for (auto& [f, labels] : p.automatic_labels) s.annotations[f] = std::move(labels);

  s.history.push_back(p.record);
  s.iteration = p.iteration + 1;
  s.pending.reset();
  s.status = LoopStatus::ready;
}

json to_json(const IterationRecord& r) {
  return {{"iteration", r.iteration},
          {"train_size", r.train_size},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"terminated", r.terminated},
          {"recovered", r.recovered},
          {"sampled", r.sampled},
          {"alpha", r.alpha},
          {"auto_annotated", r.auto_annotated},
          {"human_annotated", r.human_annotated}};
}

namespace {

IterationRecord record_from_json(const json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.train_size = j.at("train_size").get<std::size_t>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.terminated = j.at("terminated").get<bool>();
  r.recovered = j.at("recovered").get<std::size_t>();
  r.sampled = j.at("sampled").get<std::size_t>();
  r.alpha = j.at("alpha").get<double>();
  r.auto_annotated = j.at("auto_annotated").get<std::size_t>();
  r.human_annotated = j.at("human_annotated").get<std::size_t>();
  return r;
}

json manifest_json(const DatasetManifest& m) {
  json out = json::array();
  for (const auto& e : m.entries()) out.push_back(to_json(e));
  return out;
}

DatasetManifest manifest_from(const json& j) {
  DatasetManifest m;
  for (const auto& e : j) m.add(manifest_entry_from_json(e));
  return m;
}

json annotations_json(const Annotations& a) {
  json out = json::array();
  for (const auto& [frame, objs] : a) {
    json list = json::array();
    for (const auto& o : objs) list.push_back(to_json(o));
    out.push_back({{"frame", frame}, {"objects", list}});
  }
  return out;
}

Annotations annotations_from(const json& j) {
  Annotations a;
  for (const auto& f : j) {
    auto& objs = a[f.at("frame").get<FrameId>()];
    for (const auto& o : f.at("objects")) objs.push_back(gt_object_from_json(o));
  }
  return a;
}

}  // namespace

json to_json(const LoopConfig& c) {
  json initial = json::object();
  if (c.initial.frames)
    initial["frames"] = *c.initial.frames;
  else
    initial["skip"] = c.initial.skip;
  return {{"coherence",
           {{"t_lower", c.coherence.t_lower},
            {"t_upper", c.coherence.t_upper},
            {"k", c.coherence.window},
            {"delta_d", c.coherence.delta_d}}},
          {"skip", c.sampler.skip},
          {"alpha_schedule", c.alpha_schedule},
          {"criteria",
           {{"precision", c.criteria.min_precision},
            {"recall", c.criteria.min_recall},
            {"f1", c.criteria.min_f1},
            {"iou", c.criteria.iou}}},
          {"initial_sampling", initial},
          {"seed", c.seed},
          {"max_iterations", c.max_iterations},
          {"eval_min_score", c.eval_min_score},
          {"eval",
           {{"iou_thresholds", c.eval_policy.iou_thresholds},
            {"mask_mode", to_string(c.eval_policy.mask_mode)},
            {"resolution", {c.eval_policy.resolution.width, c.eval_policy.resolution.height}}}}};
}

LoopConfig loop_config_from_json(const json& j) {
  LoopConfig c;
  if (j.contains("coherence")) {
    const auto& k = j["coherence"];
    c.coherence.t_lower = k.value("t_lower", c.coherence.t_lower);
    c.coherence.t_upper = k.value("t_upper", c.coherence.t_upper);
    c.coherence.window = k.value("k", c.coherence.window);
    c.coherence.delta_d = k.value("delta_d", c.coherence.delta_d);
  }
  c.sampler.skip = j.value("skip", c.sampler.skip);
  if (j.contains("alpha_schedule")) c.alpha_schedule = j["alpha_schedule"].get<std::vector<double>>();
  if (j.contains("criteria")) {
    const auto& k = j["criteria"];
    c.criteria.min_precision = k.value("precision", c.criteria.min_precision);
    c.criteria.min_recall = k.value("recall", c.criteria.min_recall);
    c.criteria.min_f1 = k.value("f1", c.criteria.min_f1);
    c.criteria.iou = k.value("iou", c.criteria.iou);
  }
  if (j.contains("initial_sampling")) {
    const auto& k = j["initial_sampling"];
    if (k.contains("frames")) c.initial.frames = k["frames"].get<std::vector<FrameId>>();
    c.initial.skip = k.value("skip", 0);
  }
  c.seed = j.value("seed", c.seed);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.eval_min_score = j.value("eval_min_score", c.eval_min_score);
  if (j.contains("eval")) {
    const auto& k = j["eval"];
    if (k.contains("iou_thresholds"))
      c.eval_policy.iou_thresholds = k["iou_thresholds"].get<std::vector<double>>();
    if (k.contains("mask_mode"))
      c.eval_policy.mask_mode = mask_mode_from_string(k["mask_mode"].get<std::string>());
    if (k.contains("resolution"))
      c.eval_policy.resolution = {k["resolution"].at(0).get<int>(), k["resolution"].at(1).get<int>()};
  }
  c.validate();
  return c;
}

json to_json(const LoopState& s) {
  json history = json::array();
  for (const auto& r : s.history) history.push_back(to_json(r));
  json test_truth = json::array();
  for (const auto& [frame, objs] : s.test_truth.frames) {
    json list = json::array();
    for (const auto& o : objs) list.push_back(to_json(o));
    test_truth.push_back({{"frame", frame}, {"objects", list}});
  }

  json j = {{"schema_version", kStateSchemaVersion},
            {"iteration", s.iteration},
            {"status", to_string(s.status)},
            {"config", to_json(s.config)},
            {"timeline_length", s.timeline_length},
            {"train", manifest_json(s.train)},
            {"unlabeled", std::vector<FrameId>(s.unlabeled.begin(), s.unlabeled.end())},
            {"annotations", annotations_json(s.annotations)},
            {"test_frames", s.test_frames},
            {"test_truth", test_truth},
            {"history", history},
            {"adapter", s.adapter},
            {"pending", nullptr}};
  if (s.pending) {
    const auto& p = *s.pending;
    json model = json::array();
    for (const auto& [frame, dets] : p.model_detections) {
      json list = json::array();
      for (const auto& d : dets) list.push_back(to_json(d));
      model.push_back({{"frame", frame}, {"detections", list}});
    }
    json reviews = json::array();
    for (const auto& [_, r] : p.reviews) reviews.push_back(to_json(r));
    j["pending"] = {{"iteration", p.iteration},
                    {"frames", p.frames},
                    {"model_detections", model},
                    {"reviews", reviews},
                    {"request_ids", std::vector<std::string>(p.request_ids.begin(), p.request_ids.end())},
                    {"automatic", manifest_json(p.automatic)},
                    {"automatic_labels", annotations_json(p.automatic_labels)},
                    {"record", to_json(p.record)}};
  }
  return j;
}

LoopState loop_state_from_json(const json& j) {
  const int version = j.value("schema_version", 0);
  if (version != kStateSchemaVersion)
    throw DataError("unsupported state schema version " + std::to_string(version));
  LoopState s;
  s.iteration = j.at("iteration").get<int>();
  s.status = status_from_string(j.at("status").get<std::string>());
  s.config = loop_config_from_json(j.at("config"));
  s.timeline_length = j.at("timeline_length").get<std::size_t>();
  s.train = manifest_from(j.at("train"));
  for (FrameId f : j.at("unlabeled").get<std::vector<FrameId>>()) s.unlabeled.insert(f);
  s.annotations = annotations_from(j.at("annotations"));
  s.test_frames = j.at("test_frames").get<std::vector<FrameId>>();
  for (const auto& [frame, objs] : annotations_from(j.at("test_truth"))) s.test_truth.frames[frame] = objs;
  for (const auto& r : j.at("history")) s.history.push_back(record_from_json(r));
  s.adapter = j.value("adapter", json(nullptr));
  if (j.contains("pending") && !j["pending"].is_null()) {
    const auto& jp = j["pending"];
    PendingReview p;
    p.iteration = jp.at("iteration").get<int>();
    p.frames = jp.at("frames").get<std::vector<FrameId>>();
    for (const auto& m : jp.at("model_detections")) {
      auto& dets = p.model_detections[m.at("frame").get<FrameId>()];
      for (const auto& d : m.at("detections")) dets.push_back(detection_from_json(d));
    }
    for (const auto& r : jp.at("reviews")) {
      auto review = review_from_json(r);
      p.reviews[review.frame] = std::move(review);
    }
    for (const auto& id : jp.at("request_ids")) p.request_ids.insert(id.get<std::string>());
    p.automatic = manifest_from(jp.at("automatic"));
    p.automatic_labels = annotations_from(jp.at("automatic_labels"));
    p.record = record_from_json(jp.at("record"));
    s.pending = std::move(p);
  }
  s.check_invariants();
  return s;
}

LoopState load_state(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError("malformed state file " + path + ": " + e.what());
  }
  try {
    return loop_state_from_json(j);
  } catch (const json::exception& e) {
    throw DataError("invalid state file " + path + ": " + e.what());
  }
}

void save_state(const std::string& path, const LoopState& state) {
  write_file_atomic(path, to_json(state).dump(1) + "\n");
}

StateLock::StateLock(const std::string& state_path) {
  const std::string lock_path = state_path + ".lock";
  fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw DataError("cannot open lock " + lock_path + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX) != 0) {
    ::close(fd_);
    throw DataError("cannot lock " + lock_path + ": " + std::strerror(errno));
  }
}

StateLock::~StateLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace s3t
