#include "s3t/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "s3t/metrics.hpp"

namespace s3t {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool unit_interval(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void NoiseModel::validate() const {
  require(unit_interval(p_confident) && unit_interval(p_weak) && unit_interval(p_miss),
          "noise probabilities must lie in [0,1]");
  require(std::abs(p_confident + p_weak + p_miss - 1.0) <= 1e-9,
          "p_confident + p_weak + p_miss must equal 1");
  require(unit_interval(weak_lo) && unit_interval(weak_hi) && weak_lo <= weak_hi,
          "weak score range invalid");
  require(unit_interval(confident_lo) && unit_interval(confident_hi) &&
              confident_lo <= confident_hi,
          "confident score range invalid");
  require(unit_interval(clutter_lo) && unit_interval(clutter_hi) && clutter_lo <= clutter_hi,
          "clutter score range invalid");
  require(clutter_rate >= 0.0 && clutter_size > 0.0 && box_jitter_px >= 0.0,
          "clutter rate, clutter size and jitter must be non-negative");
}

void SimScenario::validate() const {
  require(n_frames >= 0, "n_frames must be >= 0");
  require(resolution.width > 0 && resolution.height > 0, "resolution must be positive");
  noise.validate();
  for (const auto& t : tracks) {
    require(t.start >= 0 && t.start <= t.end, "track frame range invalid");
    require(t.v_px >= 0.0, "track v_px must be >= 0");
    require(t.width > 0.0 && t.height > 0.0, "track box size must be positive");
    require(t.width <= resolution.width && t.height <= resolution.height,
            "track box larger than the image");
  }
}

namespace {

BBox box_at(const Point& c, double w, double h) {
  return {c.x - w / 2.0, c.y - h / 2.0, c.x + w / 2.0, c.y + h / 2.0};
}

Polygon rect_polygon(const BBox& b) {
  return {{b.x_min, b.y_min}, {b.x_max, b.y_min}, {b.x_max, b.y_max}, {b.x_min, b.y_max}};
}

Point clamp_center(Point c, double w, double h, Resolution res) {
  c.x = std::clamp(c.x, w / 2.0, res.width - w / 2.0);
  c.y = std::clamp(c.y, h / 2.0, res.height - h / 2.0);
  return c;
}

}  // namespace

void emit_detections(const std::vector<GtObject>& truth, FrameId frame, const NoiseModel& noise,
                     Resolution res, const std::vector<std::string>& clutter_classes, Rng& rng,
                     std::vector<Detection>& out, std::vector<MissEntry>* misses) {
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const double u = rng.uniform();
    double score;
    if (u < noise.p_confident) {
      score = rng.uniform(noise.confident_lo, noise.confident_hi);
    } else if (u < noise.p_confident + noise.p_weak) {
      score = rng.uniform(noise.weak_lo, noise.weak_hi);
      if (misses) misses->push_back({frame, t, MissKind::weak});
    } else {
      if (misses) misses->push_back({frame, t, MissKind::none});
      continue;
    }
    const BBox& g = truth[t].bbox;
    const double j = noise.box_jitter_px;
    BBox b{g.x_min + rng.uniform(-j, j), g.y_min + rng.uniform(-j, j),
           g.x_max + rng.uniform(-j, j), g.y_max + rng.uniform(-j, j)};
    if (b.x_max <= b.x_min) b.x_max = b.x_min + 1.0;
    if (b.y_max <= b.y_min) b.y_max = b.y_min + 1.0;
    Detection d{truth[t].class_id, score, b, std::nullopt, Provenance::detector};
    if (truth[t].polygon) d.mask = rect_polygon(b);
    out.push_back(std::move(d));
  }

  if (clutter_classes.empty()) return;
  const int n_clutter = rng.poisson(noise.clutter_rate);
  for (int c = 0; c < n_clutter; ++c) {
    const auto& cls = clutter_classes[rng.index(clutter_classes.size())];
    const double s = std::min({noise.clutter_size, double(res.width), double(res.height)});
    const Point center{rng.uniform(s / 2.0, res.width - s / 2.0),
                       rng.uniform(s / 2.0, res.height - s / 2.0)};
    const double score = rng.uniform(noise.clutter_lo, noise.clutter_hi);
    out.push_back({cls, score, box_at(center, s, s), std::nullopt, Provenance::detector});
  }
}

SimOutput generate(const SimScenario& scn) {
  scn.validate();
  Rng rng(scn.seed);
  const auto n = static_cast<FrameId>(scn.n_frames);

  // Walk every track first, then draw detections frame by frame.
  std::vector<std::vector<Point>> path(scn.tracks.size());
  for (std::size_t t = 0; t < scn.tracks.size(); ++t) {
    const auto& tr = scn.tracks[t];
    Point c = clamp_center(tr.initial_center, tr.width, tr.height, scn.resolution);
    for (FrameId f = tr.start; f <= std::min(tr.end, n - 1); ++f) {
      if (f > tr.start) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double step = tr.v_px * rng.uniform();
        c = clamp_center({c.x + step * std::cos(angle), c.y + step * std::sin(angle)}, tr.width,
                         tr.height, scn.resolution);
      }
      path[t].push_back(c);
    }
  }

  std::set<std::string> class_set;
  for (const auto& tr : scn.tracks) class_set.insert(tr.class_id);
  const std::vector<std::string> classes(class_set.begin(), class_set.end());

  SimOutput out;
  out.stream.capture_rate = scn.fps;
  out.stream.resolution = scn.resolution;
  for (FrameId f = 0; f < n; ++f) {
    std::vector<GtObject> truth;
    std::vector<std::size_t> track_of;
    for (std::size_t t = 0; t < scn.tracks.size(); ++t) {
      const auto& tr = scn.tracks[t];
      if (f < tr.start || f > tr.end) continue;
      const BBox box = box_at(path[t][static_cast<std::size_t>(f - tr.start)], tr.width, tr.height);
      truth.push_back({tr.class_id, box, rect_polygon(box)});
      track_of.push_back(t);
    }
    FrameRecord rec{f, {}, std::nullopt};
    std::vector<MissEntry> misses;
    emit_detections(truth, f, scn.noise, scn.resolution, classes, rng, rec.detections, &misses);
    for (auto& m : misses) {
      m.track = track_of[m.track];
      out.miss_log.push_back(m);
    }
    out.truth.frames[f] = std::move(truth);
    out.stream.frames.push_back(std::move(rec));
  }
  return out;
}

std::vector<TrackSpec> random_tracks(std::size_t count, int n_frames, Resolution res,
                                     const std::vector<std::string>& classes, double v_px,
                                     int min_len, int max_len, std::uint64_t seed) {
  require(!classes.empty(), "random tracks need at least one class");
  require(n_frames > 0 && min_len >= 1 && min_len <= max_len, "track length range invalid");
  Rng rng(seed);
  std::vector<TrackSpec> tracks;
  for (std::size_t i = 0; i < count; ++i) {
    TrackSpec t;
    t.class_id = classes[rng.index(classes.size())];
    const int len = std::min(
        n_frames, min_len + static_cast<int>(rng.index(static_cast<std::uint64_t>(max_len - min_len + 1))));
    t.start = static_cast<FrameId>(rng.index(static_cast<std::uint64_t>(n_frames - len + 1)));
    t.end = t.start + len - 1;
    t.width = std::min(rng.uniform(60.0, 160.0), double(res.width));
    t.height = std::min(rng.uniform(60.0, 160.0), double(res.height));
    t.initial_center = {rng.uniform(t.width / 2.0, res.width - t.width / 2.0),
                        rng.uniform(t.height / 2.0, res.height - t.height / 2.0)};
    t.v_px = v_px;
    tracks.push_back(std::move(t));
  }
  return tracks;
}

RecoveryResult oracle_recover(const DetectionStream& stream, const CoherenceParams& params) {
  params.validate();
  RecoveryResult result;
  result.output.capture_rate = stream.capture_rate;
  result.output.resolution = stream.resolution;
  if (stream.frames.empty()) return result;

  struct Member {
    std::size_t j;
    std::string cls;
    double score;
    double x, y;
  };
  const FrameId last = stream.frames.back().frame_index;
  std::vector<std::vector<Member>> confident(static_cast<std::size_t>(last) + 1);
  std::vector<const FrameRecord*> input(static_cast<std::size_t>(last) + 1, nullptr);
  for (const auto& f : stream.frames) input[static_cast<std::size_t>(f.frame_index)] = &f;

  for (FrameId i = 0; i <= last; ++i) {
    const FrameRecord* in = input[static_cast<std::size_t>(i)];
    if (in == nullptr) continue;
    FrameRecord out{i, {}, in->image_ref};
    auto& O_i = confident[static_cast<std::size_t>(i)];

    for (std::size_t j = 0; j < in->detections.size(); ++j) {
      const Detection& d = in->detections[j];
      const double cx = (d.bbox.x_min + d.bbox.x_max) / 2.0;
      const double cy = (d.bbox.y_min + d.bbox.y_max) / 2.0;
      if (d.score >= params.t_upper) {
        O_i.push_back({j, d.class_id, d.score, cx, cy});
        out.detections.push_back(d);
      } else if (d.score >= params.t_lower) {
        for (int q = 1; q <= params.window - 1; ++q) {
          if (i - q - 1 < 0) break;
          struct Cand {
            double dist;
            double score;
            std::size_t j;
          };
          std::vector<Cand> near, far;
          for (const auto& m : confident[static_cast<std::size_t>(i - q)]) {
            const double dist = std::sqrt((m.x - cx) * (m.x - cx) + (m.y - cy) * (m.y - cy));
            if (m.cls == d.class_id && dist <= q * params.delta_d) near.push_back({dist, m.score, m.j});
          }
          for (const auto& m : confident[static_cast<std::size_t>(i - q - 1)]) {
            const double dist = std::sqrt((m.x - cx) * (m.x - cx) + (m.y - cy) * (m.y - cy));
            if (m.cls == d.class_id && dist <= (q + 1) * params.delta_d) far.push_back({dist, m.score, m.j});
          }
          if (near.empty() || far.empty()) continue;
          const auto order = [](const Cand& a, const Cand& b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            if (a.score != b.score) return a.score > b.score;
            return a.j < b.j;
          };
          std::sort(near.begin(), near.end(), order);
          std::sort(far.begin(), far.end(), order);
          const double updated = (near.front().score + far.front().score) / 2.0;
          Detection rec = d;
          rec.score = updated;
          rec.provenance = Provenance::recovered;
          O_i.push_back({j, d.class_id, updated, cx, cy});
          out.detections.push_back(rec);
          result.records.push_back({i, j, q, {i - q, near.front().j}, {i - q - 1, far.front().j},
                                    d.score, updated});
          result.recovered_frames.insert(i);
          break;
        }
      }
    }
    result.output.frames.push_back(std::move(out));
  }
  return result;
}

SkillCurve::SkillCurve(std::vector<SkillPoint> knots) : knots_(std::move(knots)) {
  require(!knots_.empty(), "skill curve needs at least one knot");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    const auto& k = knots_[i];
    NoiseModel probe;
    probe.p_confident = k.p_confident;
    probe.p_weak = k.p_weak;
    probe.p_miss = k.p_miss;
    probe.clutter_rate = k.clutter_rate;
    probe.validate();
    if (i > 0) {
      require(knots_[i - 1].train_size < k.train_size, "skill knots must ascend in train size");
      require(knots_[i - 1].p_confident <= k.p_confident,
              "skill curve p_confident must be non-decreasing");
    }
  }
}

SkillPoint SkillCurve::at(std::size_t train_size) const {
  if (knots_.empty()) return {};
  const double n = static_cast<double>(train_size);
  if (n <= knots_.front().train_size) return knots_.front();
  if (n >= knots_.back().train_size) return knots_.back();
  auto hi = std::upper_bound(knots_.begin(), knots_.end(), n,
                             [](double v, const SkillPoint& k) { return v < k.train_size; });
  const SkillPoint& b = *hi;
  const SkillPoint& a = *(hi - 1);
  const double w = (n - a.train_size) / (b.train_size - a.train_size);
  const auto lerp = [w](double x, double y) { return x + w * (y - x); };
  SkillPoint p{n, lerp(a.p_confident, b.p_confident), lerp(a.p_weak, b.p_weak), 0.0,
               lerp(a.clutter_rate, b.clutter_rate)};
  p.p_miss = std::max(0.0, 1.0 - p.p_confident - p.p_weak);
  return p;
}

MockAdapter::MockAdapter(GroundTruth world, SkillCurve skill, NoiseModel base_noise,
                         Resolution resolution, std::uint64_t seed)
    : world_(std::move(world)),
      skill_(std::move(skill)),
      base_noise_(base_noise),
      resolution_(resolution),
      seed_(seed) {
  std::set<std::string> classes;
  for (const auto& [_, objs] : world_.frames)
    for (const auto& o : objs) classes.insert(o.class_id);
  classes_.assign(classes.begin(), classes.end());
}

ModelHandle MockAdapter::train(const DatasetManifest& manifest, const Annotations&) {
  ++train_calls_;
  return {"mock-T" + std::to_string(manifest.size()), manifest.size()};
}

DetectionStream MockAdapter::infer(const ModelHandle& model, const std::vector<FrameId>& frames) {
  const SkillPoint skill = skill_.at(model.train_size);
  NoiseModel noise = base_noise_;
  noise.p_confident = skill.p_confident;
  noise.p_weak = skill.p_weak;
  noise.p_miss = skill.p_miss;
  noise.clutter_rate = skill.clutter_rate;

  std::vector<FrameId> ids(frames);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  DetectionStream out;
  out.resolution = resolution_;
  static const std::vector<GtObject> kNone;
  for (FrameId f : ids) {
    const auto it = world_.frames.find(f);
    const auto& truth = it == world_.frames.end() ? kNone : it->second;
    Rng rng(mix_seed(mix_seed(seed_, model.train_size), static_cast<std::uint64_t>(f)));
    FrameRecord rec{f, {}, std::nullopt};
    emit_detections(truth, f, noise, resolution_, classes_, rng, rec.detections);
    out.frames.push_back(std::move(rec));
  }
  return out;
}

std::unique_ptr<DetectorAdapter> mock_adapter(GroundTruth world, SkillCurve skill,
                                              NoiseModel base_noise, Resolution resolution,
                                              std::uint64_t seed) {
  return std::make_unique<MockAdapter>(std::move(world), std::move(skill), base_noise, resolution,
                                       seed);
}

FrameReview simulated_review(FrameId frame, const std::vector<Detection>& detections,
                             const std::vector<GtObject>& truth, const std::string& request_id,
                             double min_iou) {
  FrameReview review{frame, {}, request_id};
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    double best_same = 0.0;
    double best_any = 0.0;
    const GtObject* any = nullptr;
    for (const auto& g : truth) {
      const double iou = box_iou(d.bbox, g.bbox);
      if (g.class_id == d.class_id) best_same = std::max(best_same, iou);
      if (iou > best_any) best_any = iou, any = &g;
    }
    ReviewDecision dec{i, ReviewAction::accept, std::nullopt, std::nullopt};
    if (best_same >= min_iou) {
      dec.action = ReviewAction::accept;
    } else if (any != nullptr && best_any >= min_iou) {
      dec.action = ReviewAction::relabel;
      dec.class_id = any->class_id;
    } else {
      dec.action = ReviewAction::reject;
    }
    review.decisions.push_back(std::move(dec));
  }
  return review;
}

json to_json(const MissEntry& m) {
  return {{"frame", m.frame}, {"track", m.track}, {"kind", m.kind == MissKind::weak ? "weak" : "none"}};
}

NoiseModel noise_from_json(const json& j, NoiseModel n) {
  n.p_confident = j.value("p_confident", n.p_confident);
  n.p_weak = j.value("p_weak", n.p_weak);
  n.p_miss = j.value("p_miss", n.p_miss);
  if (j.contains("weak_range")) n.weak_lo = j["weak_range"].at(0), n.weak_hi = j["weak_range"].at(1);
  if (j.contains("confident_range"))
    n.confident_lo = j["confident_range"].at(0), n.confident_hi = j["confident_range"].at(1);
  n.clutter_rate = j.value("clutter_rate", n.clutter_rate);
  if (j.contains("clutter_range"))
    n.clutter_lo = j["clutter_range"].at(0), n.clutter_hi = j["clutter_range"].at(1);
  n.clutter_size = j.value("clutter_size", n.clutter_size);
  n.box_jitter_px = j.value("box_jitter_px", n.box_jitter_px);
  n.validate();
  return n;
}

namespace {

json to_json(const NoiseModel& n) {
  return {{"p_confident", n.p_confident},
          {"p_weak", n.p_weak},
          {"p_miss", n.p_miss},
          {"weak_range", {n.weak_lo, n.weak_hi}},
          {"confident_range", {n.confident_lo, n.confident_hi}},
          {"clutter_rate", n.clutter_rate},
          {"clutter_range", {n.clutter_lo, n.clutter_hi}},
          {"clutter_size", n.clutter_size},
          {"box_jitter_px", n.box_jitter_px}};
}

}  // namespace

json to_json(const SimScenario& s) {
  json tracks = json::array();
  for (const auto& t : s.tracks)
    tracks.push_back({{"class", t.class_id},
                      {"start", t.start},
                      {"end", t.end},
                      {"center", {t.initial_center.x, t.initial_center.y}},
                      {"v_px", t.v_px},
                      {"size", {t.width, t.height}}});
  return {{"n_frames", s.n_frames},
          {"resolution", {s.resolution.width, s.resolution.height}},
          {"fps", s.fps},
          {"seed", s.seed},
          {"noise", to_json(s.noise)},
          {"tracks", tracks}};
}

SimScenario scenario_from_json(const json& j) {
  SimScenario s;
  s.n_frames = j.at("n_frames").get<int>();
  if (j.contains("resolution"))
    s.resolution = {j["resolution"].at(0).get<int>(), j["resolution"].at(1).get<int>()};
  s.fps = j.value("fps", s.fps);
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("noise")) s.noise = noise_from_json(j["noise"]);
  if (j.contains("tracks"))
    for (const auto& t : j["tracks"]) {
      TrackSpec tr;
      tr.class_id = t.at("class").get<std::string>();
      tr.start = t.at("start").get<FrameId>();
      tr.end = t.at("end").get<FrameId>();
      tr.initial_center = {t.at("center").at(0).get<double>(), t.at("center").at(1).get<double>()};
      tr.v_px = t.value("v_px", 0.0);
      tr.width = t.at("size").at(0).get<double>();
      tr.height = t.at("size").at(1).get<double>();
      s.tracks.push_back(std::move(tr));
    }
  if (j.contains("random_tracks")) {
    const auto& r = j["random_tracks"];
    const auto more = random_tracks(
        r.at("count").get<std::size_t>(), s.n_frames, s.resolution,
        r.at("classes").get<std::vector<std::string>>(), r.value("v_px", 10.0),
        r.value("min_len", 30), r.value("max_len", 120), mix_seed(s.seed, 0x7261636b));
    s.tracks.insert(s.tracks.end(), more.begin(), more.end());
  }
  s.validate();
  return s;
}

SkillCurve skill_curve_from_json(const json& j) {
  std::vector<SkillPoint> knots;
  for (const auto& k : j)
    knots.push_back({k.at("train_size").get<double>(), k.at("p_confident").get<double>(),
                     k.at("p_weak").get<double>(), k.at("p_miss").get<double>(),
                     k.value("clutter_rate", 0.0)});
  return SkillCurve(std::move(knots));
}

}  // namespace s3t
