#include "s3t/coherence.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "s3t/fileio.hpp"

namespace s3t {

using nlohmann::json;

void CoherenceParams::validate() const {
  if (!(t_lower >= 0.0 && t_lower < t_upper && t_upper <= 1.0))
    throw std::invalid_argument("thresholds must satisfy 0 <= t_lower < t_upper <= 1");
  if (window < 2) throw std::invalid_argument("window k must be >= 2");
  if (!(delta_d > 0.0) || !std::isfinite(delta_d))
    throw std::invalid_argument("delta_d must be > 0");
}

namespace {

struct Confident {
  std::size_t index;  // input detection index
  std::string class_id;
  double score;
  Point center;
};

struct ConfidentFrame {
  FrameId frame;
  std::vector<Confident> members;
};

struct Match {
  std::size_t index;
  double score;
};

// Nearest same-class member within `radius`; ties go to the higher score,
// then the lower detection index.
std::optional<Match> nearest(const ConfidentFrame* frame, const std::string& class_id,
                             const Point& c, double radius) {
  if (frame == nullptr) return std::nullopt;
  std::optional<Match> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& m : frame->members) {
    if (m.class_id != class_id) continue;
    const double dist = std::hypot(m.center.x - c.x, m.center.y - c.y);
    if (dist > radius) continue;
    const bool better = !best || dist < best_dist ||
                        (dist == best_dist && (m.score > best->score ||
                                               (m.score == best->score && m.index < best->index)));
    if (better) {
      best = Match{m.index, m.score};
      best_dist = dist;
    }
  }
  return best;
}

}  // namespace

RecoveryResult recover(const DetectionStream& stream, const CoherenceParams& params) {
  params.validate();
  RecoveryResult result;
  result.output.capture_rate = stream.capture_rate;
  result.output.resolution = stream.resolution;

  // Confident sets of the most recent frames, oldest first.
  std::deque<ConfidentFrame> history;
  const auto lookup = [&history](FrameId frame) -> const ConfidentFrame* {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
      if (it->frame == frame) return &*it;
      if (it->frame < frame) break;
    }
    return nullptr;
  };

  for (const auto& in : stream.frames) {
    const FrameId i = in.frame_index;
    FrameRecord out{i, {}, in.image_ref};
    ConfidentFrame confident{i, {}};

    for (std::size_t j = 0; j < in.detections.size(); ++j) {
      const Detection& d = in.detections[j];
      if (d.score >= params.t_upper) {
        out.detections.push_back(d);
        confident.members.push_back({j, d.class_id, d.score, center(d)});
        continue;
      }
      if (d.score < params.t_lower) continue;

      const Point c = center(d);
      const FrameId max_q = std::min<FrameId>(params.window - 1, i - 1);
      for (FrameId q = 1; q <= max_q; ++q) {
        const auto dq = static_cast<double>(q);
        const auto near = nearest(lookup(i - q), d.class_id, c, dq * params.delta_d);
        if (!near) continue;
        const auto far = nearest(lookup(i - q - 1), d.class_id, c, (dq + 1.0) * params.delta_d);
        if (!far) continue;

        Detection promoted = d;
        promoted.score = (near->score + far->score) / 2.0;
        promoted.provenance = Provenance::recovered;
        result.records.push_back({i, j, static_cast<int>(q), {i - q, near->index},
                                  {i - q - 1, far->index}, d.score, promoted.score});
        result.recovered_frames.insert(i);
        confident.members.push_back({j, d.class_id, promoted.score, c});
        out.detections.push_back(std::move(promoted));
        break;
      }
    }

    result.output.frames.push_back(std::move(out));
    history.push_back(std::move(confident));
    while (!history.empty() && history.front().frame < i - params.window) history.pop_front();
  }
  return result;
}

IndicatorVector recovered_indicator(const RecoveryResult& result, std::size_t n_frames) {
  IndicatorVector v(n_frames);
  for (FrameId f : result.recovered_frames) {
    if (f < 0 || static_cast<std::size_t>(f) >= n_frames)
      throw std::out_of_range("recovered frame " + std::to_string(f) + " outside 0.." +
                              std::to_string(n_frames) + ")");
    v.set(static_cast<std::size_t>(f));
  }
  return v;
}

json to_json(const RecoveryRecord& r) {
  return {{"frame", r.frame_index},
          {"detection", r.detection_index},
          {"q", r.q},
          {"near_ref", {r.near_ref.frame, r.near_ref.index}},
          {"far_ref", {r.far_ref.frame, r.far_ref.index}},
          {"original_score", r.original_score},
          {"updated_score", r.updated_score}};
}

RecoveryRecord recovery_record_from_json(const json& j) {
  RecoveryRecord r;
  r.frame_index = j.at("frame").get<FrameId>();
  r.detection_index = j.at("detection").get<std::size_t>();
  r.q = j.at("q").get<int>();
  r.near_ref = {j.at("near_ref").at(0).get<FrameId>(), j.at("near_ref").at(1).get<std::size_t>()};
  r.far_ref = {j.at("far_ref").at(0).get<FrameId>(), j.at("far_ref").at(1).get<std::size_t>()};
  r.original_score = j.at("original_score").get<double>();
  r.updated_score = j.at("updated_score").get<double>();
  return r;
}

void save_recovery_report(const std::string& path, const std::vector<RecoveryRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  write_file_atomic(path, out.str());
}

std::vector<RecoveryRecord> load_recovery_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<RecoveryRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(recovery_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path, line_no, e.what());
    }
  }
  return out;
}

}  // namespace s3t
