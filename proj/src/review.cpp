#include "s3t/review.hpp"

#include <istream>
#include <ostream>
#include <set>

namespace s3t {

using nlohmann::json;

std::string to_string(ReviewAction a) {
  switch (a) {
    case ReviewAction::accept: return "accept";
    case ReviewAction::reject: return "reject";
    case ReviewAction::relabel: return "relabel";
    case ReviewAction::adjust_box: return "adjust_box";
  }
  return "accept";
}

namespace {

ReviewAction action_from_string(const std::string& s) {
  if (s == "accept") return ReviewAction::accept;
  if (s == "reject") return ReviewAction::reject;
  if (s == "relabel") return ReviewAction::relabel;
  if (s == "adjust_box") return ReviewAction::adjust_box;
  throw InvariantError("action", "expected accept, reject, relabel or adjust_box, got '" + s + "'");
}

}  // namespace

FrameReview review_from_json(const json& j, std::optional<FrameId> frame) {
  if (!j.is_object()) throw InvariantError("body", "expected a JSON object");
  FrameReview r;
  if (frame) {
    r.frame = *frame;
  } else {
    if (!j.contains("frame") || !j["frame"].is_number_integer())
      throw InvariantError("frame", "missing or not an integer");
    r.frame = j["frame"].get<FrameId>();
  }
  if (!j.contains("request_id") || !j["request_id"].is_string() ||
      j["request_id"].get<std::string>().empty())
    throw InvariantError("request_id", "missing or empty");
  r.request_id = j["request_id"].get<std::string>();
  if (!j.contains("decisions") || !j["decisions"].is_array())
    throw InvariantError("decisions", "missing or not a list");

  for (std::size_t i = 0; i < j["decisions"].size(); ++i) {
    const auto& d = j["decisions"][i];
    const std::string where = "decisions[" + std::to_string(i) + "]";
    if (!d.is_object()) throw InvariantError(where, "expected an object");
    ReviewDecision dec;
    if (!d.contains("detection_index") || !d["detection_index"].is_number_unsigned())
      throw InvariantError(where + ".detection_index", "missing or not a non-negative integer");
    dec.detection_index = d["detection_index"].get<std::size_t>();
    if (!d.contains("action") || !d["action"].is_string())
      throw InvariantError(where + ".action", "missing or not a string");
    try {
      dec.action = action_from_string(d["action"].get<std::string>());
    } catch (const InvariantError& e) {
      throw InvariantError(where + ".action", e.detail());
    }
    if (d.contains("class") && !d["class"].is_null()) {
      if (!d["class"].is_string()) throw InvariantError(where + ".class", "not a string");
      dec.class_id = d["class"].get<std::string>();
    }
    if (d.contains("bbox") && !d["bbox"].is_null()) {
      try {
        dec.bbox = bbox_from_json(d["bbox"]);
        validate(*dec.bbox);
      } catch (const InvariantError& e) {
        throw InvariantError(where + ".bbox", e.detail());
      }
    }
    if (dec.action == ReviewAction::relabel && (!dec.class_id || dec.class_id->empty()))
      throw InvariantError(where + ".class", "relabel requires a class");
    if (dec.action == ReviewAction::adjust_box && !dec.bbox)
      throw InvariantError(where + ".bbox", "adjust_box requires a bbox");
    r.decisions.push_back(std::move(dec));
  }
  return r;
}

json to_json(const FrameReview& r) {
  json decisions = json::array();
  for (const auto& d : r.decisions) {
    json jd = {{"detection_index", d.detection_index}, {"action", to_string(d.action)}};
    if (d.class_id) jd["class"] = *d.class_id;
    if (d.bbox) jd["bbox"] = to_json(*d.bbox);
    decisions.push_back(jd);
  }
  return {{"frame", r.frame}, {"decisions", decisions}, {"request_id", r.request_id}};
}

void validate_review(const FrameReview& review, std::size_t detection_count) {
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < review.decisions.size(); ++i) {
    const auto& d = review.decisions[i];
    const std::string where = "decisions[" + std::to_string(i) + "].detection_index";
    if (d.detection_index >= detection_count)
      throw InvariantError(where, "frame " + std::to_string(review.frame) + " has " +
                                      std::to_string(detection_count) + " detections");
    if (!seen.insert(d.detection_index).second)
      throw InvariantError(where, "detection decided twice");
  }
}

std::vector<GtObject> apply_review(const std::vector<Detection>& detections,
                                   const FrameReview& review) {
  validate_review(review, detections.size());
  std::vector<const ReviewDecision*> by_index(detections.size(), nullptr);
  for (const auto& d : review.decisions) by_index[d.detection_index] = &d;

  std::vector<GtObject> labels;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    GtObject obj{detections[i].class_id, detections[i].bbox, detections[i].mask};
    if (const auto* d = by_index[i]) {
      switch (d->action) {
        case ReviewAction::accept: break;
        case ReviewAction::reject: continue;
        case ReviewAction::relabel: obj.class_id = *d->class_id; break;
        case ReviewAction::adjust_box:
          obj.bbox = *d->bbox;
          obj.polygon.reset();
          break;
      }
    }
    labels.push_back(std::move(obj));
  }
  return labels;
}

std::vector<FrameReview> read_reviews(std::istream& in, const std::string& source) {
  std::vector<FrameReview> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(review_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const InvariantError& e) {
      throw InvariantError(e.field(), e.detail() + " (" + source + ":" + std::to_string(line_no) + ")");
    }
  }
  return out;
}

void write_reviews(std::ostream& out, const std::vector<FrameReview>& reviews) {
  for (const auto& r : reviews) out << to_json(r).dump() << '\n';
}

}  // namespace s3t
