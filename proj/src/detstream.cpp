#include "s3t/detstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "s3t/fileio.hpp"

namespace s3t {

using nlohmann::json;

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

InvariantError::InvariantError(std::string field, std::string detail)
    : DataError("invalid " + field + ": " + detail),
      field_(std::move(field)),
      detail_(std::move(detail)) {}

const FrameRecord* DetectionStream::find(FrameId index) const {
  auto it = std::lower_bound(frames.begin(), frames.end(), index,
                             [](const FrameRecord& f, FrameId i) { return f.frame_index < i; });
  if (it == frames.end() || it->frame_index != index) return nullptr;
  return &*it;
}

std::size_t GroundTruth::object_count() const {
  std::size_t n = 0;
  for (const auto& [_, objs] : frames) n += objs.size();
  return n;
}

Point center(const BBox& box) {
  return {(box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0};
}

Point center(const Detection& d) { return center(d.bbox); }

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

int sign(double v) { return (v > 0) - (v < 0); }

bool on_segment(const Point& p, const Point& a, const Point& b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_touch(const Point& a, const Point& b, const Point& c, const Point& d) {
  const int d1 = sign(cross(c, d, a));
  const int d2 = sign(cross(c, d, b));
  const int d3 = sign(cross(a, b, c));
  const int d4 = sign(cross(a, b, d));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment(a, c, d)) return true;
  if (d2 == 0 && on_segment(b, c, d)) return true;
  if (d3 == 0 && on_segment(c, a, b)) return true;
  if (d4 == 0 && on_segment(d, a, b)) return true;
  return false;
}

bool finite(const Point& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

}  // namespace

bool is_simple(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    const Point& c = poly[(i + 2) % n];
    if (a == b) return false;
    // Adjacent edges folding back onto each other.
    if (cross(a, b, c) == 0.0 && (a.x - b.x) * (c.x - b.x) + (a.y - b.y) * (c.y - b.y) > 0.0)
      return false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_touch(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

void validate(const BBox& box) {
  if (!std::isfinite(box.x_min) || !std::isfinite(box.y_min) || !std::isfinite(box.x_max) ||
      !std::isfinite(box.y_max))
    throw InvariantError("bbox", "coordinates must be finite");
  if (!(box.x_min < box.x_max)) throw InvariantError("bbox", "x_min must be < x_max");
  if (!(box.y_min < box.y_max)) throw InvariantError("bbox", "y_min must be < y_max");
}

void validate_polygon(const Polygon& poly) {
  if (poly.size() < 3) throw InvariantError("mask", "polygon needs at least 3 vertices");
  if (!std::all_of(poly.begin(), poly.end(), finite))
    throw InvariantError("mask", "vertices must be finite");
  if (!is_simple(poly)) throw InvariantError("mask", "polygon is self-intersecting");
}

void validate(const Detection& d) {
  if (!(d.score >= 0.0 && d.score <= 1.0))
    throw InvariantError("score", "must lie in [0,1], got " + std::to_string(d.score));
  validate(d.bbox);
  if (d.mask) validate_polygon(*d.mask);
}

void validate(const GtObject& g) {
  validate(g.bbox);
  if (g.polygon) validate_polygon(*g.polygon);
}

void validate(const DetectionStream& stream) {
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    const auto& f = stream.frames[i];
    if (f.frame_index < 0) throw InvariantError("frame", "index must be >= 0");
    if (i > 0 && stream.frames[i - 1].frame_index >= f.frame_index)
      throw InvariantError("frame", "indices must be strictly ascending at frame " +
                                        std::to_string(f.frame_index));
    for (const auto& d : f.detections) validate(d);
  }
}

json to_json(const BBox& box) { return json::array({box.x_min, box.y_min, box.x_max, box.y_max}); }

BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw InvariantError("bbox", "expected [xmin, ymin, xmax, ymax]");
  for (const auto& v : j)
    if (!v.is_number()) throw InvariantError("bbox", "coordinates must be numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json to_json(const Polygon& poly) {
  json out = json::array();
  for (const auto& p : poly) out.push_back({p.x, p.y});
  return out;
}

Polygon polygon_from_json(const json& j) {
  if (!j.is_array()) throw InvariantError("mask", "expected a list of [x, y] vertices");
  Polygon poly;
  poly.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw InvariantError("mask", "vertex must be [x, y]");
    poly.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  return poly;
}

namespace {

std::string class_from_json(const json& j) {
  if (!j.contains("class") || !j["class"].is_string())
    throw InvariantError("class", "missing or not a string");
  return j["class"].get<std::string>();
}

std::optional<Polygon> mask_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return polygon_from_json(j[key]);
}

}  // namespace

json to_json(const Detection& d) {
  json j = {{"class", d.class_id},
            {"score", d.score},
            {"bbox", to_json(d.bbox)},
            {"mask", d.mask ? to_json(*d.mask) : json(nullptr)}};
  j["provenance"] = to_string(d.provenance);
  return j;
}

Detection detection_from_json(const json& j) {
  if (!j.is_object()) throw InvariantError("detection", "expected an object");
  Detection d;
  d.class_id = class_from_json(j);
  if (!j.contains("score") || !j["score"].is_number())
    throw InvariantError("score", "missing or not a number");
  d.score = j["score"].get<double>();
  if (!j.contains("bbox")) throw InvariantError("bbox", "missing");
  d.bbox = bbox_from_json(j["bbox"]);
  d.mask = mask_from_json(j, "mask");
  if (j.contains("provenance")) {
    const auto p = j["provenance"];
    if (p == "detector")
      d.provenance = Provenance::detector;
    else if (p == "recovered")
      d.provenance = Provenance::recovered;
    else
      throw InvariantError("provenance", "expected \"detector\" or \"recovered\"");
  }
  validate(d);
  return d;
}

json to_json(const GtObject& g) {
  return {{"class", g.class_id},
          {"bbox", to_json(g.bbox)},
          {"mask", g.polygon ? to_json(*g.polygon) : json(nullptr)}};
}

GtObject gt_object_from_json(const json& j) {
  if (!j.is_object()) throw InvariantError("object", "expected an object");
  GtObject g;
  g.class_id = class_from_json(j);
  if (!j.contains("bbox")) throw InvariantError("bbox", "missing");
  g.bbox = bbox_from_json(j["bbox"]);
  g.polygon = mask_from_json(j, "mask");
  validate(g);
  return g;
}

json to_json(const FrameRecord& f) {
  json dets = json::array();
  for (const auto& d : f.detections) dets.push_back(to_json(d));
  json j = {{"frame", f.frame_index}, {"detections", dets}};
  if (f.image_ref) j["image"] = *f.image_ref;
  return j;
}

namespace {

FrameId frame_index_from_json(const json& j) {
  if (!j.is_object()) throw InvariantError("frame", "expected an object per line");
  if (!j.contains("frame") || !j["frame"].is_number_integer())
    throw InvariantError("frame", "missing or not an integer");
  const auto index = j["frame"].get<FrameId>();
  if (index < 0) throw InvariantError("frame", "index must be >= 0");
  return index;
}

const json& detections_array(const json& j) {
  static const json empty = json::array();
  if (!j.contains("detections")) return empty;
  if (!j["detections"].is_array()) throw InvariantError("detections", "expected a list");
  return j["detections"];
}

// Runs `body` on each non-blank line, re-raising failures with the line number.
template <typename Fn>
void for_each_line(std::istream& in, const std::string& source, Fn&& body) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("malformed JSON: ") + e.what());
    }
    try {
      body(j, line_no);
    } catch (const InvariantError& e) {
      std::string where = source + ":" + std::to_string(line_no);
      if (j.is_object() && j.contains("frame") && j["frame"].is_number_integer())
        where = "frame " + std::to_string(j["frame"].get<FrameId>()) + ", " + where;
      throw InvariantError(e.field(), e.detail() + " (" + where + ")");
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
}

}  // namespace

FrameRecord frame_from_json(const json& j) {
  FrameRecord f;
  f.frame_index = frame_index_from_json(j);
  for (const auto& d : detections_array(j)) f.detections.push_back(detection_from_json(d));
  if (j.contains("image") && j["image"].is_string()) f.image_ref = j["image"].get<std::string>();
  return f;
}

DetectionStream read_stream(std::istream& in, const std::string& source) {
  DetectionStream stream;
  for_each_line(in, source, [&](const json& j, std::size_t line_no) {
    if (j.is_object() && j.contains("stream")) {
      if (line_no != 1 || !stream.frames.empty())
        throw InvariantError("stream", "header must be the first line");
      const auto& h = j["stream"];
      stream.capture_rate = h.value("fps", 0.0);
      stream.resolution = {h.value("width", 0), h.value("height", 0)};
      if (stream.capture_rate < 0 || stream.resolution.width < 0 || stream.resolution.height < 0)
        throw InvariantError("stream", "fps and resolution must be non-negative");
      return;
    }
    stream.frames.push_back(frame_from_json(j));
  });
  std::stable_sort(stream.frames.begin(), stream.frames.end(),
                   [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
  for (std::size_t i = 1; i < stream.frames.size(); ++i)
    if (stream.frames[i].frame_index == stream.frames[i - 1].frame_index)
      throw InvariantError("frame", "duplicate frame index " +
                                        std::to_string(stream.frames[i].frame_index) + " in " +
                                        source);
  return stream;
}

DetectionStream load_stream(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_stream(in, path);
}

void write_stream(std::ostream& out, const DetectionStream& stream) {
  if (stream.capture_rate > 0 || stream.resolution.width > 0 || stream.resolution.height > 0) {
    json h = {{"fps", stream.capture_rate},
              {"width", stream.resolution.width},
              {"height", stream.resolution.height}};
    out << json{{"stream", h}}.dump() << '\n';
  }
  for (const auto& f : stream.frames) out << to_json(f).dump() << '\n';
}

void save_stream(const std::string& path, const DetectionStream& stream) {
  std::ostringstream out;
  write_stream(out, stream);
  write_file_atomic(path, out.str());
}

GroundTruth read_ground_truth(std::istream& in, const std::string& source) {
  GroundTruth gt;
  for_each_line(in, source, [&](const json& j, std::size_t) {
    const FrameId index = frame_index_from_json(j);
    if (gt.frames.count(index))
      throw InvariantError("frame", "duplicate frame index " + std::to_string(index));
    auto& objs = gt.frames[index];
    for (const auto& o : detections_array(j)) objs.push_back(gt_object_from_json(o));
  });
  return gt;
}

GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_ground_truth(in, path);
}

void write_ground_truth(std::ostream& out, const GroundTruth& gt) {
  for (const auto& [index, objs] : gt.frames) {
    json dets = json::array();
    for (const auto& o : objs) dets.push_back(to_json(o));
    out << json{{"frame", index}, {"detections", dets}}.dump() << '\n';
  }
}

void save_ground_truth(const std::string& path, const GroundTruth& gt) {
  std::ostringstream out;
  write_ground_truth(out, gt);
  write_file_atomic(path, out.str());
}

GroundTruth as_ground_truth(const DetectionStream& stream) {
  GroundTruth gt;
  for (const auto& f : stream.frames) {
    auto& objs = gt.frames[f.frame_index];
    for (const auto& d : f.detections) objs.push_back({d.class_id, d.bbox, d.mask});
  }
  return gt;
}

std::string to_string(Provenance p) {
  return p == Provenance::recovered ? "recovered" : "detector";
}

}  // namespace s3t
