#pragma once

// Frames, detections and ground truth for a video detection stream, plus the
// JSONL reader/writer used by every command-line tool.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace s3t {

using FrameId = std::int64_t;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Axis-aligned box in continuous pixel coordinates.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool operator==(const BBox&) const = default;
};

/// Closed polygon, vertices in order, last vertex implicitly joined to the first.
using Polygon = std::vector<Point>;

enum class Provenance { detector, recovered };

struct Detection {
  std::string class_id;
  double score = 0.0;
  BBox bbox;
  std::optional<Polygon> mask;
  Provenance provenance = Provenance::detector;
  bool operator==(const Detection&) const = default;
};

struct FrameRecord {
  FrameId frame_index = 0;
  std::vector<Detection> detections;
  std::optional<std::string> image_ref;
  bool operator==(const FrameRecord&) const = default;
};

struct Resolution {
  int width = 0;
  int height = 0;
  bool operator==(const Resolution&) const = default;
};

/// Frames strictly ascending by frame_index. capture_rate and resolution are
/// zero when unknown.
struct DetectionStream {
  std::vector<FrameRecord> frames;
  double capture_rate = 0.0;
  Resolution resolution;

  std::size_t frame_count() const { return frames.size(); }
  const FrameRecord* find(FrameId index) const;
  bool operator==(const DetectionStream&) const = default;
};

struct GtObject {
  std::string class_id;
  BBox bbox;
  std::optional<Polygon> polygon;
  bool operator==(const GtObject&) const = default;
};

struct GroundTruth {
  std::map<FrameId, std::vector<GtObject>> frames;

  std::size_t object_count() const;
  bool operator==(const GroundTruth&) const = default;
};

/// Base of every input-data failure: malformed files and invariant violations.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InvariantError : public DataError {
 public:
  InvariantError(std::string field, std::string detail);
  const std::string& field() const { return field_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string field_;
  std::string detail_;
};

Point center(const BBox& box);
Point center(const Detection& d);

/// True when no two non-adjacent edges touch and no edge is degenerate.
bool is_simple(const Polygon& poly);

// Each validator throws InvariantError naming the offending field.
void validate(const BBox& box);
void validate_polygon(const Polygon& poly);
void validate(const Detection& d);
void validate(const GtObject& g);
void validate(const DetectionStream& stream);

// JSON mapping of single records, shared by the stream files, loop state and
// the review service.
nlohmann::json to_json(const BBox& box);
BBox bbox_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Polygon& poly);
Polygon polygon_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GtObject& g);
GtObject gt_object_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FrameRecord& f);
FrameRecord frame_from_json(const nlohmann::json& j);

/// Reads a detection stream in JSONL form. An optional first line
/// `{"stream": {"fps": .., "width": .., "height": ..}}` carries the capture
/// rate and resolution. Frames are sorted; duplicates are rejected.
DetectionStream read_stream(std::istream& in, const std::string& source = "<stream>");
DetectionStream load_stream(const std::string& path);
void write_stream(std::ostream& out, const DetectionStream& stream);
void save_stream(const std::string& path, const DetectionStream& stream);

GroundTruth read_ground_truth(std::istream& in, const std::string& source = "<truth>");
GroundTruth load_ground_truth(const std::string& path);
void write_ground_truth(std::ostream& out, const GroundTruth& gt);
void save_ground_truth(const std::string& path, const GroundTruth& gt);

/// Ground truth view of a stream (scores and provenance dropped).
GroundTruth as_ground_truth(const DetectionStream& stream);

std::string to_string(Provenance p);

}  // namespace s3t
