#pragma once

// Inspector decisions on model detections for one frame, and how they turn
// into training labels.

#include <optional>
#include <string>
#include <vector>

#include "s3t/detstream.hpp"

namespace s3t {

enum class ReviewAction { accept, reject, relabel, adjust_box };

std::string to_string(ReviewAction a);

struct ReviewDecision {
  std::size_t detection_index = 0;
  ReviewAction action = ReviewAction::accept;
  std::optional<std::string> class_id;  // required for relabel
  std::optional<BBox> bbox;             // required for adjust_box
  bool operator==(const ReviewDecision&) const = default;
};

struct FrameReview {
  FrameId frame = 0;
  std::vector<ReviewDecision> decisions;
  std::string request_id;
  bool operator==(const FrameReview&) const = default;
};

/// Parses a review body. `frame` is taken from the payload's "frame" key
/// unless supplied (the HTTP route carries it in the path). Throws
/// InvariantError naming the offending field.
FrameReview review_from_json(const nlohmann::json& j, std::optional<FrameId> frame = std::nullopt);
nlohmann::json to_json(const FrameReview& r);

/// Checks the decisions against the model detections they refer to.
void validate_review(const FrameReview& review, std::size_t detection_count);

/// Labels after applying the decisions; detections without a decision are
/// accepted as they are. An adjusted box drops the detection's polygon.
std::vector<GtObject> apply_review(const std::vector<Detection>& detections,
                                   const FrameReview& review);

std::vector<FrameReview> read_reviews(std::istream& in, const std::string& source = "<reviews>");
void write_reviews(std::ostream& out, const std::vector<FrameReview>& reviews);

}  // namespace s3t
