#pragma once

// Temporal coherence recovery of false negatives.
//
// A detection scoring in [t_lower, t_upper) is promoted to a confident
// detection when a same-class confident detection exists in frame i-q within
// q*delta_d pixels AND another exists in frame i-q-1 within (q+1)*delta_d,
// for some q in 1..window-1 (nearest pair first). Its score becomes the mean
// of the two reference scores. Everything else below t_upper is dropped.
//
// Frame distances are measured on the frame_index timeline: an index missing
// from the stream is a frame with no confident detections.

#include <cstddef>
#include <set>
#include <vector>

#include "s3t/detstream.hpp"
#include "s3t/sampling.hpp"

namespace s3t {

struct CoherenceParams {
  double t_lower = 0.5;
  double t_upper = 0.9;
  int window = 4;  // k: reference pairs q = 1..k-1
  double delta_d = 60.0;

  /// Throws std::invalid_argument when 0 <= t_lower < t_upper <= 1, k >= 2,
  /// delta_d > 0 does not hold.
  void validate() const;
};

struct DetectionRef {
  FrameId frame = 0;
  std::size_t index = 0;  // position in the input frame's detection list
  bool operator==(const DetectionRef&) const = default;
};

struct RecoveryRecord {
  FrameId frame_index = 0;
  std::size_t detection_index = 0;
  int q = 0;
  DetectionRef near_ref;  // in frame i-q
  DetectionRef far_ref;   // in frame i-q-1
  double original_score = 0.0;
  double updated_score = 0.0;
  bool operator==(const RecoveryRecord&) const = default;
};

struct RecoveryResult {
  /// Same frames as the input, each holding only its confident set.
  DetectionStream output;
  std::vector<RecoveryRecord> records;
  std::set<FrameId> recovered_frames;
  bool operator==(const RecoveryResult&) const = default;
};

RecoveryResult recover(const DetectionStream& stream, const CoherenceParams& params);

/// Ones at every frame with at least one recovery. Throws std::out_of_range
/// if a recovered frame index is >= n_frames.
IndicatorVector recovered_indicator(const RecoveryResult& result, std::size_t n_frames);

nlohmann::json to_json(const RecoveryRecord& r);
RecoveryRecord recovery_record_from_json(const nlohmann::json& j);
void save_recovery_report(const std::string& path, const std::vector<RecoveryRecord>& records);
std::vector<RecoveryRecord> load_recovery_report(const std::string& path);

}  // namespace s3t
