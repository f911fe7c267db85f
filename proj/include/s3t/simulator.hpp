#pragma once

// Synthetic detection streams with known truth, a mock detector whose skill
// grows with the training-set size, a brute-force recovery reference, and a
// simulated inspector. Used for offline testing of the whole pipeline.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "s3t/adapter.hpp"
#include "s3t/coherence.hpp"
#include "s3t/detstream.hpp"
#include "s3t/review.hpp"
#include "s3t/rng.hpp"

namespace s3t {

struct TrackSpec {
  std::string class_id;
  FrameId start = 0;
  FrameId end = 0;  // inclusive
  Point initial_center;
  double v_px = 0.0;  // max center displacement per frame
  double width = 0.0;
  double height = 0.0;
};

/// Per track and frame the detector emits a confident detection, a weak one,
/// or nothing; clutter adds Poisson-many false positives per frame.
struct NoiseModel {
  double p_confident = 1.0;
  double p_weak = 0.0;
  double p_miss = 0.0;
  double weak_lo = 0.5, weak_hi = 0.9;  // [lo, hi)
  double confident_lo = 0.9, confident_hi = 1.0;
  double clutter_rate = 0.0;
  double clutter_lo = 0.5, clutter_hi = 1.0;
  double clutter_size = 80.0;
  double box_jitter_px = 0.0;  // uniform per coordinate

  void validate() const;
};

struct SimScenario {
  int n_frames = 0;
  Resolution resolution{1920, 1080};
  double fps = 30.0;
  std::vector<TrackSpec> tracks;
  NoiseModel noise;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class MissKind { weak, none };

struct MissEntry {
  FrameId frame = 0;
  std::size_t track = 0;
  MissKind kind = MissKind::none;
  bool operator==(const MissEntry&) const = default;
};

struct SimOutput {
  DetectionStream stream;
  GroundTruth truth;
  std::vector<MissEntry> miss_log;
  bool operator==(const SimOutput&) const = default;
};

/// Deterministic in the scenario (including its seed). Tracks random-walk
/// with steps of at most v_px, clamped so boxes stay inside the image.
SimOutput generate(const SimScenario& scenario);

/// Random tracks spread over the timeline; a convenience for tests and the
/// loop configuration.
std::vector<TrackSpec> random_tracks(std::size_t count, int n_frames, Resolution res,
                                     const std::vector<std::string>& classes, double v_px,
                                     int min_len, int max_len, std::uint64_t seed);

/// Noise draws for the truth objects of one frame, shared by generate() and
/// the mock detector. Appends detections to `out`.
void emit_detections(const std::vector<GtObject>& truth, FrameId frame, const NoiseModel& noise,
                     Resolution res, const std::vector<std::string>& clutter_classes, Rng& rng,
                     std::vector<Detection>& out, std::vector<MissEntry>* misses = nullptr);

/// Straight transcription of the recovery procedure with nested loops over a
/// dense frame array; the reference that recover() is checked against.
RecoveryResult oracle_recover(const DetectionStream& stream, const CoherenceParams& params);

struct SkillPoint {
  double train_size = 0.0;
  double p_confident = 0.0;
  double p_weak = 0.0;
  double p_miss = 1.0;
  double clutter_rate = 0.0;
};

/// Piecewise-linear in the training-set size, clamped at both ends.
class SkillCurve {
 public:
  SkillCurve() = default;
  /// Knots must be ascending in train_size with p_confident non-decreasing
  /// and each point's probabilities summing to one.
  explicit SkillCurve(std::vector<SkillPoint> knots);

  SkillPoint at(std::size_t train_size) const;
  const std::vector<SkillPoint>& knots() const { return knots_; }

 private:
  std::vector<SkillPoint> knots_;
};

/// Mock detector over a fixed world of truth frames. train() records the
/// manifest size; infer() draws each frame's detections from the truth with
/// the skill curve's rates, seeded by (seed, train size, frame).
class MockAdapter : public DetectorAdapter {
 public:
  MockAdapter(GroundTruth world, SkillCurve skill, NoiseModel base_noise, Resolution resolution,
              std::uint64_t seed);

  ModelHandle train(const DatasetManifest& manifest, const Annotations& annotations) override;
  DetectionStream infer(const ModelHandle& model, const std::vector<FrameId>& frames) override;

  int train_calls() const { return train_calls_; }

 private:
  GroundTruth world_;
  SkillCurve skill_;
  NoiseModel base_noise_;
  Resolution resolution_;
  std::uint64_t seed_;
  std::vector<std::string> classes_;
  int train_calls_ = 0;
};

std::unique_ptr<DetectorAdapter> mock_adapter(GroundTruth world, SkillCurve skill,
                                              NoiseModel base_noise, Resolution resolution,
                                              std::uint64_t seed);

/// An inspector with perfect knowledge: detections matching a same-class
/// truth object at IoU >= min_iou are accepted, ones matching only a
/// different-class object are relabeled, the rest rejected.
FrameReview simulated_review(FrameId frame, const std::vector<Detection>& detections,
                             const std::vector<GtObject>& truth, const std::string& request_id,
                             double min_iou = 0.5);

nlohmann::json to_json(const SimScenario& s);
SimScenario scenario_from_json(const nlohmann::json& j);
NoiseModel noise_from_json(const nlohmann::json& j, NoiseModel defaults = {});
SkillCurve skill_curve_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MissEntry& m);

}  // namespace s3t
