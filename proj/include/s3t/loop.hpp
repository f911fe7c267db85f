#pragma once

// Iterative refinement loop: train on T_l, evaluate, stop when the target is
// met, otherwise infer on the unlabeled pool V, recover hard frames, sample
// them, split the sample between automatic and human annotation, and grow
// the training set once the human reviews are in.
//
// The loop is a state machine persisted after every transition:
//
//   ready --step--> done | exhausted | awaiting-review | ready
//   awaiting-review --finalize--> ready
//
// Frames in V are the video timeline positions 0..N_v-1.

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "s3t/adapter.hpp"
#include "s3t/coherence.hpp"
#include "s3t/metrics.hpp"
#include "s3t/review.hpp"
#include "s3t/sampling.hpp"

namespace s3t {

inline constexpr int kStateSchemaVersion = 1;

struct TerminationCriteria {
  double min_precision = 0.90;
  double min_recall = 0.90;
  double min_f1 = 0.92;
  double iou = 0.5;

  void validate() const;
};

/// P >= min_precision and R >= min_recall and f1 >= min_f1 at the criteria's
/// IoU row. Throws std::invalid_argument when the report lacks that row.
bool check_termination(const MetricsReport& report, const TerminationCriteria& criteria);

/// T ∪ M ∪ S_auto. Throws std::invalid_argument naming duplicated frame ids
/// when the three are not pairwise disjoint, or when M holds a model entry or
/// S_auto a human one.
DatasetManifest update_training_set(const DatasetManifest& train, const DatasetManifest& human,
                                    const DatasetManifest& automatic);

/// How the first sample S_0 is drawn: an explicit frame list, or skip
/// sampling over every frame still in V.
struct InitialSampling {
  std::optional<std::vector<FrameId>> frames;
  int skip = 0;
};

struct LoopConfig {
  CoherenceParams coherence;
  SkipSampler sampler{2};
  std::vector<double> alpha_schedule{0.0};
  TerminationCriteria criteria;
  InitialSampling initial;
  std::uint64_t seed = 0;
  int max_iterations = 10;
  /// Predictions below this score do not count in the evaluation.
  double eval_min_score = 0.9;
  MatchPolicy eval_policy;

  double alpha_for(int iteration) const;
  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  std::size_t train_size = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool terminated = false;
  std::size_t recovered = 0;
  std::size_t sampled = 0;
  double alpha = 0.0;
  std::size_t auto_annotated = 0;
  std::size_t human_annotated = 0;
  bool operator==(const IterationRecord&) const = default;
};

/// The human half of a sample waiting for the inspector.
struct PendingReview {
  int iteration = 0;
  std::vector<FrameId> frames;
  std::map<FrameId, std::vector<Detection>> model_detections;
  std::map<FrameId, FrameReview> reviews;
  std::set<std::string> request_ids;
  DatasetManifest automatic;
  Annotations automatic_labels;
  IterationRecord record;

  std::vector<FrameId> unreviewed() const;
};

enum class LoopStatus { ready, awaiting_review, done, exhausted };

std::string to_string(LoopStatus s);

struct LoopState {
  int iteration = 0;
  LoopStatus status = LoopStatus::ready;
  LoopConfig config;
  std::size_t timeline_length = 0;  // N_v
  DatasetManifest train;
  std::set<FrameId> unlabeled;  // V
  Annotations annotations;
  std::vector<FrameId> test_frames;
  GroundTruth test_truth;
  std::vector<IterationRecord> history;
  std::optional<PendingReview> pending;
  /// Opaque detector configuration, kept so a resumed loop can rebuild it.
  nlohmann::json adapter = nullptr;

  /// Throws std::logic_error when T and V intersect or V leaves the timeline.
  void check_invariants() const;
};

class LoopError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by finalize when some pending frames have no review yet.
class PendingReviewsError : public LoopError {
 public:
  explicit PendingReviewsError(std::vector<FrameId> frames);
  const std::vector<FrameId>& frames() const { return frames_; }

 private:
  std::vector<FrameId> frames_;
};

/// Builds the l = 0 state. V is 0..timeline_length-1; the initial training
/// frames must lie outside it.
LoopState init_loop(LoopConfig config, std::size_t timeline_length, DatasetManifest initial_train,
                    Annotations initial_annotations, GroundTruth test_truth);

/// One pass from `ready`. Other statuses are returned unchanged. Adapter
/// failures propagate as LoopError carrying the iteration.
LoopState run_iteration(LoopState state, DetectorAdapter& adapter);

enum class SubmitOutcome { stored, duplicate };

/// Stores a review for a pending frame (last write wins per frame). A
/// request id seen before is ignored.
SubmitOutcome submit_review(LoopState& state, const FrameReview& review);

/// Builds M_l from the reviews, grows T and advances to the next iteration.
void finalize_reviews(LoopState& state);

nlohmann::json to_json(const LoopState& state);
LoopState loop_state_from_json(const nlohmann::json& j);
LoopState load_state(const std::string& path);
void save_state(const std::string& path, const LoopState& state);

nlohmann::json to_json(const IterationRecord& r);
nlohmann::json to_json(const LoopConfig& c);
LoopConfig loop_config_from_json(const nlohmann::json& j);

/// Exclusive advisory lock on `<path>.lock`, held for the object's lifetime.
class StateLock {
 public:
  explicit StateLock(const std::string& state_path);
  ~StateLock();
  StateLock(const StateLock&) = delete;
  StateLock& operator=(const StateLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace s3t
