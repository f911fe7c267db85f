#pragma once

// A detector whose behaviour is fixed per training-set size, used to replay
// a known ledger through the loop.

#include <map>
#include <set>

#include "helpers.hpp"
#include "s3t/adapter.hpp"
#include "s3t/loop.hpp"

namespace th {

class ScriptedAdapter : public s3t::DetectorAdapter {
 public:
  /// train size -> frames to make recoverable (a confident pair in the two
  /// frames before each target and a weak detection on the target).
  std::map<std::size_t, std::vector<s3t::FrameId>> targets;
  /// The test predictions are perfect once the training set reaches this.
  std::size_t good_at = 0;
  s3t::GroundTruth test_truth;
  int trained = 0;

  s3t::ModelHandle train(const s3t::DatasetManifest& m, const s3t::Annotations&) override {
    ++trained;
    return {"scripted-" + std::to_string(m.size()), m.size()};
  }

  s3t::DetectionStream infer(const s3t::ModelHandle& model,
                             const std::vector<s3t::FrameId>& frames) override {
    const std::set<s3t::FrameId> wanted(frames.begin(), frames.end());
    std::map<s3t::FrameId, std::vector<s3t::Detection>> out;
    for (s3t::FrameId f : frames) out[f];
    for (const auto& [f, objs] : test_truth.frames)
      if (wanted.count(f) && model.train_size >= good_at)
        for (const auto& o : objs) out[f].push_back({o.class_id, 0.99, o.bbox, std::nullopt, {}});
    const auto it = targets.find(model.train_size);
    if (it != targets.end())
      for (s3t::FrameId t : it->second) {
        if (wanted.count(t - 2)) out[t - 2].push_back(det("crack", 0.95, 100, 100));
        if (wanted.count(t - 1)) out[t - 1].push_back(det("crack", 0.93, 110, 100));
        if (wanted.count(t)) out[t].push_back(det("crack", 0.6, 120, 100));
      }
    s3t::DetectionStream s;
    for (auto& [f, dets] : out) s.frames.push_back({f, std::move(dets), std::nullopt});
    return s;
  }
};

/// Every 3rd frame from `first`, `count` of them.
inline std::vector<s3t::FrameId> every_third(s3t::FrameId first, std::size_t count) {
  std::vector<s3t::FrameId> v;
  for (std::size_t i = 0; i < count; ++i) v.push_back(first + 3 * static_cast<s3t::FrameId>(i));
  return v;
}

/// Adapter and initial state replaying 40 -> 48 -> 85 -> 118 with skip 2 and
/// alpha schedule [0, 0.7, 0.8] over a 670-frame timeline.
struct LedgerFixture {
  ScriptedAdapter adapter;
  s3t::LoopState state;
};

inline LedgerFixture ledger_fixture(std::uint64_t seed = 1) {
  LedgerFixture fx;
  fx.adapter.targets[48] = every_third(3, 37);     // 3..111
  fx.adapter.targets[85] = every_third(150, 33);   // 150..246
  fx.adapter.good_at = 118;
  fx.adapter.test_truth.frames[900000] = {gt("crack", 10, 10, 50, 50), gt("joint", 200, 200, 260, 240)};

  s3t::LoopConfig cfg;
  cfg.sampler = {2};
  cfg.alpha_schedule = {0.0, 0.7, 0.8};
  cfg.initial.frames = every_third(600, 8);
  cfg.seed = seed;
  s3t::DatasetManifest t0;
  for (s3t::FrameId f = 0; f < 40; ++f) t0.add({1000000 + f, s3t::AnnotationSource::human, -1});
  fx.state = s3t::init_loop(cfg, 670, t0, {}, fx.adapter.test_truth);
  return fx;
}

/// Accept-all reviews for every pending frame.
inline void accept_all(s3t::LoopState& s) {
  for (s3t::FrameId f : s.pending->frames)
    s3t::submit_review(s, {f, {}, "accept-" + std::to_string(s.pending->iteration) + "-" + std::to_string(f)});
}

}  // namespace th
