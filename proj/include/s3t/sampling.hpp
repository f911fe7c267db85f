#pragma once

// Skip sampling over the video timeline and the alpha split of sampled frames
// into model-annotated and human-reviewed parts.

#include <cstdint>
#include <functional>
#include <vector>

#include "s3t/detstream.hpp"

namespace s3t {

/// Binary indicator over frame positions 0..N_v-1.
class IndicatorVector {
 public:
  IndicatorVector() = default;
  explicit IndicatorVector(std::size_t length) : bits_(length, 0) {}

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t n) const { return bits_[n] != 0; }
  void set(std::size_t n, bool value = true) { bits_.at(n) = value ? 1 : 0; }

  /// Positions holding a one, ascending.
  std::vector<std::size_t> support() const;
  std::size_t count() const;

  static IndicatorVector from_support(std::size_t length, const std::vector<std::size_t>& ones);
  bool operator==(const IndicatorVector&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct SkipSampler {
  int skip = 0;  // frames skipped after each sampled frame
};

/// Ones at 0-based positions 0, s+1, 2(s+1), ... below n_frames. The 1-based
/// sequence n = 1, 1+(s+1), ... maps to these by subtracting one.
IndicatorVector sp_indicator(const SkipSampler& sampler, std::size_t n_frames);

/// Elementwise product; throws std::invalid_argument on a length mismatch.
IndicatorVector select_frames(const IndicatorVector& recovered, const IndicatorVector& sampled);

struct SplitSpec {
  double alpha = 0.0;  // fraction annotated automatically
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<FrameId> automatic;
  std::vector<FrameId> human;
};

/// round-half-up(alpha * n).
std::size_t auto_count(double alpha, std::size_t n);

/// Ranks frames for the human subset; lower rank goes to the human reviewer
/// first. Used instead of the seeded shuffle when supplied.
using HumanPriority = std::function<double(FrameId)>;

/// Partitions `frames` into an automatic part of size auto_count(alpha, n)
/// and a human part. Membership comes from a seeded uniform shuffle, or from
/// `priority` when given (lowest values to the human part). Both outputs
/// keep the input order.
SplitResult alpha_split(const std::vector<FrameId>& frames, const SplitSpec& spec,
                        const HumanPriority& priority = {});

}  // namespace s3t
