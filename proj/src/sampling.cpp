#include "s3t/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "s3t/rng.hpp"

namespace s3t {

std::vector<std::size_t> IndicatorVector::support() const {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < bits_.size(); ++n)
    if (bits_[n]) out.push_back(n);
  return out;
}

std::size_t IndicatorVector::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

IndicatorVector IndicatorVector::from_support(std::size_t length,
                                              const std::vector<std::size_t>& ones) {
  IndicatorVector v(length);
  for (auto n : ones) {
    if (n >= length) throw std::out_of_range("indicator position out of range");
    v.set(n);
  }
  return v;
}

IndicatorVector sp_indicator(const SkipSampler& sampler, std::size_t n_frames) {
  if (sampler.skip < 0) throw std::invalid_argument("skip must be >= 0");
  IndicatorVector v(n_frames);
  const auto stride = static_cast<std::size_t>(sampler.skip) + 1;
  for (std::size_t n = 0; n < n_frames; n += stride) v.set(n);
  return v;
}

IndicatorVector select_frames(const IndicatorVector& recovered, const IndicatorVector& sampled) {
  if (recovered.size() != sampled.size())
    throw std::invalid_argument("indicator lengths differ: " + std::to_string(recovered.size()) +
                                " vs " + std::to_string(sampled.size()));
  IndicatorVector out(recovered.size());
  for (std::size_t n = 0; n < out.size(); ++n) out.set(n, recovered[n] && sampled[n]);
  return out;
}

std::size_t auto_count(double alpha, std::size_t n) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
  // The epsilon absorbs representation error such as 0.35 * 10 = 3.4999...
  const double x = alpha * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9)));
}

SplitResult alpha_split(const std::vector<FrameId>& frames, const SplitSpec& spec,
                        const HumanPriority& priority) {
  if (std::set<FrameId>(frames.begin(), frames.end()).size() != frames.size())
    throw std::invalid_argument("alpha_split: frame ids must be distinct");
  const std::size_t n = frames.size();
  const std::size_t n_auto = auto_count(spec.alpha, n);

  // Positions ordered so that the first n_auto go to the automatic part.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (priority) {
    std::vector<double> key(n);
    for (std::size_t i = 0; i < n; ++i) key[i] = priority(frames[i]);
    // Highest priority values are auto-annotated; the lowest go to the human.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  } else {
    Rng rng(spec.seed);
    rng.shuffle(order);
  }

  std::vector<bool> is_auto(n, false);
  for (std::size_t i = 0; i < n_auto; ++i) is_auto[order[i]] = true;

  SplitResult out;
  for (std::size_t i = 0; i < n; ++i) (is_auto[i] ? out.automatic : out.human).push_back(frames[i]);
  return out;
}

}  // namespace s3t
