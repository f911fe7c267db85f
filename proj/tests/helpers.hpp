#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s3t/detstream.hpp"
#include "s3t/rng.hpp"

namespace th {

inline s3t::Detection det(const std::string& cls, double score, double cx, double cy,
                          double w = 20.0, double h = 20.0) {
  return {cls, score, {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, std::nullopt,
          s3t::Provenance::detector};
}

inline s3t::GtObject gt(const std::string& cls, double x0, double y0, double x1, double y1) {
  return {cls, {x0, y0, x1, y1}, std::nullopt};
}

inline s3t::Polygon rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

/// Random small stream: up to n_frames frames (some indices skipped), up to
/// max_dets detections each, two classes, centers in a 300x300 square so
/// references are often in range.
inline s3t::DetectionStream random_stream(std::uint64_t seed, int n_frames, int max_dets) {
  s3t::Rng rng(seed);
  s3t::DetectionStream s;
  for (int f = 0; f < n_frames; ++f) {
    if (rng.bernoulli(0.1)) continue;
    s3t::FrameRecord fr{f, {}, std::nullopt};
    const auto m = rng.index(static_cast<std::uint64_t>(max_dets) + 1);
    for (std::uint64_t j = 0; j < m; ++j) {
      const std::string cls = rng.bernoulli(0.5) ? "A" : "B";
      double score = rng.uniform();
      if (rng.bernoulli(0.1)) score = rng.bernoulli(0.5) ? 0.5 : 0.9;  // exact thresholds
      fr.detections.push_back(det(cls, score, rng.uniform(0, 300), rng.uniform(0, 300),
                                  rng.uniform(4, 40), rng.uniform(4, 40)));
    }
    s.frames.push_back(std::move(fr));
  }
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("s3t_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace th
