#pragma once

// Slow, obviously-correct references that the tests compare the library
// against. Nothing here calls into the code under test.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "s3t/detstream.hpp"

namespace oracle {

inline double box_iou(const s3t::BBox& a, const s3t::BBox& b) {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = (a.x_max - a.x_min) * (a.y_max - a.y_min) +
                     (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Crossing-number test for one point.
inline bool inside(const s3t::Polygon& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

// Pixel-center IoU by visiting every pixel of a width x height grid.
inline double raster_iou(const s3t::Polygon& a, const s3t::Polygon& b, int width, int height) {
  long inter = 0, uni = 0;
  for (int py = 0; py < height; ++py)
    for (int px = 0; px < width; ++px) {
      const bool ia = inside(a, px + 0.5, py + 0.5);
      const bool ib = inside(b, px + 0.5, py + 0.5);
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

// Largest number of one-to-one pairs with IoU >= threshold, by trying every
// assignment. Small inputs only.
inline std::size_t max_matching(const std::vector<s3t::BBox>& pred, const std::vector<s3t::BBox>& gt,
                                double threshold) {
  std::size_t best = 0;
  std::vector<bool> used(gt.size(), false);
  auto go = [&](auto&& self, std::size_t i, std::size_t count) -> void {
    if (i == pred.size()) {
      best = std::max(best, count);
      return;
    }
    self(self, i + 1, count);
    for (std::size_t g = 0; g < gt.size(); ++g)
      if (!used[g] && box_iou(pred[i], gt[g]) >= threshold) {
        used[g] = true;
        self(self, i + 1, count + 1);
        used[g] = false;
      }
  };
  go(go, 0, 0);
  return best;
}

}  // namespace oracle
