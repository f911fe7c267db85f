#pragma once

// Detection and segmentation scoring: box and rasterized-mask IoU, greedy
// one-to-one matching against ground truth, and precision/recall/f1 per IoU
// threshold with per-class precision and its mean (mP).

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "s3t/detstream.hpp"

namespace s3t {

enum class MaskMode { box, polygon_raster };

std::string to_string(MaskMode mode);
MaskMode mask_mode_from_string(const std::string& s);

/// 0.1, 0.2, ..., 0.9
std::vector<double> default_iou_thresholds();

struct MatchPolicy {
  std::vector<double> iou_thresholds = default_iou_thresholds();
  MaskMode mask_mode = MaskMode::box;
  /// Raster grid for polygon IoU; zero means unbounded.
  Resolution resolution;
  /// Predictions scoring below this are ignored.
  double min_score = 0.0;

  void validate() const;
};

struct ClassMetrics {
  std::size_t gt = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  /// Empty when the class has no predictions.
  std::optional<double> precision;
};

struct ThresholdMetrics {
  double iou = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, ClassMetrics> per_class;
  /// Mean of per-class precision over classes with ground truth and at least
  /// one prediction; 0 when no class qualifies.
  double mean_precision = 0.0;
};

struct MetricsReport {
  MaskMode mask_mode = MaskMode::box;
  std::vector<ThresholdMetrics> rows;

  /// Row whose threshold is within 1e-9 of `iou`, or nullptr.
  const ThresholdMetrics* at(double iou) const;
};

// Zero-denominator cases return 0.
double precision_of(std::size_t tp, std::size_t fp);
double recall_of(std::size_t tp, std::size_t fn);
double f1_of(double precision, double recall);

double box_iou(const BBox& a, const BBox& b);

/// IoU of the pixel sets whose centers fall inside each polygon (even-odd
/// rule). A polygon covering no pixel centers scores 0 against anything but
/// an identical polygon.
double mask_iou(const Polygon& a, const Polygon& b, Resolution grid = {});

MetricsReport evaluate(const DetectionStream& pred, const GroundTruth& gt,
                       const MatchPolicy& policy = {});

nlohmann::json to_json(const MetricsReport& report);

}  // namespace s3t
