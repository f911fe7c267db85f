#include "s3t/metrics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace s3t {

using nlohmann::json;

std::string to_string(MaskMode mode) {
  return mode == MaskMode::polygon_raster ? "polygon-raster" : "box";
}

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "box") return MaskMode::box;
  if (s == "polygon-raster") return MaskMode::polygon_raster;
  throw std::invalid_argument("unknown mask mode '" + s + "' (expected box or polygon-raster)");
}

std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int k = 1; k <= 9; ++k) t.push_back(k / 10.0);
  return t;
}

void MatchPolicy::validate() const {
  if (iou_thresholds.empty()) throw std::invalid_argument("at least one IoU threshold required");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("IoU thresholds must lie in (0,1)");
    if (i > 0 && !(iou_thresholds[i - 1] < t))
      throw std::invalid_argument("IoU thresholds must be strictly ascending");
  }
  if (resolution.width < 0 || resolution.height < 0)
    throw std::invalid_argument("resolution must be non-negative");
}

const ThresholdMetrics* MetricsReport::at(double iou) const {
  for (const auto& row : rows)
    if (std::abs(row.iou - iou) <= 1e-9) return &row;
  return nullptr;
}

double precision_of(std::size_t tp, std::size_t fp) {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double recall_of(std::size_t tp, std::size_t fn) {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double f1_of(double precision, double recall) {
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

double box_iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace {

using Span = std::pair<long long, long long>;  // [first, last) pixel columns

constexpr long long kUnbounded = std::numeric_limits<long long>::max() / 4;

// Columns of row `yc` (a pixel-center y) whose centers lie inside `poly`.
std::vector<Span> row_spans(const Polygon& poly, double yc, long long x_lo, long long x_hi) {
  std::vector<double> xs;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    if ((a.y <= yc) != (b.y <= yc)) xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
  }
  std::sort(xs.begin(), xs.end());
  std::vector<Span> spans;
  for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
    const auto first = std::max(x_lo, static_cast<long long>(std::ceil(xs[i] - 0.5)));
    const auto last = std::min(x_hi, static_cast<long long>(std::ceil(xs[i + 1] - 0.5)));
    if (first < last) spans.emplace_back(first, last);
  }
  return spans;
}

long long span_total(const std::vector<Span>& s) {
  long long n = 0;
  for (const auto& [a, b] : s) n += b - a;
  return n;
}

long long span_overlap(const std::vector<Span>& a, const std::vector<Span>& b) {
  long long n = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    const auto lo = std::max(a[i].first, b[j].first);
    const auto hi = std::min(a[i].second, b[j].second);
    if (lo < hi) n += hi - lo;
    (a[i].second < b[j].second) ? ++i : ++j;
  }
  return n;
}

Polygon box_polygon(const BBox& b) {
  return {{b.x_min, b.y_min}, {b.x_max, b.y_min}, {b.x_max, b.y_max}, {b.x_min, b.y_max}};
}

}  // namespace

double mask_iou(const Polygon& a, const Polygon& b, Resolution grid) {
  if (a.size() < 3 || b.size() < 3) return a == b && !a.empty() ? 1.0 : 0.0;
  double y_min = std::numeric_limits<double>::infinity();
  double y_max = -y_min;
  for (const auto* poly : {&a, &b})
    for (const auto& p : *poly) {
      y_min = std::min(y_min, p.y);
      y_max = std::max(y_max, p.y);
    }
  auto row_lo = static_cast<long long>(std::floor(y_min));
  auto row_hi = static_cast<long long>(std::ceil(y_max)) + 1;
  if (grid.height > 0) {
    row_lo = std::max(row_lo, 0LL);
    row_hi = std::min(row_hi, static_cast<long long>(grid.height));
  }
  const long long x_lo = grid.width > 0 ? 0 : -kUnbounded;
  const long long x_hi = grid.width > 0 ? grid.width : kUnbounded;

  long long area_a = 0;
  long long area_b = 0;
  long long inter = 0;
  for (long long row = row_lo; row < row_hi; ++row) {
    const double yc = static_cast<double>(row) + 0.5;
    const auto sa = row_spans(a, yc, x_lo, x_hi);
    const auto sb = row_spans(b, yc, x_lo, x_hi);
    area_a += span_total(sa);
    area_b += span_total(sb);
    inter += span_overlap(sa, sb);
  }
  if (area_a == 0 || area_b == 0) return a == b ? 1.0 : 0.0;
  return static_cast<double>(inter) / static_cast<double>(area_a + area_b - inter);
}

namespace {

struct ClassCounts {
  std::size_t gt = 0;
  std::vector<std::size_t> tp, fp;  // per threshold
};

}  // namespace

MetricsReport evaluate(const DetectionStream& pred, const GroundTruth& gt,
                       const MatchPolicy& policy) {
  policy.validate();
  const auto& thresholds = policy.iou_thresholds;
  const std::size_t n_thr = thresholds.size();

  std::set<FrameId> frames;
  for (const auto& f : pred.frames) frames.insert(f.frame_index);
  for (const auto& [f, _] : gt.frames) frames.insert(f);

  std::map<std::string, ClassCounts> classes;
  const auto counts_for = [&](const std::string& c) -> ClassCounts& {
    auto& cc = classes[c];
    if (cc.tp.empty()) cc.tp.assign(n_thr, 0), cc.fp.assign(n_thr, 0);
    return cc;
  };

  static const std::vector<GtObject> kNoTruth;
  for (FrameId frame : frames) {
    const FrameRecord* pf = pred.find(frame);
    const auto git = gt.frames.find(frame);
    const auto& truth = git == gt.frames.end() ? kNoTruth : git->second;

    std::map<std::string, std::pair<std::vector<const Detection*>, std::vector<const GtObject*>>>
        by_class;
    if (pf)
      for (const auto& d : pf->detections)
        if (d.score >= policy.min_score) by_class[d.class_id].first.push_back(&d);
    for (const auto& g : truth) by_class[g.class_id].second.push_back(&g);

    for (auto& [cls, group] : by_class) {
      auto& [preds, gts] = group;
      auto& cc = counts_for(cls);
      cc.gt += gts.size();
      // Score descending; stable keeps input order among ties.
      std::stable_sort(preds.begin(), preds.end(),
                       [](const Detection* a, const Detection* b) { return a->score > b->score; });

      std::vector<std::vector<double>> iou(preds.size(), std::vector<double>(gts.size()));
      for (std::size_t p = 0; p < preds.size(); ++p)
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (policy.mask_mode == MaskMode::box) {
            iou[p][g] = box_iou(preds[p]->bbox, gts[g]->bbox);
          } else {
            const Polygon pa = preds[p]->mask ? *preds[p]->mask : box_polygon(preds[p]->bbox);
            const Polygon pb = gts[g]->polygon ? *gts[g]->polygon : box_polygon(gts[g]->bbox);
            iou[p][g] = mask_iou(pa, pb, policy.resolution);
          }
        }

      for (std::size_t t = 0; t < n_thr; ++t) {
        std::vector<bool> gt_used(gts.size(), false);
        std::size_t tp = 0;
        for (std::size_t p = 0; p < preds.size(); ++p) {
          std::size_t best = gts.size();
          double best_iou = -1.0;
          for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gt_used[g] || iou[p][g] < thresholds[t]) continue;
            if (iou[p][g] > best_iou) best = g, best_iou = iou[p][g];
          }
          if (best == gts.size()) continue;
          assert(!gt_used[best]);
          gt_used[best] = true;
          ++tp;
        }
        cc.tp[t] += tp;
        cc.fp[t] += preds.size() - tp;
      }
    }
  }

  MetricsReport report;
  report.mask_mode = policy.mask_mode;
  for (std::size_t t = 0; t < n_thr; ++t) {
    ThresholdMetrics row;
    row.iou = thresholds[t];
    std::size_t total_gt = 0;
    double precision_sum = 0.0;
    std::size_t precision_classes = 0;
    for (const auto& [cls, cc] : classes) {
      ClassMetrics cm{cc.gt, cc.tp[t], cc.fp[t], std::nullopt};
      if (cm.tp + cm.fp > 0) cm.precision = precision_of(cm.tp, cm.fp);
      if (cm.gt > 0 && cm.precision) {
        precision_sum += *cm.precision;
        ++precision_classes;
      }
      row.tp += cm.tp;
      row.fp += cm.fp;
      total_gt += cm.gt;
      row.per_class.emplace(cls, cm);
    }
    row.fn = total_gt - row.tp;
    row.precision = precision_of(row.tp, row.fp);
    row.recall = recall_of(row.tp, row.fn);
    row.f1 = f1_of(row.precision, row.recall);
    row.mean_precision =
        precision_classes == 0 ? 0.0 : precision_sum / static_cast<double>(precision_classes);
    report.rows.push_back(std::move(row));
  }
  return report;
}

json to_json(const MetricsReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json per_class = json::object();
    for (const auto& [cls, cm] : r.per_class)
      per_class[cls] = {{"gt", cm.gt},
                        {"tp", cm.tp},
                        {"fp", cm.fp},
                        {"precision", cm.precision ? json(*cm.precision) : json(nullptr)}};
    rows.push_back({{"iou", r.iou},
                    {"tp", r.tp},
                    {"fp", r.fp},
                    {"fn", r.fn},
                    {"precision", r.precision},
                    {"recall", r.recall},
                    {"f1", r.f1},
                    {"mP", r.mean_precision},
                    {"per_class", per_class}});
  }
  return {{"mask_mode", to_string(report.mask_mode)}, {"thresholds", rows}};
}

}  // namespace s3t
