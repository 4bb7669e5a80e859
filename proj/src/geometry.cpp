#include "veritas/geometry.hpp"

#include <algorithm>

namespace veritas {

double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double span_iou(const TimeSpan& a, const TimeSpan& b) {
  const double inter = std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
  // Union of two intervals that may be disjoint: total length minus overlap.
  const double uni = a.length() + b.length() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double mean_box_iou(const SecondIndexedBoxes& pred, const SecondIndexedBoxes& gt) {
  if (gt.empty()) throw ConfigError("no reference frames");
  double sum = 0.0;
  for (const auto& [second, ref] : gt) {
    auto it = pred.find(second);
    if (it != pred.end()) sum += box_iou(it->second, ref);
  }
  return sum / static_cast<double>(gt.size());
}

}  // namespace veritas
