#pragma once

#include "veritas/core.hpp"

namespace veritas {

/// Intersection over union of two closed rectangles; 0 when the union is empty.
double box_iou(const BoundingBox& a, const BoundingBox& b);

/// Intersection over union of two closed intervals; 0 when the union is empty.
double span_iou(const TimeSpan& a, const TimeSpan& b);

/// Mean per-second IoU over the reference seconds. A reference second with no
/// prediction scores 0; predicted seconds absent from `gt` are ignored.
/// Throws ConfigError("no reference frames") when `gt` is empty.
double mean_box_iou(const SecondIndexedBoxes& pred, const SecondIndexedBoxes& gt);

}  // namespace veritas
