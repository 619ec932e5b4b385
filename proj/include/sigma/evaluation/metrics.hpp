#pragma once

#include <cstddef>

#include "sigma/image/image.hpp"

namespace sigma::evaluation {

// Confusion counts of a {0,1} prediction against a {0,1} ground truth.
// Both-empty masks score f1 = iou = 1.
struct PixelMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double f1 = 1.0;
  double iou = 1.0;
};

// Nonzero counts as positive. Throws ShapeMismatch.
PixelMetrics f1_iou(const ByteMap& pred, const ByteMap& gt);

}  // namespace sigma::evaluation
