#include "sigma/evaluation/metrics.hpp"

#include "sigma/core/errors.hpp"

namespace sigma::evaluation {

PixelMetrics f1_iou(const ByteMap& pred, const ByteMap& gt) {
  if (!pred.same_size(gt))
    throw ShapeMismatch("prediction " + std::to_string(pred.width()) + "x" + std::to_string(pred.height()) +
                        " vs ground truth " + std::to_string(gt.width()) + "x" + std::to_string(gt.height()));
  PixelMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) ++m.tp;
    else if (p) ++m.fp;
    else if (g) ++m.fn;
    else ++m.tn;
  }
  const std::size_t denom = m.tp + m.fp + m.fn;
  if (denom == 0) return m;
  m.f1 = 2.0 * static_cast<double>(m.tp) / static_cast<double>(2 * m.tp + m.fp + m.fn);
  m.iou = static_cast<double>(m.tp) / static_cast<double>(denom);
  return m;
}

}  // namespace sigma::evaluation
