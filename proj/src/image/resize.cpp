#include "sigma/image/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sigma {
namespace {

struct AxisTap {
  std::size_t i0, i1;
  double w1;
};

std::vector<AxisTap> axis_taps(std::size_t in, std::size_t out) {
  std::vector<AxisTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

RgbImage resize_bilinear(const RgbImage& img, std::size_t width, std::size_t height) {
  if (img.width() == width && img.height() == height) return img;
  RgbImage out(width, height);
  const auto xs = axis_taps(img.width(), width);
  const auto ys = axis_taps(img.height(), height);
  for (std::size_t y = 0; y < height; ++y) {
    const AxisTap& ty = ys[y];
    for (std::size_t x = 0; x < width; ++x) {
      const AxisTap& tx = xs[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - tx.w1) * img.at(tx.i0, ty.i0, c) + tx.w1 * img.at(tx.i1, ty.i0, c);
        const double bot = (1.0 - tx.w1) * img.at(tx.i0, ty.i1, c) + tx.w1 * img.at(tx.i1, ty.i1, c);
        const double v = (1.0 - ty.w1) * top + ty.w1 * bot;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

RealMap resize_bilinear(const RealMap& map, std::size_t width, std::size_t height) {
  if (map.width() == width && map.height() == height) return map;
  RealMap out(width, height);
  const auto xs = axis_taps(map.width(), width);
  const auto ys = axis_taps(map.height(), height);
  for (std::size_t y = 0; y < height; ++y) {
    const AxisTap& ty = ys[y];
    for (std::size_t x = 0; x < width; ++x) {
      const AxisTap& tx = xs[x];
      const double top = (1.0 - tx.w1) * map.at(tx.i0, ty.i0) + tx.w1 * map.at(tx.i1, ty.i0);
      const double bot = (1.0 - tx.w1) * map.at(tx.i0, ty.i1) + tx.w1 * map.at(tx.i1, ty.i1);
      out.at(x, y) = (1.0 - ty.w1) * top + ty.w1 * bot;
    }
  }
  return out;
}

}  // namespace sigma
