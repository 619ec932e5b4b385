#pragma once

#include "sigma/image/image.hpp"

namespace sigma {

// Bilinear with half-pixel centers and edge clamping; results rounded half
// away from zero.
RgbImage resize_bilinear(const RgbImage& img, std::size_t width, std::size_t height);
RealMap resize_bilinear(const RealMap& map, std::size_t width, std::size_t height);

// src = floor(dst * in / out)
template <class T>
Plane<T> resize_nearest(const Plane<T>& p, std::size_t width, std::size_t height) {
  Plane<T> out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * p.height() / height;
    for (std::size_t x = 0; x < width; ++x) out.at(x, y) = p.at(x * p.width() / width, sy);
  }
  return out;
}

}  // namespace sigma
