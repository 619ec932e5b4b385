#include "sigma/image/image.hpp"

namespace sigma {

RgbImage flip_horizontal(const RgbImage& img) {
  RgbImage out(img.width(), img.height());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(img.width() - 1 - x, y, c);
  return out;
}

}  // namespace sigma
