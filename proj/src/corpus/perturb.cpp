#include <algorithm>
#include <cmath>
#include <vector>

#include "sigma/core/errors.hpp"
#include "sigma/core/rng.hpp"
#include "sigma/corpus/corpus_io.hpp"

namespace sigma::corpus {
namespace {

std::uint8_t to_byte(double v) {
  // std::round is half away from zero.
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

RgbImage add_gaussian_noise(const RgbImage& image, double variance, std::uint64_t seed) {
  if (variance == 0.0) return image;
  const double stddev = std::sqrt(variance);
  Rng rng(seed);
  RgbImage out(image.width(), image.height());
  for (std::size_t i = 0; i < image.byte_size(); ++i) {
    out.data()[i] = to_byte(static_cast<double>(image.data()[i]) + stddev * rng.normal());
  }
  return out;
}

// Reflect-101 indexing: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
std::ptrdiff_t reflect101(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

RgbImage gaussian_blur(const RgbImage& image, int kernel) {
  if (kernel == 1) return image;
  const double sigma = blur_sigma_for_kernel(kernel);
  const int radius = kernel / 2;
  std::vector<double> weights(static_cast<std::size_t>(kernel));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    weights[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : weights) w /= total;

  const auto width = static_cast<std::ptrdiff_t>(image.width());
  const auto height = static_cast<std::ptrdiff_t>(image.height());
  std::vector<double> horizontal(image.byte_size());
  for (std::ptrdiff_t y = 0; y < height; ++y)
    for (std::ptrdiff_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const auto sx = static_cast<std::size_t>(reflect101(x + k, width));
          acc += weights[static_cast<std::size_t>(k + radius)] *
                 image.at(sx, static_cast<std::size_t>(y), c);
        }
        horizontal[(static_cast<std::size_t>(y) * image.width() + static_cast<std::size_t>(x)) * 3 + c] = acc;
      }
  RgbImage out(image.width(), image.height());
  for (std::ptrdiff_t y = 0; y < height; ++y)
    for (std::ptrdiff_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const auto sy = static_cast<std::size_t>(reflect101(y + k, height));
          acc += weights[static_cast<std::size_t>(k + radius)] *
                 horizontal[(sy * image.width() + static_cast<std::size_t>(x)) * 3 + c];
        }
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = to_byte(acc);
      }
  return out;
}

RgbImage jpeg_roundtrip(const RgbImage& image, int quality) {
  return codec::decode_image(codec::encode_jpeg(image, quality));
}

}  // namespace

double blur_sigma_for_kernel(int kernel) { return 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8; }

RgbImage apply_perturbation(const RgbImage& image, const PerturbSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case PerturbKind::none: return image;
    case PerturbKind::jpeg: return jpeg_roundtrip(image, spec.jpeg_quality);
    case PerturbKind::awgn: return add_gaussian_noise(image, spec.awgn_variance, spec.seed);
    case PerturbKind::gaussian_blur: return gaussian_blur(image, spec.blur_kernel);
  }
  return image;
}

}  // namespace sigma::corpus
