#include <algorithm>
#include <cmath>

#include "sigma/core/errors.hpp"
#include "sigma/core/rng.hpp"
#include "sigma/corpus/corpus_io.hpp"
#include "sigma/image/resize.hpp"

namespace sigma::corpus {

ResizedPair resize_pair(const RgbImage& original, const RgbImage& edited,
                        const std::optional<ByteMap>& mask, std::size_t side) {
  if (!original.same_size(edited)) {
    throw ImageDimensionMismatch("original " + std::to_string(original.width()) + "x" +
                                 std::to_string(original.height()) + " vs edited " +
                                 std::to_string(edited.width()) + "x" +
                                 std::to_string(edited.height()));
  }
  if (mask && (mask->width() != original.width() || mask->height() != original.height()))
    throw ImageDimensionMismatch("mask size differs from images");
  ResizedPair out{resize_bilinear(original, side, side), resize_bilinear(edited, side, side),
                  std::nullopt};
  if (mask) out.mask = resize_nearest(*mask, side, side);
  return out;
}

ResizedPair resize_pair(const EditRecord& record, std::size_t side) {
  const RgbImage original = codec::load_image(record.original_path);
  const RgbImage edited = codec::load_image(record.edited_path);
  std::optional<ByteMap> mask;
  if (record.gt_mask_path) mask = load_mask(*record.gt_mask_path);
  try {
    return resize_pair(original, edited, mask, side);
  } catch (const ImageDimensionMismatch& e) {
    throw ImageDimensionMismatch(record.id + ": " + e.what());
  }
}

AugmentDecision sample_augment(std::size_t width, std::size_t height, std::uint64_t seed) {
  if (width == 0 || height == 0) throw InvalidSpec("cannot augment an empty image");
  Rng rng(seed);
  AugmentDecision d;
  d.flip = rng.bernoulli(0.5);
  const double area = static_cast<double>(width) * static_cast<double>(height);
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  std::size_t cw = width, ch = height;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(0.8, 1.0);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (w >= 1 && h >= 1 && w <= width && h <= height) {
      cw = w;
      ch = h;
      break;
    }
  }
  d.crop.width = cw;
  d.crop.height = ch;
  d.crop.x = rng.below(width - cw + 1);
  d.crop.y = rng.below(height - ch + 1);
  return d;
}

namespace {

void check_window(std::size_t width, std::size_t height, const AugmentDecision& d) {
  const CropWindow& c = d.crop;
  if (c.width == 0 || c.height == 0 || c.x + c.width > width || c.y + c.height > height)
    throw InvalidSpec("crop window outside the image");
}

std::size_t source_column(std::size_t width, const AugmentDecision& d, std::size_t x) {
  const std::size_t col = d.crop.x + x;
  return d.flip ? width - 1 - col : col;
}

}  // namespace

RgbImage flip_and_crop(const RgbImage& img, const AugmentDecision& d) {
  check_window(img.width(), img.height(), d);
  RgbImage out(d.crop.width, d.crop.height);
  for (std::size_t y = 0; y < d.crop.height; ++y)
    for (std::size_t x = 0; x < d.crop.width; ++x) {
      const std::size_t sx = source_column(img.width(), d, x);
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, d.crop.y + y, c);
    }
  return out;
}

ByteMap flip_and_crop(const ByteMap& mask, const AugmentDecision& d) {
  check_window(mask.width(), mask.height(), d);
  ByteMap out(d.crop.width, d.crop.height);
  for (std::size_t y = 0; y < d.crop.height; ++y)
    for (std::size_t x = 0; x < d.crop.width; ++x)
      out.at(x, y) = mask.at(source_column(mask.width(), d, x), d.crop.y + y);
  return out;
}

AugmentedTriple apply_augment(const RgbImage& original, const RgbImage& edited,
                              const ByteMap& mask, const AugmentDecision& decision,
                              std::size_t side, const AugmentObserver& observer) {
  if (!original.same_size(edited) || mask.width() != original.width() ||
      mask.height() != original.height())
    throw ImageDimensionMismatch("augment inputs differ in size");
  AugmentedTriple out;
  out.decision = decision;
  if (observer) observer(AugmentStream::original, decision);
  out.original = resize_bilinear(flip_and_crop(original, decision), side, side);
  if (observer) observer(AugmentStream::edited, decision);
  out.edited = resize_bilinear(flip_and_crop(edited, decision), side, side);
  if (observer) observer(AugmentStream::mask, decision);
  out.mask = resize_nearest(flip_and_crop(mask, decision), side, side);
  return out;
}

AugmentedTriple synchronized_augment(const RgbImage& original, const RgbImage& edited,
                                     const ByteMap& mask, std::uint64_t seed, std::size_t side,
                                     const AugmentObserver& observer) {
  const AugmentDecision d = sample_augment(original.width(), original.height(), seed);
  return apply_augment(original, edited, mask, d, side, observer);
}

}  // namespace sigma::corpus
