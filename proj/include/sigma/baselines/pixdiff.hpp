#pragma once

// Non-learned annotators that threshold the per-pixel colour difference.

#include <array>
#include <optional>
#include <string>

#include "sigma/corpus/annotator.hpp"
#include "sigma/image/image.hpp"

namespace sigma::baselines {

inline constexpr int kMorphTau = 25;
inline constexpr std::size_t kMorphKernel = 5;

// Per pixel, max over channels of |original - edited|. Throws ShapeMismatch.
ByteMap diff_map(const RgbImage& original, const RgbImage& edited);

// 1 where value > tau (strict).
ByteMap threshold_map(const ByteMap& values, int tau);

// Square structuring element of odd side `k`; pixels outside the image count
// as 0 for both operations.
ByteMap erode(const ByteMap& mask, std::size_t k);
ByteMap dilate(const ByteMap& mask, std::size_t k);
// Opening (erode, dilate) followed by closing (dilate, erode).
ByteMap open_close(const ByteMap& mask, std::size_t k);

using Histogram = std::array<std::size_t, 256>;
Histogram histogram(const ByteMap& values);
// w0 * w1 * (mu0 - mu1)^2 for the split {<= t} | {> t}; 0 when a class is empty.
double between_class_variance(const Histogram& h, int t);
// Maximiser over t in [0, 255], smallest on ties; nullopt when every split
// has zero variance (single-valued histogram).
std::optional<int> otsu_threshold(const Histogram& h);

MaskResult pixdiff_fixed(const RgbImage& original, const RgbImage& edited, int tau);
MaskResult pixdiff_morph(const RgbImage& original, const RgbImage& edited);
MaskResult pixdiff_otsu(const RgbImage& original, const RgbImage& edited);

enum class PixDiffMode { fixed, fixed_morph, otsu };

std::string to_string(PixDiffMode mode);
// Accepts fixed, morph (or fixed_morph) and otsu; throws ConfigInvalid.
PixDiffMode pixdiff_mode_from_string(const std::string& s);

struct PixDiffSpec {
  PixDiffMode mode = PixDiffMode::fixed;
  int tau = 10;  // fixed mode only
  // Throws InvalidSpec.
  void validate() const;
};

class PixDiffAnnotator final : public Annotator {
 public:
  explicit PixDiffAnnotator(PixDiffSpec spec);
  MaskResult annotate(const RgbImage& original, const RgbImage& edited,
                      const std::string& instruction) const override;
  // pixdiff_fixed_tau{N}, pixdiff_morph or pixdiff_otsu.
  std::string name() const override;

 private:
  PixDiffSpec spec_;
};

}  // namespace sigma::baselines
