#include "sigma/baselines/pixdiff.hpp"

#include <algorithm>
#include <vector>

#include "sigma/core/errors.hpp"
#include "sigma/simd/kernels.hpp"

namespace sigma::baselines {
namespace {

// Min (erosion) or max (dilation) over a k-wide window along rows, then
// along columns, with out-of-bounds pixels read as 0.
ByteMap square_filter(const ByteMap& mask, std::size_t k, bool take_min) {
  const std::size_t w = mask.width(), h = mask.height();
  const long r = static_cast<long>(k / 2);
  auto pass = [&](const ByteMap& in, bool horizontal) {
    ByteMap out(w, h);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        std::uint8_t acc = take_min ? 1 : 0;
        for (long d = -r; d <= r; ++d) {
          const long xx = static_cast<long>(x) + (horizontal ? d : 0);
          const long yy = static_cast<long>(y) + (horizontal ? 0 : d);
          const bool inside = xx >= 0 && yy >= 0 && xx < static_cast<long>(w) && yy < static_cast<long>(h);
          const std::uint8_t v = inside && in.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy)) ? 1 : 0;
          acc = take_min ? std::min(acc, v) : std::max(acc, v);
        }
        out.at(x, y) = acc;
      }
    return out;
  };
  return pass(pass(mask, true), false);
}

void require_odd(std::size_t k) {
  if (k == 0 || k % 2 == 0) throw InvalidSpec("structuring element side must be odd");
}

MaskResult binary_result(const ByteMap& binary, std::string name) {
  RealMap prob(binary.width(), binary.height());
  for (std::size_t i = 0; i < binary.size(); ++i) prob[i] = binary[i] ? 1.0 : 0.0;
  return MaskResult::from_prob(std::move(prob), 0.5, std::move(name));
}

// prob = diff / 255 and threshold t / 255: the strict comparison matches
// diff > t exactly because both sides share the divisor.
MaskResult scaled_result(const ByteMap& diff, int t, std::string name) {
  RealMap prob(diff.width(), diff.height());
  for (std::size_t i = 0; i < diff.size(); ++i) prob[i] = diff[i] / 255.0;
  return MaskResult::from_prob(std::move(prob), t / 255.0, std::move(name));
}

}  // namespace

ByteMap diff_map(const RgbImage& original, const RgbImage& edited) {
  if (!original.same_size(edited))
    throw ShapeMismatch("diff_map: " + std::to_string(original.width()) + "x" + std::to_string(original.height()) +
                        " vs " + std::to_string(edited.width()) + "x" + std::to_string(edited.height()));
  std::vector<std::uint8_t> channel_diff(original.byte_size());
  simd::kernels().absdiff_u8(original.data(), edited.data(), channel_diff.data(), channel_diff.size());
  ByteMap out(original.width(), original.height());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::max({channel_diff[3 * i], channel_diff[3 * i + 1], channel_diff[3 * i + 2]});
  return out;
}

ByteMap threshold_map(const ByteMap& values, int tau) {
  ByteMap out(values.width(), values.height());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] > tau ? 1 : 0;
  return out;
}

ByteMap erode(const ByteMap& mask, std::size_t k) {
  require_odd(k);
  return square_filter(mask, k, true);
}

ByteMap dilate(const ByteMap& mask, std::size_t k) {
  require_odd(k);
  return square_filter(mask, k, false);
}

ByteMap open_close(const ByteMap& mask, std::size_t k) {
  const ByteMap opened = dilate(erode(mask, k), k);
  return erode(dilate(opened, k), k);
}

Histogram histogram(const ByteMap& values) {
  Histogram h{};
  for (std::size_t i = 0; i < values.size(); ++i) ++h[values[i]];
  return h;
}

double between_class_variance(const Histogram& h, int t) {
  double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
  for (int v = 0; v < 256; ++v) {
    const double c = static_cast<double>(h[static_cast<std::size_t>(v)]);
    if (v <= t) {
      n0 += c;
      s0 += c * v;
    } else {
      n1 += c;
      s1 += c * v;
    }
  }
  if (n0 == 0 || n1 == 0) return 0.0;
  const double n = n0 + n1;
  const double d = s0 / n0 - s1 / n1;
  return (n0 / n) * (n1 / n) * d * d;
}

std::optional<int> otsu_threshold(const Histogram& h) {
  int best = -1;
  double best_var = 0.0;
  for (int t = 0; t < 256; ++t) {
    const double v = between_class_variance(h, t);
    if (v > best_var) {
      best_var = v;
      best = t;
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

MaskResult pixdiff_fixed(const RgbImage& original, const RgbImage& edited, int tau) {
  if (tau < 0) throw InvalidSpec("tau must be >= 0");
  return scaled_result(diff_map(original, edited), tau, "pixdiff_fixed_tau" + std::to_string(tau));
}

MaskResult pixdiff_morph(const RgbImage& original, const RgbImage& edited) {
  const ByteMap binary = open_close(threshold_map(diff_map(original, edited), kMorphTau), kMorphKernel);
  return binary_result(binary, "pixdiff_morph");
}

MaskResult pixdiff_otsu(const RgbImage& original, const RgbImage& edited) {
  const ByteMap diff = diff_map(original, edited);
  const std::optional<int> t = otsu_threshold(histogram(diff));
  if (!t) return binary_result(ByteMap(diff.width(), diff.height()), "pixdiff_otsu");
  return scaled_result(diff, *t, "pixdiff_otsu");
}

std::string to_string(PixDiffMode mode) {
  switch (mode) {
    case PixDiffMode::fixed: return "fixed";
    case PixDiffMode::fixed_morph: return "morph";
    case PixDiffMode::otsu: return "otsu";
  }
  return "fixed";
}

PixDiffMode pixdiff_mode_from_string(const std::string& s) {
  if (s == "fixed") return PixDiffMode::fixed;
  if (s == "morph" || s == "fixed_morph") return PixDiffMode::fixed_morph;
  if (s == "otsu") return PixDiffMode::otsu;
  throw ConfigInvalid("unknown pixdiff mode: " + s);
}

void PixDiffSpec::validate() const {
  if (tau < 0 || tau > 255) throw InvalidSpec("tau must lie in [0, 255]");
}

PixDiffAnnotator::PixDiffAnnotator(PixDiffSpec spec) : spec_(spec) { spec_.validate(); }

MaskResult PixDiffAnnotator::annotate(const RgbImage& original, const RgbImage& edited,
                                      const std::string&) const {
  switch (spec_.mode) {
    case PixDiffMode::fixed: return pixdiff_fixed(original, edited, spec_.tau);
    case PixDiffMode::fixed_morph: return pixdiff_morph(original, edited);
    case PixDiffMode::otsu: return pixdiff_otsu(original, edited);
  }
  return pixdiff_fixed(original, edited, spec_.tau);
}

std::string PixDiffAnnotator::name() const {
  if (spec_.mode == PixDiffMode::fixed) return "pixdiff_fixed_tau" + std::to_string(spec_.tau);
  return "pixdiff_" + to_string(spec_.mode);
}

}  // namespace sigma::baselines
