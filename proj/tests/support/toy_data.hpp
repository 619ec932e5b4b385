#pragma once

// Synthetic edit pairs and small model configurations for desk-scale tests.

#include <cstdint>
#include <string>
#include <vector>

#include "sigma/image/image.hpp"
#include "sigma/model/config.hpp"

namespace sigma::testing {

// side 56, 7-pixel patches (8x8 grid), D=48, C=C'=32, 4 heads, 8 decoder
// channels, two DRBs, K=2.
ModelConfig toy_config(std::uint64_t seed = 0);
// side 14, 7-pixel patches (2x2 grid), D=6, C=C'=8, 2 heads, 4 decoder channels.
ModelConfig tiny_config(std::uint64_t seed = 0);

struct Rect {
  std::size_t x = 0, y = 0, w = 0, h = 0;
  bool contains(std::size_t px, std::size_t py) const { return px >= x && px < x + w && py >= y && py < y + h; }
};

struct ToyPair {
  RgbImage original;
  RgbImage edited;
  ByteMap mask;
  std::string instruction;
};

// Smooth random background: per-patch base colour plus mild pixel texture.
RgbImage toy_background(std::size_t side, std::size_t patch, std::uint64_t seed);
ByteMap rect_mask(std::size_t side, const Rect& r);
// Palette fill with uniform per-byte texture in [-amplitude, amplitude].
void paint(RgbImage& img, const Rect& r, const std::uint8_t rgb[3], std::uint64_t texture_seed,
           int amplitude = 8);

// One patch-aligned rectangle whose palette colour changes; the instruction
// names both colours ("turn the green square into a red square").
ToyPair rectangle_edit_pair(std::size_t side, std::size_t patch, std::uint64_t seed);
// One patch-aligned palette square whose texture amplitude jumps from +-8 to
// +-`amplitude` while its colour stays ("make the green square rough").
ToyPair texture_edit_pair(std::size_t side, std::size_t patch, std::uint64_t seed, int amplitude = 40);
// Identical images, empty mask, empty instruction.
ToyPair zero_edit_pair(std::size_t side, std::size_t patch, std::uint64_t seed);
// Two 2x2-patch squares both change to different palette colours; only the
// one named by the instruction counts as the edit.
ToyPair ambiguous_pair(std::size_t side, std::size_t patch, std::uint64_t seed);

}  // namespace sigma::testing
