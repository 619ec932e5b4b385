#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sigma/image/image.hpp"

namespace sigma::codec {

using Bytes = std::vector<std::uint8_t>;

// PNG or JPEG, detected from the signature. Gray inputs are replicated to
// three channels; alpha is dropped. Throws UnsupportedImageFormat or
// DecodeFailure.
RgbImage decode_image(std::span<const std::uint8_t> bytes);
RgbImage load_image(const std::filesystem::path& path);

Bytes encode_png(const RgbImage& img);
Bytes encode_png_gray(const ByteMap& gray);
// 8-bit single-channel PNG to raw bytes; multi-channel input is rejected.
ByteMap decode_png_gray(std::span<const std::uint8_t> bytes);

// Baseline JPEG with 4:2:0 chroma subsampling.
Bytes encode_jpeg(const RgbImage& img, int quality);

Bytes read_file(const std::filesystem::path& path);
// Write to a sibling temp file, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace sigma::codec

namespace sigma::codec {

struct Dimensions {
  std::size_t width = 0;
  std::size_t height = 0;
  friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

// Reads only the header.
Dimensions image_dimensions(std::span<const std::uint8_t> bytes);

}  // namespace sigma::codec
