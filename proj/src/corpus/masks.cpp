#include "sigma/core/errors.hpp"
#include "sigma/corpus/corpus_io.hpp"

namespace sigma::corpus {

codec::Bytes encode_mask(const ByteMap& binary) {
  ByteMap gray(binary.width(), binary.height());
  for (std::size_t i = 0; i < binary.size(); ++i) {
    if (binary[i] > 1) {
      throw NonBinaryInput("mask value " + std::to_string(binary[i]) + " at index " +
                           std::to_string(i));
    }
    gray[i] = binary[i] ? 255 : 0;
  }
  return codec::encode_png_gray(gray);
}

ByteMap decode_mask(std::span<const std::uint8_t> png) {
  ByteMap gray = codec::decode_png_gray(png);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    if (gray[i] != 0 && gray[i] != 255) {
      throw NonBinaryInput("mask PNG value " + std::to_string(gray[i]) + " is not 0 or 255");
    }
    gray[i] = gray[i] ? 1 : 0;
  }
  return gray;
}

ByteMap load_mask(const std::filesystem::path& path) {
  const auto bytes = codec::read_file(path);
  try {
    return decode_mask(bytes);
  } catch (const DecodeFailure& e) {
    throw DecodeFailure(path.string() + ": " + e.what());
  }
}

void save_mask(const std::filesystem::path& path, const ByteMap& binary) {
  codec::write_file_atomic(path, encode_mask(binary));
}

}  // namespace sigma::corpus
