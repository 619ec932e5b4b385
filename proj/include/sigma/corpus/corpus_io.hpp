#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sigma/corpus/records.hpp"
#include "sigma/image/codec.hpp"

namespace sigma::corpus {

struct ManifestOptions {
  // Decode image headers and require original/edited (and mask) sizes to
  // agree; raises ImageDimensionMismatch(id).
  bool verify_images = false;
};

// Line-delimited JSON, one EditRecord per line, in file order. Relative paths
// resolve against the manifest's directory.
std::vector<EditRecord> load_manifest(const std::filesystem::path& path,
                                      const ManifestOptions& options = {});
// Parses one manifest line; `line` is 1-based for error reporting.
EditRecord parse_record(const std::string& json_line, std::size_t line,
                        const std::filesystem::path& base_dir = {});
std::string record_to_json(const EditRecord& record);

// {0,1} map <-> 8-bit gray PNG holding {0,255}.
codec::Bytes encode_mask(const ByteMap& binary);
ByteMap decode_mask(std::span<const std::uint8_t> png);
ByteMap load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const ByteMap& binary);

RgbImage apply_perturbation(const RgbImage& image, const PerturbSpec& spec);
// sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8
double blur_sigma_for_kernel(int kernel);

struct ResizedPair {
  RgbImage original;
  RgbImage edited;
  std::optional<ByteMap> mask;
};

// Bilinear for images, nearest for the mask; all outputs side x side.
ResizedPair resize_pair(const EditRecord& record, std::size_t side = 518);
ResizedPair resize_pair(const RgbImage& original, const RgbImage& edited,
                        const std::optional<ByteMap>& mask, std::size_t side);

struct CropWindow {
  std::size_t x = 0, y = 0, width = 0, height = 0;
  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

struct AugmentDecision {
  bool flip = false;
  CropWindow crop;
  friend bool operator==(const AugmentDecision&, const AugmentDecision&) = default;
};

// Crop area fraction in [0.8, 1.0], aspect ratio in [3/4, 4/3].
AugmentDecision sample_augment(std::size_t width, std::size_t height, std::uint64_t seed);

enum class AugmentStream { original, edited, mask };
using AugmentObserver = std::function<void(AugmentStream, const AugmentDecision&)>;

struct AugmentedTriple {
  RgbImage original;
  RgbImage edited;
  ByteMap mask;
  AugmentDecision decision;
};

// Flip then crop (no resize); pixel (x, y) of the result comes from source
// column flip ? W-1-(crop.x+x) : crop.x+x, row crop.y+y.
RgbImage flip_and_crop(const RgbImage& img, const AugmentDecision& d);
ByteMap flip_and_crop(const ByteMap& mask, const AugmentDecision& d);

// Same decision on all three inputs; the crop is re-resized to `side`.
AugmentedTriple apply_augment(const RgbImage& original, const RgbImage& edited,
                              const ByteMap& mask, const AugmentDecision& decision,
                              std::size_t side, const AugmentObserver& observer = {});
AugmentedTriple synchronized_augment(const RgbImage& original, const RgbImage& edited,
                                     const ByteMap& mask, std::uint64_t seed, std::size_t side,
                                     const AugmentObserver& observer = {});

struct CorpusStats {
  // (source_corpus, op_category) -> count
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  std::map<std::string, std::size_t> by_category() const;
  std::size_t total() const;
};

inline constexpr const char* kUncategorized = "uncategorized";

CorpusStats corpus_stats(const std::vector<EditRecord>& records);
// CSV: source_corpus,op_category,count
std::string stats_csv(const CorpusStats& stats);

}  // namespace sigma::corpus
