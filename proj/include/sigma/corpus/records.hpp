#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "sigma/image/image.hpp"

namespace sigma {

// One (original, edited, instruction[, mask]) sample.
struct EditRecord {
  std::string id;
  std::filesystem::path original_path;
  std::filesystem::path edited_path;
  std::string instruction;
  std::optional<std::filesystem::path> gt_mask_path;
  std::optional<std::string> op_category;
  std::string source_corpus;
};

enum class PerturbKind { none, jpeg, awgn, gaussian_blur };

// Post-processing applied to an edited image. Only the field that belongs
// to `kind` is read.
struct PerturbSpec {
  PerturbKind kind = PerturbKind::none;
  int jpeg_quality = 90;        // [60, 100]
  double awgn_variance = 0.0;   // intensity units^2 on the 0-255 scale
  int blur_kernel = 1;          // odd, >= 1
  std::uint64_t seed = 0;

  static PerturbSpec none() { return {}; }
  static PerturbSpec jpeg(int quality) { return {PerturbKind::jpeg, quality, 0.0, 1, 0}; }
  static PerturbSpec awgn(double variance, std::uint64_t seed) {
    return {PerturbKind::awgn, 90, variance, 1, seed};
  }
  static PerturbSpec blur(int kernel) { return {PerturbKind::gaussian_blur, 90, 0.0, kernel, 0}; }

  // Throws InvalidSpec.
  void validate() const;
  // The parameter consumed by this kind, for reports (0 for none).
  double parameter() const;
};

std::string to_string(PerturbKind kind);
PerturbKind perturb_kind_from_string(const std::string& s);

// Dense probability plus its strict binarization.
struct MaskResult {
  RealMap prob;
  ByteMap binary;  // 1 iff prob > threshold
  std::string annotator;
  double threshold = 0.5;

  static MaskResult from_prob(RealMap prob, double threshold, std::string annotator);
};

}  // namespace sigma
