#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>

#include "sigma/core/tensor.hpp"
#include "sigma/image/image.hpp"

namespace sigma::backbone {

inline constexpr std::size_t kLevels = 3;

struct PatchGrid {
  std::size_t rows = 0, cols = 0;
  std::size_t tokens() const noexcept { return rows * cols; }
  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

// Throws IndivisibleSide unless patch divides side.
PatchGrid patch_grid(std::size_t side, std::size_t patch);

// Patch tokens of three encoder depths; token t sits at grid (t / cols, t % cols).
struct MultiLevelFeatures {
  std::array<Tensor, kLevels> levels;  // each N x D
  PatchGrid grid;

  std::size_t tokens() const noexcept { return grid.tokens(); }
  std::size_t dim() const noexcept { return levels[0].cols(); }
  // Throws ShapeMismatch when levels disagree with the grid or each other.
  void validate() const;
};

enum class ProviderKind { synthetic, external_vit };

struct BackboneSpec {
  ProviderKind provider = ProviderKind::synthetic;
  std::array<int, kLevels> layer_indices{2, 5, 11};
  std::size_t patch_size = 14;
  std::size_t embed_dim = 768;
  std::uint64_t seed = 0;        // synthetic projection seed
  std::string endpoint;          // external provider URL
  std::string model;             // external provider model identifier
  int timeout_seconds = 120;

  // Throws InvalidSpec; `side` is the working image side.
  void validate(std::size_t side) const;
};

std::string to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(const std::string& s);

// Per-channel input normalisation applied before feature extraction.
inline constexpr std::array<double, 3> kPixelMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kPixelStd{0.229, 0.224, 0.225};

// Frozen encoder. Implementations are immutable after construction and safe
// to call concurrently.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual MultiLevelFeatures extract(const RgbImage& image) const = 0;
  // Digest of everything that determines the features.
  virtual std::string checksum() const = 0;
  virtual const BackboneSpec& spec() const = 0;
};

// Per patch: normalised RGB mean and std (6 numbers) s, then
// f_l = tanh(W_l s + b_l) with seeded W_l (D x 6) and per-level offsets b_l.
// Features depend on patch content only, never on grid position.
class SyntheticBackbone final : public FeatureProvider {
 public:
  explicit SyntheticBackbone(BackboneSpec spec);
  MultiLevelFeatures extract(const RgbImage& image) const override;
  std::string checksum() const override;
  const BackboneSpec& spec() const override { return spec_; }

  // The 6 normalised statistics of every patch, N x 6.
  Tensor patch_statistics(const RgbImage& image) const;

 private:
  BackboneSpec spec_;
  std::array<Tensor, kLevels> weights_;  // 6 x D
  std::array<Tensor, kLevels> offsets_;  // 1 x D
};

// Remote ViT served over HTTP. Request: {"model", "layers", "patch_size",
// "image_png_base64"}; reply: {"grid": [rows, cols], "dim": D,
// "levels": [[N*D floats] x 3]} in row-major token order.
class ExternalBackbone final : public FeatureProvider {
 public:
  explicit ExternalBackbone(BackboneSpec spec);
  MultiLevelFeatures extract(const RgbImage& image) const override;
  std::string checksum() const override;
  const BackboneSpec& spec() const override { return spec_; }

 private:
  BackboneSpec spec_;
};

std::shared_ptr<const FeatureProvider> make_provider(const BackboneSpec& spec);

// Convenience: validates the BackboneSpec against the image side, then extracts.
MultiLevelFeatures extract_features(const RgbImage& image, const FeatureProvider& provider);

}  // namespace sigma::backbone
