#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sigma/autograd/nn.hpp"
#include "sigma/backbone/backbone.hpp"
#include "sigma/ground/instruction.hpp"
#include "sigma/image/image.hpp"

namespace sigma::ground {

inline constexpr double kEpsilonGlobal = 0.001;

struct AttentionMap {
  RealMap values;           // in [0, 1]
  bool degenerate = false;  // uniform kEpsilonGlobal
};

AttentionMap uniform_attention(std::size_t width, std::size_t height);

struct GroundedInstance {
  RealMap mask;  // soft, in [0, 1]
  double score = 0.0;
};

struct GrounderResult {
  std::vector<GroundedInstance> instances;
};

// Open-vocabulary segmenter: (image, text) -> instance masks.
class ConceptGrounder {
 public:
  virtual ~ConceptGrounder() = default;
  // Throws GrounderUnavailable when the backend cannot be reached.
  virtual GrounderResult ground(const RgbImage& image, const std::string& phrase) const = 0;
  // Stable identifier used in cache keys.
  virtual std::string identity() const = 0;
};

// Finds nothing; every concept degenerates to the uniform map.
class NullGrounder final : public ConceptGrounder {
 public:
  GrounderResult ground(const RgbImage&, const std::string&) const override { return {}; }
  std::string identity() const override { return "null"; }
};

// Heuristic grounder: for each basic colour word in the phrase, returns the
// pixels whose RGB lies within `tolerance` (max-norm) of that colour.
class ColorGrounder final : public ConceptGrounder {
 public:
  explicit ColorGrounder(int tolerance = 60) : tolerance_(tolerance) {}
  GrounderResult ground(const RgbImage& image, const std::string& phrase) const override;
  std::string identity() const override;

 private:
  int tolerance_;
};

// Remote grounder. Request: {"concept", "image_png_base64"}; reply:
// {"instances": [{"width", "height", "mask": [floats row-major], "score"}]}.
class HttpGrounder final : public ConceptGrounder {
 public:
  HttpGrounder(std::string endpoint, int timeout_seconds = 120);
  GrounderResult ground(const RgbImage& image, const std::string& phrase) const override;
  std::string identity() const override { return "http|" + endpoint_; }

 private:
  std::string endpoint_;
  int timeout_seconds_;
};

// Memoises another grounder on disk, keyed by SHA-256 of (identity, phrase,
// image size, image bytes). Safe for concurrent use; writes are atomic.
class CachedGrounder final : public ConceptGrounder {
 public:
  CachedGrounder(std::shared_ptr<const ConceptGrounder> inner, std::filesystem::path directory);
  GrounderResult ground(const RgbImage& image, const std::string& phrase) const override;
  std::string identity() const override { return inner_->identity(); }
  std::string cache_key(const RgbImage& image, const std::string& phrase) const;

 private:
  std::shared_ptr<const ConceptGrounder> inner_;
  std::filesystem::path directory_;
};

// Empty concept or no instances -> uniform kEpsilonGlobal map (degenerate).
// Otherwise the elementwise max over instances, bilinearly resized to
// side x side and clamped to [0, 1].
AttentionMap ground_concept(const RgbImage& image, const std::optional<std::string>& phrase,
                            const ConceptGrounder& grounder, std::size_t side);

// add -> A_e, remove -> A_o, replace / attribute_change -> A_o * A_e,
// global -> uniform kEpsilonGlobal.
RealMap fuse_action(const AttentionMap& a_o, const AttentionMap& a_e, Action op);

struct InstructionParams {
  nn::Linear lift;  // 1 -> C'
};

// Registers "ground.lift".
InstructionParams make_instruction_params(nn::ParamStore& store, std::size_t evidence_channels,
                                          Rng& rng);

// Area mean of the intent map over each patch cell, as an N x 1 column in
// grid raster order.
Tensor pool_intent(const RealMap& intent, const backbone::PatchGrid& grid);

// relu(lift(pool_intent(intent))): E_i^(0), N x C'.
ag::Var embed_intent(const RealMap& intent, const backbone::PatchGrid& grid,
                     const InstructionParams& params);

}  // namespace sigma::ground
