#include "sigma/backbone/backbone.hpp"

#include <cmath>

#include "json.hpp"
#include "sigma/core/digest.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/core/http.hpp"
#include "sigma/core/rng.hpp"
#include "sigma/image/codec.hpp"

namespace sigma::backbone {

PatchGrid patch_grid(std::size_t side, std::size_t patch) {
  if (patch == 0 || side == 0 || side % patch != 0)
    throw IndivisibleSide("side " + std::to_string(side) + " is not a multiple of patch " +
                          std::to_string(patch));
  return {side / patch, side / patch};
}

void MultiLevelFeatures::validate() const {
  for (const Tensor& level : levels) {
    if (level.rows() != grid.tokens() || level.cols() != levels[0].cols())
      throw ShapeMismatch("feature level " + level.shape_string() + " disagrees with grid " +
                          std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
  }
}

void BackboneSpec::validate(std::size_t side) const {
  if (!(layer_indices[0] < layer_indices[1] && layer_indices[1] < layer_indices[2]))
    throw InvalidSpec("layer indices must be strictly increasing");
  if (layer_indices[0] < 0) throw InvalidSpec("layer indices must be non-negative");
  if (embed_dim == 0) throw InvalidSpec("embed_dim must be positive");
  if (patch_size == 0 || side % patch_size != 0)
    throw InvalidSpec("patch size " + std::to_string(patch_size) + " does not divide side " +
                      std::to_string(side));
}

std::string to_string(ProviderKind kind) {
  return kind == ProviderKind::synthetic ? "synthetic" : "external_vit";
}

ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "synthetic") return ProviderKind::synthetic;
  if (s == "external_vit") return ProviderKind::external_vit;
  throw ConfigInvalid("unknown backbone provider: " + s);
}

SyntheticBackbone::SyntheticBackbone(BackboneSpec spec) : spec_(std::move(spec)) {
  const std::size_t d = spec_.embed_dim;
  for (std::size_t l = 0; l < kLevels; ++l) {
    Rng rng(derive_seed(spec_.seed, 0xB0 + static_cast<std::uint64_t>(spec_.layer_indices[l])));
    weights_[l] = Tensor(6, d);
    for (std::size_t i = 0; i < weights_[l].size(); ++i) weights_[l][i] = rng.normal() / std::sqrt(3.0);
    offsets_[l] = Tensor(1, d);
    for (std::size_t i = 0; i < d; ++i) offsets_[l][i] = rng.uniform(-0.5, 0.5);
  }
}

Tensor SyntheticBackbone::patch_statistics(const RgbImage& image) const {
  if (image.width() != image.height()) throw ShapeMismatch("backbone expects a square image");
  const PatchGrid grid = patch_grid(image.width(), spec_.patch_size);
  const std::size_t p = spec_.patch_size;
  const double count = static_cast<double>(p * p);
  Tensor stats(grid.tokens(), 6);
  for (std::size_t gy = 0; gy < grid.rows; ++gy)
    for (std::size_t gx = 0; gx < grid.cols; ++gx) {
      double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
      for (std::size_t y = gy * p; y < (gy + 1) * p; ++y)
        for (std::size_t x = gx * p; x < (gx + 1) * p; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            const double v = (image.at(x, y, c) / 255.0 - kPixelMean[c]) / kPixelStd[c];
            sum[c] += v;
            sq[c] += v * v;
          }
      const std::size_t t = gy * grid.cols + gx;
      for (std::size_t c = 0; c < 3; ++c) {
        const double mean = sum[c] / count;
        stats(t, c) = mean;
        stats(t, 3 + c) = std::sqrt(std::max(0.0, sq[c] / count - mean * mean));
      }
    }
  return stats;
}

MultiLevelFeatures SyntheticBackbone::extract(const RgbImage& image) const {
  const Tensor stats = patch_statistics(image);
  MultiLevelFeatures out;
  out.grid = patch_grid(image.width(), spec_.patch_size);
  for (std::size_t l = 0; l < kLevels; ++l) {
    Tensor f = matmul(stats, weights_[l]);
    for (std::size_t t = 0; t < f.rows(); ++t)
      for (std::size_t j = 0; j < f.cols(); ++j) f(t, j) = std::tanh(f(t, j) + offsets_[l][j]);
    out.levels[l] = std::move(f);
  }
  return out;
}

std::string SyntheticBackbone::checksum() const {
  Sha256 h;
  h.update("synthetic");
  h.update(&spec_.patch_size, sizeof spec_.patch_size);
  for (std::size_t l = 0; l < kLevels; ++l) {
    h.update(weights_[l].data(), weights_[l].size() * sizeof(double));
    h.update(offsets_[l].data(), offsets_[l].size() * sizeof(double));
  }
  return h.hex_digest();
}

ExternalBackbone::ExternalBackbone(BackboneSpec spec) : spec_(std::move(spec)) {
  if (spec_.endpoint.empty()) throw ProviderUnavailable("external backbone endpoint not configured");
  http::parse_endpoint(spec_.endpoint);
}

MultiLevelFeatures ExternalBackbone::extract(const RgbImage& image) const {
  nlohmann::json request{{"model", spec_.model},
                         {"layers", spec_.layer_indices},
                         {"patch_size", spec_.patch_size},
                         {"image_png_base64", base64_encode(codec::encode_png(image))}};
  http::Options options;
  options.timeout_seconds = spec_.timeout_seconds;
  const nlohmann::json reply = http::post_json(http::parse_endpoint(spec_.endpoint), request, options);
  MultiLevelFeatures out;
  try {
    out.grid = {reply.at("grid").at(0).get<std::size_t>(), reply.at("grid").at(1).get<std::size_t>()};
    const auto dim = reply.at("dim").get<std::size_t>();
    const auto& levels = reply.at("levels");
    if (levels.size() != kLevels) throw DecodeFailure("backbone reply must carry three levels");
    for (std::size_t l = 0; l < kLevels; ++l) {
      const auto values = levels.at(l).get<std::vector<double>>();
      if (values.size() != out.grid.tokens() * dim) throw DecodeFailure("backbone level size mismatch");
      out.levels[l] = Tensor(out.grid.tokens(), dim, values);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeFailure(std::string("malformed backbone reply: ") + e.what());
  }
  if (out.grid != patch_grid(image.width(), spec_.patch_size) || out.dim() != spec_.embed_dim)
    throw ShapeMismatch("backbone reply shape disagrees with the configured spec");
  for (const Tensor& level : out.levels)
    if (!level.all_finite()) throw DecodeFailure("backbone reply contains non-finite values");
  return out;
}

std::string ExternalBackbone::checksum() const {
  return sha256_hex("external_vit|" + spec_.endpoint + "|" + spec_.model);
}

std::shared_ptr<const FeatureProvider> make_provider(const BackboneSpec& spec) {
  if (spec.provider == ProviderKind::synthetic) return std::make_shared<SyntheticBackbone>(spec);
  return std::make_shared<ExternalBackbone>(spec);
}

MultiLevelFeatures extract_features(const RgbImage& image, const FeatureProvider& provider) {
  if (image.width() != image.height()) throw ShapeMismatch("backbone expects a square image");
  provider.spec().validate(image.width());
  MultiLevelFeatures f = provider.extract(image);
  f.validate();
  return f;
}

}  // namespace sigma::backbone
