#pragma once

// Latent-space roundtrips that produce semantically identical references
// carrying generator-like reconstruction noise.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sigma/core/http.hpp"
#include "sigma/core/rng.hpp"
#include "sigma/image/image.hpp"

namespace sigma::training {

inline constexpr double kMaxLatentSigma = 0.08;

class VaeCodec {
 public:
  virtual ~VaeCodec() = default;
  // decode(encode(image) + eps), eps ~ N(0, sigma^2 I) drawn from `seed`.
  // Throws CodecUnavailable.
  virtual RgbImage roundtrip(const RgbImage& image, double sigma, std::uint64_t seed) const = 0;
  virtual std::string identity() const = 0;
};

// latent = pixels / 255 (one value per byte, raster order); decode scales
// back, rounds and clamps.
class IdentityCodec final : public VaeCodec {
 public:
  RgbImage roundtrip(const RgbImage& image, double sigma, std::uint64_t seed) const override;
  std::string identity() const override { return "identity"; }
};

// Remote latent codec: POST {model, sigma, seed, image_png_base64} and
// expect {image_png_base64}. Transport and decode errors become
// CodecUnavailable.
class HttpCodec final : public VaeCodec {
 public:
  HttpCodec(std::string endpoint, std::string model, int timeout_seconds = 120);
  RgbImage roundtrip(const RgbImage& image, double sigma, std::uint64_t seed) const override;
  std::string identity() const override { return "http:" + model_; }

 private:
  http::Endpoint endpoint_;
  std::string model_;
  int timeout_seconds_;
};

// sigma ~ U(0, 0.08).
double sample_latent_sigma(Rng& rng);

RgbImage vae_roundtrip(const RgbImage& image, double sigma, const VaeCodec& codec,
                       std::uint64_t seed);

// Uniform choice among several codecs per sample. Throws CodecUnavailable
// when empty.
const VaeCodec& pick_codec(const std::vector<std::shared_ptr<const VaeCodec>>& codecs, Rng& rng);

}  // namespace sigma::training
