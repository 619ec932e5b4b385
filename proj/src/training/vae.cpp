#include "sigma/training/vae.hpp"

#include <algorithm>
#include <cmath>

#include "sigma/core/digest.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/image/codec.hpp"

namespace sigma::training {

RgbImage IdentityCodec::roundtrip(const RgbImage& image, double sigma, std::uint64_t seed) const {
  if (!(sigma >= 0.0)) throw InvalidSpec("latent sigma must be >= 0");
  RgbImage out = image;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (auto& v : out.storage()) {
    const double latent = v / 255.0 + sigma * rng.normal();
    v = static_cast<std::uint8_t>(std::clamp(std::lround(latent * 255.0), 0L, 255L));
  }
  return out;
}

HttpCodec::HttpCodec(std::string endpoint, std::string model, int timeout_seconds)
    : endpoint_(http::parse_endpoint(endpoint)), model_(std::move(model)), timeout_seconds_(timeout_seconds) {}

RgbImage HttpCodec::roundtrip(const RgbImage& image, double sigma, std::uint64_t seed) const {
  const nlohmann::json body{{"model", model_},
                            {"sigma", sigma},
                            {"seed", seed},
                            {"image_png_base64", base64_encode(codec::encode_png(image))}};
  http::Options options;
  options.timeout_seconds = timeout_seconds_;
  try {
    const nlohmann::json reply = http::post_json(endpoint_, body, options);
    if (!reply.is_object() || !reply.contains("image_png_base64") || !reply["image_png_base64"].is_string())
      throw CodecUnavailable("codec reply lacks image_png_base64");
    RgbImage out = codec::decode_image(base64_decode(reply["image_png_base64"].get<std::string>()));
    if (!out.same_size(image)) throw CodecUnavailable("codec changed the image size");
    return out;
  } catch (const ProviderUnavailable& e) {
    throw CodecUnavailable(e.what());
  } catch (const DecodeFailure& e) {
    throw CodecUnavailable(e.what());
  }
}

double sample_latent_sigma(Rng& rng) { return rng.uniform(0.0, kMaxLatentSigma); }

RgbImage vae_roundtrip(const RgbImage& image, double sigma, const VaeCodec& codec, std::uint64_t seed) {
  return codec.roundtrip(image, sigma, seed);
}

const VaeCodec& pick_codec(const std::vector<std::shared_ptr<const VaeCodec>>& codecs, Rng& rng) {
  if (codecs.empty()) throw CodecUnavailable("no latent codec configured");
  return *codecs[codecs.size() == 1 ? 0 : rng.below(codecs.size())];
}

}  // namespace sigma::training
