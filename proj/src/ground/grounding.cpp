#include "sigma/ground/grounding.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sigma/core/digest.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/core/http.hpp"
#include "sigma/image/codec.hpp"
#include "sigma/image/resize.hpp"

namespace sigma::ground {

AttentionMap uniform_attention(std::size_t width, std::size_t height) {
  return {RealMap(width, height, kEpsilonGlobal), true};
}

namespace {

struct NamedColor {
  const char* name;
  std::array<int, 3> rgb;
};

constexpr std::array<NamedColor, 11> kColors{{{"red", {220, 30, 30}},
                                              {"green", {30, 180, 30}},
                                              {"blue", {30, 30, 220}},
                                              {"yellow", {230, 220, 30}},
                                              {"orange", {240, 140, 20}},
                                              {"purple", {140, 40, 180}},
                                              {"pink", {240, 130, 180}},
                                              {"white", {245, 245, 245}},
                                              {"black", {10, 10, 10}},
                                              {"grey", {128, 128, 128}},
                                              {"gray", {128, 128, 128}}}};

GrounderResult parse_grounder_reply(const nlohmann::json& reply) {
  GrounderResult out;
  try {
    for (const auto& inst : reply.at("instances")) {
      const auto w = inst.at("width").get<std::size_t>(), h = inst.at("height").get<std::size_t>();
      const auto values = inst.at("mask").get<std::vector<double>>();
      if (values.size() != w * h) throw DecodeFailure("grounder mask size mismatch");
      GroundedInstance g{RealMap(w, h), inst.value("score", 1.0)};
      std::copy(values.begin(), values.end(), g.mask.data());
      out.instances.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeFailure(std::string("malformed grounder reply: ") + e.what());
  }
  return out;
}

nlohmann::json grounder_reply_json(const GrounderResult& r) {
  nlohmann::json instances = nlohmann::json::array();
  for (const GroundedInstance& g : r.instances)
    instances.push_back({{"width", g.mask.width()},
                         {"height", g.mask.height()},
                         {"mask", g.mask.storage()},
                         {"score", g.score}});
  return {{"instances", instances}};
}

}  // namespace

GrounderResult ColorGrounder::ground(const RgbImage& image, const std::string& phrase) const {
  std::string text = phrase;
  for (char& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::istringstream words(text);
  GrounderResult out;
  for (std::string w; words >> w;) {
    for (const NamedColor& color : kColors) {
      if (w != color.name) continue;
      GroundedInstance inst{RealMap(image.width(), image.height()), 1.0};
      bool any = false;
      for (std::size_t y = 0; y < image.height(); ++y)
        for (std::size_t x = 0; x < image.width(); ++x) {
          int dist = 0;
          for (std::size_t c = 0; c < 3; ++c)
            dist = std::max(dist, std::abs(static_cast<int>(image.at(x, y, c)) - color.rgb[c]));
          if (dist <= tolerance_) {
            inst.mask.at(x, y) = 1.0;
            any = true;
          }
        }
      if (any) out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

std::string ColorGrounder::identity() const { return "color|" + std::to_string(tolerance_); }

HttpGrounder::HttpGrounder(std::string endpoint, int timeout_seconds)
    : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {
  http::parse_endpoint(endpoint_);
}

GrounderResult HttpGrounder::ground(const RgbImage& image, const std::string& phrase) const {
  const nlohmann::json body{{"concept", phrase},
                            {"image_png_base64", base64_encode(codec::encode_png(image))}};
  http::Options options;
  options.timeout_seconds = timeout_seconds_;
  try {
    return parse_grounder_reply(http::post_json(http::parse_endpoint(endpoint_), body, options));
  } catch (const ProviderUnavailable& e) {
    throw GrounderUnavailable(e.what());
  }
}

CachedGrounder::CachedGrounder(std::shared_ptr<const ConceptGrounder> inner,
                               std::filesystem::path directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
  std::filesystem::create_directories(directory_);
}

std::string CachedGrounder::cache_key(const RgbImage& image, const std::string& phrase) const {
  Sha256 h;
  h.update(inner_->identity());
  h.update(std::string_view("\0", 1));
  h.update(phrase);
  const std::uint64_t dims[2] = {image.width(), image.height()};
  h.update(dims, sizeof dims);
  h.update(image.data(), image.byte_size());
  return h.hex_digest();
}

GrounderResult CachedGrounder::ground(const RgbImage& image, const std::string& phrase) const {
  const std::filesystem::path file = directory_ / (cache_key(image, phrase) + ".json");
  if (std::filesystem::is_regular_file(file)) {
    std::ifstream in(file);
    try {
      return parse_grounder_reply(nlohmann::json::parse(in));
    } catch (const std::exception&) {
      // A damaged entry is recomputed and overwritten.
    }
  }
  GrounderResult result = inner_->ground(image, phrase);
  codec::write_text_atomic(file, grounder_reply_json(result).dump());
  return result;
}

AttentionMap ground_concept(const RgbImage& image, const std::optional<std::string>& phrase,
                            const ConceptGrounder& grounder, std::size_t side) {
  if (!phrase || phrase->empty()) return uniform_attention(side, side);
  const GrounderResult result = grounder.ground(image, *phrase);
  if (result.instances.empty()) return uniform_attention(side, side);
  RealMap merged = result.instances.front().mask;
  for (const GroundedInstance& inst : result.instances) {
    if (!inst.mask.same_size(merged)) throw ShapeMismatch("grounder instances differ in size");
    for (std::size_t i = 0; i < merged.size(); ++i) merged[i] = std::max(merged[i], inst.mask[i]);
  }
  RealMap resized = resize_bilinear(merged, side, side);
  for (double& v : resized.storage()) v = std::clamp(v, 0.0, 1.0);
  return {std::move(resized), false};
}

RealMap fuse_action(const AttentionMap& a_o, const AttentionMap& a_e, Action op) {
  if (!a_o.values.same_size(a_e.values)) throw ShapeMismatch("attention maps differ in size");
  switch (op) {
    case Action::add: return a_e.values;
    case Action::remove: return a_o.values;
    case Action::replace:
    case Action::attribute_change: {
      RealMap out(a_o.values.width(), a_o.values.height());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a_o.values[i] * a_e.values[i];
      return out;
    }
    case Action::global: break;
  }
  return RealMap(a_o.values.width(), a_o.values.height(), kEpsilonGlobal);
}

InstructionParams make_instruction_params(nn::ParamStore& store, std::size_t evidence_channels,
                                          Rng& rng) {
  return {nn::make_linear(store, "ground.lift", 1, evidence_channels, rng)};
}

Tensor pool_intent(const RealMap& intent, const backbone::PatchGrid& grid) {
  Tensor column(intent.size(), 1);
  std::copy(intent.storage().begin(), intent.storage().end(), column.data());
  const auto pool = ag::Resampler::adaptive_avg_pool(intent.height(), intent.width(), grid.rows, grid.cols);
  return pool.apply(column);
}

ag::Var embed_intent(const RealMap& intent, const backbone::PatchGrid& grid,
                     const InstructionParams& params) {
  return ag::relu(params.lift(ag::constant(pool_intent(intent, grid))));
}

}  // namespace sigma::ground
