#include "sigma/training/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "sigma/core/digest.hpp"
#include "sigma/core/errors.hpp"

namespace sigma::training {
namespace {

using nlohmann::json;

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigInvalid(path_ + " must be an object");
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  // Call after all reads.
  void done() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigInvalid("unknown key " + path_ + "." + key);
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      const json& v = j_.at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigInvalid(path_ + "." + key + " must be a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigInvalid(path_ + "." + key + " must be an integer");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned())
          throw ConfigInvalid(path_ + "." + key + " must be non-negative");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigInvalid(path_ + "." + key + " must be a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigInvalid(path_ + "." + key + " must be a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigInvalid(path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string child(const char* key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_stage(Section& parent, const char* key, StageConfig& s) {
  if (!parent.has(key)) return;
  Section sec(parent.at(key), parent.child(key));
  sec.read("epochs", s.epochs);
  sec.read("batch_size", s.batch_size);
  sec.read("max_steps", s.max_steps);
  sec.read("augment", s.augment);
  sec.done();
}

json stage_json(const StageConfig& s) {
  return {{"epochs", s.epochs}, {"batch_size", s.batch_size}, {"max_steps", s.max_steps}, {"augment", s.augment}};
}

void read_model(const json& j, const std::string& path, ModelConfig& m, Variant* variant) {
  Section sec(j, path);
  sec.read("side", m.side);
  sec.read("diff_channels", m.diff_channels);
  sec.read("evidence_channels", m.evidence_channels);
  sec.read("heads", m.heads);
  sec.read("ff_multiplier", m.ff_multiplier);
  sec.read("n_drb", m.n_drb);
  sec.read("bcmr_iterations", m.bcmr_iterations);
  sec.read("decoder_channels", m.decoder_channels);
  sec.read("init_seed", m.init_seed);
  if (variant) {
    std::string v = to_string(*variant);
    sec.read("variant", v);
    *variant = variant_from_string(v);
  }
  if (sec.has("backbone")) {
    Section b(sec.at("backbone"), sec.child("backbone"));
    std::string provider = backbone::to_string(m.backbone.provider);
    b.read("provider", provider);
    m.backbone.provider = backbone::provider_kind_from_string(provider);
    b.read("layer_indices", m.backbone.layer_indices);
    b.read("patch_size", m.backbone.patch_size);
    b.read("embed_dim", m.backbone.embed_dim);
    b.read("seed", m.backbone.seed);
    b.read("endpoint", m.backbone.endpoint);
    b.read("model", m.backbone.model);
    b.read("timeout_seconds", m.backbone.timeout_seconds);
    b.done();
  }
  sec.done();
}

}  // namespace

void PipelineConfig::validate() const {
  try {
    model.validate();
  } catch (const InvalidSpec& e) {
    throw ConfigInvalid(e.what());
  }
  if (parser.kind != "rule" && parser.kind != "llm") throw ConfigInvalid("parser.kind must be rule or llm");
  if (parser.kind == "llm" && parser.endpoint.empty()) throw ConfigInvalid("parser.endpoint is required for llm");
  if (grounder.kind != "null" && grounder.kind != "color" && grounder.kind != "http")
    throw ConfigInvalid("grounder.kind must be null, color or http");
  if (grounder.kind == "http" && grounder.endpoint.empty())
    throw ConfigInvalid("grounder.endpoint is required for http");
  for (const CodecConfig& c : codecs) {
    if (c.kind != "identity" && c.kind != "http") throw ConfigInvalid("codec kind must be identity or http");
    if (c.kind == "http" && c.endpoint.empty()) throw ConfigInvalid("http codec needs an endpoint");
  }
  for (const StageConfig* s : {&stage1, &stage2})
    if (s->batch_size == 0) throw ConfigInvalid("batch_size must be positive");
  if (!(optimizer.lr > 0.0)) throw ConfigInvalid("optimizer.lr must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw ConfigInvalid("optimizer betas must lie in [0, 1)");
  if (!(optimizer.weight_decay >= 0.0)) throw ConfigInvalid("optimizer.weight_decay must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigInvalid("val_fraction must lie in [0, 1)");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigInvalid("ema_decay must lie in [0, 1]");
  if (!(max_latent_sigma >= 0.0)) throw ConfigInvalid("max_latent_sigma must be >= 0");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigInvalid("threshold must lie in [0, 1]");
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  read_model(j, "model", m, nullptr);
  return m;
}

json model_config_to_json(const ModelConfig& m) {
  return {{"side", m.side},
          {"diff_channels", m.diff_channels},
          {"evidence_channels", m.evidence_channels},
          {"heads", m.heads},
          {"ff_multiplier", m.ff_multiplier},
          {"n_drb", m.n_drb},
          {"bcmr_iterations", m.bcmr_iterations},
          {"decoder_channels", m.decoder_channels},
          {"init_seed", m.init_seed},
          {"backbone",
           {{"provider", backbone::to_string(m.backbone.provider)},
            {"layer_indices", m.backbone.layer_indices},
            {"patch_size", m.backbone.patch_size},
            {"embed_dim", m.backbone.embed_dim},
            {"seed", m.backbone.seed},
            {"endpoint", m.backbone.endpoint},
            {"model", m.backbone.model},
            {"timeout_seconds", m.backbone.timeout_seconds}}}};
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  try {
    Section root(j, "config");
    root.read("seed", c.seed);
    if (root.has("model")) read_model(root.at("model"), "config.model", c.model, &c.variant);
    if (root.has("parser")) {
      Section s(root.at("parser"), "config.parser");
      s.read("kind", c.parser.kind);
      s.read("endpoint", c.parser.endpoint);
      s.read("model", c.parser.model);
      s.read("timeout_seconds", c.parser.timeout_seconds);
      s.done();
    }
    if (root.has("grounder")) {
      Section s(root.at("grounder"), "config.grounder");
      s.read("kind", c.grounder.kind);
      s.read("endpoint", c.grounder.endpoint);
      s.read("tolerance", c.grounder.tolerance);
      s.read("timeout_seconds", c.grounder.timeout_seconds);
      s.read("cache_dir", c.grounder.cache_dir);
      s.done();
    }
    if (root.has("codecs")) {
      const json& list = root.at("codecs");
      if (!list.is_array()) throw ConfigInvalid("config.codecs must be an array");
      c.codecs.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        Section s(list[i], "config.codecs[" + std::to_string(i) + "]");
        CodecConfig codec;
        s.read("kind", codec.kind);
        s.read("endpoint", codec.endpoint);
        s.read("model", codec.model);
        s.read("timeout_seconds", codec.timeout_seconds);
        s.done();
        c.codecs.push_back(codec);
      }
    }
    if (root.has("optimizer")) {
      Section s(root.at("optimizer"), "config.optimizer");
      s.read("lr", c.optimizer.lr);
      s.read("beta1", c.optimizer.beta1);
      s.read("beta2", c.optimizer.beta2);
      s.read("eps", c.optimizer.eps);
      s.read("weight_decay", c.optimizer.weight_decay);
      s.done();
    }
    read_stage(root, "stage1", c.stage1);
    read_stage(root, "stage2", c.stage2);
    root.read("val_fraction", c.val_fraction);
    root.read("ema_decay", c.ema_decay);
    root.read("max_latent_sigma", c.max_latent_sigma);
    if (root.has("loss_weights")) {
      Section s(root.at("loss_weights"), "config.loss_weights");
      s.read("seg", c.loss_weights.seg);
      s.read("calib", c.loss_weights.calib);
      s.read("pl", c.loss_weights.pl);
      s.read("disent", c.loss_weights.disent);
      s.done();
    }
    root.read("threshold", c.threshold);
    root.done();
  } catch (const InvalidSpec& e) {
    throw ConfigInvalid(e.what());
  } catch (const UnknownAction& e) {
    throw ConfigInvalid(e.what());
  }
  c.validate();
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json model = model_config_to_json(c.model);
  model["variant"] = to_string(c.variant);
  json codecs = json::array();
  for (const CodecConfig& codec : c.codecs)
    codecs.push_back({{"kind", codec.kind},
                      {"endpoint", codec.endpoint},
                      {"model", codec.model},
                      {"timeout_seconds", codec.timeout_seconds}});
  return {{"seed", c.seed},
          {"model", model},
          {"parser",
           {{"kind", c.parser.kind},
            {"endpoint", c.parser.endpoint},
            {"model", c.parser.model},
            {"timeout_seconds", c.parser.timeout_seconds}}},
          {"grounder",
           {{"kind", c.grounder.kind},
            {"endpoint", c.grounder.endpoint},
            {"tolerance", c.grounder.tolerance},
            {"timeout_seconds", c.grounder.timeout_seconds},
            {"cache_dir", c.grounder.cache_dir}}},
          {"codecs", codecs},
          {"optimizer",
           {{"lr", c.optimizer.lr},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"weight_decay", c.optimizer.weight_decay}}},
          {"stage1", stage_json(c.stage1)},
          {"stage2", stage_json(c.stage2)},
          {"val_fraction", c.val_fraction},
          {"ema_decay", c.ema_decay},
          {"max_latent_sigma", c.max_latent_sigma},
          {"loss_weights",
           {{"seg", c.loss_weights.seg},
            {"calib", c.loss_weights.calib},
            {"pl", c.loss_weights.pl},
            {"disent", c.loss_weights.disent}}},
          {"threshold", c.threshold}};
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile(path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  json j;
  try {
    j = json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ConfigInvalid(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_digest(const PipelineConfig& config) { return sha256_hex(config_to_json(config).dump()); }

Providers make_providers(const PipelineConfig& config) {
  Providers p;
  p.backbone = backbone::make_provider(config.model.backbone);
  if (config.parser.kind == "llm") {
    ground::LlmParserOptions o;
    o.endpoint = config.parser.endpoint;
    o.model = config.parser.model;
    o.timeout_seconds = config.parser.timeout_seconds;
    if (const char* key = std::getenv("SIGMA_PARSER_API_KEY")) o.api_key = key;
    p.parser = std::make_shared<ground::LlmParser>(o);
  } else {
    p.parser = std::make_shared<ground::RuleBasedParser>();
  }
  std::shared_ptr<const ground::ConceptGrounder> grounder;
  if (config.grounder.kind == "http")
    grounder = std::make_shared<ground::HttpGrounder>(config.grounder.endpoint, config.grounder.timeout_seconds);
  else if (config.grounder.kind == "null")
    grounder = std::make_shared<ground::NullGrounder>();
  else
    grounder = std::make_shared<ground::ColorGrounder>(config.grounder.tolerance);
  if (!config.grounder.cache_dir.empty())
    grounder = std::make_shared<ground::CachedGrounder>(grounder, config.grounder.cache_dir);
  p.grounder = grounder;
  return p;
}

std::vector<std::shared_ptr<const VaeCodec>> make_codecs(const PipelineConfig& config) {
  std::vector<std::shared_ptr<const VaeCodec>> out;
  for (const CodecConfig& c : config.codecs) {
    if (c.kind == "http")
      out.push_back(std::make_shared<HttpCodec>(c.endpoint, c.model, c.timeout_seconds));
    else
      out.push_back(std::make_shared<IdentityCodec>());
  }
  return out;
}

}  // namespace sigma::training
