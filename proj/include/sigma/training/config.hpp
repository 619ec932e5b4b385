#pragma once

// One JSON document holding every hyperparameter of a run. Missing keys keep
// their defaults; unknown keys and ill-typed values raise ConfigInvalid.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "sigma/model/sigma_model.hpp"
#include "sigma/training/losses.hpp"
#include "sigma/training/optim.hpp"
#include "sigma/training/vae.hpp"

namespace sigma::training {

struct ParserConfig {
  std::string kind = "rule";  // rule | llm
  std::string endpoint;
  std::string model;
  int timeout_seconds = 60;
};

struct GrounderConfig {
  std::string kind = "color";  // null | color | http
  std::string endpoint;
  int tolerance = 60;
  int timeout_seconds = 60;
  std::string cache_dir;  // empty disables the on-disk cache
};

struct CodecConfig {
  std::string kind = "identity";  // identity | http
  std::string endpoint;
  std::string model;
  int timeout_seconds = 120;
};

struct StageConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::size_t max_steps = 0;  // 0: epochs * steps_per_epoch
  bool augment = true;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  Variant variant = Variant::full;
  ParserConfig parser;
  GrounderConfig grounder;
  std::vector<CodecConfig> codecs{CodecConfig{}};
  AdamWConfig optimizer;
  StageConfig stage1;
  StageConfig stage2{5, 8, 0, true};
  double val_fraction = 0.05;
  double ema_decay = 0.999;
  double max_latent_sigma = kMaxLatentSigma;
  LossWeights loss_weights;
  double threshold = 0.5;

  // Throws ConfigInvalid.
  void validate() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& config);
nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Throws MissingFile or ConfigInvalid.
PipelineConfig load_config(const std::filesystem::path& path);
// SHA-256 of the canonical JSON form.
std::string config_digest(const PipelineConfig& config);

// Builds providers from the config. The LLM parser reads its key from the
// SIGMA_PARSER_API_KEY environment variable.
Providers make_providers(const PipelineConfig& config);
std::vector<std::shared_ptr<const VaeCodec>> make_codecs(const PipelineConfig& config);

}  // namespace sigma::training
