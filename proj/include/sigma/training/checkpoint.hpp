#pragma once

// Binary checkpoint: the 8-byte magic "SGMACKPT", a little-endian u64 header
// length, a JSON header, then raw little-endian doubles for every tensor in
// header order.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "sigma/autograd/nn.hpp"
#include "sigma/model/sigma_model.hpp"

namespace sigma::training {

inline constexpr char kCheckpointMagic[8] = {'S', 'G', 'M', 'A', 'C', 'K', 'P', 'T'};

struct Checkpoint {
  ModelConfig model_config;
  Variant variant = Variant::full;
  int stage = 1;
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string config_digest;
  double val_f1 = -1.0;  // negative when no validation split was used
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> adam_m, adam_v;
  std::size_t adam_steps = 0;
  std::map<std::string, Tensor> ema;  // empty outside Stage II
};

std::map<std::string, Tensor> snapshot(const nn::ParamStore& store);
// Copies values by name; throws ShapeMismatch on missing names or shapes.
void restore(nn::ParamStore& store, const std::map<std::string, Tensor>& values);

std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws DecodeFailure.
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Atomic write. Throws IoFailure.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws MissingFile or DecodeFailure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the model held by a checkpoint.
SigmaModel model_from_checkpoint(const Checkpoint& ckpt);

// SHA-256 of the file bytes.
std::string checkpoint_digest(const std::filesystem::path& path);

}  // namespace sigma::training
