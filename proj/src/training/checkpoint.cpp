#include "sigma/training/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "sigma/core/digest.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/image/codec.hpp"
#include "sigma/training/config.hpp"

namespace sigma::training {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes little-endian doubles");

constexpr const char* kSections[] = {"params", "adam_m", "adam_v", "ema"};

const std::map<std::string, Tensor>& section(const Checkpoint& c, int i) {
  switch (i) {
    case 0: return c.params;
    case 1: return c.adam_m;
    case 2: return c.adam_v;
    default: return c.ema;
  }
}

std::map<std::string, Tensor>& section(Checkpoint& c, int i) {
  return const_cast<std::map<std::string, Tensor>&>(section(static_cast<const Checkpoint&>(c), i));
}

}  // namespace

std::map<std::string, Tensor> snapshot(const nn::ParamStore& store) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : store.all()) out.emplace(name, v.value());
  return out;
}

void restore(nn::ParamStore& store, const std::map<std::string, Tensor>& values) {
  if (values.size() != store.count())
    throw ShapeMismatch("checkpoint holds " + std::to_string(values.size()) + " tensors, model has " +
                        std::to_string(store.count()));
  for (const auto& [name, v] : store.all()) {
    auto it = values.find(name);
    if (it == values.end()) throw ShapeMismatch("checkpoint lacks " + name);
    if (!it->second.same_shape(v.value()))
      throw ShapeMismatch(name + ": checkpoint " + it->second.shape_string() + " vs model " +
                          v.value().shape_string());
    v.mutable_value() = it->second;
  }
}

std::string serialize_checkpoint(const Checkpoint& c) {
  json header{{"model", model_config_to_json(c.model_config)},
              {"variant", to_string(c.variant)},
              {"stage", c.stage},
              {"epoch", c.epoch},
              {"step", c.step},
              {"config_digest", c.config_digest},
              {"val_f1", c.val_f1},
              {"adam_steps", c.adam_steps}};
  std::string payload;
  for (int s = 0; s < 4; ++s) {
    json list = json::array();
    for (const auto& [name, t] : section(c, s)) {
      list.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
      payload.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
    }
    header[kSections[s]] = std::move(list);
  }
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  out += payload;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw DecodeFailure("not a checkpoint (bad magic)");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof len);
  if (len > bytes.size() - 16) throw DecodeFailure("checkpoint header truncated");
  Checkpoint c;
  std::size_t offset = 16 + len;
  try {
    const json h = json::parse(bytes.substr(16, len));
    c.model_config = model_config_from_json(h.at("model"));
    c.variant = variant_from_string(h.at("variant").get<std::string>());
    c.stage = h.at("stage").get<int>();
    c.epoch = h.at("epoch").get<std::size_t>();
    c.step = h.at("step").get<std::size_t>();
    c.config_digest = h.at("config_digest").get<std::string>();
    c.val_f1 = h.at("val_f1").get<double>();
    c.adam_steps = h.at("adam_steps").get<std::size_t>();
    for (int s = 0; s < 4; ++s)
      for (const json& e : h.at(kSections[s])) {
        Tensor t(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>());
        const std::size_t n = t.size() * sizeof(double);
        if (n > bytes.size() - offset) throw DecodeFailure("checkpoint payload truncated");
        std::memcpy(t.data(), bytes.data() + offset, n);
        offset += n;
        section(c, s).emplace(e.at("name").get<std::string>(), std::move(t));
      }
  } catch (const json::exception& e) {
    throw DecodeFailure(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigInvalid& e) {
    throw DecodeFailure(std::string("checkpoint header: ") + e.what());
  }
  if (offset != bytes.size()) throw DecodeFailure("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  codec::write_text_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFile(path.string());
  const codec::Bytes bytes = codec::read_file(path);
  return deserialize_checkpoint(std::string(bytes.begin(), bytes.end()));
}

SigmaModel model_from_checkpoint(const Checkpoint& ckpt) {
  SigmaModel model(ckpt.model_config, ckpt.variant);
  restore(model.params(), ckpt.params);
  return model;
}

std::string checkpoint_digest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFile(path.string());
  return sha256_hex(codec::read_file(path));
}

}  // namespace sigma::training
