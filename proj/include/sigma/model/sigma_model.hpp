#pragma once

#include <memory>
#include <string>

#include "sigma/autograd/nn.hpp"
#include "sigma/corpus/annotator.hpp"
#include "sigma/diff/semantic_diff.hpp"
#include "sigma/fusion/fusion_decoder.hpp"
#include "sigma/ground/grounding.hpp"
#include "sigma/model/config.hpp"

namespace sigma {

// semantic_only drops the instruction branch and BCMR: Z = E_v^(0).
enum class Variant { full, semantic_only };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// All trainable state of the annotator. Module structs hold handles into
// the parameter store.
class SigmaModel {
 public:
  explicit SigmaModel(ModelConfig config, Variant variant = Variant::full);
  SigmaModel(SigmaModel&&) = default;
  SigmaModel& operator=(SigmaModel&&) = default;
  SigmaModel(const SigmaModel&) = delete;
  SigmaModel& operator=(const SigmaModel&) = delete;

  // Independent parameters with identical values.
  SigmaModel clone() const;

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return variant_; }
  const nn::ParamStore& params() const noexcept { return store_; }
  nn::ParamStore& params() noexcept { return store_; }
  const diff::DiffParams& diff() const noexcept { return diff_; }
  const ground::InstructionParams& instruction() const noexcept { return instruction_; }
  const fusion::FusionParams& fusion() const noexcept { return fusion_; }
  const fusion::DecoderParams& decoder() const noexcept { return decoder_; }

 private:
  ModelConfig config_;
  Variant variant_;
  nn::ParamStore store_;
  diff::DiffParams diff_;
  ground::InstructionParams instruction_;
  fusion::FusionParams fusion_;
  fusion::DecoderParams decoder_;
};

// Non-trainable inputs of one pair at the working side.
struct PairInputs {
  backbone::MultiLevelFeatures f_o, f_e;
  RealMap intent;  // side x side, in [0, 1]
};

struct ForwardHooks {
  diff::RefineHooks refine;
  fusion::BcmrHooks bcmr;
};

struct ForwardResult {
  ag::Var logits;  // [out_h*out_w x 1]
  diff::LevelTriple refined;
  ag::Var e_v0, e_i0, e_vk, e_ik, z;
  std::size_t height = 0, width = 0;
};

ForwardResult forward(const SigmaModel& model, const PairInputs& inputs, std::size_t out_h,
                      std::size_t out_w, const ForwardHooks& hooks = {});

struct Providers {
  std::shared_ptr<const backbone::FeatureProvider> backbone;
  std::shared_ptr<const ground::InstructionParser> parser;
  std::shared_ptr<const ground::ConceptGrounder> grounder;
};

struct PreparedPair {
  PairInputs inputs;
  ground::TransformTuple tuple;
  ground::AttentionMap a_o, a_e;
};

// Features, parsed tuple, grounded maps and intent for images already at
// the working side. The instruction branch is skipped when `with_intent` is
// false (intent left empty).
PreparedPair prepare_pair(const RgbImage& original, const RgbImage& edited,
                          const std::string& instruction, const Providers& providers,
                          const ModelConfig& config, bool with_intent = true);

// sigmoid(logits) at the working side, computed without a graph.
RealMap predict_probability(const SigmaModel& model, const PairInputs& inputs);

// Full pipeline at native resolution: resize to the working side, predict,
// lift the probability back bilinearly, binarise strictly.
class SigmaAnnotator final : public Annotator {
 public:
  SigmaAnnotator(std::shared_ptr<const SigmaModel> model, Providers providers, double threshold = 0.5);
  MaskResult annotate(const RgbImage& original, const RgbImage& edited,
                      const std::string& instruction) const override;
  std::string name() const override { return "sigma"; }

 private:
  std::shared_ptr<const SigmaModel> model_;
  Providers providers_;
  double threshold_;
};

// Loads the record's images and annotates them.
MaskResult predict(const EditRecord& record, const Annotator& annotator);

}  // namespace sigma
