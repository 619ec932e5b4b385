#include "sigma/model/sigma_model.hpp"

#include <cmath>
#include <tuple>

#include "sigma/core/errors.hpp"
#include "sigma/image/codec.hpp"
#include "sigma/image/resize.hpp"

namespace sigma {

std::string to_string(Variant v) { return v == Variant::full ? "full" : "semantic_only"; }

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "semantic_only") return Variant::semantic_only;
  throw ConfigInvalid("unknown model variant: " + s);
}

SigmaModel::SigmaModel(ModelConfig config, Variant variant)
    : config_(std::move(config)), variant_(variant) {
  config_.validate();
  // Each branch draws from its own stream so adding a branch leaves the
  // others' initial values unchanged.
  Rng diff_rng(derive_seed(config_.init_seed, 1));
  diff_ = diff::make_diff_params(store_, config_, diff_rng);
  if (variant_ == Variant::full) {
    Rng ground_rng(derive_seed(config_.init_seed, 2));
    instruction_ = ground::make_instruction_params(store_, config_.evidence_channels, ground_rng);
    Rng fusion_rng(derive_seed(config_.init_seed, 3));
    fusion_ = fusion::make_fusion_params(store_, config_, fusion_rng);
  }
  Rng decoder_rng(derive_seed(config_.init_seed, 4));
  decoder_ = fusion::make_decoder_params(store_, config_, decoder_rng);
}

SigmaModel SigmaModel::clone() const {
  SigmaModel copy(config_, variant_);
  copy.store_.copy_values_from(store_);
  return copy;
}

ForwardResult forward(const SigmaModel& model, const PairInputs& inputs, std::size_t out_h,
                      std::size_t out_w, const ForwardHooks& hooks) {
  const backbone::PatchGrid grid = inputs.f_o.grid;
  ForwardResult r;
  r.height = out_h;
  r.width = out_w;
  r.refined = diff::refine(diff::compute_difference(inputs.f_o, inputs.f_e, model.diff()), model.diff(),
                           hooks.refine);
  r.e_v0 = diff::aggregate(r.refined, model.diff());
  if (model.variant() == Variant::semantic_only) {
    r.e_vk = r.z = r.e_v0;
  } else {
    if (inputs.intent.empty()) throw ShapeMismatch("full model needs an intent map");
    r.e_i0 = ground::embed_intent(inputs.intent, grid, model.instruction());
    std::tie(r.e_vk, r.e_ik) = fusion::bcmr_refine(r.e_v0, r.e_i0, model.fusion(), hooks.bcmr);
    r.z = fusion::consensus(r.e_vk, r.e_ik, model.fusion());
  }
  r.logits = fusion::decode(r.refined, r.z, grid, model.decoder(), out_h, out_w);
  return r;
}

PreparedPair prepare_pair(const RgbImage& original, const RgbImage& edited,
                          const std::string& instruction, const Providers& providers,
                          const ModelConfig& config, bool with_intent) {
  if (!providers.backbone) throw ProviderUnavailable("no backbone provider configured");
  const std::size_t side = config.side;
  if (original.width() != side || original.height() != side || !original.same_size(edited))
    throw ImageDimensionMismatch("prepare_pair expects both images at the working side");
  PreparedPair p;
  p.inputs.f_o = backbone::extract_features(original, *providers.backbone);
  p.inputs.f_e = backbone::extract_features(edited, *providers.backbone);
  if (!with_intent) return p;
  if (!providers.parser) throw ProviderUnavailable("no instruction parser configured");
  if (!providers.grounder) throw GrounderUnavailable("no concept grounder configured");
  p.tuple = ground::parse_instruction(instruction, *providers.parser);
  p.a_o = ground::ground_concept(original, p.tuple.c_o, *providers.grounder, side);
  p.a_e = ground::ground_concept(edited, p.tuple.c_e, *providers.grounder, side);
  p.inputs.intent = ground::fuse_action(p.a_o, p.a_e, p.tuple.op);
  return p;
}

RealMap predict_probability(const SigmaModel& model, const PairInputs& inputs) {
  ag::NoGradGuard no_grad;
  const std::size_t side = model.config().side;
  const ForwardResult r = forward(model, inputs, side, side);
  RealMap prob(side, side);
  const Tensor& logits = r.logits.value();
  for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return prob;
}

SigmaAnnotator::SigmaAnnotator(std::shared_ptr<const SigmaModel> model, Providers providers,
                               double threshold)
    : model_(std::move(model)), providers_(std::move(providers)), threshold_(threshold) {}

MaskResult SigmaAnnotator::annotate(const RgbImage& original, const RgbImage& edited,
                                    const std::string& instruction) const {
  if (!original.same_size(edited)) throw ImageDimensionMismatch("original and edited sizes differ");
  const std::size_t side = model_->config().side;
  const RgbImage o = resize_bilinear(original, side, side);
  const RgbImage e = resize_bilinear(edited, side, side);
  const PreparedPair p = prepare_pair(o, e, instruction, providers_, model_->config(),
                                      model_->variant() == Variant::full);
  RealMap prob = predict_probability(*model_, p.inputs);
  prob = resize_bilinear(prob, original.width(), original.height());
  return MaskResult::from_prob(std::move(prob), threshold_, name());
}

MaskResult predict(const EditRecord& record, const Annotator& annotator) {
  const RgbImage original = codec::load_image(record.original_path);
  const RgbImage edited = codec::load_image(record.edited_path);
  return annotator.annotate(original, edited, record.instruction);
}

}  // namespace sigma
