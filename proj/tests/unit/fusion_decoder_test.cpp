#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/fusion/fusion_decoder.hpp"
#include "sigma/model/sigma_model.hpp"
#include "toy_data.hpp"

using namespace sigma;
using namespace sigma::fusion;
using ag::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

struct FusionFixture {
  ModelConfig config = testing::tiny_config(3);
  nn::ParamStore store;
  FusionParams params;
  explicit FusionFixture(std::size_t k = 2) {
    config.bcmr_iterations = k;
    Rng rng(5);
    params = make_fusion_params(store, config, rng);
  }
};

Providers synthetic_providers(const ModelConfig& config) {
  return {std::make_shared<backbone::SyntheticBackbone>(config.backbone),
          std::make_shared<ground::RuleBasedParser>(), std::make_shared<ground::NullGrounder>()};
}

}  // namespace

TEST_CASE("bcmr: zero attention doubles leave the evidence unchanged") {
  FusionFixture fx;
  Rng rng(1);
  const Var v = ag::constant(random_tensor(4, 8, rng));
  const Var i = ag::constant(random_tensor(4, 8, rng));
  BcmrHooks zero;
  zero.attention = [](const BcmrCall& c) { return ag::constant(Tensor(c.query.rows(), c.query.cols())); };
  const auto [vk, ik] = bcmr_refine(v, i, fx.params, zero);
  CHECK(same_values(vk.value(), v.value()));
  CHECK(same_values(ik.value(), i.value()));
}

TEST_CASE("bcmr: the instruction update reads the freshly updated visual evidence") {
  FusionFixture fx(1);
  Rng rng(2);
  const Var v = ag::constant(random_tensor(4, 8, rng));
  const Var i = ag::constant(random_tensor(4, 8, rng));
  std::vector<BcmrCall> log;
  std::vector<Var> outputs;
  BcmrHooks spy;
  spy.attention = [&](const BcmrCall& c) {
    log.push_back(c);
    Var out = ag::constant(random_tensor(c.query.rows(), c.query.cols(), rng));
    outputs.push_back(out);
    return out;
  };
  const auto [vk, ik] = bcmr_refine(v, i, fx.params, spy);
  REQUIRE(log.size() == 2);
  CHECK(log[0].direction == BcmrDirection::visual);
  CHECK(log[0].query.node() == v.node());
  CHECK(log[0].context.node() == i.node());
  CHECK(log[1].direction == BcmrDirection::instruction);
  // Post-update state: E_v + Attn_v output, by identity and by value.
  CHECK(log[1].context.node() == vk.node());
  const Tensor expected = ag::add(v, outputs[0]).value();
  CHECK(same_values(log[1].context.value(), expected));
  CHECK(same_values(ik.value(), ag::add(i, outputs[1]).value()));
}

TEST_CASE("bcmr: K=2 issues four calls ordered v, i, v, i") {
  FusionFixture fx(2);
  Rng rng(3);
  const Var v = ag::constant(random_tensor(4, 8, rng));
  const Var i = ag::constant(random_tensor(4, 8, rng));
  std::vector<std::pair<std::size_t, BcmrDirection>> log;
  BcmrHooks spy;
  spy.attention = [&](const BcmrCall& c) {
    log.emplace_back(c.iteration, c.direction);
    return ag::constant(Tensor(c.query.rows(), c.query.cols(), 0.25));
  };
  bcmr_refine(v, i, fx.params, spy);
  const std::vector<std::pair<std::size_t, BcmrDirection>> expected{
      {0, BcmrDirection::visual}, {0, BcmrDirection::instruction},
      {1, BcmrDirection::visual}, {1, BcmrDirection::instruction}};
  CHECK(log == expected);
}

TEST_CASE("bcmr: the real sublayers run and shape errors are reported") {
  FusionFixture fx;
  Rng rng(4);
  const Var v = ag::constant(random_tensor(4, 8, rng));
  const Var i = ag::constant(random_tensor(4, 8, rng));
  const auto [vk, ik] = bcmr_refine(v, i, fx.params);
  CHECK(vk.rows() == 4);
  CHECK(ik.cols() == 8);
  CHECK_FALSE(same_values(vk.value(), v.value()));
  CHECK_THROWS_AS(bcmr_refine(v, ag::constant(Tensor(3, 8)), fx.params), ShapeMismatch);
  CHECK_THROWS_AS(bcmr_refine(v, ag::constant(Tensor(4, 6)), fx.params), ShapeMismatch);
}

TEST_CASE("consensus: selector, zero and dense oracle") {
  FusionFixture fx;
  Rng rng(6);
  const Var v = ag::constant(random_tensor(4, 8, rng));
  const Var i = ag::constant(random_tensor(4, 8, rng));

  Tensor& w = fx.params.consensus.weight.mutable_value();  // [16 x 8]
  w.fill(0.0);
  for (std::size_t c = 0; c < 8; ++c) w(c, c) = 1.0;
  fx.params.consensus.bias.mutable_value().fill(0.0);
  CHECK(same_values(consensus(v, i, fx.params).value(), v.value()));

  CHECK(consensus(ag::constant(Tensor(4, 8)), ag::constant(Tensor(4, 8)), fx.params).value().max_abs() == 0.0);

  w = random_tensor(16, 8, rng);
  fx.params.consensus.bias.mutable_value() = random_tensor(1, 8, rng);
  const Tensor z = consensus(v, i, fx.params).value();
  const Tensor& b = fx.params.consensus.bias.value();
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t o = 0; o < 8; ++o) {
      double acc = b(0, o);
      for (std::size_t c = 0; c < 8; ++c) acc += v.value()(n, c) * w(c, o) + i.value()(n, c) * w(8 + c, o);
      CHECK(z(n, o) == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK_THROWS_AS(consensus(v, ag::constant(Tensor(4, 6)), fx.params), ShapeMismatch);
}

TEST_CASE("pyramid sizes use ceiling division") {
  const PyramidSizes s = pyramid_sizes({37, 37});
  CHECK(s.levels[0].rows == 37);
  CHECK(s.levels[1].rows == 19);
  CHECK(s.levels[2].rows == 10);
  CHECK(s.levels[2].cols == 10);
  const PyramidSizes t = pyramid_sizes({2, 5});
  CHECK(t.levels[1].rows == 1);
  CHECK(t.levels[1].cols == 3);
  CHECK(t.levels[2].cols == 2);
}

TEST_CASE("decode: zero network gives zero logits; output size is covariant") {
  const ModelConfig config = testing::toy_config(1);
  SigmaModel model(config);
  Rng rng(7);
  PairInputs in;
  in.f_o.grid = in.f_e.grid = config.grid();
  for (std::size_t l = 0; l < backbone::kLevels; ++l) {
    in.f_o.levels[l] = random_tensor(64, 48, rng);
    in.f_e.levels[l] = random_tensor(64, 48, rng);
  }
  in.intent = RealMap(56, 56, 0.5);

  const ForwardResult r = forward(model, in, 56, 56);
  CHECK(r.logits.rows() == 56 * 56);
  CHECK(r.logits.cols() == 1);
  const ForwardResult big = forward(model, in, 112, 112);
  CHECK(big.logits.rows() == 112 * 112);
  const ForwardResult odd = forward(model, in, 30, 45);
  CHECK(odd.logits.rows() == 30 * 45);

  model.params().fill(0.0);
  const ForwardResult zero = forward(model, in, 56, 56);
  CHECK(zero.logits.value().max_abs() == 0.0);
  const RealMap prob = predict_probability(model, in);
  for (std::size_t i = 0; i < prob.size(); ++i) CHECK(prob[i] == 0.5);

  CHECK_THROWS_AS(decode(r.refined, ag::constant(Tensor(63, 32)), config.grid(), model.decoder(), 56, 56),
                  ShapeMismatch);
}

TEST_CASE("untrained zero model annotates uniform 0.5 and an empty mask at native size") {
  const ModelConfig config = testing::toy_config(2);
  auto model = std::make_shared<SigmaModel>(config);
  model->params().fill(0.0);
  const SigmaAnnotator annotator(model, synthetic_providers(config));
  const testing::ToyPair pair = testing::rectangle_edit_pair(70, 7, 9);
  const MaskResult m = annotator.annotate(pair.original, pair.edited, pair.instruction);
  CHECK(m.annotator == "sigma");
  CHECK(m.prob.width() == 70);
  CHECK(m.prob.height() == 70);
  for (std::size_t i = 0; i < m.prob.size(); ++i) {
    CHECK(m.prob[i] == doctest::Approx(0.5));
    CHECK(m.binary[i] == 0);
  }
}

TEST_CASE("semantic-only variant has no instruction or fusion parameters") {
  const ModelConfig config = testing::toy_config(3);
  const SigmaModel full(config);
  const SigmaModel ablated(config, Variant::semantic_only);
  CHECK(ablated.params().count() < full.params().count());
  for (const auto& [name, _] : ablated.params().all()) {
    CHECK(name.rfind("fusion.", 0) != 0);
    CHECK(name.rfind("ground.", 0) != 0);
  }
  // Shared branches draw identical initial values.
  CHECK(same_values(ablated.params().get("diff.agg.weight").value(), full.params().get("diff.agg.weight").value()));
  CHECK(variant_from_string("semantic_only") == Variant::semantic_only);
  CHECK_THROWS_AS(variant_from_string("other"), ConfigInvalid);
}

TEST_CASE("clone copies values into independent parameters") {
  const SigmaModel a(testing::tiny_config(4));
  const SigmaModel b = a.clone();
  CHECK(a.params().digest() == b.params().digest());
  b.params().all().begin()->second.mutable_value()[0] += 1.0;
  CHECK(a.params().digest() != b.params().digest());
}

TEST_CASE("mean logit is differentiable end to end on a 2x2-patch toy model") {
  const ModelConfig config = testing::tiny_config(5);
  SigmaModel model(config);
  Rng rng(8);
  PairInputs in;
  in.f_o.grid = in.f_e.grid = config.grid();
  for (std::size_t l = 0; l < backbone::kLevels; ++l) {
    in.f_o.levels[l] = random_tensor(4, 6, rng);
    in.f_e.levels[l] = random_tensor(4, 6, rng);
  }
  in.intent = RealMap(14, 14);
  for (std::size_t i = 0; i < in.intent.size(); ++i) in.intent[i] = rng.uniform();
  // Biases off zero so ReLU kinks are not sitting on sampled points.
  for (const auto& [name, p] : model.params().all())
    if (name.ends_with(".bias"))
      for (std::size_t i = 0; i < p.value().size(); ++i) p.mutable_value()[i] = rng.uniform(-0.3, 0.3);

  std::vector<Var> params;
  for (const auto& [name, p] : model.params().all()) params.push_back(p);
  const auto report = testing::grad_check([&] { return ag::mean(forward(model, in, 14, 14).logits); },
                                          params, 1e-5, 0.01, 11, 1e-6);
  INFO(report.worst);
  CHECK(report.checked > 0);
  CHECK(report.max_rel_error < 1e-4);
}
