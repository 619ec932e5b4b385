#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gradcheck.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/training/checkpoint.hpp"
#include "sigma/training/config.hpp"
#include "sigma/training/losses.hpp"
#include "sigma/training/optim.hpp"
#include "sigma/training/trainer.hpp"
#include "sigma/training/vae.hpp"
#include "toy_data.hpp"

using namespace sigma;
using namespace sigma::training;
using ag::Var;

namespace {

Tensor column(std::initializer_list<double> v) { return Tensor(v.size(), 1, std::vector<double>(v)); }

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double bce(double x, double y) { return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x))); }

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sigma_training_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

PipelineConfig tiny_pipeline(std::size_t steps1, std::size_t steps2) {
  PipelineConfig c;
  c.model = testing::tiny_config(1);
  c.model.side = 28;
  c.stage1 = {1000, 4, steps1, true};
  c.stage2 = {1000, 4, steps2, true};
  c.val_fraction = 0.0;
  return c;
}

std::vector<TrainSample> toy_samples(std::size_t n, std::size_t side, std::uint64_t seed) {
  std::vector<TrainSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = testing::rectangle_edit_pair(side, 7, seed + i);
    out.push_back({p.original, p.edited, p.mask, p.instruction});
  }
  return out;
}

}  // namespace

TEST_CASE("loss_seg closed forms") {
  ByteMap gt(2, 2);
  gt[0] = gt[1] = 1;
  SUBCASE("saturated correct prediction") {
    const Var logits = ag::constant(column({20, 20, -20, -20}));
    CHECK(loss_seg(logits, gt).item() < 1e-6);
  }
  SUBCASE("zero logits, half ones") {
    const Var logits = ag::constant(Tensor(4, 1));
    // BCE ln 2, Dice 1 - (2*1 + 1) / (2 + 2 + 1) = 0.4.
    CHECK(loss_seg(logits, gt).item() == doctest::Approx(std::log(2.0) + 0.4).epsilon(1e-12));
  }
  SUBCASE("zero logits, empty ground truth") {
    const Var logits = ag::constant(Tensor(4, 1));
    // Dice 1 - 1 / (sum p + 0 + 1) with sum p = 2.
    CHECK(loss_seg(logits, ByteMap(2, 2)).item() == doctest::Approx(std::log(2.0) + 2.0 / 3.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(loss_seg(ag::constant(Tensor(3, 1)), gt), ShapeMismatch);
}

TEST_CASE("loss_calib is mean BCE against zeros") {
  const Tensor x = column({-1.0, 0.5, 2.0});
  const double expected = (bce(-1.0, 0) + bce(0.5, 0) + bce(2.0, 0)) / 3.0;
  CHECK(loss_calib(ag::constant(x)).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("confidence mask uses strict bands") {
  RealMap m(5, 1);
  m[0] = 0.9;
  m[1] = 0.5;
  m[2] = 0.8;
  m[3] = 0.2;
  m[4] = 0.1;
  const ByteMap c = confidence_mask(m);
  CHECK(c[0] == 1);
  CHECK(c[1] == 0);
  CHECK(c[2] == 0);
  CHECK(c[3] == 0);
  CHECK(c[4] == 1);
}

TEST_CASE("loss_pl: empty confident set, agreement and brute-force oracle") {
  CHECK(loss_pl(ag::constant(column({3, -2, 1})), ag::constant(Tensor(3, 1, 0.5))).item() == 0.0);
  CHECK(loss_pl(ag::constant(Tensor(4, 1, 20.0)), ag::constant(Tensor(4, 1, 0.95))).item() < 1e-6);

  Rng rng(3);
  const Tensor student = random_tensor(16, 1, rng, -3, 3);
  const Tensor pseudo = random_tensor(16, 1, rng, 0, 1);
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < 16; ++i) {
    if (!(pseudo[i] > 0.8 || pseudo[i] < 0.2)) continue;
    sum += bce(student[i], pseudo[i] > 0.5 ? 1.0 : 0.0);
    count += 1.0;
  }
  REQUIRE(count > 0);
  CHECK(loss_pl(ag::constant(student), ag::constant(pseudo)).item() == doctest::Approx(sum / count).epsilon(1e-12));
}

TEST_CASE("loss_disent: hinge floor, empty support and hand-computed toy") {
  const Var a = ag::constant(Tensor(3, 2, std::vector<double>{1, 0, 0, 1, 1, 1}));
  const Var neg = ag::constant(Tensor(3, 2, std::vector<double>{-1, 0, 0, -1, -1, -1}));
  CHECK(loss_disent(a, neg, ag::constant(Tensor(3, 1, 1.0))).item() == 0.0);
  CHECK(loss_disent(a, a, ag::constant(Tensor(3, 1))).item() == 0.0);

  // Cosines: row 0 (1,0).(3,4)/5 = 0.6; row 1 (0,1).(1,0) = 0; row 2 (1,1).(-1,2)/(sqrt2 sqrt5) > 0.
  const Var noise = ag::constant(Tensor(3, 2, std::vector<double>{3, 4, 1, 0, -1, 2}));
  const Var p = ag::constant(column({0.5, 1.0, 0.25}));
  const double c2 = 1.0 / (std::sqrt(2.0) * std::sqrt(5.0));
  const double expected = (0.5 * 0.6 + 1.0 * 0.0 + 0.25 * c2) / 1.75;
  CHECK(loss_disent(a, noise, p).item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(loss_disent(a, ag::constant(Tensor(2, 2)), p), ShapeMismatch);
  CHECK_THROWS_AS(loss_disent(a, noise, ag::constant(Tensor(2, 1))), ShapeMismatch);
}

TEST_CASE("stage2_total weights") {
  CHECK(stage2_total(1, 1, 1, 1).total == doctest::Approx(11.1).epsilon(1e-15));
  CHECK(stage2_total(0, 0, 0, 0).total == 0.0);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const double s = rng.uniform(0, 5), c = rng.uniform(0, 5), p = rng.uniform(0, 5), d = rng.uniform(0, 5);
    const LossReport r = stage2_total(s, c, p, d);
    CHECK(std::fabs(r.total - (10 * s + 0.1 * c + 0.5 * p + 0.5 * d)) <= 1e-9 * std::max(1.0, r.total));
    const Var v = stage2_total(ag::constant(Tensor::scalar(s)), ag::constant(Tensor::scalar(c)),
                               ag::constant(Tensor::scalar(p)), ag::constant(Tensor::scalar(d)));
    CHECK(v.item() == doctest::Approx(r.total).epsilon(1e-12));
  }
}

TEST_CASE("every loss matches finite differences on 16-pixel instances") {
  Rng rng(5);
  Var logits = ag::parameter(random_tensor(16, 1, rng, -2, 2));
  ByteMap gt(4, 4);
  for (std::size_t i = 0; i < 16; ++i) gt[i] = i % 3 == 0;
  Var teacher = ag::parameter(random_tensor(16, 1, rng, 0, 1));
  Var d_edit = ag::parameter(random_tensor(4, 3, rng));
  Var d_noise = ag::parameter(random_tensor(4, 3, rng));
  const Var support = ag::constant(random_tensor(4, 1, rng, 0, 1));
  const auto check = [](const testing::GradCheckReport& r) {
    INFO(r.worst);
    CHECK(r.max_rel_error < 1e-4);
  };
  check(testing::grad_check([&] { return loss_seg(logits, gt); }, {logits}));
  check(testing::grad_check([&] { return loss_calib(logits); }, {logits}));
  check(testing::grad_check([&] { return loss_pl(logits, teacher); }, {logits}));
  check(testing::grad_check([&] { return loss_disent(d_edit, d_noise, support); }, {d_edit, d_noise}));
}

TEST_CASE("teacher receives no gradient through loss_pl") {
  const ModelConfig config = testing::tiny_config(2);
  const SigmaModel student(config);
  SigmaModel teacher(config);
  Rng rng(6);
  PairInputs in;
  in.f_o.grid = in.f_e.grid = config.grid();
  for (std::size_t l = 0; l < 3; ++l) {
    in.f_o.levels[l] = random_tensor(4, 6, rng);
    in.f_e.levels[l] = random_tensor(4, 6, rng);
  }
  in.intent = RealMap(14, 14, 0.3);
  // Push the teacher into the confident band so L_pl is non-trivial.
  teacher.decoder().mask_head.bias.mutable_value()[0] = 3.0;
  auto value = [&] {
    const Var t = ag::sigmoid(forward(teacher, in, 14, 14).logits);
    return loss_pl(forward(student, in, 14, 14).logits, t);
  };
  const Var loss = value();
  ag::backward(loss);
  for (const auto& [name, p] : teacher.params().all()) {
    INFO(name);
    CHECK((!p.has_grad() || p.grad().max_abs() == 0.0));
  }
  bool student_moved = false;
  for (const auto& [_, p] : student.params().all()) student_moved = student_moved || (p.has_grad() && p.grad().max_abs() > 0);
  CHECK(student_moved);
  teacher.decoder().mask_head.bias.mutable_value()[0] = -3.0;
  CHECK(value().item() != doctest::Approx(loss.item()));
}

TEST_CASE("ema_update algebra") {
  nn::ParamStore shadow, student;
  shadow.add("w", Tensor::scalar(1.0));
  student.add("w", Tensor::scalar(0.0));
  ema_update(shadow, student, 0.99);
  CHECK(shadow.get("w").item() == doctest::Approx(0.99).epsilon(1e-15));
  ema_update(shadow, student, 1.0);
  CHECK(shadow.get("w").item() == doctest::Approx(0.99).epsilon(1e-15));
  ema_update(shadow, student, 0.0);
  CHECK(shadow.get("w").item() == 0.0);
  nn::ParamStore other;
  other.add("w", Tensor(2, 1));
  CHECK_THROWS_AS(ema_update(shadow, other, 0.5), ShapeMismatch);
  nn::ParamStore renamed;
  renamed.add("v", Tensor::scalar(0.0));
  CHECK_THROWS_AS(ema_update(shadow, renamed, 0.5), ShapeMismatch);
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(1e-3, 0, 100) == 1e-3);
  CHECK(cosine_lr(1e-3, 99, 100) < 1e-9);
  CHECK(cosine_lr(1e-3, 50, 101) == doctest::Approx(5e-4));
  for (std::size_t s = 1; s < 100; ++s) CHECK(cosine_lr(1.0, s, 100) <= cosine_lr(1.0, s - 1, 100));
}

TEST_CASE("AdamW first step moves by lr * (sign(g) + wd * p)") {
  nn::ParamStore store;
  const Var w = store.add("w", Tensor(1, 2, std::vector<double>{2.0, -1.0}));
  w.mutable_grad()[0] = 0.5;
  w.mutable_grad()[1] = -4.0;
  AdamW opt;
  opt.step(store, 0.1);
  CHECK(w.value()[0] == doctest::Approx(2.0 - 0.1 * (1.0 + 0.05 * 2.0)).epsilon(1e-7));
  CHECK(w.value()[1] == doctest::Approx(-1.0 - 0.1 * (-1.0 + 0.05 * -1.0)).epsilon(1e-7));
  CHECK(opt.steps() == 1);
}

TEST_CASE("identity codec roundtrip") {
  const RgbImage img = testing::toy_background(14, 7, 3);
  const IdentityCodec codec;
  CHECK(vae_roundtrip(img, 0.0, codec, 5) == img);
  const RgbImage out = vae_roundtrip(img, 0.05, codec, 5);
  Rng rng(5);
  for (std::size_t i = 0; i < img.byte_size(); ++i) {
    const double expected = std::clamp(std::round(img.data()[i] + 255.0 * 0.05 * rng.normal()), 0.0, 255.0);
    CHECK(out.data()[i] == static_cast<std::uint8_t>(expected));
  }
  CHECK(vae_roundtrip(img, 0.05, codec, 5) == out);
  Rng sig(9);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double s = sample_latent_sigma(sig);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 0.08);
  CHECK_THROWS_AS(HttpCodec("http://127.0.0.1:1/roundtrip", "sd15", 1).roundtrip(img, 0.01, 1), CodecUnavailable);
}

TEST_CASE("config: defaults, round trip and strictness") {
  const PipelineConfig d;
  CHECK(d.optimizer.lr == 1e-3);
  CHECK(d.optimizer.weight_decay == 0.05);
  CHECK(d.stage1.epochs == 10);
  CHECK(d.stage2.epochs == 5);
  CHECK(d.stage1.batch_size == 8);
  CHECK(d.ema_decay == 0.999);
  CHECK(d.model.side == 518);

  PipelineConfig c = tiny_pipeline(3, 2);
  c.variant = Variant::semantic_only;
  c.grounder.kind = "null";
  const PipelineConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_digest(back) == config_digest(c));
  CHECK(config_digest(back) != config_digest(d));

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sed", 1}}), ConfigInvalid);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"stage1", {{"epochs", "ten"}}}}), ConfigInvalid);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"model", {{"heads", 7}}}}), ConfigInvalid);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"model", {{"backbone", {{"patch", 7}}}}}}), ConfigInvalid);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"parser", {{"kind", "llm"}}}}), ConfigInvalid);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), MissingFile);
}

TEST_CASE("checkpoint round trip is byte-exact and validated") {
  const SigmaModel model(testing::tiny_config(3));
  Checkpoint c;
  c.model_config = model.config();
  c.stage = 2;
  c.epoch = 4;
  c.step = 17;
  c.config_digest = "abc";
  c.params = snapshot(model.params());
  c.ema = c.params;
  c.adam_m.emplace("x", Tensor(1, 2, 0.25));
  c.adam_v.emplace("x", Tensor(1, 2, 0.5));
  c.adam_steps = 17;
  const std::string bytes = serialize_checkpoint(c);
  CHECK(bytes.compare(0, 8, "SGMACKPT") == 0);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.step == 17);
  CHECK(back.adam_m.at("x")[1] == 0.25);
  CHECK(model_from_checkpoint(back).params().digest() == model.params().digest());

  CHECK_THROWS_AS(deserialize_checkpoint("NOTACKPT........"), DecodeFailure);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DecodeFailure);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), DecodeFailure);
  SigmaModel other(testing::toy_config(3));
  CHECK_THROWS_AS(restore(other.params(), c.params), ShapeMismatch);

  const auto dir = scratch_dir("ckpt");
  save_checkpoint(dir / "a.ckpt", c);
  CHECK(load_checkpoint(dir / "a.ckpt").params.size() == c.params.size());
  CHECK(checkpoint_digest(dir / "a.ckpt").size() == 64);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), MissingFile);
}

TEST_CASE("stage 1 preconditions, schedule length and determinism") {
  const PipelineConfig config = tiny_pipeline(3, 2);
  const Providers providers = make_providers(config);
  CHECK_THROWS_AS(train_stage1(config, providers, {}), DataEmpty);
  auto unlabeled = toy_samples(2, 28, 1);
  unlabeled[1].mask = {};
  CHECK_THROWS_AS(train_stage1(config, providers, unlabeled), MissingGroundTruth);

  CHECK(planned_steps({10, 8, 0, true}, 16) == 20);
  CHECK(planned_steps({10, 8, 5, true}, 16) == 5);
  CHECK(validation_count(100, 0.05) == 5);
  CHECK(validation_count(16, 0.05) == 0);

  const auto data = toy_samples(6, 28, 10);
  const auto dir = scratch_dir("stage1");
  TrainOptions options;
  options.output_dir = dir;
  const TrainResult a = train_stage1(config, providers, data, options);
  const TrainResult b = train_stage1(config, providers, data);
  CHECK(a.steps == 3);
  CHECK(a.log.size() == 3);
  CHECK(a.log.back().lr < 1e-6 * config.optimizer.lr);
  CHECK(a.model->params().digest() == b.model->params().digest());
  CHECK(serialize_checkpoint(a.final_checkpoint) == serialize_checkpoint(b.final_checkpoint));
  CHECK(std::filesystem::exists(dir / "stage1_final.ckpt"));
  CHECK(std::filesystem::exists(dir / "stage1_best.ckpt"));
  CHECK(std::filesystem::exists(dir / "stage1_epoch001.ckpt"));
  CHECK(std::filesystem::exists(dir / "metrics_stage1.jsonl"));
}

TEST_CASE("stage 2 keeps the backbone frozen and the teacher on the EMA recurrence") {
  PipelineConfig config = tiny_pipeline(2, 1);
  config.ema_decay = 0.9;
  const Providers providers = make_providers(config);
  const auto data = toy_samples(4, 28, 20);
  const TrainResult s1 = train_stage1(config, providers, data);

  StageIIData d2;
  d2.inpaint = data;
  for (const auto& s : data) d2.calib.push_back(s.original);
  d2.edit = toy_samples(4, 28, 40);
  for (auto& s : d2.edit) s.mask = {};

  const std::string checksum = providers.backbone->checksum();
  const TrainResult s2 = train_stage2(config, providers, make_codecs(config), d2, s1.final_checkpoint);
  CHECK(providers.backbone->checksum() == checksum);
  CHECK(s2.steps == 1);
  // teacher = decay * stage-1 weights + (1 - decay) * post-step student.
  for (const auto& [name, t] : s2.teacher->params().all()) {
    const Tensor& before = s1.final_checkpoint.params.at(name);
    const Tensor& student = s2.model->params().get(name).value();
    for (std::size_t i = 0; i < before.size(); ++i)
      REQUIRE(t.value()[i] == 0.9 * before[i] + (1.0 - 0.9) * student[i]);
  }
  CHECK(s2.final_checkpoint.stage == 2);
  CHECK(s2.final_checkpoint.ema.size() == s2.teacher->params().count());

  CHECK_THROWS_AS(train_stage2(config, providers, make_codecs(config), d2, s2.final_checkpoint), ConfigInvalid);
  CHECK_THROWS_AS(train_stage2(config, providers, {}, d2, s1.final_checkpoint), CodecUnavailable);
  StageIIData empty = d2;
  empty.edit.clear();
  CHECK_THROWS_AS(train_stage2(config, providers, make_codecs(config), empty, s1.final_checkpoint), DataEmpty);
}
