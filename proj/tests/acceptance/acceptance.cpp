// Acceptance runner: one PASS/FAIL line per criterion. Optional arguments
// select criteria by number. Exit status is non-zero when any selected
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "criteria.hpp"
#include "gradcheck.hpp"
#include "httplib.h"
#include "json.hpp"
#include "sigma/backbone/backbone.hpp"
#include "sigma/baselines/pixdiff.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/core/rng.hpp"
#include "sigma/evaluation/metrics.hpp"
#include "sigma/ground/grounding.hpp"
#include "sigma/ground/instruction.hpp"
#include "sigma/model/sigma_model.hpp"
#include "sigma/training/losses.hpp"
#include "sigma/training/optim.hpp"
#include "toy_data.hpp"

namespace sigma::acceptance {
namespace {

using ag::Var;

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

RgbImage random_image(std::size_t w, std::size_t h, Rng& rng) {
  RgbImage img(w, h);
  for (std::size_t i = 0; i < img.byte_size(); ++i) img.data()[i] = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    ByteMap pred(8, 8), gt(8, 8);
    const double p = rng.uniform(), q = rng.uniform();
    for (std::size_t i = 0; i < 64; ++i) {
      pred[i] = rng.bernoulli(p);
      gt[i] = rng.bernoulli(q);
    }
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      tp += pred[i] && gt[i];
      fp += pred[i] && !gt[i];
      fn += !pred[i] && gt[i];
      tn += !pred[i] && !gt[i];
    }
    const double denom = static_cast<double>(tp + fp + fn);
    const double f1 = denom == 0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    const double iou = denom == 0 ? 1.0 : tp / denom;
    const auto m = evaluation::f1_iou(pred, gt);
    mismatches += !(m.tp == tp && m.fp == fp && m.fn == fn && m.tn == tn && m.f1 == f1 && m.iou == iou);
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 5.0, fmt::format("{} mismatches over 1000 pairs in {:.2f}s (< 5s)", mismatches, s)};
}

Outcome otsu_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(202);
  std::size_t mismatches = 0, degenerate = 0;
  for (int trial = 0; trial < 200; ++trial) {
    // Edited copies with a brighter patch so histograms are bimodal but noisy.
    const RgbImage a = random_image(24, 24, rng);
    RgbImage b = a;
    const int noise = 1 + static_cast<int>(rng.below(40));
    for (std::size_t i = 0; i < b.byte_size(); ++i)
      b.data()[i] = static_cast<std::uint8_t>(std::clamp<int>(b.data()[i] + static_cast<int>(rng.below(2 * noise + 1)) - noise, 0, 255));
    const std::size_t x0 = rng.below(12), y0 = rng.below(12);
    for (std::size_t y = y0; y < y0 + 10; ++y)
      for (std::size_t x = x0; x < x0 + 10; ++x)
        for (std::size_t c = 0; c < 3; ++c) b.at(x, y, c) = static_cast<std::uint8_t>(rng.below(256));
    const ByteMap d = baselines::diff_map(a, b);

    // Exhaustive search over all 256 splits from class sizes and means.
    int best = -1;
    double best_var = 0.0;
    for (int t = 0; t < 256; ++t) {
      double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] <= t) {
          n0 += 1;
          s0 += d[i];
        } else {
          n1 += 1;
          s1 += d[i];
        }
      }
      if (n0 == 0 || n1 == 0) continue;
      const double n = n0 + n1, gap = s0 / n0 - s1 / n1;
      const double v = (n0 / n) * (n1 / n) * gap * gap;
      if (v > best_var) {
        best_var = v;
        best = t;
      }
    }
    const auto chosen = baselines::otsu_threshold(baselines::histogram(d));
    if (best < 0) {
      ++degenerate;
      mismatches += chosen.has_value();
      continue;
    }
    mismatches += !chosen || *chosen != best;
    const MaskResult r = baselines::pixdiff_otsu(a, b);
    for (std::size_t i = 0; i < d.size(); ++i) mismatches += r.binary[i] != (d[i] > best ? 1 : 0);
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 10.0,
          fmt::format("{} mismatches over 200 maps ({} degenerate) in {:.2f}s (< 10s)", mismatches, degenerate, s)};
}

Outcome pixdiff_monotonicity() {
  Rng rng(303);
  std::size_t violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const RgbImage a = random_image(16, 16, rng);
    RgbImage b = a;
    for (std::size_t i = 0; i < b.byte_size(); ++i)
      b.data()[i] = static_cast<std::uint8_t>(std::clamp<int>(b.data()[i] + static_cast<int>(rng.below(101)) - 50, 0, 255));
    std::size_t previous = SIZE_MAX;
    for (int tau : {0, 10, 20, 30, 40}) {
      const MaskResult r = baselines::pixdiff_fixed(a, b, tau);
      std::size_t area = 0;
      for (std::size_t i = 0; i < r.binary.size(); ++i) area += r.binary[i];
      violations += area > previous;
      previous = area;
    }
  }
  return {violations == 0, fmt::format("{} violations over 100 pairs x 5 thresholds", violations)};
}

Outcome fusion_rule_table() {
  using ground::Action;
  Rng rng(404);
  std::size_t mismatches = 0, checked = 0;
  auto random_map = [&](std::size_t w, std::size_t h) {
    RealMap m(w, h);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform();
    return m;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = 1 + rng.below(20), h = 1 + rng.below(20);
    const ground::AttentionMap ao{random_map(w, h), false}, ae{random_map(w, h), false};
    for (Action op : {Action::add, Action::remove, Action::replace, Action::attribute_change, Action::global}) {
      const RealMap out = ground::fuse_action(ao, ae, op);
      for (std::size_t i = 0; i < out.size(); ++i, ++checked) {
        double expected = 0.0;
        switch (op) {
          case Action::add: expected = ae.values[i]; break;
          case Action::remove: expected = ao.values[i]; break;
          case Action::replace:
          case Action::attribute_change: expected = ao.values[i] * ae.values[i]; break;
          case Action::global: expected = 0.001; break;
        }
        mismatches += out[i] != expected;
      }
    }
  }
  // Both concepts ungroundable: product of two uniform 0.001 maps.
  const auto eps = ground::uniform_attention(5, 4);
  for (Action op : {Action::replace, Action::attribute_change})
    for (double v : ground::fuse_action(eps, eps, op).storage()) mismatches += v != 0.001 * 0.001;
  return {mismatches == 0, fmt::format("{} mismatches over {} fused pixels", mismatches, checked)};
}

Outcome shape_contract() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig config;  // 518 side, 14-pixel patches, D = 768
  const auto provider = backbone::make_provider(config.backbone);
  Rng rng(505);
  const RgbImage a = random_image(518, 518, rng), b = random_image(518, 518, rng);
  PairInputs in;
  in.f_o = backbone::extract_features(a, *provider);
  in.f_e = backbone::extract_features(b, *provider);
  in.intent = RealMap(518, 518, 0.001);
  bool levels_ok = in.f_o.grid.rows == 37 && in.f_o.grid.cols == 37;
  std::string shapes;
  for (const Tensor& level : in.f_o.levels) {
    levels_ok = levels_ok && level.rows() == 1369 && level.cols() == 768;
    shapes += fmt::format("{}x{} ", level.rows(), level.cols());
  }
  const SigmaModel model(config);
  const ForwardResult out = forward(model, in, 518, 518);
  const bool logits_ok =
      out.height == 518 && out.width == 518 && out.logits.value().rows() == 518 * 518 && out.logits.value().cols() == 1;
  return {levels_ok && logits_ok,
          fmt::format("levels {}(want 1369x768 x3), logits {}x{} as {} rows (want 518x518) in {:.1f}s", shapes,
                      out.height, out.width, out.logits.value().rows(), seconds_since(t0))};
}

Outcome gradient_checks() {
  using namespace training;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(606);
  const Var logits = ag::parameter(random_tensor(16, 1, rng, -2, 2));
  ByteMap gt(4, 4);
  for (std::size_t i = 0; i < 16; ++i) gt[i] = rng.bernoulli(0.4);
  const Var teacher = ag::constant(random_tensor(16, 1, rng, 0, 1));
  const Var d_edit = ag::parameter(random_tensor(4, 3, rng));
  const Var d_noise = ag::parameter(random_tensor(4, 3, rng));
  const Var support = ag::constant(random_tensor(4, 1, rng, 0, 1));

  std::vector<std::pair<std::string, double>> errors;
  errors.emplace_back("seg", testing::grad_check([&] { return loss_seg(logits, gt); }, {logits}).max_rel_error);
  errors.emplace_back("calib", testing::grad_check([&] { return loss_calib(logits); }, {logits}).max_rel_error);
  errors.emplace_back("pl", testing::grad_check([&] { return loss_pl(logits, teacher); }, {logits}).max_rel_error);
  errors.emplace_back("disent", testing::grad_check([&] { return loss_disent(d_edit, d_noise, support); },
                                                    {d_edit, d_noise})
                                    .max_rel_error);

  const ModelConfig config = testing::tiny_config(5);
  SigmaModel model(config);
  PairInputs in;
  in.f_o.grid = in.f_e.grid = config.grid();
  for (std::size_t l = 0; l < backbone::kLevels; ++l) {
    in.f_o.levels[l] = random_tensor(config.grid().tokens(), config.backbone.embed_dim, rng);
    in.f_e.levels[l] = random_tensor(config.grid().tokens(), config.backbone.embed_dim, rng);
  }
  in.intent = RealMap(config.side, config.side);
  for (std::size_t i = 0; i < in.intent.size(); ++i) in.intent[i] = rng.uniform();
  // Biases off zero so ReLU kinks do not sit on sampled points.
  for (const auto& [name, p] : model.params().all())
    if (name.ends_with(".bias"))
      for (std::size_t i = 0; i < p.value().size(); ++i) p.mutable_value()[i] = rng.uniform(-0.3, 0.3);
  std::vector<Var> params;
  for (const auto& [_, p] : model.params().all()) params.push_back(p);
  errors.emplace_back("mean-logit",
                      testing::grad_check([&] { return ag::mean(forward(model, in, config.side, config.side).logits); },
                                          params, 1e-5, 0.01, 11, 1e-6)
                          .max_rel_error);

  bool pass = true;
  std::string detail;
  for (const auto& [name, err] : errors) {
    pass = pass && err < 1e-4;
    detail += fmt::format("{} {:.2e}, ", name, err);
  }
  const double s = seconds_since(t0);
  pass = pass && s < 60.0;
  return {pass, detail + fmt::format("max rel error < 1e-4, {:.1f}s (< 60s)", s)};
}

Outcome loss_composition() {
  Rng rng(707);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    training::LossReport r;
    r.seg = rng.uniform(0, 5);
    r.calib = rng.uniform(0, 5);
    r.pl = rng.uniform(0, 5);
    r.disent = rng.uniform(0, 2);
    const double expected = 10.0 * r.seg + 0.1 * r.calib + 0.5 * r.pl + 0.5 * r.disent;
    const double got = training::stage2_total(r.seg, r.calib, r.pl, r.disent, training::LossWeights{}).total;
    const Var gv = training::stage2_total(ag::constant(Tensor::scalar(r.seg)), ag::constant(Tensor::scalar(r.calib)),
                                          ag::constant(Tensor::scalar(r.pl)), ag::constant(Tensor::scalar(r.disent)),
                                          training::LossWeights{});
    worst = std::max({worst, std::fabs(got - expected) / expected, std::fabs(gv.item() - expected) / expected});
  }
  return {worst < 1e-6, fmt::format("max relative deviation {:.2e} over 10000 draws (< 1e-6)", worst)};
}

Outcome ema_algebra() {
  Rng rng(808);
  std::size_t mismatches = 0;
  nn::ParamStore teacher, student;
  teacher.add("w", Tensor::scalar(rng.normal()));
  const Var w = student.add("w", Tensor::scalar(rng.normal()));
  training::AdamW opt;
  for (int step = 0; step < 200; ++step) {
    // Student moves by an optimizer step on a scalar quadratic.
    w.mutable_grad()[0] = 2.0 * (w.item() - 3.0);
    opt.step(student, 1e-2);
    w.mutable_grad()[0] = 0.0;
    const double decay = step % 3 == 0 ? 0.999 : rng.uniform();
    const double prev = teacher.get("w").item(), s = w.item();
    training::ema_update(teacher, student, decay);
    mismatches += teacher.get("w").item() != decay * prev + (1.0 - decay) * s;
  }

  // Gradient isolation through L_pl on the full model.
  const ModelConfig config = testing::tiny_config(2);
  const SigmaModel student_model(config);
  SigmaModel teacher_model(config);
  teacher_model.decoder().mask_head.bias.mutable_value()[0] = 3.0;
  PairInputs in;
  in.f_o.grid = in.f_e.grid = config.grid();
  for (std::size_t l = 0; l < backbone::kLevels; ++l) {
    in.f_o.levels[l] = random_tensor(config.grid().tokens(), config.backbone.embed_dim, rng);
    in.f_e.levels[l] = random_tensor(config.grid().tokens(), config.backbone.embed_dim, rng);
  }
  in.intent = RealMap(config.side, config.side, 0.3);
  const Var t = ag::sigmoid(forward(teacher_model, in, config.side, config.side).logits);
  ag::backward(training::loss_pl(forward(student_model, in, config.side, config.side).logits, t));
  double teacher_grad = 0.0, student_grad = 0.0;
  for (const auto& [_, p] : teacher_model.params().all())
    if (p.has_grad()) teacher_grad = std::max(teacher_grad, p.grad().max_abs());
  for (const auto& [_, p] : student_model.params().all())
    if (p.has_grad()) student_grad = std::max(student_grad, p.grad().max_abs());
  return {mismatches == 0 && teacher_grad == 0.0 && student_grad > 0.0,
          fmt::format("{} inexact EMA updates over 200 steps; teacher |grad| {:g} (want 0), student |grad| {:.3g}",
                      mismatches, teacher_grad, student_grad)};
}

Outcome parser_contract() {
  using ground::Action;
  using ground::TransformTuple;
  const ground::RuleBasedParser rule;
  const std::vector<std::pair<std::string, TransformTuple>> table{
      {"remove the cat", {"a cat", std::nullopt, Action::remove}},
      {"add a hat on the person", {std::nullopt, "a hat", Action::add}},
      {"make it more dramatic", {std::nullopt, std::nullopt, Action::global}},
  };
  std::size_t rule_ok = 0;
  for (const auto& [instruction, expected] : table) rule_ok += ground::parse_instruction(instruction, rule) == expected;

  // Provider mode against a local chat-completions stand-in that replays
  // canned replies in order.
  const std::vector<std::string> replies{
      R"({"original concept":"null","edited concept":"a bird","action type":"add"})",
      R"({"original concept":"the table","edited concept":"a vase","action type":"add"})",
      "```json\n{\"original concept\":\"cat\",\"edited concept\":\"null\",\"action type\":\"remove\"}\n```",
      R"({"original concept":"cat","action type":"remove"})",
      R"({"original concept":"sky","edited concept":"null","action type":"recolor"})",
  };
  std::atomic<std::size_t> next{0};
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const nlohmann::json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", replies.at(next++)}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const ground::LlmParser llm({fmt::format("http://127.0.0.1:{}/v1/chat/completions", port), "stub", "", 10});
  std::vector<std::string> provider_results;
  std::size_t provider_ok = 0;
  auto expect_tuple = [&](const TransformTuple& want) {
    try {
      const bool ok = llm.parse("instruction") == want;
      provider_ok += ok;
      provider_results.push_back(ok ? "ok" : "wrong tuple");
    } catch (const std::exception& e) {
      provider_results.push_back(e.what());
    }
  };
  auto expect_error = [&](auto tag) {
    try {
      llm.parse("instruction");
      provider_results.push_back("accepted");
    } catch (const decltype(tag)&) {
      ++provider_ok;
      provider_results.push_back("rejected");
    } catch (const std::exception& e) {
      provider_results.push_back(e.what());
    }
  };
  expect_tuple({std::nullopt, "a bird", Action::add});      // "null" -> empty
  expect_tuple({std::nullopt, "a vase", Action::add});      // forbidden slot cleared
  expect_error(ParserOutputInvalid("fenced"));              // not strict JSON
  expect_error(ParserOutputInvalid("missing"));             // missing key
  expect_error(UnknownAction("recolor"));                   // outside the vocabulary
  server.stop();
  worker.join();
  std::string joined;
  for (const auto& r : provider_results) joined += (joined.empty() ? "" : "; ") + r;
  return {rule_ok == 3 && provider_ok == 5,
          fmt::format("rule-based {}/3 reference tuples; provider replies {}/5 handled ({})", rule_ok, provider_ok,
                      joined)};
}

}  // namespace sigma::acceptance

int main(int argc, char** argv) {
  using namespace sigma::acceptance;
  spdlog::set_level(spdlog::level::err);
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "metric oracle", metric_oracle},
      {2, "otsu oracle", otsu_oracle},
      {3, "pixdiff monotonicity", pixdiff_monotonicity},
      {4, "action-conditioned fusion table", fusion_rule_table},
      {5, "shape contract", shape_contract},
      {6, "gradient checks", gradient_checks},
      {7, "loss composition", loss_composition},
      {8, "ema algebra", ema_algebra},
      {9, "toy overfit", toy_overfit},
      {10, "calibration effect", calibration_effect},
      {11, "instruction-prior effect", instruction_prior_effect},
      {12, "robustness direction", robustness_direction},
      {13, "determinism", determinism},
      {14, "parser contract", parser_contract},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
