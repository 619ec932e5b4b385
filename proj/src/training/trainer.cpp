#include "sigma/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sigma/core/errors.hpp"
#include "sigma/corpus/corpus_io.hpp"
#include "sigma/evaluation/metrics.hpp"
#include "sigma/image/codec.hpp"
#include "sigma/training/optim.hpp"

namespace sigma::training {
namespace {

// Seed streams; each consumer derives from the run seed with its own tag.
constexpr std::uint64_t kShuffleStream = 0x5100;
constexpr std::uint64_t kAugmentStream = 0x5200;
constexpr std::uint64_t kMixStream = 0x5300;
constexpr std::uint64_t kRoundtripStream = 0x5400;

struct Prepared {
  PairInputs inputs;
  ByteMap mask;  // side x side; empty when unlabeled
};

Prepared prepare_sample(const RgbImage& original, const RgbImage& edited, const ByteMap& mask,
                        const std::string& instruction, const Providers& providers,
                        const PipelineConfig& config, bool augment, std::uint64_t seed) {
  const std::size_t side = config.model.side;
  const bool labeled = !mask.empty();
  corpus::ResizedPair r = corpus::resize_pair(original, edited, labeled ? std::optional(mask) : std::nullopt, side);
  ByteMap m = labeled ? *r.mask : ByteMap(side, side);
  RgbImage o = std::move(r.original), e = std::move(r.edited);
  if (augment) {
    corpus::AugmentedTriple t = corpus::synchronized_augment(o, e, m, seed, side);
    o = std::move(t.original);
    e = std::move(t.edited);
    m = std::move(t.mask);
  }
  Prepared p;
  p.inputs = prepare_pair(o, e, instruction, providers, config.model, config.variant == Variant::full).inputs;
  if (labeled) p.mask = std::move(m);
  return p;
}

Prepared prepare_sample(const TrainSample& s, const Providers& providers, const PipelineConfig& config,
                        bool augment, std::uint64_t seed) {
  return prepare_sample(s.original, s.edited, s.mask, s.instruction, providers, config, augment, seed);
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::string log_line(const StepLog& s) {
  return fmt::format(
      "{{\"stage\":{},\"epoch\":{},\"step\":{},\"lr\":{:.9g},\"seg\":{:.9g},\"calib\":{:.9g},\"pl\":{:.9g},"
      "\"disent\":{:.9g},\"total\":{:.9g}}}\n",
      s.stage, s.epoch, s.step, s.lr, s.loss.seg, s.loss.calib, s.loss.pl, s.loss.disent, s.loss.total);
}

class Recorder {
 public:
  Recorder(const TrainOptions& options, int stage) : options_(options), stage_(stage) {
    if (!options_.output_dir.empty()) std::filesystem::create_directories(options_.output_dir);
  }

  void step(TrainResult& result, const StepLog& s) {
    result.log.push_back(s);
    text_ += log_line(s);
    if (options_.on_step) options_.on_step(s);
  }

  // Rewrites the metrics file and the epoch checkpoint atomically.
  void epoch(const Checkpoint& ckpt) {
    if (options_.output_dir.empty()) return;
    codec::write_text_atomic(options_.output_dir / fmt::format("metrics_stage{}.jsonl", stage_), text_);
    save_checkpoint(options_.output_dir / fmt::format("stage{}_epoch{:03d}.ckpt", stage_, ckpt.epoch), ckpt);
  }

  void named(const std::string& label, const Checkpoint& ckpt) {
    if (options_.output_dir.empty()) return;
    save_checkpoint(options_.output_dir / fmt::format("stage{}_{}.ckpt", stage_, label), ckpt);
  }

 private:
  const TrainOptions& options_;
  int stage_;
  std::string text_;
};

Checkpoint make_checkpoint(const PipelineConfig& config, const SigmaModel& model, const AdamW& opt,
                           const SigmaModel* teacher, int stage, std::size_t epoch, std::size_t step,
                           double val_f1) {
  Checkpoint c;
  c.model_config = model.config();
  c.variant = model.variant();
  c.stage = stage;
  c.epoch = epoch;
  c.step = step;
  c.config_digest = config_digest(config);
  c.val_f1 = val_f1;
  c.params = snapshot(model.params());
  c.adam_m = opt.first_moment();
  c.adam_v = opt.second_moment();
  c.adam_steps = opt.steps();
  if (teacher) c.ema = snapshot(teacher->params());
  return c;
}

// Probability map downsampled to the patch lattice, [N x 1].
Var patch_support(const Var& logits, std::size_t side, const backbone::PatchGrid& grid) {
  const auto pool = ag::Resampler::adaptive_avg_pool(side, side, grid.rows, grid.cols);
  return ag::detach(ag::resample(ag::sigmoid(logits), pool));
}

}  // namespace

std::vector<TrainSample> load_samples(const std::vector<EditRecord>& records, bool require_mask) {
  std::vector<TrainSample> out;
  out.reserve(records.size());
  for (const EditRecord& r : records) {
    TrainSample s;
    s.original = codec::load_image(r.original_path);
    s.edited = codec::load_image(r.edited_path);
    s.instruction = r.instruction;
    if (r.gt_mask_path) s.mask = corpus::load_mask(*r.gt_mask_path);
    else if (require_mask) throw MissingGroundTruth(r.id);
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t planned_steps(const StageConfig& stage, std::size_t samples) {
  const std::size_t per_epoch = (samples + stage.batch_size - 1) / stage.batch_size;
  const std::size_t total = stage.epochs * per_epoch;
  return stage.max_steps ? std::min(stage.max_steps, total) : total;
}

std::size_t validation_count(std::size_t samples, double val_fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(samples) * val_fraction));
}

double mean_f1(const SigmaModel& model, const Providers& providers, const std::vector<TrainSample>& data,
               double threshold) {
  if (data.empty()) return 0.0;
  const std::shared_ptr<const SigmaModel> view(&model, [](const SigmaModel*) {});
  const SigmaAnnotator annotator(view, providers, threshold);
  double total = 0.0;
  for (const TrainSample& s : data) {
    if (s.mask.empty()) throw MissingGroundTruth("unlabeled sample in F1 evaluation");
    total += evaluation::f1_iou(annotator.annotate(s.original, s.edited, s.instruction).binary, s.mask).f1;
  }
  return total / static_cast<double>(data.size());
}

TrainResult train_stage1(const PipelineConfig& config, const Providers& providers,
                         const std::vector<TrainSample>& data, const TrainOptions& options) {
  config.validate();
  if (data.empty()) throw DataEmpty("stage 1 has no training pairs");
  for (const TrainSample& s : data)
    if (s.mask.empty()) throw MissingGroundTruth("stage 1 needs masks for every pair");
  const std::size_t n_val = validation_count(data.size(), config.val_fraction);
  const std::vector<TrainSample> val(data.end() - static_cast<long>(n_val), data.end());
  const std::size_t n_train = data.size() - n_val;
  if (n_train == 0) throw DataEmpty("validation split leaves no training pairs");

  const StageConfig& stage = config.stage1;
  const std::size_t total = planned_steps(stage, n_train);
  TrainResult result;
  ModelConfig model_config = config.model;
  result.model = std::make_shared<SigmaModel>(model_config, config.variant);
  SigmaModel& model = *result.model;
  AdamW opt(config.optimizer);
  Recorder rec(options, 1);
  spdlog::info("stage 1: {} pairs ({} held out), {} steps", n_train, n_val, total);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < stage.epochs && step < total; ++epoch) {
    const std::vector<std::size_t> order = shuffled(n_train, derive_seed(config.seed, kShuffleStream + epoch));
    for (std::size_t begin = 0; begin < n_train && step < total; begin += stage.batch_size, ++step) {
      const std::size_t end = std::min(begin + stage.batch_size, n_train);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      const double lr = cosine_lr(config.optimizer.lr, step, total);
      model.params().zero_grad();
      double seg = 0.0;
      for (std::size_t j = begin; j < end; ++j) {
        const Prepared p = prepare_sample(data[order[j]], providers, config, stage.augment,
                                          derive_seed(config.seed, kAugmentStream + (step << 8) + (j - begin)));
        const ForwardResult r = forward(model, p.inputs, model_config.side, model_config.side);
        const Var loss = loss_seg(r.logits, p.mask);
        ag::backward(ag::scale(loss, inv_batch));
        seg += loss.item() * inv_batch;
      }
      opt.step(model.params(), lr);
      rec.step(result, {1, epoch, step, lr, stage2_total(seg, 0.0, 0.0, 0.0, {1.0, 0.0, 0.0, 0.0})});
    }
    const double val_f1 = val.empty() ? -1.0 : mean_f1(model, providers, val, config.threshold);
    Checkpoint ckpt = make_checkpoint(config, model, opt, nullptr, 1, epoch, step, val_f1);
    rec.epoch(ckpt);
    if (!val.empty() && val_f1 > result.best_val_f1) {
      result.best_val_f1 = val_f1;
      rec.named("best", ckpt);
    }
    result.final_checkpoint = std::move(ckpt);
  }
  if (val.empty()) rec.named("best", result.final_checkpoint);
  rec.named("final", result.final_checkpoint);
  result.steps = step;
  return result;
}

TrainResult train_stage2(const PipelineConfig& config, const Providers& providers,
                         const std::vector<std::shared_ptr<const VaeCodec>>& codecs, const StageIIData& data,
                         const Checkpoint& stage1, const TrainOptions& options) {
  config.validate();
  if (data.inpaint.empty()) throw DataEmpty("stage 2 has no labeled inpainting pairs");
  if (data.calib.empty()) throw DataEmpty("stage 2 has no calibration sources");
  if (data.edit.empty()) throw DataEmpty("stage 2 has no edit pairs");
  if (codecs.empty()) throw CodecUnavailable("stage 2 needs at least one latent codec");
  for (const TrainSample& s : data.inpaint)
    if (s.mask.empty()) throw MissingGroundTruth("stage 2 inpainting pairs need masks");
  if (stage1.stage != 1) throw ConfigInvalid("stage 2 must start from a stage 1 checkpoint");

  const std::size_t n_val = validation_count(data.inpaint.size(), config.val_fraction);
  const std::vector<TrainSample> val(data.inpaint.end() - static_cast<long>(n_val), data.inpaint.end());
  const std::size_t n_inpaint = data.inpaint.size() - n_val;
  if (n_inpaint == 0) throw DataEmpty("validation split leaves no inpainting pairs");

  const StageConfig& stage = config.stage2;
  const std::size_t n_edit = data.edit.size();
  const std::size_t total = planned_steps(stage, n_edit);
  TrainResult result;
  result.model = std::make_shared<SigmaModel>(model_from_checkpoint(stage1));
  SigmaModel& model = *result.model;
  result.teacher = std::make_shared<SigmaModel>(model.clone());
  SigmaModel& teacher = *result.teacher;
  const ModelConfig& mc = model.config();
  const std::size_t side = mc.side;
  AdamW opt(config.optimizer);
  Recorder rec(options, 2);
  spdlog::info("stage 2: {} edit, {} inpaint, {} calib sources, {} steps", n_edit, n_inpaint, data.calib.size(),
               total);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < stage.epochs && step < total; ++epoch) {
    const std::vector<std::size_t> order = shuffled(n_edit, derive_seed(config.seed, kShuffleStream + 0x80 + epoch));
    for (std::size_t begin = 0; begin < n_edit && step < total; begin += stage.batch_size, ++step) {
      const std::size_t end = std::min(begin + stage.batch_size, n_edit);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      const double lr = cosine_lr(config.optimizer.lr, step, total);
      Rng mix(derive_seed(config.seed, kMixStream + step));
      model.params().zero_grad();
      LossReport sum;
      for (std::size_t j = begin; j < end; ++j) {
        const std::uint64_t aug = derive_seed(config.seed, kAugmentStream + 0x1000000 + (step << 8) + (j - begin));

        const Prepared inpaint = prepare_sample(data.inpaint[mix.below(n_inpaint)], providers, config,
                                                stage.augment, derive_seed(aug, 1));

        const RgbImage& source = data.calib[mix.below(data.calib.size())];
        const RgbImage base = corpus::resize_pair(source, source, std::nullopt, side).original;
        RgbImage calib_o = base;
        if (stage.augment) {
          calib_o = corpus::synchronized_augment(base, base, ByteMap(side, side), derive_seed(aug, 2), side).original;
        }
        const double sigma = mix.uniform(0.0, config.max_latent_sigma);
        const VaeCodec& codec = pick_codec(codecs, mix);
        const RgbImage calib_e =
            vae_roundtrip(calib_o, sigma, codec, derive_seed(config.seed, kRoundtripStream + (step << 8) + (j - begin)));
        const Prepared calib = prepare_sample(calib_o, calib_e, {}, "", providers, config, false, 0);

        const Prepared edit = prepare_sample(data.edit[order[j]], providers, config, stage.augment,
                                             derive_seed(aug, 3));

        const ForwardResult r_seg = forward(model, inpaint.inputs, side, side);
        const ForwardResult r_cal = forward(model, calib.inputs, side, side);
        const ForwardResult r_edit = forward(model, edit.inputs, side, side);
        Var teacher_prob;
        {
          ag::NoGradGuard no_grad;
          teacher_prob = ag::sigmoid(forward(teacher, edit.inputs, side, side).logits);
        }
        const Var seg = loss_seg(r_seg.logits, inpaint.mask);
        const Var cal = loss_calib(r_cal.logits);
        const Var pl = loss_pl(r_edit.logits, teacher_prob);
        const Var dis = loss_disent(r_edit.e_v0, r_cal.e_v0, patch_support(r_edit.logits, side, mc.grid()));
        const Var total_j = stage2_total(seg, cal, pl, dis, config.loss_weights);
        ag::backward(ag::scale(total_j, inv_batch));
        sum.seg += seg.item() * inv_batch;
        sum.calib += cal.item() * inv_batch;
        sum.pl += pl.item() * inv_batch;
        sum.disent += dis.item() * inv_batch;
      }
      opt.step(model.params(), lr);
      ema_update(teacher.params(), model.params(), config.ema_decay);
      rec.step(result, {2, epoch, step, lr, stage2_total(sum.seg, sum.calib, sum.pl, sum.disent, config.loss_weights)});
    }
    const double val_f1 = val.empty() ? -1.0 : mean_f1(model, providers, val, config.threshold);
    Checkpoint ckpt = make_checkpoint(config, model, opt, &teacher, 2, epoch, step, val_f1);
    rec.epoch(ckpt);
    if (!val.empty() && val_f1 > result.best_val_f1) {
      result.best_val_f1 = val_f1;
      rec.named("best", ckpt);
    }
    result.final_checkpoint = std::move(ckpt);
  }
  if (val.empty()) rec.named("best", result.final_checkpoint);
  rec.named("final", result.final_checkpoint);
  result.steps = step;
  return result;
}

}  // namespace sigma::training
