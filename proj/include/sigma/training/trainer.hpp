#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sigma/corpus/records.hpp"
#include "sigma/model/sigma_model.hpp"
#include "sigma/training/checkpoint.hpp"
#include "sigma/training/config.hpp"
#include "sigma/training/losses.hpp"
#include "sigma/training/vae.hpp"

namespace sigma::training {

// One pair at any resolution; `mask` is empty for unlabeled pairs.
struct TrainSample {
  RgbImage original;
  RgbImage edited;
  ByteMap mask;
  std::string instruction;
};

struct StageIIData {
  std::vector<TrainSample> inpaint;  // labeled, for L_seg
  std::vector<RgbImage> calib;       // sources for (I, roundtrip(I)) pairs
  std::vector<TrainSample> edit;     // unlabeled, for L_pl and L_disent
};

struct StepLog {
  int stage = 1;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  LossReport loss;
};

struct TrainOptions {
  // Per-epoch, best and final checkpoints plus metrics_stage{n}.jsonl go
  // here; empty keeps everything in memory.
  std::filesystem::path output_dir;
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  std::shared_ptr<SigmaModel> model;
  std::shared_ptr<SigmaModel> teacher;  // Stage II only
  Checkpoint final_checkpoint;
  std::vector<StepLog> log;
  std::size_t steps = 0;
  double best_val_f1 = -1.0;  // negative without a validation split
};

// Loads a manifest's images (and masks when `require_mask`). Throws
// MissingGroundTruth(id) when a required mask is absent.
std::vector<TrainSample> load_samples(const std::vector<EditRecord>& records, bool require_mask);

// Number of optimizer steps a stage will take.
std::size_t planned_steps(const StageConfig& stage, std::size_t samples);

// Samples held out for best-checkpoint selection: floor(n * val_fraction),
// taken from the end of the list.
std::size_t validation_count(std::size_t samples, double val_fraction);

// Supervised L_seg on labeled pairs. Throws DataEmpty, ConfigInvalid.
TrainResult train_stage1(const PipelineConfig& config, const Providers& providers,
                         const std::vector<TrainSample>& data, const TrainOptions& options = {});

// Composite loss with an EMA teacher, starting from a Stage I checkpoint.
// Throws DataEmpty, ConfigInvalid, ShapeMismatch (checkpoint mismatch).
TrainResult train_stage2(const PipelineConfig& config, const Providers& providers,
                         const std::vector<std::shared_ptr<const VaeCodec>>& codecs,
                         const StageIIData& data, const Checkpoint& stage1,
                         const TrainOptions& options = {});

// Mean F1 of the model's binarised predictions over labeled samples.
double mean_f1(const SigmaModel& model, const Providers& providers, const std::vector<TrainSample>& data,
               double threshold = 0.5);

}  // namespace sigma::training
