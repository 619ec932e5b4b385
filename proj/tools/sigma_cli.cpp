#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "sigma/baselines/pixdiff.hpp"
#include "sigma/core/digest.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/core/parallel.hpp"
#include "sigma/corpus/corpus_io.hpp"
#include "sigma/evaluation/evaluation.hpp"
#include "sigma/ground/instruction.hpp"
#include "sigma/image/codec.hpp"
#include "sigma/model/sigma_model.hpp"
#include "sigma/training/checkpoint.hpp"
#include "sigma/training/config.hpp"
#include "sigma/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sigma;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

// Raised for bad invocations; maps to exit 2.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("UsageError: " + what) {}
};

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::vector<std::string> provider_overrides;  // id=endpoint
  std::size_t workers = 0;                      // 0: all cores
};

// Annotator choice shared by eval and robustness.
struct AnnotatorOptions {
  std::string checkpoint;
  std::string baseline;  // pixdiff mode
  int tau = 10;
};

std::string g_command_line;

void apply_provider_override(training::PipelineConfig& config, const std::string& entry) {
  const auto eq = entry.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("provider override must be id=value: " + entry);
  const std::string id = entry.substr(0, eq), value = entry.substr(eq + 1);
  if (id == "backbone") {
    config.model.backbone.endpoint = value;
  } else if (id == "parser") {
    config.parser.endpoint = value;
  } else if (id == "grounder") {
    config.grounder.endpoint = value;
  } else if (id == "grounder_cache") {
    config.grounder.cache_dir = value;
  } else if (id == "codec") {
    for (auto& c : config.codecs)
      if (c.kind == "http") c.endpoint = value;
  } else {
    throw UsageError("unknown provider id '" + id + "' (backbone, parser, grounder, grounder_cache, codec)");
  }
}

// Config file, then flags; flags win.
training::PipelineConfig resolve_config(const CommonOptions& common) {
  training::PipelineConfig config = common.config_path.empty() ? training::PipelineConfig{}
                                                               : training::load_config(common.config_path);
  if (common.seed) config.seed = *common.seed;
  for (const std::string& o : common.provider_overrides) apply_provider_override(config, o);
  config.validate();
  return config;
}

fs::path prepare_output_dir(const CommonOptions& common) {
  if (common.output_dir.empty()) throw UsageError("--output-dir is required");
  fs::create_directories(common.output_dir);
  return common.output_dir;
}

// Every run leaves the resolved config and its digest next to its outputs.
void write_run_record(const fs::path& dir, const training::PipelineConfig& config, json extra = json::object()) {
  json run = std::move(extra);
  run["command"] = g_command_line;
  run["seed"] = config.seed;
  run["config_digest"] = training::config_digest(config);
  run["config"] = training::config_to_json(config);
  codec::write_text_atomic(dir / "run.json", run.dump(2) + "\n");
}

// Model settings always come from the checkpoint so the backbone and the
// decoder agree with the stored weights.
void adopt_checkpoint_model(training::PipelineConfig& config, const training::Checkpoint& ckpt) {
  if (training::model_config_to_json(config.model) != training::model_config_to_json(ckpt.model_config) ||
      config.variant != ckpt.variant)
    spdlog::warn("model settings differ from the checkpoint; using the checkpoint's");
  config.model = ckpt.model_config;
  config.variant = ckpt.variant;
}

std::shared_ptr<const Annotator> make_sigma_annotator(training::PipelineConfig& config, const std::string& path,
                                                      std::string* checkpoint_digest) {
  const training::Checkpoint ckpt = training::load_checkpoint(path);
  adopt_checkpoint_model(config, ckpt);
  if (checkpoint_digest) *checkpoint_digest = training::checkpoint_digest(path);
  auto model = std::make_shared<const SigmaModel>(training::model_from_checkpoint(ckpt));
  return std::make_shared<SigmaAnnotator>(model, training::make_providers(config), config.threshold);
}

std::shared_ptr<const Annotator> make_baseline_annotator(const std::string& mode, int tau) {
  return std::make_shared<baselines::PixDiffAnnotator>(
      baselines::PixDiffSpec{baselines::pixdiff_mode_from_string(mode), tau});
}

std::shared_ptr<const Annotator> choose_annotator(const AnnotatorOptions& a, training::PipelineConfig& config,
                                                  std::string* checkpoint_digest) {
  if (a.checkpoint.empty() == a.baseline.empty())
    throw UsageError("pass exactly one of --checkpoint or --baseline");
  if (!a.checkpoint.empty()) return make_sigma_annotator(config, a.checkpoint, checkpoint_digest);
  return make_baseline_annotator(a.baseline, a.tau);
}

void reject_duplicate_ids(const std::vector<EditRecord>& records) {
  std::set<std::string> seen;
  for (const EditRecord& r : records)
    if (!seen.insert(r.id).second) throw ConfigInvalid("duplicate record id '" + r.id + "'");
}

// File-system safe and injective: ids that need escaping get a digest suffix.
std::string mask_file_name(const std::string& id) {
  std::string safe;
  for (char c : id) safe += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_';
  if (safe != id || safe.empty() || safe.front() == '.') safe += "-" + sha256_hex(id).substr(0, 12);
  return safe + ".png";
}

// A mask is reusable when it decodes as a binary mask of the original's size.
bool valid_existing_mask(const fs::path& mask_path, const EditRecord& record) {
  if (!fs::is_regular_file(mask_path)) return false;
  try {
    const ByteMap mask = corpus::load_mask(mask_path);
    const auto dims = codec::image_dimensions(codec::read_file(record.original_path));
    return mask.width() == dims.width && mask.height() == dims.height;
  } catch (const std::exception&) {
    return false;
  }
}

struct MaskJob {
  const Annotator* annotator = nullptr;
  fs::path output_dir;
  bool force = false;
  std::size_t workers = 0;
  json provenance;  // merged into every output manifest line
};

// Writes masks/<id>.png per record, annotations.jsonl for the successes and
// failures.jsonl when any record failed. Returns the exit code.
int run_mask_job(const std::vector<EditRecord>& records, const MaskJob& job) {
  reject_duplicate_ids(records);
  const fs::path mask_dir = job.output_dir / "masks";
  fs::create_directories(mask_dir);

  std::vector<std::string> errors(records.size());
  std::vector<char> reused(records.size(), 0);
  parallel_for(records.size(), job.workers, [&](std::size_t i) {
    const EditRecord& r = records[i];
    const fs::path path = mask_dir / mask_file_name(r.id);
    if (!job.force && valid_existing_mask(path, r)) {
      reused[i] = 1;
      return;
    }
    try {
      const MaskResult result = predict(r, *job.annotator);
      corpus::save_mask(path, result.binary);
    } catch (const std::exception& e) {
      errors[i] = e.what();
      spdlog::error("{}: {}", r.id, e.what());
    }
  });

  std::string manifest, failures;
  std::size_t failed = 0, skipped = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!errors[i].empty()) {
      ++failed;
      failures += json{{"id", records[i].id}, {"error", errors[i]}}.dump() + "\n";
      continue;
    }
    skipped += reused[i];
    EditRecord out = records[i];
    out.gt_mask_path = fs::absolute(mask_dir / mask_file_name(out.id));
    json line = json::parse(corpus::record_to_json(out));
    line["annotator"] = job.annotator->name();
    line.update(job.provenance);
    manifest += line.dump() + "\n";
  }
  codec::write_text_atomic(job.output_dir / "annotations.jsonl", manifest);
  const fs::path failure_path = job.output_dir / "failures.jsonl";
  if (failed)
    codec::write_text_atomic(failure_path, failures);
  else
    fs::remove(failure_path);
  spdlog::info("{} records: {} annotated, {} already present, {} failed", records.size(),
               records.size() - failed - skipped, skipped, failed);
  return failed ? kExitPartial : kExitOk;
}

int cmd_annotate(const CommonOptions& common, const std::string& manifest, const std::string& checkpoint,
                 bool force) {
  training::PipelineConfig config = resolve_config(common);
  const auto records = corpus::load_manifest(manifest);
  if (checkpoint.empty()) throw UsageError("--checkpoint is required");
  std::string ckpt_digest;
  const auto annotator = make_sigma_annotator(config, checkpoint, &ckpt_digest);
  const fs::path out = prepare_output_dir(common);
  write_run_record(out, config, {{"checkpoint_digest", ckpt_digest}});
  return run_mask_job(records, {annotator.get(), out, force, common.workers,
                                {{"config_digest", training::config_digest(config)},
                                 {"checkpoint_digest", ckpt_digest}}});
}

int cmd_baseline(const CommonOptions& common, const std::string& manifest, const std::string& mode, int tau,
                 bool force) {
  const training::PipelineConfig config = resolve_config(common);
  const auto records = corpus::load_manifest(manifest);
  const auto annotator = make_baseline_annotator(mode, tau);
  const fs::path out = prepare_output_dir(common);
  write_run_record(out, config, {{"annotator", annotator->name()}});
  return run_mask_job(records, {annotator.get(), out, force, common.workers,
                                {{"config_digest", training::config_digest(config)}}});
}

std::vector<training::TrainSample> load_training_samples(const std::string& manifest, bool labeled) {
  return training::load_samples(corpus::load_manifest(manifest), labeled);
}

int cmd_train(const CommonOptions& common, int stage, const std::string& manifest, const std::string& edit_manifest,
              const std::string& calib_manifest, const std::string& checkpoint) {
  training::PipelineConfig config = resolve_config(common);
  if (manifest.empty()) throw UsageError("--manifest is required");
  training::TrainOptions options;
  options.on_step = [](const training::StepLog& s) {
    spdlog::info("stage {} epoch {} step {} lr {:.3g} loss {:.5f}", s.stage, s.epoch, s.step, s.lr, s.loss.total);
  };

  training::TrainResult result;
  if (stage == 1) {
    const auto data = load_training_samples(manifest, true);
    const fs::path out = prepare_output_dir(common);
    options.output_dir = out;
    write_run_record(out, config);
    result = training::train_stage1(config, training::make_providers(config), data, options);
  } else {
    if (checkpoint.empty()) throw UsageError("stage 2 needs --checkpoint pointing at a stage 1 checkpoint");
    if (edit_manifest.empty()) throw UsageError("stage 2 needs --edit-manifest");
    const training::Checkpoint stage1 = training::load_checkpoint(checkpoint);
    adopt_checkpoint_model(config, stage1);
    training::StageIIData data;
    data.inpaint = load_training_samples(manifest, true);
    data.edit = load_training_samples(edit_manifest, false);
    if (calib_manifest.empty()) {
      for (const auto& s : data.inpaint) data.calib.push_back(s.original);
    } else {
      for (const auto& s : load_training_samples(calib_manifest, false)) data.calib.push_back(s.original);
    }
    const fs::path out = prepare_output_dir(common);
    options.output_dir = out;
    write_run_record(out, config, {{"stage1_checkpoint_digest", training::checkpoint_digest(checkpoint)}});
    result = training::train_stage2(config, training::make_providers(config), training::make_codecs(config), data,
                                    stage1, options);
  }
  const fs::path final_path = fs::path(common.output_dir) / fmt::format("stage{}_final.ckpt", stage);
  fmt::print("{}\t{}\n", final_path.string(), training::checkpoint_digest(final_path));
  return kExitOk;
}

// Datasets are named by manifest stem unless names are given.
std::vector<std::string> dataset_names(const std::vector<std::string>& manifests, std::vector<std::string> names) {
  if (names.empty())
    for (const std::string& m : manifests) names.push_back(fs::path(m).stem().string());
  if (names.size() != manifests.size()) throw UsageError("--dataset must be given once per --manifest");
  return names;
}

void print_runs(const std::vector<evaluation::BenchmarkRun>& runs) {
  for (const auto& r : runs)
    fmt::print("{}\t{}\t{}\t{:g}\tF1 {:.4f}\tIoU {:.4f}\n", r.annotator, r.dataset, to_string(r.perturb.kind),
               r.perturb.parameter(), r.f1, r.iou);
}

int cmd_eval(const CommonOptions& common, const std::vector<std::string>& manifests,
             const std::vector<std::string>& names_in, const AnnotatorOptions& a) {
  training::PipelineConfig config = resolve_config(common);
  const auto names = dataset_names(manifests, names_in);
  std::vector<std::vector<EditRecord>> datasets;
  for (const std::string& m : manifests) datasets.push_back(corpus::load_manifest(m));
  std::string ckpt_digest;
  const auto annotator = choose_annotator(a, config, &ckpt_digest);
  const fs::path out = prepare_output_dir(common);
  write_run_record(out, config, {{"annotator", annotator->name()}, {"checkpoint_digest", ckpt_digest}});
  std::vector<evaluation::BenchmarkRun> runs;
  for (std::size_t i = 0; i < datasets.size(); ++i)
    runs.push_back(evaluation::evaluate_dataset(*annotator, names[i], datasets[i], {}, common.workers));
  evaluation::emit_report(runs, out);
  print_runs(runs);
  return kExitOk;
}

int cmd_robustness(const CommonOptions& common, const std::vector<std::string>& manifests,
                   const std::vector<std::string>& names_in, const AnnotatorOptions& a) {
  training::PipelineConfig config = resolve_config(common);
  const auto names = dataset_names(manifests, names_in);
  std::vector<std::vector<EditRecord>> datasets;
  for (const std::string& m : manifests) datasets.push_back(corpus::load_manifest(m));
  std::string ckpt_digest;
  const auto annotator = choose_annotator(a, config, &ckpt_digest);
  const fs::path out = prepare_output_dir(common);
  write_run_record(out, config, {{"annotator", annotator->name()}, {"checkpoint_digest", ckpt_digest}});

  std::vector<evaluation::BenchmarkRun> runs;
  std::string flatness = "annotator,dataset,perturb_kind,max_f1_drop\n";
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto sweep =
        evaluation::robustness_sweep(*annotator, names[i], datasets[i], evaluation::default_grid(config.seed),
                                     common.workers);
    runs.insert(runs.end(), sweep.runs.begin(), sweep.runs.end());
    for (const auto& [kind, drop] : sweep.flatness)
      flatness += fmt::format("{},{},{},{:.6f}\n", annotator->name(), names[i], to_string(kind), drop);
  }
  evaluation::emit_report(runs, out);
  codec::write_text_atomic(out / "flatness.csv", flatness);
  print_runs(runs);
  return kExitOk;
}

json tuple_json(const std::string& instruction, const ground::TransformTuple& t) {
  return {{"instruction", instruction},
          {"original concept", t.c_o ? json(*t.c_o) : json(nullptr)},
          {"edited concept", t.c_e ? json(*t.c_e) : json(nullptr)},
          {"action type", ground::to_string(t.op)}};
}

int cmd_parse(const CommonOptions& common, std::vector<std::string> instructions, const std::string& file) {
  const training::PipelineConfig config = resolve_config(common);
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw MissingFile(file);
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) instructions.push_back(line);
  }
  const Providers providers = training::make_providers(config);
  std::string out;
  bool failed = false;
  for (const std::string& instruction : instructions) {
    try {
      out += tuple_json(instruction, ground::parse_instruction(instruction, *providers.parser)).dump() + "\n";
    } catch (const Error& e) {
      failed = true;
      spdlog::error("'{}': {}", instruction, e.what());
    }
  }
  fmt::print("{}", out);
  if (!common.output_dir.empty()) {
    const fs::path dir = prepare_output_dir(common);
    write_run_record(dir, config);
    codec::write_text_atomic(dir / "parse.jsonl", out);
  }
  return failed ? kExitPartial : kExitOk;
}

int cmd_stats(const CommonOptions& common, const std::vector<std::string>& manifests) {
  const training::PipelineConfig config = resolve_config(common);
  std::vector<EditRecord> records;
  for (const std::string& m : manifests) {
    auto part = corpus::load_manifest(m);
    records.insert(records.end(), part.begin(), part.end());
  }
  const std::string csv = corpus::stats_csv(corpus::corpus_stats(records));
  const fs::path out = prepare_output_dir(common);
  write_run_record(out, config);
  codec::write_text_atomic(out / "stats.csv", csv);
  fmt::print("{}", csv);
  return kExitOk;
}

void add_common(CLI::App* sub, CommonOptions& common, bool parallel = false) {
  sub->add_option("--config", common.config_path, "Pipeline config JSON");
  sub->add_option("--seed", common.seed, "Overrides the config seed");
  sub->add_option("--output-dir", common.output_dir, "Directory for every output (created if absent)");
  sub->add_option("--provider", common.provider_overrides,
                  "Endpoint or path override, id=value (backbone, parser, grounder, grounder_cache, codec)");
  if (parallel) sub->add_option("--workers", common.workers, "Worker threads for per-record work (0 = all cores)");
}

void add_annotator_choice(CLI::App* sub, AnnotatorOptions& a) {
  sub->add_option("--checkpoint", a.checkpoint, "Trained checkpoint (SIGMA annotator)");
  sub->add_option("--baseline", a.baseline, "PixDiff mode instead of a checkpoint: fixed, morph, otsu");
  sub->add_option("--tau", a.tau, "Threshold for --baseline fixed")->capture_default_str();
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigInvalid*>(&e) ||
      dynamic_cast<const MissingFile*>(&e) || dynamic_cast<const MalformedRecord*>(&e) ||
      dynamic_cast<const DecodeFailure*>(&e) || dynamic_cast<const InvalidSpec*>(&e) ||
      dynamic_cast<const MissingGroundTruth*>(&e) || dynamic_cast<const DataEmpty*>(&e) ||
      dynamic_cast<const ImageDimensionMismatch*>(&e) || dynamic_cast<const ShapeMismatch*>(&e))
    return kExitConfig;
  return kExitPartial;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);
  spdlog::set_default_logger(spdlog::stderr_logger_mt("sigma"));

  CLI::App app{"Edit-mask annotation: train, annotate, evaluate and inspect image-edit corpora"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")->capture_default_str();

  CommonOptions common;
  AnnotatorOptions choice;
  std::string manifest, edit_manifest, calib_manifest, checkpoint, mode = "fixed", file;
  std::vector<std::string> manifests, names, instructions;
  bool force = false;
  int stage = 1, tau = 10;

  auto* annotate = app.add_subcommand("annotate", "Write a mask per manifest record with a trained checkpoint");
  add_common(annotate, common, true);
  annotate->add_option("--manifest", manifest, "Input manifest (JSONL)")->required();
  annotate->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  annotate->add_flag("--force", force, "Recompute masks that already exist");

  auto* train = app.add_subcommand("train", "Run stage 1 (supervised) or stage 2 (calibration and self-training)");
  add_common(train, common);
  train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--manifest", manifest, "Labeled pairs");
  train->add_option("--edit-manifest", edit_manifest, "Stage 2: unlabeled edit pairs");
  train->add_option("--calib-manifest", calib_manifest,
                    "Stage 2: sources for calibration roundtrips (default: originals of --manifest)");
  train->add_option("--checkpoint", checkpoint, "Stage 2: stage 1 checkpoint");

  auto* eval = app.add_subcommand("eval", "Score an annotator against labeled manifests");
  add_common(eval, common, true);
  eval->add_option("--manifest", manifests, "Labeled manifest (repeatable)")->required();
  eval->add_option("--dataset", names, "Dataset name per manifest (default: file stem)");
  add_annotator_choice(eval, choice);

  auto* robust = app.add_subcommand("robustness", "Sweep JPEG, noise and blur perturbations");
  add_common(robust, common, true);
  robust->add_option("--manifest", manifests, "Labeled manifest (repeatable)")->required();
  robust->add_option("--dataset", names, "Dataset name per manifest (default: file stem)");
  add_annotator_choice(robust, choice);

  auto* baseline = app.add_subcommand("baseline", "Write PixDiff masks for a manifest");
  add_common(baseline, common, true);
  baseline->add_option("--manifest", manifest, "Input manifest (JSONL)")->required();
  baseline->add_option("--mode", mode, "fixed, morph or otsu")->capture_default_str();
  baseline->add_option("--tau", tau, "Threshold for fixed mode")->capture_default_str();
  baseline->add_flag("--force", force, "Recompute masks that already exist");

  auto* parse = app.add_subcommand("parse", "Parse instructions into (original, edited, action) tuples");
  add_common(parse, common);
  parse->add_option("instructions", instructions, "Instructions to parse");
  parse->add_option("--file", file, "File with one instruction per line");

  auto* stats = app.add_subcommand("stats", "Count records per source corpus and edit category");
  add_common(stats, common);
  stats->add_option("--manifest", manifests, "Manifest (repeatable)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*annotate) return cmd_annotate(common, manifest, checkpoint, force);
    if (*train) return cmd_train(common, stage, manifest, edit_manifest, calib_manifest, checkpoint);
    if (*eval) return cmd_eval(common, manifests, names, choice);
    if (*robust) return cmd_robustness(common, manifests, names, choice);
    if (*baseline) return cmd_baseline(common, manifest, mode, tau, force);
    if (*parse) return cmd_parse(common, instructions, file);
    if (*stats) return cmd_stats(common, manifests);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return kExitConfig;
}
