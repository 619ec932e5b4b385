#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sigma/corpus/annotator.hpp"
#include "sigma/corpus/records.hpp"
#include "sigma/evaluation/metrics.hpp"

namespace sigma::evaluation {

// One labeled pair held in memory.
struct EvalSample {
  std::string id;
  RgbImage original;
  RgbImage edited;
  ByteMap mask;
  std::string instruction;
};

struct RecordMetrics {
  std::string id;
  PixelMetrics metrics;
};

struct BenchmarkRun {
  std::string annotator;
  std::string dataset;
  PerturbSpec perturb;  // kind none for the clean run
  std::vector<RecordMetrics> records;  // manifest order
  double f1 = 0.0;   // unweighted mean over records
  double iou = 0.0;
};

// Mean of per-record values, summed in sorted order so the result does not
// depend on record order.
double macro_mean(std::vector<double> values);

// The perturbation touches the edited image only. AWGN record i draws from
// derive_seed(perturb.seed, i). Records are scored on `workers` threads (0
// means all cores); results keep input order. Throws DataEmpty,
// MissingGroundTruth(id).
BenchmarkRun evaluate_samples(const Annotator& annotator, const std::string& dataset,
                              const std::vector<EvalSample>& samples, const PerturbSpec& perturb = {},
                              std::size_t workers = 1);
BenchmarkRun evaluate_dataset(const Annotator& annotator, const std::string& dataset,
                              const std::vector<EditRecord>& records, const PerturbSpec& perturb = {},
                              std::size_t workers = 1);

// Clean run, JPEG QF {90, 80, 70, 60}, AWGN variance {5, 10, 15, 20, 25} and
// blur kernels {3, 5, ..., 15}.
std::vector<PerturbSpec> default_grid(std::uint64_t seed = 0);

struct SweepResult {
  std::vector<BenchmarkRun> runs;  // grid order, clean run first
  // Per perturbation family: max over its runs of (clean F1 - run F1).
  std::map<PerturbKind, double> flatness;
};

// Runs `evaluate` once per grid cell (a clean cell is added when absent).
SweepResult robustness_sweep(const std::vector<PerturbSpec>& grid,
                             const std::function<BenchmarkRun(const PerturbSpec&)>& evaluate);
SweepResult robustness_sweep(const Annotator& annotator, const std::string& dataset,
                             const std::vector<EvalSample>& samples, const std::vector<PerturbSpec>& grid,
                             std::size_t workers = 1);
SweepResult robustness_sweep(const Annotator& annotator, const std::string& dataset,
                             const std::vector<EditRecord>& records, const std::vector<PerturbSpec>& grid,
                             std::size_t workers = 1);

// CSV with header annotator,dataset,perturb_kind,perturb_param,f1,iou,n_records.
std::string report_csv(const std::vector<BenchmarkRun>& runs);

// SVG line plot of F1 and IoU against severity for runs of one family of
// one (annotator, dataset); points ordered from mild to severe.
std::string severity_plot_svg(const std::vector<BenchmarkRun>& family_runs);

// Writes report.csv and one plot_{annotator}_{dataset}_{family}.svg per
// family present. Returns the written paths. Throws IoFailure.
std::vector<std::filesystem::path> emit_report(const std::vector<BenchmarkRun>& runs,
                                               const std::filesystem::path& directory);

}  // namespace sigma::evaluation
