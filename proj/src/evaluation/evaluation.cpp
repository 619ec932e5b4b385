#include "sigma/evaluation/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <tuple>

#include <fmt/format.h>

#include "sigma/core/errors.hpp"
#include "sigma/core/parallel.hpp"
#include "sigma/core/rng.hpp"
#include "sigma/corpus/corpus_io.hpp"
#include "sigma/image/codec.hpp"

namespace sigma::evaluation {
namespace {

PerturbSpec for_record(const PerturbSpec& perturb, std::size_t index) {
  PerturbSpec p = perturb;
  if (p.kind == PerturbKind::awgn) p.seed = derive_seed(perturb.seed, index);
  return p;
}

RecordMetrics score(const Annotator& annotator, const std::string& id, const RgbImage& original,
                    const RgbImage& edited, const ByteMap& mask, const std::string& instruction,
                    const PerturbSpec& perturb) {
  const RgbImage input = perturb.kind == PerturbKind::none ? edited : corpus::apply_perturbation(edited, perturb);
  const MaskResult pred = annotator.annotate(original, input, instruction);
  return {id, f1_iou(pred.binary, mask)};
}

void finish(BenchmarkRun& run) {
  std::vector<double> f1, iou;
  for (const RecordMetrics& r : run.records) {
    f1.push_back(r.metrics.f1);
    iou.push_back(r.metrics.iou);
  }
  run.f1 = macro_mean(std::move(f1));
  run.iou = macro_mean(std::move(iou));
}

// Larger means more severe.
double severity(const PerturbSpec& p) {
  return p.kind == PerturbKind::jpeg ? -static_cast<double>(p.jpeg_quality) : p.parameter();
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

std::string file_token(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out;
}

}  // namespace

double macro_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

BenchmarkRun evaluate_samples(const Annotator& annotator, const std::string& dataset,
                              const std::vector<EvalSample>& samples, const PerturbSpec& perturb,
                              std::size_t workers) {
  perturb.validate();
  if (samples.empty()) throw DataEmpty("dataset " + dataset + " has no records");
  for (const EvalSample& s : samples)
    if (s.mask.empty()) throw MissingGroundTruth(s.id);
  BenchmarkRun run{annotator.name(), dataset, perturb, std::vector<RecordMetrics>(samples.size()), 0.0, 0.0};
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const EvalSample& s = samples[i];
    run.records[i] = score(annotator, s.id, s.original, s.edited, s.mask, s.instruction, for_record(perturb, i));
  });
  finish(run);
  return run;
}

BenchmarkRun evaluate_dataset(const Annotator& annotator, const std::string& dataset,
                              const std::vector<EditRecord>& records, const PerturbSpec& perturb,
                              std::size_t workers) {
  perturb.validate();
  if (records.empty()) throw DataEmpty("dataset " + dataset + " has no records");
  for (const EditRecord& r : records)
    if (!r.gt_mask_path) throw MissingGroundTruth(r.id);
  BenchmarkRun run{annotator.name(), dataset, perturb, std::vector<RecordMetrics>(records.size()), 0.0, 0.0};
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const EditRecord& r = records[i];
    run.records[i] = score(annotator, r.id, codec::load_image(r.original_path), codec::load_image(r.edited_path),
                           corpus::load_mask(*r.gt_mask_path), r.instruction, for_record(perturb, i));
  });
  finish(run);
  return run;
}

std::vector<PerturbSpec> default_grid(std::uint64_t seed) {
  std::vector<PerturbSpec> grid{PerturbSpec::none()};
  for (int q : {90, 80, 70, 60}) grid.push_back(PerturbSpec::jpeg(q));
  for (double v : {5.0, 10.0, 15.0, 20.0, 25.0}) grid.push_back(PerturbSpec::awgn(v, seed));
  for (int k = 3; k <= 15; k += 2) grid.push_back(PerturbSpec::blur(k));
  return grid;
}

SweepResult robustness_sweep(const std::vector<PerturbSpec>& grid,
                             const std::function<BenchmarkRun(const PerturbSpec&)>& evaluate) {
  SweepResult result;
  const bool has_clean =
      std::any_of(grid.begin(), grid.end(), [](const PerturbSpec& p) { return p.kind == PerturbKind::none; });
  if (!has_clean) result.runs.push_back(evaluate(PerturbSpec::none()));
  for (const PerturbSpec& p : grid) result.runs.push_back(evaluate(p));
  const auto clean = std::find_if(result.runs.begin(), result.runs.end(),
                                  [](const BenchmarkRun& r) { return r.perturb.kind == PerturbKind::none; });
  if (clean != result.runs.begin()) std::rotate(result.runs.begin(), clean, clean + 1);
  const double clean_f1 = result.runs.front().f1;
  for (const BenchmarkRun& r : result.runs) {
    if (r.perturb.kind == PerturbKind::none) continue;
    auto [it, fresh] = result.flatness.try_emplace(r.perturb.kind, clean_f1 - r.f1);
    if (!fresh) it->second = std::max(it->second, clean_f1 - r.f1);
  }
  return result;
}

SweepResult robustness_sweep(const Annotator& annotator, const std::string& dataset,
                             const std::vector<EvalSample>& samples, const std::vector<PerturbSpec>& grid,
                             std::size_t workers) {
  return robustness_sweep(grid,
                          [&](const PerturbSpec& p) { return evaluate_samples(annotator, dataset, samples, p, workers); });
}

SweepResult robustness_sweep(const Annotator& annotator, const std::string& dataset,
                             const std::vector<EditRecord>& records, const std::vector<PerturbSpec>& grid,
                             std::size_t workers) {
  return robustness_sweep(grid,
                          [&](const PerturbSpec& p) { return evaluate_dataset(annotator, dataset, records, p, workers); });
}

std::string report_csv(const std::vector<BenchmarkRun>& runs) {
  std::string out = "annotator,dataset,perturb_kind,perturb_param,f1,iou,n_records\n";
  for (const BenchmarkRun& r : runs)
    out += fmt::format("{},{},{},{:g},{:.6f},{:.6f},{}\n", r.annotator, r.dataset, to_string(r.perturb.kind),
                       r.perturb.parameter(), r.f1, r.iou, r.records.size());
  return out;
}

std::string severity_plot_svg(const std::vector<BenchmarkRun>& family_runs) {
  std::vector<const BenchmarkRun*> runs;
  for (const BenchmarkRun& r : family_runs) runs.push_back(&r);
  std::stable_sort(runs.begin(), runs.end(), [](const BenchmarkRun* a, const BenchmarkRun* b) {
    return severity(a->perturb) < severity(b->perturb);
  });
  constexpr double kWidth = 480, kHeight = 320, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto x_of = [&](std::size_t i) {
    return runs.size() == 1 ? kLeft + plot_w / 2 : kLeft + plot_w * static_cast<double>(i) / static_cast<double>(runs.size() - 1);
  };
  auto y_of = [&](double v) { return kTop + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

  const std::string title = runs.empty() ? std::string("empty")
                                         : runs.front()->annotator + " / " + runs.front()->dataset + " / " +
                                               to_string(runs.front()->perturb.kind);
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:g}\" height=\"{1:g}\" viewBox=\"0 0 {0:g} {1:g}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2:g}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{3}</text>\n",
      kWidth, kHeight, kWidth / 2, svg_escape(title));
  svg += fmt::format("<line x1=\"{0:g}\" y1=\"{1:g}\" x2=\"{0:g}\" y2=\"{2:g}\" stroke=\"black\"/>\n", kLeft, kTop,
                     kTop + plot_h);
  svg += fmt::format("<line x1=\"{0:g}\" y1=\"{1:g}\" x2=\"{2:g}\" y2=\"{1:g}\" stroke=\"black\"/>\n", kLeft,
                     kTop + plot_h, kLeft + plot_w);
  for (double tick : {0.0, 0.5, 1.0})
    svg += fmt::format(
        "<text x=\"{:g}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.1f}</text>\n",
        kLeft - 6, y_of(tick) + 4, tick);
  for (std::size_t i = 0; i < runs.size(); ++i)
    svg += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:g}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:g}</text>\n",
        x_of(i), kTop + plot_h + 18, runs[i]->perturb.parameter());

  const std::pair<const char*, const char*> series[] = {{"f1", "#1f77b4"}, {"iou", "#d62728"}};
  for (const auto& [metric, colour] : series) {
    const bool is_f1 = std::string(metric) == "f1";
    std::string points;
    for (std::size_t i = 0; i < runs.size(); ++i)
      points += fmt::format("{}{:.2f},{:.2f}", i ? " " : "", x_of(i), y_of(is_f1 ? runs[i]->f1 : runs[i]->iou));
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", colour, points);
    for (std::size_t i = 0; i < runs.size(); ++i)
      svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", x_of(i),
                         y_of(is_f1 ? runs[i]->f1 : runs[i]->iou), colour);
  }
  svg += fmt::format(
      "<text x=\"{:g}\" y=\"{:g}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#1f77b4\">F1</text>\n"
      "<text x=\"{:g}\" y=\"{:g}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#d62728\">IoU</text>\n",
      kWidth - kRight - 40, kTop - 8, kWidth - kRight - 15, kTop - 8);
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> emit_report(const std::vector<BenchmarkRun>& runs,
                                               const std::filesystem::path& directory) {
  std::vector<std::filesystem::path> written;
  try {
    std::filesystem::create_directories(directory);
    const auto csv = directory / "report.csv";
    codec::write_text_atomic(csv, report_csv(runs));
    written.push_back(csv);
    // (annotator, dataset, family) -> runs, in first-appearance order.
    std::vector<std::pair<std::tuple<std::string, std::string, PerturbKind>, std::vector<BenchmarkRun>>> groups;
    for (const BenchmarkRun& r : runs) {
      if (r.perturb.kind == PerturbKind::none) continue;
      const auto key = std::make_tuple(r.annotator, r.dataset, r.perturb.kind);
      auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
      if (it == groups.end()) groups.push_back({key, {r}});
      else it->second.push_back(r);
    }
    for (const auto& [key, family] : groups) {
      const auto& [annotator, dataset, kind] = key;
      const auto path = directory / fmt::format("plot_{}_{}_{}.svg", file_token(annotator), file_token(dataset),
                                                to_string(kind));
      codec::write_text_atomic(path, severity_plot_svg(family));
      written.push_back(path);
    }
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoFailure(e.what());
  }
  return written;
}

}  // namespace sigma::evaluation
