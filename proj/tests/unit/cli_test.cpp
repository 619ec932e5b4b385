#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "sigma/corpus/corpus_io.hpp"
#include "sigma/image/codec.hpp"
#include "sigma/training/config.hpp"
#include "toy_data.hpp"

namespace fs = std::filesystem;
using namespace sigma;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "sigma_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(SIGMA_CLI_PATH) + " --log-level warn " + args + " > " +
                          (kRoot / "stdout.txt").string() + " 2> " + (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Labeled toy manifest of `n` rectangle edits.
fs::path write_manifest(const std::string& name, std::size_t n, std::uint64_t seed) {
  const fs::path dir = kRoot / name;
  fs::create_directories(dir);
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = testing::rectangle_edit_pair(28, 7, seed + i);
    const std::string id = name + "_" + std::to_string(i);
    codec::write_file_atomic(dir / (id + "_o.png"), codec::encode_png(p.original));
    codec::write_file_atomic(dir / (id + "_e.png"), codec::encode_png(p.edited));
    corpus::save_mask(dir / (id + "_m.png"), p.mask);
    EditRecord r{id, id + "_o.png", id + "_e.png", p.instruction, fs::path(id + "_m.png"),
                 i % 2 ? "replace" : "attribute_change", "toy"};
    text += corpus::record_to_json(r) + "\n";
  }
  const fs::path manifest = dir / "manifest.jsonl";
  codec::write_text_atomic(manifest, text);
  return manifest;
}

fs::path write_config() {
  training::PipelineConfig c;
  c.model = testing::tiny_config(1);
  c.model.side = 28;
  c.stage1 = {1000, 2, 2, false};
  c.stage2 = {1000, 2, 2, false};
  c.val_fraction = 0.0;
  const fs::path p = kRoot / "config.json";
  codec::write_text_atomic(p, training::config_to_json(c).dump(2));
  return p;
}

struct Fixture {
  fs::path manifest, config;
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    manifest = write_manifest("data", 2, 100);
    config = write_config();
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "parse prints the reference tuples") {
  REQUIRE(run("parse \"remove the cat\" \"add a hat on the person\" \"make it more dramatic\" --output-dir " +
              (kRoot / "parse").string()) == 0);
  const auto out = lines(kRoot / "parse" / "parse.jsonl");
  REQUIRE(out.size() == 3);
  const auto a = nlohmann::json::parse(out[0]), b = nlohmann::json::parse(out[1]), c = nlohmann::json::parse(out[2]);
  CHECK(a["original concept"] == "a cat");
  CHECK(a["edited concept"].is_null());
  CHECK(a["action type"] == "remove");
  CHECK(b["original concept"].is_null());
  CHECK(b["edited concept"] == "a hat");
  CHECK(b["action type"] == "add");
  CHECK(c["original concept"].is_null());
  CHECK(c["action type"] == "global");
  CHECK(read(kRoot / "stdout.txt") == read(kRoot / "parse" / "parse.jsonl"));
}

TEST_CASE_FIXTURE(Fixture, "stats totals equal the record count") {
  REQUIRE(run("stats --manifest " + manifest.string() + " --output-dir " + (kRoot / "stats").string()) == 0);
  const auto rows = lines(kRoot / "stats" / "stats.csv");
  REQUIRE(rows.size() >= 2);
  std::size_t total = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) total += std::stoul(rows[i].substr(rows[i].rfind(',') + 1));
  CHECK(total == 2);
  CHECK(fs::exists(kRoot / "stats" / "run.json"));
}

TEST_CASE_FIXTURE(Fixture, "baseline writes one mask per record and resumes") {
  const fs::path out = kRoot / "otsu";
  REQUIRE(run("baseline --mode otsu --manifest " + manifest.string() + " --output-dir " + out.string()) == 0);
  std::size_t masks = 0;
  for (const auto& e : fs::directory_iterator(out / "masks")) masks += e.path().extension() == ".png";
  CHECK(masks == 2);
  const auto manifest_lines = lines(out / "annotations.jsonl");
  REQUIRE(manifest_lines.size() == 2);
  CHECK(nlohmann::json::parse(manifest_lines[0])["annotator"] == "pixdiff_otsu");
  // The output manifest is itself a loadable manifest.
  CHECK(corpus::load_manifest(out / "annotations.jsonl").size() == 2);

  const auto stamp = fs::last_write_time(out / "masks" / "data_0.png");
  REQUIRE(run("baseline --mode otsu --manifest " + manifest.string() + " --output-dir " + out.string()) == 0);
  CHECK(fs::last_write_time(out / "masks" / "data_0.png") == stamp);
  CHECK(!fs::exists(out / "failures.jsonl"));

  CHECK(run("baseline --mode median --manifest " + manifest.string() + " --output-dir " + out.string()) == 2);
  CHECK(run("baseline --mode otsu --manifest " + (kRoot / "absent.jsonl").string() + " --output-dir " +
            out.string()) == 2);
}

TEST_CASE_FIXTURE(Fixture, "train, annotate, eval and robustness round trip") {
  const std::string cfg = " --config " + config.string();
  const fs::path s1 = kRoot / "s1", s1b = kRoot / "s1b", s2 = kRoot / "s2";

  CHECK(run("train --stage 2 --manifest " + manifest.string() + " --edit-manifest " + manifest.string() + cfg +
            " --output-dir " + s2.string()) == 2);
  CHECK(run("train --stage 1 --manifest " + manifest.string() + " --config " + (kRoot / "nope.json").string() +
            " --output-dir " + s1.string()) == 2);

  REQUIRE(run("train --stage 1 --manifest " + manifest.string() + cfg + " --seed 5 --output-dir " + s1.string()) ==
          0);
  const std::string first = read(kRoot / "stdout.txt");
  REQUIRE(run("train --stage 1 --manifest " + manifest.string() + cfg + " --seed 5 --output-dir " + s1b.string()) ==
          0);
  const std::string second = read(kRoot / "stdout.txt");
  CHECK(first.substr(first.find('\t')) == second.substr(second.find('\t')));
  CHECK(fs::exists(s1 / "metrics_stage1.jsonl"));

  REQUIRE(run("train --stage 2 --manifest " + manifest.string() + " --edit-manifest " + manifest.string() +
              " --checkpoint " + (s1 / "stage1_final.ckpt").string() + cfg + " --output-dir " + s2.string()) == 0);
  CHECK(fs::exists(s2 / "stage2_final.ckpt"));

  const std::string ckpt = (s2 / "stage2_final.ckpt").string();
  const fs::path ann = kRoot / "annotate";
  CHECK(run("annotate --manifest " + manifest.string() + " --checkpoint " + (kRoot / "none.ckpt").string() +
            " --output-dir " + ann.string()) == 2);

  const fs::path empty = kRoot / "empty.jsonl";
  codec::write_text_atomic(empty, "");
  REQUIRE(run("annotate --manifest " + empty.string() + " --checkpoint " + ckpt + " --output-dir " +
              (kRoot / "annotate_empty").string()) == 0);
  CHECK(read(kRoot / "annotate_empty" / "annotations.jsonl").empty());

  REQUIRE(run("annotate --manifest " + manifest.string() + " --checkpoint " + ckpt + " --output-dir " +
              ann.string()) == 0);
  const auto out = lines(ann / "annotations.jsonl");
  REQUIRE(out.size() == 2);
  const auto line = nlohmann::json::parse(out[1]);
  CHECK(line["annotator"] == "sigma");
  CHECK(line["config_digest"].get<std::string>().size() == 64);
  CHECK(corpus::load_mask(line["gt_mask_path"].get<std::string>()).width() == 28);

  // One unreadable record: the other still lands, exit 1, failures listed.
  std::string broken = read(manifest);
  broken += corpus::record_to_json({"ghost", kRoot / "missing_o.png", kRoot / "missing_e.png", "", {}, {}, "toy"}) +
            "\n";
  codec::write_text_atomic(kRoot / "data" / "broken.jsonl", broken);
  CHECK(run("annotate --manifest " + (kRoot / "data" / "broken.jsonl").string() + " --checkpoint " + ckpt +
            " --output-dir " + ann.string()) == 1);
  CHECK(lines(ann / "failures.jsonl").size() == 1);
  CHECK(lines(ann / "annotations.jsonl").size() == 2);

  const fs::path ev = kRoot / "eval";
  REQUIRE(run("eval --manifest " + manifest.string() + " --checkpoint " + ckpt + " --output-dir " + ev.string()) ==
          0);
  CHECK(lines(ev / "report.csv").size() == 2);
  CHECK(run("eval --manifest " + manifest.string() + " --output-dir " + ev.string()) == 2);

  const fs::path rb = kRoot / "robust";
  REQUIRE(run("robustness --manifest " + manifest.string() + " --baseline fixed --tau 10 --output-dir " +
              rb.string()) == 0);
  CHECK(lines(rb / "report.csv").size() == 18);
  CHECK(lines(rb / "flatness.csv").size() == 4);
  CHECK(fs::exists(rb / "plot_pixdiff_fixed_tau10_manifest_awgn.svg"));
}

TEST_CASE_FIXTURE(Fixture, "config errors exit with code 2") {
  codec::write_text_atomic(kRoot / "bad.json", R"({"seed": 1, "unknown_key": 3})");
  CHECK(run("stats --manifest " + manifest.string() + " --config " + (kRoot / "bad.json").string() +
            " --output-dir " + (kRoot / "x").string()) == 2);
  CHECK(run("stats --manifest " + manifest.string() + " --provider warp=1 --output-dir " + (kRoot / "x").string()) ==
        2);
  CHECK(run("frobnicate") == 2);
}
