#include <fstream>

#include "json.hpp"
#include "sigma/core/errors.hpp"
#include "sigma/corpus/corpus_io.hpp"

namespace sigma::corpus {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

std::string required_string(const json& obj, const char* key, std::size_t line, bool allow_empty) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw MalformedRecord(line, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw MalformedRecord(line, std::string("field '") + key + "' is not a string");
  std::string value = it->get<std::string>();
  if (!allow_empty && value.empty())
    throw MalformedRecord(line, std::string("field '") + key + "' is empty");
  return value;
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw MalformedRecord(line, std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

}  // namespace

EditRecord parse_record(const std::string& json_line, std::size_t line,
                        const std::filesystem::path& base_dir) {
  json obj;
  try {
    obj = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw MalformedRecord(line, e.what());
  }
  if (!obj.is_object()) throw MalformedRecord(line, "not a JSON object");
  EditRecord r;
  r.id = required_string(obj, "id", line, false);
  r.original_path = resolve(required_string(obj, "original_path", line, false), base_dir);
  r.edited_path = resolve(required_string(obj, "edited_path", line, false), base_dir);
  r.instruction = required_string(obj, "instruction", line, true);
  r.source_corpus = required_string(obj, "source_corpus", line, true);
  if (auto m = optional_string(obj, "gt_mask_path", line); m && !m->empty())
    r.gt_mask_path = resolve(*m, base_dir);
  if (auto c = optional_string(obj, "op_category", line); c && !c->empty()) r.op_category = *c;
  return r;
}

std::string record_to_json(const EditRecord& r) {
  json obj;
  obj["id"] = r.id;
  obj["original_path"] = r.original_path.string();
  obj["edited_path"] = r.edited_path.string();
  obj["instruction"] = r.instruction;
  obj["gt_mask_path"] = r.gt_mask_path ? json(r.gt_mask_path->string()) : json(nullptr);
  obj["op_category"] = r.op_category ? json(*r.op_category) : json(nullptr);
  obj["source_corpus"] = r.source_corpus;
  return obj.dump();
}

std::vector<EditRecord> load_manifest(const std::filesystem::path& path,
                                      const ManifestOptions& options) {
  if (!std::filesystem::is_regular_file(path)) throw MissingFile(path.string());
  std::ifstream in(path);
  if (!in) throw MissingFile(path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<EditRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    records.push_back(parse_record(text, line, base));
  }
  if (options.verify_images) {
    for (const EditRecord& r : records) {
      const auto od = codec::image_dimensions(codec::read_file(r.original_path));
      const auto ed = codec::image_dimensions(codec::read_file(r.edited_path));
      if (!(od == ed))
        throw ImageDimensionMismatch(r.id + ": original " + std::to_string(od.width) + "x" +
                                     std::to_string(od.height) + " vs edited " +
                                     std::to_string(ed.width) + "x" + std::to_string(ed.height));
      if (r.gt_mask_path) {
        const auto md = codec::image_dimensions(codec::read_file(*r.gt_mask_path));
        if (!(md == od)) throw ImageDimensionMismatch(r.id + ": mask size differs from images");
      }
    }
  }
  return records;
}

}  // namespace sigma::corpus
