#include <fmt/format.h>

#include "sigma/corpus/corpus_io.hpp"

namespace sigma::corpus {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::map<std::string, std::size_t> CorpusStats::by_category() const {
  std::map<std::string, std::size_t> out;
  for (const auto& [key, n] : counts) out[key.second] += n;
  return out;
}

std::size_t CorpusStats::total() const {
  std::size_t n = 0;
  for (const auto& entry : counts) n += entry.second;
  return n;
}

CorpusStats corpus_stats(const std::vector<EditRecord>& records) {
  CorpusStats stats;
  for (const EditRecord& r : records) {
    const std::string category =
        r.op_category && !r.op_category->empty() ? *r.op_category : kUncategorized;
    ++stats.counts[{r.source_corpus, category}];
  }
  return stats;
}

std::string stats_csv(const CorpusStats& stats) {
  std::string out = "source_corpus,op_category,count\n";
  for (const auto& [key, n] : stats.counts)
    out += fmt::format("{},{},{}\n", csv_field(key.first), csv_field(key.second), n);
  return out;
}

}  // namespace sigma::corpus
