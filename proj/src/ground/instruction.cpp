#include "sigma/ground/instruction.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "sigma/core/errors.hpp"

namespace sigma::ground {

std::string to_string(Action op) {
  switch (op) {
    case Action::add: return "add";
    case Action::remove: return "remove";
    case Action::replace: return "replace";
    case Action::attribute_change: return "attribute_change";
    case Action::global: return "global";
  }
  return "global";
}

Action action_from_string(const std::string& s) {
  if (s == "add") return Action::add;
  if (s == "remove") return Action::remove;
  if (s == "replace") return Action::replace;
  if (s == "attribute change" || s == "attribute_change") return Action::attribute_change;
  if (s == "global") return Action::global;
  throw UnknownAction(s);
}

TransformTuple repair(TransformTuple t) {
  auto clear = [&](std::optional<std::string>& slot, const char* name) {
    if (!slot) return;
    spdlog::warn("clearing {} '{}' for action {}", name, *slot, to_string(t.op));
    slot.reset();
  };
  if (t.op == Action::add || t.op == Action::global) clear(t.c_o, "original concept");
  if (t.op == Action::remove || t.op == Action::global) clear(t.c_e, "edited concept");
  return t;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<std::string> concept_or_empty(const std::string& s) {
  std::string t = trim(s);
  if (t.empty() || t == "null") return std::nullopt;
  return t;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::string join(const std::vector<std::string>& words, std::size_t from = 0,
                 std::size_t to = std::string::npos) {
  std::string out;
  to = std::min(to, words.size());
  for (std::size_t i = from; i < to; ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string strip_punctuation(std::string s) {
  while (!s.empty() && std::strchr(".!?,;:\"'", s.back())) s.pop_back();
  while (!s.empty() && std::strchr("\"'", s.front())) s.erase(s.begin());
  return s;
}

bool is_article(const std::string& w) { return w == "a" || w == "an" || w == "the"; }

bool is_possessive(const std::string& w) {
  return w.size() > 2 && (w.ends_with("'s") || w.ends_with("s'"));
}

constexpr std::array<const char*, 14> kMaterials{"wood",  "marble",   "stone", "metal", "glass",
                                                 "brick", "concrete", "gold",  "silver", "steel",
                                                 "fabric", "leather", "sand",  "ice"};
constexpr std::array<const char*, 7> kIntensifiers{"bright", "very", "slightly", "vivid",
                                                   "more",   "much", "really"};
// Words that open a trailing location phrase ("a hat on the person").
constexpr std::array<const char*, 12> kLocators{"on",   "in",     "at",    "near",  "behind", "under",
                                                "over", "beside", "above", "below", "inside", "next"};

template <std::size_t N>
bool contains(const std::array<const char*, N>& table, const std::string& w) {
  return std::any_of(table.begin(), table.end(), [&](const char* t) { return w == t; });
}

std::vector<std::string> cut_at_locator(const std::vector<std::string>& words) {
  // The first word is never a locator so "on" inside a noun phrase head survives.
  for (std::size_t i = 1; i < words.size(); ++i)
    if (contains(kLocators, words[i])) return {words.begin(), words.begin() + static_cast<long>(i)};
  return words;
}

// "the cat" -> "a cat"; materials become "<noun> texture"; plurals lose the article.
std::optional<std::string> object_phrase(std::vector<std::string> words) {
  words = cut_at_locator(words);
  if (words.empty()) return std::nullopt;
  const bool had_article = is_article(words.front());
  if (had_article) words.erase(words.begin());
  if (words.empty()) return std::nullopt;
  if (words.size() == 1 && contains(kMaterials, words[0])) return words[0] + " texture";
  const std::string& head = words.back();
  const bool plural = head.size() > 2 && head.back() == 's' && head[head.size() - 2] != 's';
  if (plural) return join(words);
  const bool vowel = std::strchr("aeiou", words.front()[0]) != nullptr;
  return std::string(vowel ? "an " : "a ") + join(words);
}

// Drops articles, possessive owners and intensifiers: "the boy's grey
// striped t-shirt" -> "grey striped t-shirt".
std::optional<std::string> attribute_phrase(const std::vector<std::string>& words) {
  std::vector<std::string> kept;
  for (const std::string& w : words) {
    if (is_possessive(w)) {
      kept.clear();
      continue;
    }
    if (is_article(w) || contains(kIntensifiers, w)) continue;
    kept.push_back(w);
  }
  if (kept.empty()) return std::nullopt;
  return join(kept);
}

std::size_t find_word(const std::vector<std::string>& words, const std::string& w, std::size_t from) {
  for (std::size_t i = from; i < words.size(); ++i)
    if (words[i] == w) return i;
  return std::string::npos;
}

TransformTuple two_concept(const std::optional<std::string>& from, const std::optional<std::string>& to) {
  TransformTuple t{from, to, Action::replace};
  if (from && to) {
    const auto a = split_words(*from), b = split_words(*to);
    if (a.back() == b.back() && *from != *to) t.op = Action::attribute_change;
  }
  return t;
}

}  // namespace

TransformTuple RuleBasedParser::parse(const std::string& instruction) const {
  std::vector<std::string> words;
  for (const std::string& w : split_words(lower(instruction))) {
    std::string s = strip_punctuation(w);
    if (!s.empty()) words.push_back(s);
  }
  if (words.empty()) return {};
  const std::string verb = words[0];
  const std::vector<std::string> rest(words.begin() + 1, words.end());

  if (verb == "add" || verb == "insert" || verb == "put" || verb == "place")
    return repair({std::nullopt, object_phrase(rest), Action::add});
  if (verb == "remove" || verb == "delete" || verb == "erase")
    return repair({object_phrase(rest), std::nullopt, Action::remove});
  if (verb == "replace") {
    const std::size_t with = find_word(rest, "with", 0);
    if (with != std::string::npos) {
      TransformTuple t{object_phrase({rest.begin(), rest.begin() + static_cast<long>(with)}),
                       object_phrase({rest.begin() + static_cast<long>(with) + 1, rest.end()}),
                       Action::replace};
      return t;
    }
  }
  if (verb == "turn") {
    const std::size_t into = find_word(rest, "into", 0);
    if (into != std::string::npos)
      return {object_phrase({rest.begin(), rest.begin() + static_cast<long>(into)}),
              object_phrase({rest.begin() + static_cast<long>(into) + 1, rest.end()}), Action::replace};
  }
  if (verb == "change") {
    std::size_t to = find_word(rest, "to", 0);
    if (to == std::string::npos) to = find_word(rest, "into", 0);
    if (to != std::string::npos)
      return two_concept(attribute_phrase({rest.begin(), rest.begin() + static_cast<long>(to)}),
                         attribute_phrase({rest.begin() + static_cast<long>(to) + 1, rest.end()}));
  }
  if (verb == "make" && rest.size() >= 2 && rest[0] == "the") {
    // "make the car red": object "a car", edited "a red car".
    const std::string object = rest[1];
    std::vector<std::string> attr(rest.begin() + 2, rest.end());
    if (!attr.empty()) {
      attr.push_back(object);
      return {object_phrase({object}), object_phrase(attr), Action::attribute_change};
    }
  }
  return {};
}

const char* const kParserSystemPrompt =
    R"(You are an expert at understanding image editing instructions.
Convert each instruction into EXACTLY one JSON object with these keys:
- "original concept"
- "edited concept"
- "action type"

Allowed values for "action type" are only:
1) "add"
2) "remove"
3) "attribute change"
4) "replace"
5) "global"

Definitions:
- add: a new object/concept is introduced.
- remove: an existing object/concept is deleted.
- attribute change: same object identity, only attribute/state/color/pose/
  expression/action/style detail changes.
- replace: one object/concept is swapped with another object/concept.
- global: whole-image change (e.g., weather, season, style, lighting,
  time of day).

Rules:
- Return strict JSON only, no markdown, no extra text.
- If information is implicit, infer concise concepts.
- Keep concepts short noun phrases.

Examples:
Instruction: "add a bird"
{"original concept":"null","edited concept":"a bird","action type":"add"}

Instruction: "remove the umbrella"
{"original concept":"umbrella present","edited concept":"null",
 "action type":"remove"}

Instruction: "change the red flowers to white flowers"
{"original concept":"red flowers","edited concept":"white flowers",
 "action type":"attribute change"}

Instruction: "replace the cat with a dog"
{"original concept":"cat","edited concept":"dog","action type":"replace"}

Instruction: "make it snowy"
{"original concept":"null","edited concept":"null","action type":"global"}
)";

TransformTuple tuple_from_provider_reply(const std::string& reply) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParserOutputInvalid(std::string("not JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParserOutputInvalid("reply is not a JSON object");
  auto field = [&](const char* key) -> std::string {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParserOutputInvalid(std::string("missing key '") + key + "'");
    if (it->is_null()) return {};
    if (!it->is_string()) throw ParserOutputInvalid(std::string("key '") + key + "' is not a string");
    return it->get<std::string>();
  };
  TransformTuple t;
  t.c_o = concept_or_empty(field("original concept"));
  t.c_e = concept_or_empty(field("edited concept"));
  t.op = action_from_string(trim(field("action type")));
  return repair(std::move(t));
}

LlmParser::LlmParser(LlmParserOptions options)
    : options_(std::move(options)), endpoint_(http::parse_endpoint(options_.endpoint)) {}

TransformTuple LlmParser::parse(const std::string& instruction) const {
  const nlohmann::json body{
      {"model", options_.model},
      {"temperature", 0},
      {"messages",
       {{{"role", "system"}, {"content", kParserSystemPrompt}},
        {{"role", "user"}, {"content", "Instruction: " + nlohmann::json(instruction).dump()}}}}};
  http::Options http_options;
  http_options.timeout_seconds = options_.timeout_seconds;
  http_options.bearer_token = options_.api_key;
  const nlohmann::json reply = http::post_json(endpoint_, body, http_options);
  std::string content;
  try {
    content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParserOutputInvalid(std::string("unexpected completion shape: ") + e.what());
  }
  return tuple_from_provider_reply(content);
}

TransformTuple parse_instruction(const std::string& instruction, const InstructionParser& parser) {
  return parser.parse(instruction);
}

}  // namespace sigma::ground
