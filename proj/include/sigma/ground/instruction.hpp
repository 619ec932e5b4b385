#pragma once

#include <memory>
#include <optional>
#include <string>

#include "sigma/core/http.hpp"

namespace sigma::ground {

enum class Action { add, remove, replace, attribute_change, global };

std::string to_string(Action op);
// Accepts "attribute change" and "attribute_change"; throws UnknownAction.
Action action_from_string(const std::string& s);

// (c_o, c_e, op). Present concepts are trimmed and non-empty.
struct TransformTuple {
  std::optional<std::string> c_o;
  std::optional<std::string> c_e;
  Action op = Action::global;
  friend bool operator==(const TransformTuple&, const TransformTuple&) = default;
};

// Clears slots the action forbids (c_o for add, c_e for remove, both for
// global) and logs a warning for each repair. Returns the repaired tuple.
TransformTuple repair(TransformTuple t);

class InstructionParser {
 public:
  virtual ~InstructionParser() = default;
  virtual TransformTuple parse(const std::string& instruction) const = 0;
};

// Deterministic keyword parser for offline use.
class RuleBasedParser final : public InstructionParser {
 public:
  TransformTuple parse(const std::string& instruction) const override;
};

// System prompt sent verbatim to the chat-completion provider.
extern const char* const kParserSystemPrompt;

// Decodes a provider reply: a strict JSON object with "original concept",
// "edited concept", "action type". "null" maps to an empty concept.
// Throws ParserOutputInvalid or UnknownAction.
TransformTuple tuple_from_provider_reply(const std::string& reply);

struct LlmParserOptions {
  std::string endpoint;  // OpenAI-compatible chat completions URL
  std::string model;
  std::string api_key;
  int timeout_seconds = 60;
};

// Chat-completion parser at temperature 0.
class LlmParser final : public InstructionParser {
 public:
  explicit LlmParser(LlmParserOptions options);
  TransformTuple parse(const std::string& instruction) const override;

 private:
  LlmParserOptions options_;
  http::Endpoint endpoint_;
};

TransformTuple parse_instruction(const std::string& instruction, const InstructionParser& parser);

}  // namespace sigma::ground
