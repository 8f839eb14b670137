#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace acrodis::prompting {

inline constexpr std::string_view kSinglePassTask =
    "Find the acronym in the text and expand the meaning of the acronym in the given text.";
inline constexpr std::string_view kExpansionTask =
    "Read the input text carefully, understand the context and expand the meaning of the acronym in the given "
    "text.";
inline constexpr std::string_view kDetectionTask = "List every acronym present in the text.";
inline constexpr std::string_view kAnnotationTask =
    "Detect and list all possible acronyms, equations, and alphanumeric characters in the text.";

inline constexpr std::string_view kStrictJsonRule = "Output strict JSON on one line";
inline constexpr std::string_view kExpansionSchemaRule =
    "Use the keys acronym, expansion, confidence (a number from 0 to 1) and rationale";
inline constexpr std::string_view kDetectionSchemaRule = "Use the key acronyms holding an array of strings";
inline constexpr std::string_view kAnnotationSchemaRule = "Use the key items holding an array of strings";

enum class PromptKind { single_pass, detection, expansion, annotation };

/// One rendered zero-shot prompt. `serialize()` yields the wire form, a
/// compact JSON object with keys in the order Task, Text, Acronym, Rules.
struct Prompt {
  std::string task;
  std::string text;
  std::optional<std::string> acronym;
  std::vector<std::string> rules;

  std::string serialize() const;
  /// Throws DataError when `wire` is not a serialized prompt.
  static Prompt parse(std::string_view wire);
  /// Classifies by the task string; nullopt for an unknown task.
  std::optional<PromptKind> kind() const;

  bool operator==(const Prompt&) const = default;
};

/// Throws DataError on empty text.
Prompt render_single_pass(std::string_view input_text);
/// Throws DataError on empty inputs or when `acronym` is not a token of the text.
Prompt render_cascaded_expansion(std::string_view input_text, std::string_view acronym);
Prompt render_cascaded_detection(std::string_view input_text);
Prompt render_annotation(std::string_view input_text);

enum class Expected { detection, expansion };
enum class ParseStatus { ok, repaired, blocked, parse_failure };

std::string_view to_string(ParseStatus status);
ParseStatus parse_status_from_string(std::string_view s);

struct DetectionResult {
  std::vector<std::string> acronyms;  // non-empty, de-duplicated, first occurrence kept

  bool operator==(const DetectionResult&) const = default;
};

struct ExpansionResult {
  std::string acronym;
  std::string expansion;
  std::optional<double> confidence;  // clamped into [0, 1]
  std::string rationale;

  bool operator==(const ExpansionResult&) const = default;
};

using Payload = std::variant<std::monostate, DetectionResult, ExpansionResult>;

struct ParseOutcome {
  ParseStatus status = ParseStatus::parse_failure;
  Payload payload;
  std::string raw;
  std::vector<std::string> notes;

  bool has_payload() const { return !std::holds_alternative<std::monostate>(payload); }
  const ExpansionResult* expansion() const { return std::get_if<ExpansionResult>(&payload); }
  const DetectionResult* detection() const { return std::get_if<DetectionResult>(&payload); }
};

/// Strict parse of the whole reply, then fence stripping, then the first
/// balanced JSON object or array. Empty replies and refusals are `blocked`.
ParseOutcome parse_output(std::string_view raw, Expected expected);

nlohmann::json to_json(const DetectionResult& d);
nlohmann::json to_json(const ExpansionResult& e);
nlohmann::json payload_to_json(const Payload& payload);
Payload payload_from_json(const nlohmann::json& j);

/// Compact single-line JSON, the form a model is asked to produce.
std::string serialize(const DetectionResult& d);
std::string serialize(const ExpansionResult& e);

}  // namespace acrodis::prompting
