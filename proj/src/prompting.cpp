#include "acrodis/prompting.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <set>

#include "acrodis/corpus.h"
#include "acrodis/error.h"

namespace acrodis::prompting {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(ws);
  return std::string(s.substr(first, last - first + 1));
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void require_text(std::string_view text) {
  if (trim(text).empty()) throw DataError("prompt input text is empty");
}

Prompt make(std::string_view task, std::string_view text, std::optional<std::string> acronym,
            std::string_view schema_rule) {
  return Prompt{std::string(task), std::string(text), std::move(acronym),
                {std::string(kStrictJsonRule), std::string(schema_rule)}};
}

// Case-insensitive key lookup over a few accepted spellings.
const json* find_key(const json& obj, std::initializer_list<std::string_view> names) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    std::string key = lower_ascii(it.key());
    for (auto name : names)
      if (key == name) return &it.value();
  }
  return nullptr;
}

std::string scalar_text(const json& j) {
  if (j.is_string()) return trim(j.get<std::string>());
  if (j.is_number() || j.is_boolean()) return j.dump();
  return {};
}

std::optional<double> parse_confidence(const json& j, std::vector<std::string>& notes) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    std::string s = trim(j.get<std::string>());
    bool percent = !s.empty() && s.back() == '%';
    if (percent) s.pop_back();
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used == s.size()) {
        notes.push_back("confidence given as string");
        return percent ? v / 100.0 : v;
      }
    } catch (const std::exception&) {
    }
  }
  if (!j.is_null()) notes.push_back("confidence not numeric; dropped");
  return std::nullopt;
}

std::optional<ExpansionResult> expansion_from(const json& j, std::vector<std::string>& notes, bool& clamped) {
  const json* obj = &j;
  if (j.is_array()) {
    obj = nullptr;
    for (const auto& item : j)
      if (item.is_object()) {
        obj = &item;
        break;
      }
    if (obj == nullptr) return std::nullopt;
  }
  if (!obj->is_object()) return std::nullopt;

  const json* exp = find_key(*obj, {"expansion", "long_form", "longform", "expanded_form", "meaning", "definition"});
  if (exp == nullptr) return std::nullopt;
  ExpansionResult r;
  r.expansion = scalar_text(*exp);
  if (r.expansion.empty()) return std::nullopt;

  if (const json* a = find_key(*obj, {"acronym", "short_form", "shortform", "abbreviation"})) {
    if (a->is_array()) {
      if (!a->empty()) r.acronym = scalar_text(a->front());
    } else {
      r.acronym = scalar_text(*a);
    }
  }
  if (const json* c = find_key(*obj, {"confidence", "confidence_score", "score"})) {
    r.confidence = parse_confidence(*c, notes);
    if (r.confidence) {
      if (std::isnan(*r.confidence)) {
        r.confidence.reset();
        notes.push_back("confidence NaN; dropped");
      } else if (*r.confidence < 0.0 || *r.confidence > 1.0) {
        notes.push_back("confidence " + std::to_string(*r.confidence) + " clamped into [0,1]");
        r.confidence = std::clamp(*r.confidence, 0.0, 1.0);
        clamped = true;
      }
    }
  }
  if (const json* why = find_key(*obj, {"rationale", "reasoning", "reason", "explanation"})) {
    r.rationale = why->is_string() ? why->get<std::string>() : why->dump();
  }
  return r;
}

std::optional<DetectionResult> detection_from(const json& j) {
  const json* list = nullptr;
  if (j.is_array()) {
    list = &j;
  } else if (j.is_object()) {
    list = find_key(j, {"acronyms", "items", "acronym", "detected"});
    if (list == nullptr) return std::nullopt;
  } else {
    return std::nullopt;
  }
  DetectionResult r;
  std::set<std::string> seen;
  auto push = [&](const json& item) {
    std::string s = scalar_text(item);
    if (!s.empty() && seen.insert(s).second) r.acronyms.push_back(std::move(s));
  };
  if (list->is_array()) {
    for (const auto& item : *list) push(item);
  } else if (list->is_string()) {
    push(*list);
  } else if (!list->is_null()) {
    return std::nullopt;
  }
  return r;
}

// Interprets a parsed document; nullopt when it lacks the expected shape.
std::optional<Payload> interpret(const json& j, Expected expected, std::vector<std::string>& notes, bool& clamped) {
  if (expected == Expected::detection) {
    if (auto d = detection_from(j)) return Payload{*d};
    return std::nullopt;
  }
  if (auto e = expansion_from(j, notes, clamped)) return Payload{*e};
  return std::nullopt;
}

std::optional<json> try_parse(std::string_view text) {
  json j = json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

// Contents of the first ``` fenced block, without the info string.
std::optional<std::string> fenced_block(std::string_view s) {
  auto open = s.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  auto body = s.find('\n', open + 3);
  if (body == std::string_view::npos) return std::nullopt;
  auto close = s.find("```", body + 1);
  if (close == std::string_view::npos) return std::string(s.substr(body + 1));
  return std::string(s.substr(body + 1, close - body - 1));
}

// End index (exclusive) of the balanced JSON value starting at `start`.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t start) {
  std::vector<char> stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      stack.push_back(c == '{' ? '}' : ']');
    } else if (c == '}' || c == ']') {
      if (stack.empty() || stack.back() != c) return std::nullopt;
      stack.pop_back();
      if (stack.empty()) return i + 1;
    }
  }
  return std::nullopt;
}

bool looks_like_refusal(std::string_view raw) {
  static constexpr std::array<std::string_view, 16> kPhrases = {
      "i can't",       "i cannot",       "i can not",    "i'm sorry",   "i am sorry",        "unable to",
      "i won't",       "i will not",     "cannot assist", "can't help",  "not able to",       "as an ai",
      "i apologize",   "refuse",         "i'm not able", "cannot provide"};
  std::string lowered = lower_ascii(raw);
  for (std::size_t pos; (pos = lowered.find("\xe2\x80\x99")) != std::string::npos;) lowered.replace(pos, 3, "'");
  for (auto phrase : kPhrases)
    if (lowered.find(phrase) != std::string::npos) return true;
  return false;
}

ParseOutcome finish(ParseOutcome out, Payload payload, bool repaired, bool clamped) {
  out.payload = std::move(payload);
  out.status = (repaired || clamped) ? ParseStatus::repaired : ParseStatus::ok;
  return out;
}

}  // namespace

std::string Prompt::serialize() const {
  ordered_json j;
  j["Task"] = task;
  j["Text"] = text;
  if (acronym) j["Acronym"] = *acronym;
  j["Rules"] = rules;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

Prompt Prompt::parse(std::string_view wire) {
  auto j = try_parse(wire);
  if (!j || !j->is_object()) throw DataError("prompt is not a JSON object");
  try {
    Prompt p;
    p.task = j->at("Task").get<std::string>();
    p.text = j->at("Text").get<std::string>();
    if (j->contains("Acronym")) p.acronym = j->at("Acronym").get<std::string>();
    p.rules = j->value("Rules", std::vector<std::string>{});
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed prompt: ") + e.what());
  }
}

std::optional<PromptKind> Prompt::kind() const {
  if (task == kSinglePassTask) return PromptKind::single_pass;
  if (task == kExpansionTask) return PromptKind::expansion;
  if (task == kDetectionTask) return PromptKind::detection;
  if (task == kAnnotationTask) return PromptKind::annotation;
  return std::nullopt;
}

Prompt render_single_pass(std::string_view input_text) {
  require_text(input_text);
  return make(kSinglePassTask, input_text, std::nullopt, kExpansionSchemaRule);
}

Prompt render_cascaded_expansion(std::string_view input_text, std::string_view acronym) {
  require_text(input_text);
  if (trim(acronym).empty()) throw DataError("expansion prompt needs an acronym");
  if (!corpus::contains_token(input_text, acronym))
    throw DataError("acronym '" + std::string(acronym) + "' does not occur in the input text");
  return make(kExpansionTask, input_text, std::string(acronym), kExpansionSchemaRule);
}

Prompt render_cascaded_detection(std::string_view input_text) {
  require_text(input_text);
  return make(kDetectionTask, input_text, std::nullopt, kDetectionSchemaRule);
}

Prompt render_annotation(std::string_view input_text) {
  require_text(input_text);
  return make(kAnnotationTask, input_text, std::nullopt, kAnnotationSchemaRule);
}

std::string_view to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::repaired: return "repaired";
    case ParseStatus::blocked: return "blocked";
    case ParseStatus::parse_failure: return "parse_failure";
  }
  return "parse_failure";
}

ParseStatus parse_status_from_string(std::string_view s) {
  if (s == "ok") return ParseStatus::ok;
  if (s == "repaired") return ParseStatus::repaired;
  if (s == "blocked") return ParseStatus::blocked;
  if (s == "parse_failure") return ParseStatus::parse_failure;
  throw DataError("unknown parse status '" + std::string(s) + "'");
}

ParseOutcome parse_output(std::string_view raw, Expected expected) {
  ParseOutcome out;
  out.raw = std::string(raw);
  const std::string body = trim(raw);
  if (body.empty()) {
    out.status = ParseStatus::blocked;
    out.notes.push_back("empty response");
    return out;
  }

  std::vector<std::string> notes;
  bool clamped = false;

  // Rung 1: the whole reply is the document.
  if (auto j = try_parse(body)) {
    if (j->is_null()) {
      out.status = ParseStatus::blocked;
      out.notes.push_back("null response");
      return out;
    }
    if (auto p = interpret(*j, expected, notes, clamped)) {
      out.notes = std::move(notes);
      return finish(std::move(out), std::move(*p), false, clamped);
    }
    notes.clear();
  }

  // Rung 2: a fenced code block.
  if (auto block = fenced_block(body)) {
    if (auto j = try_parse(trim(*block))) {
      if (auto p = interpret(*j, expected, notes, clamped)) {
        out.notes = std::move(notes);
        out.notes.insert(out.notes.begin(), "stripped code fence");
        return finish(std::move(out), std::move(*p), true, clamped);
      }
      notes.clear();
    }
  }

  // Rung 3: the first balanced object or array embedded in prose.
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{' && body[i] != '[') continue;
    auto end = balanced_end(body, i);
    if (!end) continue;
    if (auto j = try_parse(std::string_view(body).substr(i, *end - i))) {
      if (auto p = interpret(*j, expected, notes, clamped)) {
        out.notes = std::move(notes);
        out.notes.insert(out.notes.begin(), "extracted embedded JSON");
        return finish(std::move(out), std::move(*p), true, clamped);
      }
      notes.clear();
    }
  }

  if (looks_like_refusal(body)) {
    out.status = ParseStatus::blocked;
    out.notes.push_back("refusal without JSON");
  } else {
    out.status = ParseStatus::parse_failure;
    out.notes.push_back("no usable JSON payload");
  }
  return out;
}

nlohmann::json to_json(const DetectionResult& d) { return json{{"acronyms", d.acronyms}}; }

nlohmann::json to_json(const ExpansionResult& e) {
  json j;
  j["acronym"] = e.acronym;
  j["expansion"] = e.expansion;
  j["confidence"] = e.confidence ? json(*e.confidence) : json(nullptr);
  j["rationale"] = e.rationale;
  return j;
}

nlohmann::json payload_to_json(const Payload& payload) {
  if (const auto* d = std::get_if<DetectionResult>(&payload)) {
    json j = to_json(*d);
    j["type"] = "detection";
    return j;
  }
  if (const auto* e = std::get_if<ExpansionResult>(&payload)) {
    json j = to_json(*e);
    j["type"] = "expansion";
    return j;
  }
  return nullptr;
}

Payload payload_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::monostate{};
  const std::string type = j.at("type").get<std::string>();
  if (type == "detection") return DetectionResult{j.at("acronyms").get<std::vector<std::string>>()};
  if (type == "expansion") {
    ExpansionResult e;
    e.acronym = j.at("acronym").get<std::string>();
    e.expansion = j.at("expansion").get<std::string>();
    if (!j.at("confidence").is_null()) e.confidence = j.at("confidence").get<double>();
    e.rationale = j.at("rationale").get<std::string>();
    return e;
  }
  throw DataError("unknown payload type '" + type + "'");
}

std::string serialize(const DetectionResult& d) { return to_json(d).dump(); }

std::string serialize(const ExpansionResult& e) {
  ordered_json j;
  j["acronym"] = e.acronym;
  j["expansion"] = e.expansion;
  if (e.confidence) j["confidence"] = *e.confidence;
  j["rationale"] = e.rationale;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace acrodis::prompting
