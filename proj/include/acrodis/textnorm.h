#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace acrodis::textnorm {

/// Which preprocessing pipeline produced a normalized string.
enum class Mode { raw, clean };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);

/// Markup families removed by the clean pipeline.
struct MarkupRules {
  bool code_fences = true;        // ``` with an optional info string
  bool angle_tags = true;         // <b>, </span>, <br/>
  bool asterisk_emphasis = true;  // *x*, **x**
};

/// NFC, default (root-locale) Unicode lowercasing, whitespace runs collapsed to
/// one ASCII space, ends trimmed. Punctuation is kept.
std::string normalize_raw(std::string_view text);

/// normalize_raw, then markup removal, '-' and '_' to spaces, every character
/// that is not a letter, digit, combining mark or space dropped, and
/// whitespace collapsed again.
std::string normalize_clean(std::string_view text, const MarkupRules& rules = {});

std::string normalize(std::string_view text, Mode mode);

/// Splits already-normalized text on spaces. Never yields empty tokens.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace acrodis::textnorm
