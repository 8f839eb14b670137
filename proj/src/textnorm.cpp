#include "acrodis/textnorm.h"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <regex>
#include <stdexcept>

#include "acrodis/error.h"

namespace acrodis::textnorm {
namespace {

icu::UnicodeString nfc(const icu::UnicodeString& s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::internal, "ICU NFC normalizer unavailable");
  icu::UnicodeString out = norm->normalize(s, status);
  if (U_FAILURE(status)) throw Error(ErrorKind::internal, "ICU NFC normalization failed");
  return out;
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

bool is_kept(UChar32 c) {
  if (u_isalnum(c)) return true;
  switch (u_charType(c)) {
    case U_NON_SPACING_MARK:
    case U_COMBINING_SPACING_MARK:
    case U_ENCLOSING_MARK:
      return true;
    default:
      return false;
  }
}

std::string collapse_whitespace(const icu::UnicodeString& s) {
  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < s.length();) {
    UChar32 c = s.char32At(i);
    i += U16_LENGTH(c);
    if (is_space(c)) {
      pending_space = !out.isEmpty();
      continue;
    }
    if (pending_space) out.append(UChar32{' '});
    pending_space = false;
    out.append(c);
  }
  std::string utf8;
  out.toUTF8String(utf8);
  return utf8;
}

icu::UnicodeString raw_unicode(std::string_view text) {
  auto s = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  s = nfc(s);
  s.toLower(icu::Locale::getRoot());
  return nfc(s);
}

std::string strip_markup(std::string s, const MarkupRules& rules) {
  // Patterns are ASCII-only, so byte-wise matching on UTF-8 is safe.
  static const std::regex fence(R"(```[a-z0-9_+-]*)");
  static const std::regex tag(R"(</?[a-z!][^<>]*>)");
  static const std::regex emphasis(R"(\*+)");
  if (rules.code_fences) s = std::regex_replace(s, fence, " ");
  if (rules.angle_tags) s = std::regex_replace(s, tag, " ");
  if (rules.asterisk_emphasis) s = std::regex_replace(s, emphasis, " ");
  return s;
}

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::raw ? "raw" : "clean"; }

Mode mode_from_string(std::string_view name) {
  if (name == "raw") return Mode::raw;
  if (name == "clean") return Mode::clean;
  throw ConfigError("unknown normalization mode '" + std::string(name) + "'");
}

std::string normalize_raw(std::string_view text) { return collapse_whitespace(raw_unicode(text)); }

std::string normalize_clean(std::string_view text, const MarkupRules& rules) {
  std::string stage = strip_markup(normalize_raw(text), rules);
  auto s = icu::UnicodeString::fromUTF8(stage);
  icu::UnicodeString kept;
  for (int32_t i = 0; i < s.length();) {
    UChar32 c = s.char32At(i);
    i += U16_LENGTH(c);
    if (c == '-' || c == '_' || is_space(c)) {
      kept.append(UChar32{' '});
    } else if (is_kept(c)) {
      kept.append(c);
    }
  }
  return collapse_whitespace(nfc(kept));
}

std::string normalize(std::string_view text, Mode mode) {
  return mode == Mode::raw ? normalize_raw(text) : normalize_clean(text);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find(' ', pos);
    if (next == std::string_view::npos) next = text.size();
    if (next > pos) tokens.emplace_back(text.substr(pos, next - pos));
    pos = next + 1;
  }
  return tokens;
}

}  // namespace acrodis::textnorm
