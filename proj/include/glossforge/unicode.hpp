#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "glossforge/error.hpp"

namespace glossforge::unicode {

inline bool is_valid_utf8(std::string_view s) {
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) return false;
  }
  return true;
}

/// NFC-normalizes UTF-8 text. Throws Errc::parse on invalid input.
inline std::string nfc(std::string_view s) {
  if (!is_valid_utf8(s)) throw Error(Errc::parse, "invalid UTF-8");
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(Errc::io, "ICU NFC normalizer unavailable");
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  if (norm->isNormalized(in, status) && U_SUCCESS(status)) return std::string(s);
  status = U_ZERO_ERROR;
  icu::UnicodeString out = norm->normalize(in, status);
  if (U_FAILURE(status)) throw Error(Errc::parse, "NFC normalization failed");
  std::string result;
  out.toUTF8String(result);
  return result;
}

inline bool is_nfc(std::string_view s) { return nfc(s) == s; }

inline std::vector<char32_t> code_points(std::string_view s) {
  std::vector<char32_t> out;
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) throw Error(Errc::parse, "invalid UTF-8");
    out.push_back(static_cast<char32_t>(c));
  }
  return out;
}

inline bool contains_whitespace(std::string_view s) {
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c >= 0 && u_isUWhiteSpace(c)) return true;
  }
  return false;
}

/// Splits on any Unicode White_Space code point; empty pieces are dropped.
inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  int32_t start = 0;
  while (i < n) {
    int32_t before = i;
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c >= 0 && u_isUWhiteSpace(c)) {
      if (before > start) out.emplace_back(s.substr(start, before - start));
      start = i;
    }
  }
  if (n > start) out.emplace_back(s.substr(start));
  return out;
}

inline std::string trim(std::string_view s) {
  auto parts_begin = std::string_view::npos;
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  int32_t last_end = 0;
  while (i < n) {
    int32_t before = i;
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c >= 0 && u_isUWhiteSpace(c)) continue;
    if (parts_begin == std::string_view::npos) parts_begin = static_cast<size_t>(before);
    last_end = i;
  }
  if (parts_begin == std::string_view::npos) return {};
  return std::string(s.substr(parts_begin, static_cast<size_t>(last_end) - parts_begin));
}

/// Splits `token` into (body, trailing punctuation). "পড়ি।" -> ("পড়ি", "।").
inline std::pair<std::string, std::string> split_trailing_punct(std::string_view token) {
  const auto* p = reinterpret_cast<const uint8_t*>(token.data());
  auto end = static_cast<int32_t>(token.size());
  while (end > 0) {
    int32_t i = end;
    UChar32 c;
    U8_PREV(p, 0, i, c);
    if (c < 0 || !u_ispunct(c)) break;
    end = i;
  }
  return {std::string(token.substr(0, end)), std::string(token.substr(end))};
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  // Both sides are valid UTF-8, so a byte suffix match lands on a code point boundary.
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace glossforge::unicode
