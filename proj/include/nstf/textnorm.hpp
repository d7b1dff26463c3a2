// nstf/textnorm.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scoring-side text normalization and tokenization for Mandarin/English
// code-switched transcripts. Mandarin is scored per character and English
// per word, so the mixed tokenizer emits one token per Han character and one
// token per maximal run of other non-space characters.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

namespace nstf {

enum class Script : std::uint8_t { Han, Latin };

struct Token {
  std::string surface;
  Script script = Script::Latin;

  bool operator==(const Token& other) const { return surface == other.surface; }
};

using TokenSequence = std::vector<Token>;

namespace textnorm_detail {

inline bool is_punct(UChar32 c) {
  switch (c) {
    case '.': case ',': case '?': case '!': case ';': case ':':
    case '"': case '\'': case '(': case ')': case '[': case ']':
    case '<': case '>': case '#':
    case 0x3002:  // 。
    case 0xFF0C:  // ，
    case 0xFF1F:  // ？
    case 0xFF01:  // ！
    case 0x3001:  // 、
    case 0xFF1B:  // ；
    case 0xFF1A:  // ：
      return true;
    default:
      return false;
  }
}

inline bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

inline void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  std::int32_t len = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<std::uint8_t*>(buf), len, U8_MAX_LENGTH, c, err);
  if (!err) out.append(buf, static_cast<std::size_t>(len));
}

// Calls fn(code_point) for every code point; ill-formed bytes come through
// as U+FFFD.
template <class Fn>
void for_each_code_point(std::string_view text, Fn&& fn) {
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto n = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(s, i, n, c);
    fn(c < 0 ? UChar32{0xFFFD} : c);
  }
}

}  // namespace textnorm_detail

/// True for CJK Unified Ideographs and Extension A.
inline bool is_han(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF);
}

/// NFKC with case folding, scoring punctuation replaced by a space, and
/// whitespace collapsed and trimmed. Idempotent.
inline std::string normalize(std::string_view text) {
  using namespace textnorm_detail;
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc_cf = icu::Normalizer2::getNFKCCasefoldInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFKC_Casefold unavailable");

  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
  icu::UnicodeString folded = nfkc_cf->normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  std::string utf8;
  folded.toUTF8String(utf8);

  std::string out;
  out.reserve(utf8.size());
  bool pending_space = false;
  for_each_code_point(utf8, [&](UChar32 c) {
    if (is_punct(c) || is_space(c)) {
      pending_space = true;
      return;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    append_utf8(out, c);
  });
  return out;
}

/// Splits normalized text into Han characters and Latin-class words.
/// Script boundaries split words: "去google一下" -> 去 google 一 下.
inline TokenSequence tokenize_mixed(std::string_view text) {
  using namespace textnorm_detail;
  const std::string norm = normalize(text);
  TokenSequence tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back({std::move(word), Script::Latin});
    word.clear();
  };
  for_each_code_point(norm, [&](UChar32 c) {
    if (c == ' ') {
      flush();
    } else if (is_han(static_cast<char32_t>(c))) {
      flush();
      std::string ch;
      append_utf8(ch, c);
      tokens.push_back({std::move(ch), Script::Han});
    } else {
      append_utf8(word, c);
    }
  });
  flush();
  return tokens;
}

/// Every non-space code point of the normalized text, Han or not.
inline TokenSequence tokenize_chars(std::string_view text) {
  using namespace textnorm_detail;
  const std::string norm = normalize(text);
  TokenSequence tokens;
  for_each_code_point(norm, [&](UChar32 c) {
    if (c == ' ') return;
    std::string ch;
    append_utf8(ch, c);
    tokens.push_back({std::move(ch), is_han(static_cast<char32_t>(c)) ? Script::Han : Script::Latin});
  });
  return tokens;
}

/// Whitespace-delimited words of the normalized text.
inline TokenSequence tokenize_words(std::string_view text) {
  const std::string norm = normalize(text);
  TokenSequence tokens;
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    if (end > start) tokens.push_back({norm.substr(start, end - start), Script::Latin});
    start = end + 1;
  }
  return tokens;
}

/// Inverse of tokenize_mixed: single spaces between consecutive Latin tokens,
/// nothing around Han tokens.
inline std::string join_tokens(const TokenSequence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && tokens[i].script == Script::Latin &&
        tokens[i - 1].script == Script::Latin)
      out.push_back(' ');
    out += tokens[i].surface;
  }
  return out;
}

}  // namespace nstf
