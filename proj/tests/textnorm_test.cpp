// tests/textnorm_test.cpp

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

#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "nstf/textnorm.hpp"

namespace nstf {
namespace {

std::vector<std::string> surfaces(const TokenSequence& t) {
  std::vector<std::string> out;
  for (const auto& tok : t) out.push_back(tok.surface);
  return out;
}

TEST(Normalize, LowerCasesAndStripsPunctuation) {
  EXPECT_EQ(normalize("Nice to meat you"), "nice to meat you");
  EXPECT_EQ(normalize("hello,  WORLD!"), "hello world");
  EXPECT_EQ(normalize(""), "");
  EXPECT_EQ(normalize("   "), "");
}

TEST(Normalize, FullWidthAndCjkPunctuation) {
  EXPECT_EQ(normalize("你好，世界。"), "你好 世界");
  EXPECT_EQ(normalize("打开、关闭；好吗？"), "打开 关闭 好吗");
  // NFKC folds full-width Latin to ASCII.
  EXPECT_EQ(normalize("ＧＯＯＧＬＥ"), "google");
  EXPECT_EQ(normalize("<a>#[b]"), "a b");
}

TEST(Normalize, Idempotent) {
  for (const char* s : {"Hello,  World!", "去Google一下。", "  A  b\tc\n", "ＡＢＣ，ｄｅｆ", "Ǆemal"})
    EXPECT_EQ(normalize(normalize(s)), normalize(s)) << s;
}

TEST(TokenizeMixed, SplitsHanCharactersAndLatinWords) {
  const auto toks = tokenize_mixed("打开 google 地图");
  EXPECT_EQ(surfaces(toks), (std::vector<std::string>{"打", "开", "google", "地", "图"}));
  EXPECT_EQ(toks[0].script, Script::Han);
  EXPECT_EQ(toks[2].script, Script::Latin);
  EXPECT_EQ(surfaces(tokenize_mixed("hello world")), (std::vector<std::string>{"hello", "world"}));
  EXPECT_EQ(surfaces(tokenize_mixed("你好")), (std::vector<std::string>{"你", "好"}));
  EXPECT_TRUE(tokenize_mixed("").empty());
}

TEST(TokenizeMixed, ScriptBoundarySplitsWords) {
  EXPECT_EQ(surfaces(tokenize_mixed("去google一下")), (std::vector<std::string>{"去", "google", "一", "下"}));
}

TEST(TokenizeMixed, DigitsAndAccentsAreLatinClass) {
  const auto toks = tokenize_mixed("café 2024年");
  EXPECT_EQ(surfaces(toks), (std::vector<std::string>{"café", "2024", "年"}));
  EXPECT_EQ(toks[1].script, Script::Latin);
}

TEST(TokenizeMixed, ExtensionAIsHan) {
  // U+3400 is the first Extension A ideograph.
  const auto toks = tokenize_mixed("\xE3\x90\x80x");
  ASSERT_EQ(toks.size(), 2u);
  EXPECT_EQ(toks[0].script, Script::Han);
}

TEST(Tokenize, CharsAndWords) {
  EXPECT_EQ(surfaces(tokenize_chars("ab 你")), (std::vector<std::string>{"a", "b", "你"}));
  EXPECT_EQ(surfaces(tokenize_words("打开 google")), (std::vector<std::string>{"打开", "google"}));
}

// Random mixed strings drawn from Han, Latin letters, digits, spaces and
// punctuation.
std::string random_mixed(std::mt19937& rng) {
  static const std::vector<std::string> pieces = {
      "你", "好", "地", "图", "a", "B", "z", "é", "7", " ", "  ", ",", "。", "！", "\t", "Q", "开"};
  std::uniform_int_distribution<std::size_t> len(0, 20), pick(0, pieces.size() - 1);
  std::string s;
  for (std::size_t n = len(rng); n > 0; --n) s += pieces[pick(rng)];
  return s;
}

TEST(TokenizeMixed, PropertiesOnRandomStrings) {
  std::mt19937 rng(1234);
  for (int iter = 0; iter < 2000; ++iter) {
    const std::string raw = random_mixed(rng);
    const std::string norm = normalize(raw);
    const TokenSequence toks = tokenize_mixed(raw);

    std::size_t han_chars = 0, words = 0;
    bool pure_latin = true, pure_han = true;
    for (const auto& t : toks) {
      ASSERT_FALSE(t.surface.empty());
      ASSERT_EQ(t.surface.find(' '), std::string::npos);
      if (t.script == Script::Han) {
        ++han_chars;
        pure_latin = false;
      } else {
        ++words;
        pure_han = false;
      }
    }
    // Re-tokenizing the reconstruction is the identity.
    EXPECT_EQ(tokenize_mixed(join_tokens(toks)), toks) << raw;
    // Reconstruction equals the normalized text once Han-adjacent spaces go.
    std::string squeezed;
    for (std::size_t i = 0; i < norm.size(); ++i) {
      if (norm[i] == ' ' && i > 0 && i + 1 < norm.size()) {
        const auto prev = tokenize_mixed(norm.substr(0, i));
        const auto next = tokenize_mixed(norm.substr(i + 1));
        if ((!prev.empty() && prev.back().script == Script::Han) ||
            (!next.empty() && next.front().script == Script::Han))
          continue;
      }
      squeezed.push_back(norm[i]);
    }
    EXPECT_EQ(join_tokens(toks), squeezed) << raw;
    if (pure_latin) EXPECT_EQ(words, tokenize_words(raw).size());
    if (pure_han) EXPECT_EQ(han_chars, tokenize_chars(raw).size());
  }
}

}  // namespace
}  // namespace nstf
