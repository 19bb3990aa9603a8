#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "qagkit/textproc.hpp"
#include "qagkit/unicode.hpp"

using namespace qagkit;

namespace {

std::vector<std::string> sentence_texts(const std::string& text, Language lang,
                                        const AbbreviationList& abbr = AbbreviationList::defaults()) {
  Paragraph p(text, lang);
  const auto s = unicode::decode(text);
  std::vector<std::string> out;
  for (const auto& sp : split_sentences(p, abbr)) out.push_back(unicode::encode(s.substr(sp.start, sp.end - sp.start)));
  return out;
}

}  // namespace

TEST(SplitSentences, AsciiTerminators) {
  EXPECT_EQ(sentence_texts("A b. C d? E f!", Language::en),
            (std::vector<std::string>{"A b.", "C d?", "E f!"}));
}

TEST(SplitSentences, AbbreviationGuard) {
  EXPECT_EQ(sentence_texts("Dr. Smith arrived.", Language::en).size(), 1u);
  EXPECT_EQ(sentence_texts("He met (Dr. Smith) there. Then left.", Language::en).size(), 2u);
  EXPECT_EQ(sentence_texts("Dr. Smith arrived.", Language::en, AbbreviationList{}).size(), 2u);
}

TEST(SplitSentences, NoBreakInsideNumbers) {
  EXPECT_EQ(sentence_texts("It costs 3.5 dollars. Cheap.", Language::en),
            (std::vector<std::string>{"It costs 3.5 dollars.", "Cheap."}));
}

TEST(SplitSentences, Japanese) {
  EXPECT_EQ(sentence_texts("これはペンです。それは本です。", Language::ja),
            (std::vector<std::string>{"これはペンです。", "それは本です。"}));
  EXPECT_EQ(sentence_texts("「行く！」と言った。本当？！", Language::ja),
            (std::vector<std::string>{"「行く！」", "と言った。", "本当？！"}));
}

TEST(SplitSentences, WhitespaceAndTrailingText) {
  EXPECT_TRUE(sentence_texts("   \n\t ", Language::en).empty());
  EXPECT_EQ(sentence_texts("  no terminator here  ", Language::en),
            (std::vector<std::string>{"no terminator here"}));
}

TEST(SplitSentences, GapsAreWhitespaceProperty) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> pieces = {"Ab", "cd", " ", ". ", "? ", "!", "Dr. ", "é", "\n"};
  for (int iter = 0; iter < 300; ++iter) {
    std::string text;
    for (int k = 0; k < 12; ++k) text += pieces[rng() % pieces.size()];
    Paragraph p(text, Language::en);
    const auto s = unicode::decode(text);
    std::size_t prev = 0;
    for (const auto& sp : split_sentences(p)) {
      ASSERT_LT(sp.start, sp.end);
      for (std::size_t i = prev; i < sp.start; ++i) ASSERT_TRUE(unicode::is_space(s[i])) << text;
      ASSERT_FALSE(unicode::is_space(s[sp.start]));
      ASSERT_FALSE(unicode::is_space(s[sp.end - 1]));
      prev = sp.end;
    }
    for (std::size_t i = prev; i < s.size(); ++i) ASSERT_TRUE(unicode::is_space(s[i]));
  }
}

TEST(Abbreviations, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "qagkit_abbr_test.txt";
  {
    std::ofstream out(path);
    out << "Prof.\n\n  Gen.  \n";
  }
  const auto list = AbbreviationList::load(path);
  EXPECT_EQ(list.size(), 2u);
  EXPECT_TRUE(list.contains("Gen."));
  EXPECT_EQ(sentence_texts("Prof. Xu spoke. Done.", Language::en, list).size(), 2u);
  std::filesystem::remove(path);
}

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize_for_metrics("The Cat sat.", Language::en),
            (std::vector<std::string>{"the", "cat", "sat"}));
  EXPECT_TRUE(tokenize_for_metrics("", Language::fr).empty());
  EXPECT_EQ(tokenize_for_metrics("猫だ", Language::ja), (std::vector<std::string>{"猫", "だ"}));
  EXPECT_EQ(tokenize_for_metrics("«Привет», МИР!", Language::ru),
            (std::vector<std::string>{"привет", "мир"}));
  EXPECT_EQ(tokenize_for_metrics("a   b\t\nc", Language::en), tokenize_for_metrics("a b c", Language::en));
  EXPECT_EQ(tokenize_for_metrics("don't -- stop", Language::en), (std::vector<std::string>{"don't", "stop"}));
}

TEST(LongestCommonSubstring, Examples) {
  EXPECT_EQ(longest_common_substring_len(std::string_view("abc"), "zabcy"), 3u);
  EXPECT_EQ(longest_common_substring_len(std::string_view("abc"), "xyz"), 0u);
  EXPECT_EQ(longest_common_substring_len(std::string_view("Who was William Turner?"),
                                         "William Turner was an English painter"),
            14u);
  EXPECT_EQ(longest_common_substring_len(std::string_view(""), "abc"), 0u);
  EXPECT_EQ(longest_common_substring_len(std::string_view("東京都"), "京都府"), 2u);
}

TEST(LongestCommonSubstring, MatchesEnumerationOracle) {
  std::mt19937_64 rng(3);
  const std::u32string alphabet = U"abcé猫 ";
  for (int iter = 0; iter < 300; ++iter) {
    std::u32string q, p;
    for (std::size_t k = rng() % 12; k > 0; --k) q += alphabet[rng() % alphabet.size()];
    for (std::size_t k = rng() % 30; k > 0; --k) p += alphabet[rng() % alphabet.size()];
    ASSERT_EQ(longest_common_substring_len(q, p), oracle::lcs_substring(q, p));
    ASSERT_EQ(longest_common_substring_len(q, p), longest_common_substring_len(p, q));
  }
}
