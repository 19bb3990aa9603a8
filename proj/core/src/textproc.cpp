#include "qagkit/textproc.hpp"

#include <algorithm>
#include <fstream>

#include "qagkit/error.hpp"
#include "qagkit/unicode.hpp"

namespace qagkit {

namespace {

bool is_ascii_terminator(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

bool is_cjk_terminator(char32_t c) {
  return c == 0x3002 || c == 0xFF01 || c == 0xFF1F;
}

bool is_closing_bracket(char32_t c) {
  switch (c) {
    case 0x300D: case 0x300F: case 0xFF09: case 0x3011: case 0x3009:
    case 0x300B: case U')': case U'"': case 0x201D: case 0x2019:
      return true;
    default:
      return false;
  }
}

// The whitespace-delimited word ending at `last` (inclusive).
std::u32string_view word_ending_at(std::u32string_view s, std::size_t last) {
  std::size_t begin = last;
  while (begin > 0 && !unicode::is_space(s[begin - 1])) --begin;
  return s.substr(begin, last - begin + 1);
}

bool is_abbreviation(std::u32string_view word, const AbbreviationList& abbrs) {
  if (abbrs.contains(unicode::encode(word))) return true;
  // "(Dr." and similar: retry without leading punctuation.
  std::size_t k = 0;
  while (k < word.size() && unicode::is_punct(word[k]) && word[k] != U'.') ++k;
  return k > 0 && abbrs.contains(unicode::encode(word.substr(k)));
}

}  // namespace

const AbbreviationList& AbbreviationList::defaults() {
  static const AbbreviationList list(std::set<std::string, std::less<>>{
      "Mr.", "Mrs.", "Dr.", "St.", "No.", "vs.", "etc.", "e.g.", "i.e."});
  return list;
}

AbbreviationList AbbreviationList::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::FileNotFound,
                "cannot open abbreviation list " + path.string());
  }
  AbbreviationList list;
  std::string line;
  while (std::getline(in, line)) {
    const auto entry = unicode::trim(line);
    if (!entry.empty()) list.add(std::string(entry));
  }
  return list;
}

bool AbbreviationList::contains(std::string_view token) const {
  return entries_.find(token) != entries_.end();
}

std::vector<SentenceSpan> split_sentences(const Paragraph& p,
                                          const AbbreviationList& abbreviations) {
  const std::u32string s = unicode::decode(p.text());
  const bool cjk = is_character_tokenized(p.language());
  const std::size_t n = s.size();

  std::vector<SentenceSpan> spans;
  std::size_t i = 0;
  while (i < n) {
    while (i < n && unicode::is_space(s[i])) ++i;
    if (i == n) break;
    const std::size_t start = i;
    std::size_t end = n;
    for (std::size_t j = start; j < n; ++j) {
      const char32_t c = s[j];
      if (cjk && is_cjk_terminator(c)) {
        end = j + 1;
        while (end < n && (is_cjk_terminator(s[end]) || is_closing_bracket(s[end]))) {
          ++end;
        }
        break;
      }
      if (is_ascii_terminator(c) && (j + 1 == n || unicode::is_space(s[j + 1]))) {
        if (c == U'.' && is_abbreviation(word_ending_at(s, j), abbreviations)) {
          continue;
        }
        end = j + 1;
        break;
      }
    }
    std::size_t trimmed = end;
    while (trimmed > start && unicode::is_space(s[trimmed - 1])) --trimmed;
    spans.push_back({start, trimmed});
    i = end;
  }
  return spans;
}

std::vector<std::string> tokenize_for_metrics(std::string_view text,
                                              Language lang) {
  const std::u32string s = unicode::decode(text);
  std::vector<std::string> tokens;
  if (is_character_tokenized(lang)) {
    for (char32_t c : s) {
      if (!unicode::is_space(c)) tokens.push_back(unicode::encode({&c, 1}));
    }
    return tokens;
  }
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && unicode::is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !unicode::is_space(s[j])) ++j;
    std::size_t lo = i;
    std::size_t hi = j;
    while (lo < hi && unicode::is_punct(s[lo])) ++lo;
    while (hi > lo && unicode::is_punct(s[hi - 1])) --hi;
    if (lo < hi) {
      tokens.push_back(unicode::encode(unicode::to_lower(
          std::u32string_view(s).substr(lo, hi - lo))));
    }
    i = j;
  }
  return tokens;
}

std::size_t longest_common_substring_len(std::u32string_view q,
                                         std::u32string_view p) {
  if (q.empty() || p.empty()) return 0;
  // The answer is symmetric, so keep the DP row over the shorter string.
  if (p.size() > q.size()) std::swap(p, q);
  std::vector<std::size_t> row(p.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= q.size(); ++i) {
    std::size_t diag = 0;  // row[j - 1] from the previous iteration of i
    for (std::size_t j = 1; j <= p.size(); ++j) {
      const std::size_t above = row[j];
      row[j] = (q[i - 1] == p[j - 1]) ? diag + 1 : 0;
      best = std::max(best, row[j]);
      diag = above;
    }
  }
  return best;
}

std::size_t longest_common_substring_len(std::string_view q,
                                         std::string_view p) {
  return longest_common_substring_len(unicode::decode(q), unicode::decode(p));
}

}  // namespace qagkit
