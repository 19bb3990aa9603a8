#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qagkit/types.hpp"

namespace qagkit {

using SentenceSpan = Span;

/// Tokens (terminal period included, e.g. "Dr.") after which a period does
/// not end a sentence.
class AbbreviationList {
 public:
  AbbreviationList() = default;
  explicit AbbreviationList(std::set<std::string, std::less<>> entries)
      : entries_(std::move(entries)) {}

  /// Mr. Mrs. Dr. St. No. vs. etc. e.g. i.e.
  static const AbbreviationList& defaults();

  /// One abbreviation per line, UTF-8. Blank lines are ignored.
  static AbbreviationList load(const std::filesystem::path& path);

  bool contains(std::string_view token) const;
  void add(std::string token) { entries_.insert(std::move(token)); }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::set<std::string, std::less<>> entries_;
};

/// Rule-based sentence segmentation.
///
/// `.`, `!` and `?` end a sentence when followed by whitespace or the end of
/// the text, except for a period closing a listed abbreviation. For ja/ko the
/// full-width terminators `。`, `！` and `？` end a sentence unconditionally;
/// directly following terminators and closing brackets stay with it.
/// Spans start and end on non-whitespace characters, so the text between
/// consecutive spans is whitespace only.
std::vector<SentenceSpan> split_sentences(
    const Paragraph& p,
    const AbbreviationList& abbreviations = AbbreviationList::defaults());

/// Tokenization shared by BLEU, ROUGE-L and the embedding metric.
///
/// Whitespace-delimited languages: split on Unicode whitespace, lowercase,
/// strip leading and trailing punctuation (unicode::is_punct) from each token,
/// drop tokens that become empty. ja/ko: every non-whitespace scalar value is
/// one token.
std::vector<std::string> tokenize_for_metrics(std::string_view text,
                                              Language lang);

/// Length, in scalar values, of the longest contiguous substring shared by
/// `q` and `p`. O(|q|·|p|) time, O(min(|q|,|p|)) space.
std::size_t longest_common_substring_len(std::u32string_view q,
                                         std::u32string_view p);
std::size_t longest_common_substring_len(std::string_view q,
                                         std::string_view p);

}  // namespace qagkit
