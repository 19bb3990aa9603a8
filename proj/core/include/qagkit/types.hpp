#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qagkit {

inline constexpr std::string_view kHighlightToken = "<hl>";
inline constexpr std::size_t kDefaultMaxParagraphChars = 2000;

enum class Language { en, de, es, fr, it, ja, ko, ru };

/// Parses an ISO-639-1 code; throws Errc::InvalidArgument for anything
/// outside the eight supported languages.
Language parse_language(std::string_view code);
std::string_view language_code(Language lang) noexcept;

/// Languages whose text is not whitespace-delimited for metric purposes.
bool is_character_tokenized(Language lang) noexcept;

/// One (question, answer) pair. Both sides are non-empty after trimming.
class QAPair {
 public:
  QAPair(std::string question, std::string answer);

  const std::string& question() const noexcept { return question_; }
  const std::string& answer() const noexcept { return answer_; }

  friend bool operator==(const QAPair&, const QAPair&) = default;

 private:
  std::string question_;
  std::string answer_;
};

/// The pairs attached to one paragraph. May be empty; scores never depend on
/// the order of `pairs`.
struct QAPairSet {
  std::string context_id;
  std::vector<QAPair> pairs;
};

class Paragraph {
 public:
  /// Throws Errc::ParagraphTooLong when `text` has more than `max_chars`
  /// Unicode scalar values.
  Paragraph(std::string text, Language language,
            std::size_t max_chars = kDefaultMaxParagraphChars);

  const std::string& text() const noexcept { return text_; }
  Language language() const noexcept { return language_; }
  /// Length in Unicode scalar values.
  std::size_t size() const noexcept { return size_; }

 private:
  std::string text_;
  Language language_;
  std::size_t size_;
};

/// Half-open [start, end) range in Unicode scalar offsets.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

enum class HighlightKind { answer_highlight, sentence_highlight };

class HighlightedInput {
 public:
  const std::string& text() const noexcept { return text_; }
  HighlightKind kind() const noexcept { return kind_; }

 private:
  friend HighlightedInput make_highlight(const Paragraph&, Span, HighlightKind,
                                         std::string_view);
  HighlightedInput(std::string text, HighlightKind kind)
      : text_(std::move(text)), kind_(kind) {}

  std::string text_;
  HighlightKind kind_;
};

/// Splices the highlight token around `span` following the QG-Bench layout:
/// `text[:start] + "<hl> " + text[start:end] + " <hl>" + text[end:]`.
///
/// Errors: OffsetOutOfRange when `span.end` exceeds the paragraph or
/// `start > end`; EmptySpan when `start == end`; InvalidArgument when the
/// paragraph already contains the token (the output would not carry exactly
/// two of them).
HighlightedInput make_highlight(const Paragraph& p, Span span,
                                HighlightKind kind,
                                std::string_view token = kHighlightToken);

inline HighlightedInput make_answer_highlight(
    const Paragraph& p, Span answer_span,
    std::string_view token = kHighlightToken) {
  return make_highlight(p, answer_span, HighlightKind::answer_highlight, token);
}

inline HighlightedInput make_sentence_highlight(
    const Paragraph& p, Span sentence_span,
    std::string_view token = kHighlightToken) {
  return make_highlight(p, sentence_span, HighlightKind::sentence_highlight,
                        token);
}

/// Number of non-overlapping occurrences of `token` in `text`.
std::size_t count_highlight_tokens(std::string_view text,
                                   std::string_view token = kHighlightToken);

/// Inverse of make_highlight: removes "<hl> " and " <hl>" (falling back to a
/// bare token when a neighbouring space is absent).
std::string strip_highlight(std::string_view text,
                            std::string_view token = kHighlightToken);

/// The text between the first two tokens, trimmed; nullopt when the input
/// does not contain two tokens.
std::optional<std::string> highlighted_span(
    std::string_view text, std::string_view token = kHighlightToken);

/// Decoding knobs forwarded to generation backends. Construction rejects
/// out-of-range values with Errc::InvalidArgument.
class DecodingParams {
 public:
  DecodingParams() = default;
  DecodingParams(int beam_size, double top_p, int max_output_length);

  int beam_size() const noexcept { return beam_size_; }
  /// 1.0 disables nucleus sampling.
  double top_p() const noexcept { return top_p_; }
  int max_output_length() const noexcept { return max_output_length_; }

  friend bool operator==(const DecodingParams&, const DecodingParams&) = default;

 private:
  int beam_size_ = 4;
  double top_p_ = 0.95;
  int max_output_length_ = 64;
};

}  // namespace qagkit
