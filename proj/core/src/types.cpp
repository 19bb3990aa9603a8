#include "qagkit/types.hpp"

#include <array>
#include <utility>

#include "qagkit/error.hpp"
#include "qagkit/unicode.hpp"

namespace qagkit {

namespace {

constexpr std::array<std::pair<Language, std::string_view>, 8> kLanguages{{
    {Language::en, "en"},
    {Language::de, "de"},
    {Language::es, "es"},
    {Language::fr, "fr"},
    {Language::it, "it"},
    {Language::ja, "ja"},
    {Language::ko, "ko"},
    {Language::ru, "ru"},
}};

}  // namespace

Language parse_language(std::string_view code) {
  for (const auto& [lang, name] : kLanguages) {
    if (name == code) return lang;
  }
  throw Error(Errc::InvalidArgument,
              "unsupported language '" + std::string(code) + "'");
}

std::string_view language_code(Language lang) noexcept {
  for (const auto& [l, name] : kLanguages) {
    if (l == lang) return name;
  }
  return "en";
}

bool is_character_tokenized(Language lang) noexcept {
  return lang == Language::ja || lang == Language::ko;
}

QAPair::QAPair(std::string question, std::string answer)
    : question_(std::move(question)), answer_(std::move(answer)) {
  if (unicode::trim(question_).empty()) {
    throw Error(Errc::InvalidArgument, "question is empty");
  }
  if (unicode::trim(answer_).empty()) {
    throw Error(Errc::InvalidArgument, "answer is empty");
  }
}

Paragraph::Paragraph(std::string text, Language language, std::size_t max_chars)
    : text_(std::move(text)), language_(language),
      size_(unicode::length(text_)) {
  if (size_ > max_chars) {
    throw Error(Errc::ParagraphTooLong,
                "paragraph has " + std::to_string(size_) +
                    " characters; the limit is " + std::to_string(max_chars));
  }
}

HighlightedInput make_highlight(const Paragraph& p, Span span,
                                HighlightKind kind, std::string_view token) {
  if (span.start > span.end || span.end > p.size()) {
    throw Error(Errc::OffsetOutOfRange,
                "span [" + std::to_string(span.start) + ", " +
                    std::to_string(span.end) + ") outside paragraph of length " +
                    std::to_string(p.size()));
  }
  if (span.start == span.end) {
    throw Error(Errc::EmptySpan, "highlight span is empty");
  }
  if (count_highlight_tokens(p.text(), token) != 0) {
    throw Error(Errc::InvalidArgument,
                "paragraph already contains the highlight token");
  }
  const std::string_view text = p.text();
  const std::size_t b0 = unicode::byte_offset(text, span.start);
  const std::size_t b1 = unicode::byte_offset(text, span.end);

  std::string out;
  out.reserve(text.size() + 2 * token.size() + 2);
  out.append(text.substr(0, b0));
  out.append(token);
  out.push_back(' ');
  out.append(text.substr(b0, b1 - b0));
  out.push_back(' ');
  out.append(token);
  out.append(text.substr(b1));
  return HighlightedInput(std::move(out), kind);
}

std::size_t count_highlight_tokens(std::string_view text,
                                   std::string_view token) {
  if (token.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t pos = text.find(token); pos != std::string_view::npos;
       pos = text.find(token, pos + token.size())) {
    ++n;
  }
  return n;
}

std::string strip_highlight(std::string_view text, std::string_view token) {
  std::string out;
  out.reserve(text.size());
  bool opening = true;
  std::size_t cursor = 0;
  while (true) {
    const std::size_t pos = text.find(token, cursor);
    if (pos == std::string_view::npos || token.empty()) break;
    std::size_t keep_end = pos;
    std::size_t next = pos + token.size();
    if (opening) {
      if (next < text.size() && text[next] == ' ') ++next;
    } else if (keep_end > cursor && text[keep_end - 1] == ' ') {
      --keep_end;
    }
    out.append(text.substr(cursor, keep_end - cursor));
    cursor = next;
    opening = !opening;
  }
  out.append(text.substr(cursor));
  return out;
}

std::optional<std::string> highlighted_span(std::string_view text,
                                            std::string_view token) {
  if (token.empty()) return std::nullopt;
  const std::size_t first = text.find(token);
  if (first == std::string_view::npos) return std::nullopt;
  const std::size_t inner = first + token.size();
  const std::size_t second = text.find(token, inner);
  if (second == std::string_view::npos) return std::nullopt;
  return std::string(unicode::trim(text.substr(inner, second - inner)));
}

DecodingParams::DecodingParams(int beam_size, double top_p,
                               int max_output_length)
    : beam_size_(beam_size), top_p_(top_p),
      max_output_length_(max_output_length) {
  if (beam_size_ < 1) {
    throw Error(Errc::InvalidArgument, "beam_size must be positive");
  }
  if (!(top_p_ > 0.0 && top_p_ <= 1.0)) {
    throw Error(Errc::InvalidArgument, "top_p must be in (0, 1]");
  }
  if (max_output_length_ < 1) {
    throw Error(Errc::InvalidArgument, "max_output_length must be positive");
  }
}

}  // namespace qagkit
