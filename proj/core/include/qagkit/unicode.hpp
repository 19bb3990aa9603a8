#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace qagkit::unicode {

/// Decodes UTF-8 into scalar values. Malformed sequences decode to U+FFFD,
/// one replacement per offending byte.
std::u32string decode(std::string_view utf8);

std::string encode(std::u32string_view scalars);
void append_utf8(std::string& out, char32_t c);

/// Number of scalar values in a UTF-8 string (same counting rule as decode).
std::size_t length(std::string_view utf8);

bool is_valid_utf8(std::string_view utf8) noexcept;

/// Byte offset of the scalar at `scalar_offset`; `scalar_offset == length`
/// maps to `utf8.size()`. Returns npos when the offset is past the end.
std::size_t byte_offset(std::string_view utf8, std::size_t scalar_offset);

/// Scalar offset of the byte position `byte_pos` (which must sit on a
/// sequence boundary).
std::size_t scalar_offset(std::string_view utf8, std::size_t byte_pos);

// Classification. These cover the scripts of the supported languages
// (Latin, Cyrillic, Greek, CJK, Hangul) with fixed tables so results do not
// depend on the process locale.

/// White_Space property characters.
bool is_space(char32_t c) noexcept;

/// ASCII punctuation and symbols, Latin-1 punctuation, General Punctuation,
/// CJK Symbols and Punctuation, and fullwidth ASCII punctuation forms.
bool is_punct(char32_t c) noexcept;

char32_t to_lower(char32_t c) noexcept;
bool is_upper(char32_t c) noexcept;
bool is_digit(char32_t c) noexcept;

std::u32string to_lower(std::u32string_view s);

/// Trims Unicode whitespace from both ends.
std::string_view trim(std::string_view utf8);

}  // namespace qagkit::unicode
