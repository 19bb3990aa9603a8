#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qagkit {

enum class Errc {
  InvalidArgument,
  OffsetOutOfRange,
  EmptySpan,
  ParagraphTooLong,
  FileNotFound,
  MalformedLine,
  MissingColumn,
  InvariantViolation,
  EmptyInput,
  EmptyQuestion,
  ProviderUnavailable,
  DimensionMismatch,
  DuplicateContextId,
  UnknownMetric,
  NoSentences,
  AnswerNotInParagraph,
  BackendError,
  EmptyGeneration,
  InvalidSchedule,
  TrainerError,
  CorruptManifest,
  VersionMismatch,
  ConfigError,
};

std::string_view errc_name(Errc code) noexcept;

/// Single exception type used across the library. The code identifies the
/// failure class; the optional fields carry the structured context some
/// failures have (a JSONL line number, an HTTP status, a timeout flag).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

  std::optional<std::size_t> line() const noexcept { return line_; }
  Error& with_line(std::size_t line) {
    line_ = line;
    return *this;
  }

  std::optional<int> http_status() const noexcept { return http_status_; }
  Error& with_http_status(int status) {
    http_status_ = status;
    return *this;
  }

  bool timed_out() const noexcept { return timed_out_; }
  Error& with_timeout() {
    timed_out_ = true;
    return *this;
  }

 private:
  Errc code_;
  std::optional<std::size_t> line_;
  std::optional<int> http_status_;
  bool timed_out_ = false;
};

}  // namespace qagkit
