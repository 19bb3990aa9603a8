#include "qagkit/error.hpp"

namespace qagkit {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::OffsetOutOfRange: return "OffsetOutOfRange";
    case Errc::EmptySpan: return "EmptySpan";
    case Errc::ParagraphTooLong: return "ParagraphTooLong";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptyQuestion: return "EmptyQuestion";
    case Errc::ProviderUnavailable: return "ProviderUnavailable";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DuplicateContextId: return "DuplicateContextId";
    case Errc::UnknownMetric: return "UnknownMetric";
    case Errc::NoSentences: return "NoSentences";
    case Errc::AnswerNotInParagraph: return "AnswerNotInParagraph";
    case Errc::BackendError: return "BackendError";
    case Errc::EmptyGeneration: return "EmptyGeneration";
    case Errc::InvalidSchedule: return "InvalidSchedule";
    case Errc::TrainerError: return "TrainerError";
    case Errc::CorruptManifest: return "CorruptManifest";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace qagkit
