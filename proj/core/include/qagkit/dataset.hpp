#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qagkit/types.hpp"

namespace qagkit {

/// One QG-Bench row. JSONL key names match the field names exactly.
struct DatasetRecord {
  std::string paragraph;
  std::string sentence;
  std::string question;
  std::string answer;
  std::string paragraph_answer;
  std::string paragraph_sentence;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

enum class SplitName { train, validation, test };

/// Throws InvalidArgument for anything but train/validation/test.
SplitName parse_split_name(std::string_view name);
std::string_view split_name(SplitName split) noexcept;

struct DatasetSplit {
  SplitName name = SplitName::test;
  std::vector<DatasetRecord> records;
};

struct LoadOptions {
  /// Skip invalid lines instead of failing the whole load.
  bool lenient = false;
};

struct LoadReport {
  std::size_t lines_read = 0;
  std::size_t skipped = 0;
  /// (line number, reason) for each skipped line in lenient mode.
  std::vector<std::pair<std::size_t, std::string>> problems;
};

/// Loads a JSON-Lines file of QG-Bench records. `path` is either the file
/// itself or a directory holding `<split>.jsonl`. Blank lines are ignored,
/// unknown keys are ignored.
///
/// Errors (line numbers are 1-based and attached via Error::line()):
/// FileNotFound; MalformedLine for non-JSON or non-object lines;
/// MissingColumn for an absent key; InvariantViolation when a value is not a
/// string, the answer or sentence is not a substring of the paragraph, or a
/// highlighted column does not carry exactly two highlight tokens.
DatasetSplit load_dataset(const std::filesystem::path& path, SplitName split,
                          const LoadOptions& options = {},
                          LoadReport* report = nullptr);

/// Checks the record invariants; returns the first violation or an empty
/// string.
std::string validate_record(const DatasetRecord& record);

/// Writes one JSON object per line with the six schema keys.
void write_dataset(const std::filesystem::path& path, const DatasetSplit& split);

struct ParagraphGroup {
  std::string paragraph;
  QAPairSet pairs;
};

/// Groups records by byte-identical paragraph text. Groups appear in order of
/// first occurrence; pairs keep record order. Context ids are the group's
/// ordinal ("0", "1", ...).
std::vector<ParagraphGroup> group_by_paragraph(const DatasetSplit& split);

/// Mean number of pairs per group. Throws EmptyInput for no groups.
double pairs_per_paragraph(const std::vector<ParagraphGroup>& groups);

}  // namespace qagkit
