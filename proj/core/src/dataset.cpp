#include "qagkit/dataset.hpp"

#include <array>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "qagkit/error.hpp"

namespace qagkit {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 6> kColumns{
    "paragraph", "sentence",         "question",
    "answer",    "paragraph_answer", "paragraph_sentence"};

DatasetRecord parse_line(const std::string& line, std::size_t line_no) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedLine, "line " + std::to_string(line_no) +
                                         ": invalid JSON (" + e.what() + ")")
        .with_line(line_no);
  }
  if (!obj.is_object()) {
    throw Error(Errc::MalformedLine,
                "line " + std::to_string(line_no) + ": expected a JSON object")
        .with_line(line_no);
  }
  std::array<std::string, kColumns.size()> values;
  for (std::size_t k = 0; k < kColumns.size(); ++k) {
    const auto it = obj.find(kColumns[k]);
    if (it == obj.end()) {
      throw Error(Errc::MissingColumn, "line " + std::to_string(line_no) +
                                           ": missing column '" +
                                           std::string(kColumns[k]) + "'")
          .with_line(line_no);
    }
    if (!it->is_string()) {
      throw Error(Errc::InvariantViolation,
                  "line " + std::to_string(line_no) + ": column '" +
                      std::string(kColumns[k]) + "' is not a string")
          .with_line(line_no);
    }
    values[k] = it->get<std::string>();
  }
  DatasetRecord rec{std::move(values[0]), std::move(values[1]),
                    std::move(values[2]), std::move(values[3]),
                    std::move(values[4]), std::move(values[5])};
  if (auto reason = validate_record(rec); !reason.empty()) {
    throw Error(Errc::InvariantViolation,
                "line " + std::to_string(line_no) + ": " + reason)
        .with_line(line_no);
  }
  return rec;
}

}  // namespace

SplitName parse_split_name(std::string_view name) {
  if (name == "train") return SplitName::train;
  if (name == "validation") return SplitName::validation;
  if (name == "test") return SplitName::test;
  throw Error(Errc::InvalidArgument, "unknown split '" + std::string(name) + "'");
}

std::string_view split_name(SplitName split) noexcept {
  switch (split) {
    case SplitName::train: return "train";
    case SplitName::validation: return "validation";
    case SplitName::test: return "test";
  }
  return "test";
}

std::string validate_record(const DatasetRecord& r) {
  if (r.question.find_first_not_of(" \t\r\n") == std::string::npos) {
    return "question is empty";
  }
  if (r.answer.find_first_not_of(" \t\r\n") == std::string::npos) {
    return "answer is empty";
  }
  if (r.paragraph.find(r.answer) == std::string::npos) {
    return "answer is not a substring of paragraph";
  }
  if (r.paragraph.find(r.sentence) == std::string::npos) {
    return "sentence is not a substring of paragraph";
  }
  if (count_highlight_tokens(r.paragraph_answer) != 2) {
    return "paragraph_answer must contain exactly two highlight tokens";
  }
  if (count_highlight_tokens(r.paragraph_sentence) != 2) {
    return "paragraph_sentence must contain exactly two highlight tokens";
  }
  return {};
}

DatasetSplit load_dataset(const std::filesystem::path& path, SplitName split,
                          const LoadOptions& options, LoadReport* report) {
  std::filesystem::path file = path;
  if (std::filesystem::is_directory(path)) {
    file = path / (std::string(split_name(split)) + ".jsonl");
  }
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open " + file.string());

  DatasetSplit out;
  out.name = split;
  LoadReport local;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++local.lines_read;
    try {
      out.records.push_back(parse_line(line, line_no));
    } catch (const Error& e) {
      if (!options.lenient) throw;
      ++local.skipped;
      local.problems.emplace_back(line_no, e.what());
    }
  }
  if (report) *report = std::move(local);
  return out;
}

void write_dataset(const std::filesystem::path& path, const DatasetSplit& split) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::FileNotFound, "cannot write " + path.string());
  for (const auto& r : split.records) {
    json obj = {{"paragraph", r.paragraph},
                {"sentence", r.sentence},
                {"question", r.question},
                {"answer", r.answer},
                {"paragraph_answer", r.paragraph_answer},
                {"paragraph_sentence", r.paragraph_sentence}};
    out << obj.dump() << '\n';
  }
  if (!out) throw Error(Errc::FileNotFound, "write failed for " + path.string());
}

std::vector<ParagraphGroup> group_by_paragraph(const DatasetSplit& split) {
  std::vector<ParagraphGroup> groups;
  std::unordered_map<std::string_view, std::size_t> index;
  for (const auto& r : split.records) {
    auto it = index.find(r.paragraph);
    if (it == index.end()) {
      ParagraphGroup g;
      g.paragraph = r.paragraph;
      g.pairs.context_id = std::to_string(groups.size());
      groups.push_back(std::move(g));
      // Key on the record's own storage, which outlives this loop.
      it = index.emplace(r.paragraph, groups.size() - 1).first;
    }
    groups[it->second].pairs.pairs.emplace_back(r.question, r.answer);
  }
  return groups;
}

double pairs_per_paragraph(const std::vector<ParagraphGroup>& groups) {
  if (groups.empty()) throw Error(Errc::EmptyInput, "no paragraph groups");
  std::size_t total = 0;
  for (const auto& g : groups) total += g.pairs.pairs.size();
  return static_cast<double>(total) / static_cast<double>(groups.size());
}

}  // namespace qagkit
