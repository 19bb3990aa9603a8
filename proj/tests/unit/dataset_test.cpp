#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "qagkit/dataset.hpp"
#include "qagkit/error.hpp"

using namespace qagkit;
namespace fs = std::filesystem;

namespace {

DatasetRecord record(const std::string& paragraph, const std::string& sentence, const std::string& question,
                     const std::string& answer) {
  auto hl = [&](const std::string& inner) {
    const auto pos = paragraph.find(inner);
    return paragraph.substr(0, pos) + "<hl> " + inner + " <hl>" + paragraph.substr(pos + inner.size());
  };
  return {paragraph, sentence, question, answer, hl(answer), hl(sentence)};
}

nlohmann::json to_json(const DatasetRecord& r) {
  return {{"paragraph", r.paragraph},
          {"sentence", r.sentence},
          {"question", r.question},
          {"answer", r.answer},
          {"paragraph_answer", r.paragraph_answer},
          {"paragraph_sentence", r.paragraph_sentence}};
}

class DatasetFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qagkit_ds_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::vector<std::string>& lines) {
    const auto path = dir_ / name;
    std::ofstream out(path);
    for (const auto& l : lines) out << l << "\n";
    return path;
  }

  static std::size_t failing_line(const fs::path& p, Errc expect) {
    try {
      load_dataset(p, SplitName::test);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), expect) << e.what();
      return e.line().value_or(0);
    }
    ADD_FAILURE() << "load succeeded";
    return 0;
  }

  fs::path dir_;
};

const DatasetRecord kA = record("Marie Curie won in 1903. She was Polish.", "Marie Curie won in 1903.",
                                "Who won in 1903?", "Marie Curie");
const DatasetRecord kB = record("Marie Curie won in 1903. She was Polish.", "She was Polish.",
                                "What nationality was she?", "Polish");
const DatasetRecord kC = record("Paris is in France.", "Paris is in France.", "Where is Paris?", "France");

}  // namespace

TEST_F(DatasetFiles, LoadsWellFormedFile) {
  const auto p = write("test.jsonl", {to_json(kA).dump(), "", to_json(kB).dump()});
  const auto ds = load_dataset(p, SplitName::test);
  ASSERT_EQ(ds.records.size(), 2u);
  EXPECT_EQ(ds.records[0], kA);
  EXPECT_EQ(ds.name, SplitName::test);
  EXPECT_EQ(load_dataset(dir_, SplitName::test).records.size(), 2u);
}

TEST_F(DatasetFiles, Errors) {
  auto bad_answer = to_json(kA);
  bad_answer["answer"] = "Einstein";
  EXPECT_EQ(failing_line(write("a.jsonl", {to_json(kB).dump(), bad_answer.dump()}), Errc::InvariantViolation), 2u);

  auto missing = to_json(kA);
  missing.erase("paragraph_answer");
  EXPECT_EQ(failing_line(write("b.jsonl", {missing.dump()}), Errc::MissingColumn), 1u);

  EXPECT_EQ(failing_line(write("c.jsonl", {to_json(kA).dump(), "{not json"}), Errc::MalformedLine), 2u);
  EXPECT_EQ(failing_line(write("d.jsonl", {"[1,2]"}), Errc::MalformedLine), 1u);

  auto non_string = to_json(kA);
  non_string["question"] = 3;
  EXPECT_EQ(failing_line(write("e.jsonl", {non_string.dump()}), Errc::InvariantViolation), 1u);

  auto three_tokens = to_json(kA);
  three_tokens["paragraph_sentence"] = "<hl> a <hl> b <hl>";
  EXPECT_EQ(failing_line(write("f.jsonl", {three_tokens.dump()}), Errc::InvariantViolation), 1u);

  EXPECT_THROW(load_dataset(dir_ / "nope.jsonl", SplitName::test), Error);
  try {
    load_dataset(dir_ / "nope.jsonl", SplitName::test);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::FileNotFound);
  }
}

TEST_F(DatasetFiles, LenientModeSkipsAndReports) {
  auto bad = to_json(kA);
  bad["answer"] = "";
  const auto p = write("test.jsonl", {to_json(kA).dump(), bad.dump(), "oops", to_json(kC).dump()});
  LoadReport report;
  const auto ds = load_dataset(p, SplitName::test, {.lenient = true}, &report);
  EXPECT_EQ(ds.records.size(), 2u);
  EXPECT_EQ(report.skipped, 2u);
  ASSERT_EQ(report.problems.size(), 2u);
  EXPECT_EQ(report.problems[0].first, 2u);
  EXPECT_EQ(report.problems[1].first, 3u);
}

TEST_F(DatasetFiles, UnknownKeysIgnored) {
  auto extra = to_json(kC);
  extra["source"] = "wiki";
  EXPECT_EQ(load_dataset(write("test.jsonl", {extra.dump()}), SplitName::test).records.at(0), kC);
}

TEST_F(DatasetFiles, WriteLoadRoundTrip) {
  std::mt19937_64 rng(5);
  DatasetSplit split{SplitName::validation, {}};
  const std::vector<std::string> words = {"Alpha", "beta", "é", "猫", "\"q\"", "back\\slash", "tab\there"};
  for (int i = 0; i < 40; ++i) {
    std::string sentence;
    for (int k = 0; k < 5; ++k) sentence += words[rng() % words.size()] + " ";
    sentence += "end.";
    const std::string paragraph = "Intro. " + sentence + " Outro.";
    const std::string answer = sentence.substr(0, sentence.find(' '));
    split.records.push_back(record(paragraph, sentence, "Q" + std::to_string(i) + "?", answer));
  }
  const auto path = dir_ / "validation.jsonl";
  write_dataset(path, split);
  const auto back = load_dataset(dir_, SplitName::validation);
  EXPECT_EQ(back.records, split.records);
}

TEST(Grouping, ByParagraph) {
  DatasetSplit split{SplitName::test, {kA, kC, kB}};
  const auto groups = group_by_paragraph(split);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].pairs.pairs.size(), 2u);
  EXPECT_EQ(groups[0].pairs.context_id, "0");
  EXPECT_EQ(groups[1].pairs.pairs.size(), 1u);
  EXPECT_EQ(groups[0].pairs.pairs[1].question(), "What nationality was she?");
  EXPECT_TRUE(group_by_paragraph(DatasetSplit{}).empty());
}

TEST(Grouping, PairsPerParagraph) {
  EXPECT_DOUBLE_EQ(pairs_per_paragraph(group_by_paragraph({SplitName::test, {kA, kB, kC}})), 1.5);
  EXPECT_DOUBLE_EQ(pairs_per_paragraph(group_by_paragraph({SplitName::test, {kA, kC}})), 1.0);
  EXPECT_THROW(pairs_per_paragraph({}), Error);
}

TEST(Grouping, SyntheticTenGroupFixture) {
  // Group k gets sizes[k] records; the mean is 49 / 10.
  const std::vector<int> sizes = {5, 3, 7, 4, 6, 5, 2, 8, 5, 4};
  DatasetSplit split{SplitName::test, {}};
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    const std::string para = "Paragraph number " + std::to_string(g) + " is here.";
    for (int k = 0; k < sizes[g]; ++k) {
      split.records.push_back(record(para, para, "Q" + std::to_string(k) + "?", "number"));
    }
  }
  std::shuffle(split.records.begin(), split.records.end(), std::mt19937_64(1));
  EXPECT_DOUBLE_EQ(pairs_per_paragraph(group_by_paragraph(split)), 4.9);
}

TEST(SplitNames, Parse) {
  EXPECT_EQ(parse_split_name("validation"), SplitName::validation);
  EXPECT_EQ(split_name(SplitName::train), "train");
  EXPECT_THROW(parse_split_name("dev"), Error);
}
