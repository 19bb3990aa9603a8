#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "qagkit/error.hpp"
#include "qagkit/gridsearch.hpp"
#include "synthetic_trainer.hpp"

using namespace qagkit;
using testing_support::lr_seed_grid;
using testing_support::saturating;
using testing_support::SyntheticTrainer;
namespace fs = std::filesystem;

namespace {

std::map<std::string, double> weights(const SearchSpace& s, std::vector<double> a) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < a.size(); ++i) out[s.config_at(i).dump()] = a[i];
  return out;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected qagkit::Error";
  return Errc::InvalidArgument;
}

class SearchDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qagkit_search_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  nlohmann::ordered_json manifest() const {
    std::ifstream in(dir_ / GridSearcher::kManifestName);
    return nlohmann::ordered_json::parse(in);
  }
  void write_manifest(const nlohmann::ordered_json& j) const {
    std::ofstream out(dir_ / GridSearcher::kManifestName);
    out << j.dump(2);
  }

  fs::path dir_;
};

const SearchSettings kSettings{.epochs = 6, .epoch_partial = 2, .n_max_config = 2, .extension_cap = 3};

}  // namespace

TEST(SearchSpace, RowMajorEnumeration) {
  const auto configs = lr_seed_grid().enumerate();
  ASSERT_EQ(configs.size(), 4u);
  EXPECT_EQ(configs[0].dump(), R"({"lr":0.0001,"random_seed":0})");
  EXPECT_EQ(configs[1].dump(), R"({"lr":0.0001,"random_seed":1})");
  EXPECT_EQ(configs[2].dump(), R"({"lr":1e-05,"random_seed":0})");
  EXPECT_EQ(configs[3].dump(), R"({"lr":1e-05,"random_seed":1})");
}

TEST(SearchSpace, JsonForms) {
  const auto a = SearchSpace::from_json(nlohmann::ordered_json::parse(R"({"lr":[1e-4,1e-5],"random_seed":[0,1]})"));
  const auto b = SearchSpace::from_json(
      nlohmann::ordered_json::parse(R"([{"name":"lr","values":[1e-4,1e-5]},{"name":"random_seed","values":[0,1]}])"));
  EXPECT_EQ(a.enumerate(), lr_seed_grid().enumerate());
  EXPECT_EQ(b.enumerate(), lr_seed_grid().enumerate());
  EXPECT_EQ(SearchSpace::from_json(a.to_json()).enumerate(), a.enumerate());
  EXPECT_THROW(SearchSpace::from_json(nlohmann::ordered_json::parse(R"({"lr":[]})")), Error);
  EXPECT_THROW(SearchSpace().add_axis("x", {1}).add_axis("x", {2}), Error);
}

TEST(TrialStatus, Transitions) {
  EXPECT_TRUE(is_legal_transition(TrialStatus::pending, TrialStatus::screened));
  EXPECT_TRUE(is_legal_transition(TrialStatus::screened, TrialStatus::pruned));
  EXPECT_TRUE(is_legal_transition(TrialStatus::finalist, TrialStatus::best));
  EXPECT_TRUE(is_legal_transition(TrialStatus::best, TrialStatus::extended));
  EXPECT_FALSE(is_legal_transition(TrialStatus::pruned, TrialStatus::finalist));
  EXPECT_FALSE(is_legal_transition(TrialStatus::screened, TrialStatus::best));
  EXPECT_FALSE(is_legal_transition(TrialStatus::extended, TrialStatus::best));
}

TEST(GridSearch, InvalidSchedule) {
  auto make = [](SearchSettings s) { GridSearcher(lr_seed_grid(), s); };
  EXPECT_EQ(code_of([&] { make({.epochs = 2, .epoch_partial = 2}); }), Errc::InvalidSchedule);
  EXPECT_EQ(code_of([&] { make({.epochs = 4, .epoch_partial = 0}); }), Errc::InvalidSchedule);
  EXPECT_EQ(code_of([&] { make({.epochs = 4, .epoch_partial = 2, .n_max_config = 0}); }), Errc::InvalidSchedule);
}

TEST(GridSearch, SelectsArgmaxWithExactBudget) {
  const auto space = lr_seed_grid();
  const std::vector<double> a = {0.5, 0.9, 0.7, 0.2};
  for (int k = 1; k <= 4; ++k) {
    SearchSettings s{.epochs = 10, .epoch_partial = 2, .n_max_config = k, .extension_cap = 10};
    SyntheticTrainer trainer(saturating(weights(space, a)));
    const auto r = run_search(space, trainer, s);
    EXPECT_EQ(r.best.index, 1u);
    EXPECT_EQ(r.best.extension_epochs, 10);
    EXPECT_EQ(r.best.status, TrialStatus::extended);
    EXPECT_EQ(r.total_trained_epochs, 4 * 2 + k * 8 + 10);
    EXPECT_EQ(trainer.epochs_trained(), r.total_trained_epochs);
    EXPECT_EQ(*r.best.best_checkpoint_ref, space.config_at(1).dump() + "@20");
    std::size_t pruned = 0;
    for (const auto& t : r.trials) pruned += t.status == TrialStatus::pruned;
    EXPECT_EQ(pruned, static_cast<std::size_t>(4 - k));
  }
}

TEST(GridSearch, StopsWhenScoreDrops) {
  const auto space = lr_seed_grid();
  // Peaks at epoch 6 for every config, scaled by a.
  SyntheticTrainer trainer([](const Config& c, int e) {
    const double a = c["random_seed"].get<int>() == 1 ? 2.0 : 1.0;
    return a * (e <= 6 ? e : 12 - e);
  });
  const auto r = run_search(space, trainer, kSettings);
  EXPECT_EQ(r.best.index, 1u);
  EXPECT_EQ(r.best.extension_epochs, 1);
  EXPECT_TRUE(r.best.extension_stopped);
  EXPECT_EQ(r.best.epochs_done, 7);
  EXPECT_EQ(*r.best.best_checkpoint_ref, space.config_at(1).dump() + "@6");
  EXPECT_DOUBLE_EQ(*r.best.best_val_score, 12.0);
  EXPECT_EQ(r.total_trained_epochs, 4 * 2 + 2 * 4 + 1);
}

TEST(GridSearch, PlateauKeepsExtending) {
  SyntheticTrainer trainer([](const Config& c, int e) { return c["random_seed"].get<int>() + std::min(e, 6) * 0.1; });
  const auto r = run_search(lr_seed_grid(), trainer, kSettings);
  EXPECT_EQ(r.best.extension_epochs, 3);
  EXPECT_FALSE(r.best.extension_stopped);
}

TEST(GridSearch, ZeroExtensionCap) {
  SyntheticTrainer trainer(saturating(weights(lr_seed_grid(), {1, 2, 3, 4})));
  auto s = kSettings;
  s.extension_cap = 0;
  const auto r = run_search(lr_seed_grid(), trainer, s);
  EXPECT_EQ(r.best.index, 3u);
  EXPECT_EQ(r.best.status, TrialStatus::best);
  EXPECT_EQ(r.total_trained_epochs, 4 * 2 + 2 * 4);
}

TEST(GridSearch, TiesGoToLowerIndex) {
  SyntheticTrainer trainer([](const Config&, int e) { return static_cast<double>(e); });
  const auto r = run_search(lr_seed_grid(), trainer, kSettings);
  EXPECT_EQ(r.best.index, 0u);
  EXPECT_EQ(r.trials[0].history,
            (std::vector<TrialStatus>{TrialStatus::pending, TrialStatus::screened, TrialStatus::finalist,
                                      TrialStatus::best, TrialStatus::extended}));
  EXPECT_EQ(r.trials[1].status, TrialStatus::finalist);
  EXPECT_EQ(r.trials[2].status, TrialStatus::pruned);
}

TEST(GridSearch, EveryFinalistWhenKExceedsGrid) {
  const auto space = lr_seed_grid();
  SyntheticTrainer trainer(saturating(weights(space, {0.3, 0.1, 0.8, 0.4})));
  auto s = kSettings;
  s.n_max_config = 9;
  const auto r = run_search(space, trainer, s);
  EXPECT_EQ(r.best.index, 2u);
  for (const auto& t : r.trials) EXPECT_NE(t.status, TrialStatus::pruned);
}

TEST(GridSearch, WorkersDoNotChangeTheLog) {
  const auto space = lr_seed_grid();
  const auto a = weights(space, {0.6, 0.2, 0.9, 0.4});
  SyntheticTrainer t1(saturating(a)), t4(saturating(a));
  auto s4 = kSettings;
  s4.workers = 4;
  const auto r1 = run_search(space, t1, kSettings);
  const auto r4 = run_search(space, t4, s4);
  EXPECT_EQ(r1.log, r4.log);
  EXPECT_EQ(r1.best.index, r4.best.index);
}

TEST(GridSearch, TrainerErrorCarriesContext) {
  SyntheticTrainer trainer([](const Config&, int) { return 1.0; });
  trainer.fail_after(1);
  try {
    run_search(lr_seed_grid(), trainer, kSettings);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TrainerError);
    EXPECT_NE(std::string(e.what()).find("trial 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("simulated crash"), std::string::npos);
  }
}

TEST_F(SearchDir, KillAndResumeReproducesTheLog) {
  const auto space = lr_seed_grid();
  const auto a = weights(space, {0.6, 0.2, 0.9, 0.4});
  SyntheticTrainer reference(saturating(a));
  const auto expected = run_search(space, reference, kSettings);
  const int total_calls = reference.train_calls();

  for (int crash_at = 0; crash_at < total_calls; ++crash_at) {
    fs::remove_all(dir_);
    SyntheticTrainer first(saturating(a));
    first.fail_after(crash_at);
    EXPECT_THROW(run_search(space, first, kSettings, dir_), Error);

    SyntheticTrainer second(saturating(a));
    const auto resumed = run_search(space, second, kSettings, dir_);
    ASSERT_EQ(resumed.log, expected.log) << "crash after " << crash_at << " train calls";
    EXPECT_EQ(resumed.best.index, expected.best.index);
    EXPECT_EQ(resumed.total_trained_epochs, expected.total_trained_epochs);
    EXPECT_EQ(first.train_calls() + second.train_calls(), total_calls);
  }
}

TEST_F(SearchDir, StageTwoRunsOncePerFinalistAfterResume) {
  const auto space = lr_seed_grid();
  const auto a = weights(space, {0.6, 0.2, 0.9, 0.4});
  SyntheticTrainer first(saturating(a));
  first.fail_after(4);  // all four screening calls succeed
  EXPECT_THROW(run_search(space, first, kSettings, dir_), Error);
  EXPECT_EQ(manifest()["phase"], "finishing");

  SyntheticTrainer second(saturating(a));
  run_search(space, second, kSettings, dir_);
  EXPECT_EQ(second.calls_for(space.config_at(0)), 1);
  EXPECT_EQ(second.calls_for(space.config_at(1)), 0);
  EXPECT_EQ(second.calls_for(space.config_at(2)), 1 + kSettings.extension_cap);
  EXPECT_EQ(second.calls_for(space.config_at(3)), 0);
}

TEST_F(SearchDir, FinishedSearchIsANoOp) {
  const auto space = lr_seed_grid();
  SyntheticTrainer t1(saturating(weights(space, {1, 2, 3, 4})));
  const auto first = run_search(space, t1, kSettings, dir_);
  SyntheticTrainer t2(saturating(weights(space, {1, 2, 3, 4})));
  const auto again = run_search(space, t2, kSettings, dir_);
  EXPECT_EQ(t2.train_calls(), 0);
  EXPECT_EQ(again.log, first.log);
  EXPECT_EQ(again.best.best_checkpoint_ref, first.best.best_checkpoint_ref);
  EXPECT_EQ(manifest()["version"], GridSearcher::kManifestVersion);
}

TEST_F(SearchDir, ManifestValidation) {
  const auto space = lr_seed_grid();
  SyntheticTrainer t(saturating(weights(space, {1, 2, 3, 4})));
  run_search(space, t, kSettings, dir_);
  const auto good = manifest();

  auto resume_code = [&](const nlohmann::ordered_json& j, SearchSettings s = kSettings) {
    write_manifest(j);
    SyntheticTrainer fresh(saturating(weights(space, {1, 2, 3, 4})));
    return code_of([&] { run_search(space, fresh, s, dir_); });
  };

  auto illegal = good;
  illegal["trials"][0]["history"] = {"pending", "screened", "best"};
  illegal["trials"][0]["status"] = "best";
  EXPECT_EQ(resume_code(illegal), Errc::CorruptManifest);

  auto version = good;
  version["version"] = 99;
  EXPECT_EQ(resume_code(version), Errc::VersionMismatch);

  auto epochs = good;
  epochs["trials"][1]["epochs_done"] = 5;
  EXPECT_EQ(resume_code(epochs), Errc::CorruptManifest);

  auto settings = kSettings;
  settings.n_max_config = 3;
  EXPECT_EQ(resume_code(good, settings), Errc::ConfigError);

  {
    std::ofstream out(dir_ / GridSearcher::kManifestName);
    out << "{ truncated";
  }
  SyntheticTrainer fresh(saturating(weights(space, {1, 2, 3, 4})));
  EXPECT_EQ(code_of([&] { run_search(space, fresh, kSettings, dir_); }), Errc::CorruptManifest);
}

TEST_F(SearchDir, EmptyDirectoryStartsFresh) {
  fs::create_directories(dir_);
  SyntheticTrainer t(saturating(weights(lr_seed_grid(), {1, 2, 3, 4})));
  const auto r = run_search(lr_seed_grid(), t, kSettings, dir_);
  EXPECT_EQ(r.best.index, 3u);
  EXPECT_TRUE(fs::exists(dir_ / GridSearcher::kManifestName));
}

TEST_F(SearchDir, CommandTrainerRunsExternalProgram) {
  fs::create_directories(dir_);
  const auto script = dir_ / "trainer.sh";
  {
    std::ofstream out(script);
    out << R"sh(#!/bin/sh
# train --epochs N [--from-checkpoint C] --lr X --random_seed S  |  evaluate --checkpoint C
mode=$1; shift
epochs=0; from=""; lr=""; seed=""; ckpt=""
while [ $# -gt 0 ]; do
  case $1 in
    --epochs) epochs=$2 ;;
    --from-checkpoint) from=$2 ;;
    --lr) lr=$2 ;;
    --random_seed) seed=$2 ;;
    --checkpoint) ckpt=$2 ;;
  esac
  shift 2
done
if [ "$mode" = train ]; then
  done_epochs=0
  [ -n "$from" ] && done_epochs=${from##*:}
  echo "training $lr $seed" >&2
  echo "log line"
  echo "ckpt-$lr-$seed:$((done_epochs + epochs))"
else
  e=${ckpt##*:}; rest=${ckpt%:*}; seed=${rest##*-}
  awk -v e="$e" -v s="$seed" 'BEGIN { printf "%.6f\n", (s + 1) * (1 - 2 ^ (-e)) }'
fi
)sh";
  }
  fs::permissions(script, fs::perms::owner_all);
  CommandTrainer trainer(script.string());
  EXPECT_EQ(trainer.train_command(lr_seed_grid().config_at(2), std::string("c'1"), 3),
            script.string() + " train --epochs 3 --from-checkpoint 'c'\\''1' --lr '1e-05' --random_seed '0'");
  EXPECT_EQ(trainer.evaluate_command("x"), script.string() + " evaluate --checkpoint 'x'");

  auto s = kSettings;
  s.extension_cap = 2;
  const auto r = run_search(lr_seed_grid(), trainer, s, dir_);
  EXPECT_EQ(r.best.index, 1u);
  EXPECT_EQ(*r.best.best_checkpoint_ref, "ckpt-0.0001-1:8");
  EXPECT_NEAR(*r.best.best_val_score, 2 * (1 - std::pow(2.0, -8)), 1e-6);

  CommandTrainer failing("false");
  EXPECT_EQ(code_of([&] { failing.evaluate("x"); }), Errc::TrainerError);
  CommandTrainer bad_score("echo");
  EXPECT_EQ(code_of([&] { bad_score.evaluate("x"); }), Errc::TrainerError);
}
