#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace qagkit {

/// One grid point: axis name -> value, keys in axis declaration order.
using Config = nlohmann::ordered_json;

struct SearchAxis {
  std::string name;
  std::vector<nlohmann::json> values;
};

/// Named axes of candidate values. The grid is their cartesian product,
/// enumerated row-major in declaration order (the last axis varies fastest).
class SearchSpace {
 public:
  /// Throws InvalidArgument for an empty axis or a repeated name.
  SearchSpace& add_axis(std::string name, std::vector<nlohmann::json> values);

  /// Accepts {"lr": [...], "random_seed": [...]} (key order kept) or
  /// [{"name": "lr", "values": [...]}, ...].
  static SearchSpace from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;

  const std::vector<SearchAxis>& axes() const noexcept { return axes_; }
  std::size_t grid_size() const noexcept;
  Config config_at(std::size_t index) const;
  std::vector<Config> enumerate() const;

 private:
  std::vector<SearchAxis> axes_;
};

/// A resumable training backend. Scores are higher-is-better; loss-like
/// scores must be negated. Training M epochs and then N more from the
/// returned checkpoint must be equivalent to training M + N epochs at once.
/// With more than one search worker, calls arrive from several threads.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual std::string train(const Config& config,
                            const std::optional<std::string>& from_checkpoint,
                            int epochs) = 0;
  virtual double evaluate(const std::string& checkpoint) = 0;
};

/// Runs an external program for each call:
///   <command> train --epochs N [--from-checkpoint C] --<axis> <value> ...
///   <command> evaluate --checkpoint C
/// The last non-empty stdout line is the checkpoint reference (train) or the
/// score (evaluate). A non-zero exit status raises TrainerError.
class CommandTrainer final : public Trainer {
 public:
  explicit CommandTrainer(std::string command);

  std::string train(const Config& config,
                    const std::optional<std::string>& from_checkpoint,
                    int epochs) override;
  double evaluate(const std::string& checkpoint) override;

  std::string train_command(const Config& config,
                            const std::optional<std::string>& from_checkpoint,
                            int epochs) const;
  std::string evaluate_command(const std::string& checkpoint) const;

 private:
  std::string command_;
};

enum class TrialStatus { pending, screened, pruned, finalist, best, extended };

std::string_view trial_status_name(TrialStatus s) noexcept;
/// pending -> screened -> {pruned | finalist} -> best -> extended
bool is_legal_transition(TrialStatus from, TrialStatus to) noexcept;

struct ScorePoint {
  int epoch = 0;
  double score = 0.0;
};

struct TrialState {
  std::size_t index = 0;
  Config config;
  TrialStatus status = TrialStatus::pending;
  /// Every status this trial has held, oldest first.
  std::vector<TrialStatus> history{TrialStatus::pending};
  int epochs_done = 0;
  /// Highest score observed for this trial, and where it was observed.
  std::optional<double> best_val_score;
  std::optional<std::string> best_checkpoint_ref;
  /// Latest checkpoint and its score.
  std::optional<std::string> checkpoint_ref;
  std::optional<double> last_score;
  std::vector<ScorePoint> scores;
  int extension_epochs = 0;
  bool extension_stopped = false;
};

struct TrialLogEntry {
  std::size_t trial = 0;
  /// "screen", "select", "finish", "extend"
  std::string event;
  int epochs_done = 0;
  std::optional<double> score;
  TrialStatus status = TrialStatus::pending;

  friend bool operator==(const TrialLogEntry&, const TrialLogEntry&) = default;
};

struct SearchSettings {
  /// L: epochs for finalists.
  int epochs = 10;
  /// M: screening epochs, 1 <= M < L.
  int epoch_partial = 2;
  /// K: finalists kept after screening.
  int n_max_config = 3;
  /// Upper bound on extra epochs for the winning config.
  int extension_cap = 10;
  /// Concurrent trainer calls within a stage; never changes the result.
  int workers = 1;
};

struct SearchResult {
  /// The selected trial, reporting its best checkpoint and score.
  TrialState best;
  std::vector<TrialState> trials;
  std::vector<TrialLogEntry> log;
  int total_trained_epochs = 0;
};

/// Two-stage search: every grid point is trained for M epochs and scored;
/// the top K (ties to the lower grid index) are trained on to L epochs and
/// scored again; the best of those keeps training one epoch at a time until
/// a score falls strictly below the best seen for it or the extension cap is
/// reached. Plateaus continue.
///
/// With a search directory, state is written to `search.json` after every
/// trial transition, and run() resumes from an existing manifest; a finished
/// search returns its stored result without calling the trainer.
///
/// Errors: InvalidSchedule for M < 1, M >= L, K < 1, a negative cap or
/// workers < 1; TrainerError wrapping any trainer failure; CorruptManifest,
/// VersionMismatch, or ConfigError (settings differ) on resume.
class GridSearcher {
 public:
  GridSearcher(SearchSpace space, SearchSettings settings,
               std::optional<std::filesystem::path> dir = std::nullopt);

  SearchResult run(Trainer& trainer);

  static constexpr int kManifestVersion = 1;
  static constexpr const char* kManifestName = "search.json";

 private:
  SearchSpace space_;
  SearchSettings settings_;
  std::optional<std::filesystem::path> dir_;
};

inline SearchResult run_search(const SearchSpace& space, Trainer& trainer,
                               const SearchSettings& settings,
                               std::optional<std::filesystem::path> dir = std::nullopt) {
  return GridSearcher(space, settings, std::move(dir)).run(trainer);
}

}  // namespace qagkit
