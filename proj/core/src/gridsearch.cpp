#include "qagkit/gridsearch.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "parallel.hpp"
#include "qagkit/error.hpp"

namespace qagkit {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr std::array<std::pair<TrialStatus, std::string_view>, 6> kStatusNames{{
    {TrialStatus::pending, "pending"},
    {TrialStatus::screened, "screened"},
    {TrialStatus::pruned, "pruned"},
    {TrialStatus::finalist, "finalist"},
    {TrialStatus::best, "best"},
    {TrialStatus::extended, "extended"},
}};

enum class Phase { screening, finishing, extending, done };

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::screening: return "screening";
    case Phase::finishing: return "finishing";
    case Phase::extending: return "extending";
    case Phase::done: return "done";
  }
  return "done";
}

Error corrupt(const std::string& why) {
  return Error(Errc::CorruptManifest, "corrupt search manifest: " + why);
}

Phase parse_phase(std::string_view s) {
  for (Phase p : {Phase::screening, Phase::finishing, Phase::extending, Phase::done}) {
    if (phase_name(p) == s) return p;
  }
  throw corrupt("unknown phase '" + std::string(s) + "'");
}

TrialStatus parse_status(std::string_view s) {
  for (const auto& [st, name] : kStatusNames) {
    if (name == s) return st;
  }
  throw corrupt("unknown trial status '" + std::string(s) + "'");
}

struct SearchState {
  Phase phase = Phase::screening;
  std::vector<TrialState> trials;
  std::vector<TrialLogEntry> log;
  std::optional<std::size_t> best_trial;
};

template <class T>
ojson opt_to_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

template <class T>
std::optional<T> opt_from_json(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

ojson trial_to_json(const TrialState& t) {
  ojson history = ojson::array();
  for (auto s : t.history) history.push_back(trial_status_name(s));
  ojson scores = ojson::array();
  for (const auto& p : t.scores) scores.push_back({p.epoch, p.score});
  return {
      {"index", t.index},
      {"config", t.config},
      {"status", trial_status_name(t.status)},
      {"history", history},
      {"epochs_done", t.epochs_done},
      {"best_val_score", opt_to_json(t.best_val_score)},
      {"best_checkpoint_ref", opt_to_json(t.best_checkpoint_ref)},
      {"checkpoint_ref", opt_to_json(t.checkpoint_ref)},
      {"last_score", opt_to_json(t.last_score)},
      {"scores", scores},
      {"extension_epochs", t.extension_epochs},
      {"extension_stopped", t.extension_stopped},
  };
}

TrialState trial_from_json(const ojson& j) {
  TrialState t;
  t.index = j.at("index").get<std::size_t>();
  t.config = j.at("config");
  t.status = parse_status(j.at("status").get<std::string>());
  t.history.clear();
  for (const auto& s : j.at("history")) t.history.push_back(parse_status(s.get<std::string>()));
  t.epochs_done = j.at("epochs_done").get<int>();
  t.best_val_score = opt_from_json<double>(j.at("best_val_score"));
  t.best_checkpoint_ref = opt_from_json<std::string>(j.at("best_checkpoint_ref"));
  t.checkpoint_ref = opt_from_json<std::string>(j.at("checkpoint_ref"));
  t.last_score = opt_from_json<double>(j.at("last_score"));
  for (const auto& p : j.at("scores")) {
    t.scores.push_back({p.at(0).get<int>(), p.at(1).get<double>()});
  }
  t.extension_epochs = j.at("extension_epochs").get<int>();
  t.extension_stopped = j.at("extension_stopped").get<bool>();
  return t;
}

ojson log_to_json(const TrialLogEntry& e) {
  return {{"trial", e.trial},
          {"event", e.event},
          {"epochs_done", e.epochs_done},
          {"score", opt_to_json(e.score)},
          {"status", trial_status_name(e.status)}};
}

TrialLogEntry log_from_json(const ojson& j) {
  TrialLogEntry e;
  e.trial = j.at("trial").get<std::size_t>();
  e.event = j.at("event").get<std::string>();
  e.epochs_done = j.at("epochs_done").get<int>();
  e.score = opt_from_json<double>(j.at("score"));
  e.status = parse_status(j.at("status").get<std::string>());
  return e;
}

ojson settings_json(const SearchSpace& space, const SearchSettings& s) {
  return {{"space", space.to_json()},
          {"epochs", s.epochs},
          {"epoch_partial", s.epoch_partial},
          {"n_max_config", s.n_max_config},
          {"extension_cap", s.extension_cap}};
}

void write_file_durably(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw Error(Errc::ConfigError, "cannot write " + tmp);
  const bool ok = std::fwrite(content.data(), 1, content.size(), f) == content.size() &&
                  std::fflush(f) == 0 && ::fsync(::fileno(f)) == 0;
  std::fclose(f);
  if (!ok) throw Error(Errc::ConfigError, "failed writing " + tmp);
  std::filesystem::rename(tmp, path);
}

std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

std::string flag_value(const ojson& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string run_command(const std::string& cmd) {
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw Error(Errc::TrainerError, "cannot launch: " + cmd);
  std::string output;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(Errc::TrainerError, "command failed (status " + std::to_string(status) +
                                        "): " + cmd);
  }
  std::istringstream lines(output);
  std::string line;
  std::string last;
  while (std::getline(lines, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    last = line.substr(b, e - b + 1);
  }
  if (last.empty()) throw Error(Errc::TrainerError, "command printed nothing: " + cmd);
  return last;
}

// Owns one search execution: state, persistence and the three stages.
class SearchRun {
 public:
  SearchRun(const SearchSpace& space, const SearchSettings& settings,
            const std::optional<std::filesystem::path>& dir, Trainer& trainer)
      : space_(space), settings_(settings), dir_(dir), trainer_(trainer) {}

  SearchResult execute() {
    load_or_init();
    if (state_.phase == Phase::screening) screen();
    if (state_.phase == Phase::finishing) finish();
    if (state_.phase == Phase::extending) extend();
    return result();
  }

 private:
  void load_or_init() {
    if (dir_) {
      std::filesystem::create_directories(*dir_);
      const auto path = *dir_ / GridSearcher::kManifestName;
      if (std::filesystem::exists(path)) {
        load(path);
        return;
      }
    }
    const auto configs = space_.enumerate();
    for (std::size_t i = 0; i < configs.size(); ++i) {
      TrialState t;
      t.index = i;
      t.config = configs[i];
      state_.trials.push_back(std::move(t));
    }
    persist();
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path);
    ojson j;
    try {
      j = ojson::parse(in);
    } catch (const ojson::exception& e) {
      throw corrupt(std::string("not valid JSON (") + e.what() + ")");
    }
    try {
      if (!j.is_object()) throw corrupt("top level is not an object");
      const int version = j.at("version").get<int>();
      if (version != GridSearcher::kManifestVersion) {
        throw Error(Errc::VersionMismatch,
                    "manifest version " + std::to_string(version) + ", expected " +
                        std::to_string(GridSearcher::kManifestVersion));
      }
      if (j.at("settings") != settings_json(space_, settings_)) {
        throw Error(Errc::ConfigError,
                    "search settings differ from the manifest in " + dir_->string());
      }
      state_.phase = parse_phase(j.at("phase").get<std::string>());
      state_.best_trial = opt_from_json<std::size_t>(j.at("best_trial"));
      for (const auto& t : j.at("trials")) state_.trials.push_back(trial_from_json(t));
      for (const auto& e : j.at("log")) state_.log.push_back(log_from_json(e));
    } catch (const ojson::exception& e) {
      throw corrupt(e.what());
    }
    validate();
  }

  void validate() const {
    const auto configs = space_.enumerate();
    if (state_.trials.size() != configs.size()) throw corrupt("trial count differs from grid size");
    const int m = settings_.epoch_partial;
    const int l = settings_.epochs;
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < state_.trials.size(); ++i) {
      const auto& t = state_.trials[i];
      const std::string where = "trial " + std::to_string(i) + ": ";
      if (t.index != i) throw corrupt(where + "index out of order");
      if (t.config != configs[i]) throw corrupt(where + "config does not match the grid");
      if (t.history.empty() || t.history.front() != TrialStatus::pending) {
        throw corrupt(where + "history must start at pending");
      }
      for (std::size_t k = 1; k < t.history.size(); ++k) {
        if (!is_legal_transition(t.history[k - 1], t.history[k])) {
          throw corrupt(where + "illegal transition " +
                        std::string(trial_status_name(t.history[k - 1])) + " -> " +
                        std::string(trial_status_name(t.history[k])));
        }
      }
      if (t.history.back() != t.status) throw corrupt(where + "status disagrees with history");
      bool epochs_ok = false;
      switch (t.status) {
        case TrialStatus::pending: epochs_ok = t.epochs_done == 0; break;
        case TrialStatus::screened:
        case TrialStatus::pruned: epochs_ok = t.epochs_done == m; break;
        case TrialStatus::finalist: epochs_ok = t.epochs_done == m || t.epochs_done == l; break;
        case TrialStatus::best:
        case TrialStatus::extended:
          epochs_ok = t.epochs_done == l + t.extension_epochs &&
                      t.extension_epochs <= settings_.extension_cap;
          ++best_count;
          break;
      }
      if (!epochs_ok) throw corrupt(where + "epochs_done inconsistent with status");
      if (t.status != TrialStatus::pending && (!t.checkpoint_ref || !t.last_score)) {
        throw corrupt(where + "missing checkpoint or score");
      }
      const bool screened_phase_only =
          t.status == TrialStatus::pruned || t.status == TrialStatus::finalist;
      if (state_.phase == Phase::screening &&
          (screened_phase_only || best_count > 0)) {
        throw corrupt(where + "status not reachable during screening");
      }
      if (state_.phase != Phase::screening &&
          (t.status == TrialStatus::pending || t.status == TrialStatus::screened)) {
        throw corrupt(where + "unselected trial after screening");
      }
    }
    if (best_count > 1) throw corrupt("more than one best trial");
    const bool need_best = state_.phase == Phase::extending || state_.phase == Phase::done;
    if (need_best != (best_count == 1) || need_best != state_.best_trial.has_value()) {
      throw corrupt("best trial inconsistent with phase");
    }
    if (state_.best_trial && state_.trials.at(*state_.best_trial).status != TrialStatus::best &&
        state_.trials.at(*state_.best_trial).status != TrialStatus::extended) {
      throw corrupt("best_trial does not point at the best trial");
    }
  }

  void persist() {
    if (!dir_) return;
    ojson trials = ojson::array();
    for (const auto& t : state_.trials) trials.push_back(trial_to_json(t));
    ojson log = ojson::array();
    for (const auto& e : state_.log) log.push_back(log_to_json(e));
    ojson j = {{"format", "qagkit-search"},
               {"version", GridSearcher::kManifestVersion},
               {"settings", settings_json(space_, settings_)},
               {"phase", phase_name(state_.phase)},
               {"best_trial", opt_to_json(state_.best_trial)},
               {"trials", trials},
               {"log", log}};
    write_file_durably(*dir_ / GridSearcher::kManifestName, j.dump(2) + "\n");
  }

  static void transition(TrialState& t, TrialStatus to) {
    t.status = to;
    t.history.push_back(to);
  }

  static void record_score(TrialState& t, const std::string& ckpt, double score) {
    t.checkpoint_ref = ckpt;
    t.last_score = score;
    t.scores.push_back({t.epochs_done, score});
    if (!t.best_val_score || score > *t.best_val_score) {
      t.best_val_score = score;
      t.best_checkpoint_ref = ckpt;
    }
  }

  Error trainer_error(const TrialState& t, const char* what) const {
    return Error(Errc::TrainerError, "trial " + std::to_string(t.index) + " " +
                                         t.config.dump() + ": " + what);
  }

  // Trains `indices` by `epochs` in parallel (from their current checkpoint
  // when `resume`); `apply` updates a trial under the lock before persisting.
  template <class Apply>
  void train_stage(const std::vector<std::size_t>& indices, int epochs, bool resume,
                   Apply apply) {
    std::vector<std::optional<Error>> errors(indices.size());
    detail::bounded_for(indices.size(), static_cast<std::size_t>(settings_.workers),
                        [&](std::size_t k) {
      TrialState& t = state_.trials[indices[k]];
      try {
        std::optional<std::string> from;
        if (resume) from = t.checkpoint_ref;
        const auto ckpt = trainer_.train(t.config, from, epochs);
        const double score = trainer_.evaluate(ckpt);
        std::lock_guard lock(mutex_);
        apply(t, ckpt, score);
        persist();
      } catch (const std::exception& e) {
        errors[k] = trainer_error(t, e.what());
      }
    });
    for (auto& e : errors) {
      if (e) throw *e;
    }
  }

  std::vector<std::size_t> ranked(const std::vector<std::size_t>& indices) const {
    std::vector<std::size_t> order = indices;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return *state_.trials[a].last_score > *state_.trials[b].last_score;
    });
    return order;
  }

  void screen() {
    std::vector<std::size_t> pending;
    for (const auto& t : state_.trials) {
      if (t.status == TrialStatus::pending) pending.push_back(t.index);
    }
    train_stage(pending, settings_.epoch_partial, false,
                [&](TrialState& t, const std::string& ckpt, double score) {
                  t.epochs_done = settings_.epoch_partial;
                  record_score(t, ckpt, score);
                  transition(t, TrialStatus::screened);
                });
    for (const auto& t : state_.trials) {
      state_.log.push_back({t.index, "screen", t.epochs_done, t.last_score, TrialStatus::screened});
    }
    std::vector<std::size_t> all(state_.trials.size());
    std::iota(all.begin(), all.end(), 0);
    const auto order = ranked(all);
    const std::size_t keep = std::min<std::size_t>(settings_.n_max_config, order.size());
    std::vector<bool> finalist(order.size(), false);
    for (std::size_t r = 0; r < keep; ++r) finalist[order[r]] = true;
    for (auto& t : state_.trials) {
      transition(t, finalist[t.index] ? TrialStatus::finalist : TrialStatus::pruned);
      state_.log.push_back({t.index, "select", t.epochs_done, t.last_score, t.status});
    }
    state_.phase = Phase::finishing;
    persist();
  }

  void finish() {
    std::vector<std::size_t> todo;
    std::vector<std::size_t> finalists;
    for (const auto& t : state_.trials) {
      if (t.status != TrialStatus::finalist) continue;
      finalists.push_back(t.index);
      if (t.epochs_done < settings_.epochs) todo.push_back(t.index);
    }
    train_stage(todo, settings_.epochs - settings_.epoch_partial, true,
                [&](TrialState& t, const std::string& ckpt, double score) {
                  t.epochs_done = settings_.epochs;
                  record_score(t, ckpt, score);
                });
    for (std::size_t i : finalists) {
      const auto& t = state_.trials[i];
      state_.log.push_back({i, "finish", t.epochs_done, t.last_score, t.status});
    }
    const std::size_t best = ranked(finalists).front();
    transition(state_.trials[best], TrialStatus::best);
    state_.best_trial = best;
    state_.log.push_back({best, "select", state_.trials[best].epochs_done,
                          state_.trials[best].last_score, TrialStatus::best});
    state_.phase = Phase::extending;
    persist();
  }

  void extend() {
    TrialState& t = state_.trials[*state_.best_trial];
    while (!t.extension_stopped && t.extension_epochs < settings_.extension_cap) {
      const double best_seen = *t.best_val_score;
      std::string ckpt;
      double score = 0.0;
      try {
        ckpt = trainer_.train(t.config, t.checkpoint_ref, 1);
        score = trainer_.evaluate(ckpt);
      } catch (const std::exception& e) {
        throw trainer_error(t, e.what());
      }
      ++t.extension_epochs;
      ++t.epochs_done;
      record_score(t, ckpt, score);
      if (t.status == TrialStatus::best) transition(t, TrialStatus::extended);
      if (score < best_seen) t.extension_stopped = true;
      state_.log.push_back({t.index, "extend", t.epochs_done, score, t.status});
      persist();
    }
    state_.phase = Phase::done;
    persist();
  }

  SearchResult result() const {
    SearchResult r;
    r.trials = state_.trials;
    r.log = state_.log;
    r.best = state_.trials.at(*state_.best_trial);
    for (const auto& t : state_.trials) r.total_trained_epochs += t.epochs_done;
    return r;
  }

  const SearchSpace& space_;
  const SearchSettings& settings_;
  const std::optional<std::filesystem::path>& dir_;
  Trainer& trainer_;
  SearchState state_;
  std::mutex mutex_;
};

}  // namespace

// ---------------------------------------------------------------------------

SearchSpace& SearchSpace::add_axis(std::string name, std::vector<json> values) {
  if (values.empty()) {
    throw Error(Errc::InvalidArgument, "search axis '" + name + "' has no values");
  }
  for (const auto& a : axes_) {
    if (a.name == name) throw Error(Errc::InvalidArgument, "duplicate search axis '" + name + "'");
  }
  axes_.push_back({std::move(name), std::move(values)});
  return *this;
}

SearchSpace SearchSpace::from_json(const ojson& j) {
  SearchSpace space;
  auto values_of = [](const ojson& arr, const std::string& name) {
    if (!arr.is_array()) {
      throw Error(Errc::InvalidArgument, "search axis '" + name + "' must be a list");
    }
    std::vector<json> out;
    for (const auto& v : arr) out.push_back(json::parse(v.dump()));
    return out;
  };
  if (j.is_object()) {
    for (const auto& [name, arr] : j.items()) space.add_axis(name, values_of(arr, name));
  } else if (j.is_array()) {
    for (const auto& axis : j) {
      const auto name = axis.at("name").get<std::string>();
      space.add_axis(name, values_of(axis.at("values"), name));
    }
  } else {
    throw Error(Errc::InvalidArgument, "search space must be an object or a list");
  }
  if (space.axes_.empty()) throw Error(Errc::InvalidArgument, "search space has no axes");
  return space;
}

ojson SearchSpace::to_json() const {
  ojson out = ojson::array();
  for (const auto& a : axes_) {
    ojson values = ojson::array();
    for (const auto& v : a.values) values.push_back(ojson::parse(v.dump()));
    out.push_back({{"name", a.name}, {"values", values}});
  }
  return out;
}

std::size_t SearchSpace::grid_size() const noexcept {
  if (axes_.empty()) return 0;
  std::size_t n = 1;
  for (const auto& a : axes_) n *= a.values.size();
  return n;
}

Config SearchSpace::config_at(std::size_t index) const {
  if (index >= grid_size()) throw Error(Errc::InvalidArgument, "grid index out of range");
  std::vector<std::size_t> digits(axes_.size());
  for (std::size_t k = axes_.size(); k-- > 0;) {
    digits[k] = index % axes_[k].values.size();
    index /= axes_[k].values.size();
  }
  Config c = Config::object();
  for (std::size_t k = 0; k < axes_.size(); ++k) {
    c[axes_[k].name] = Config::parse(axes_[k].values[digits[k]].dump());
  }
  return c;
}

std::vector<Config> SearchSpace::enumerate() const {
  std::vector<Config> out;
  const std::size_t n = grid_size();
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(config_at(i));
  return out;
}

std::string_view trial_status_name(TrialStatus s) noexcept {
  for (const auto& [st, name] : kStatusNames) {
    if (st == s) return name;
  }
  return "pending";
}

bool is_legal_transition(TrialStatus from, TrialStatus to) noexcept {
  switch (from) {
    case TrialStatus::pending: return to == TrialStatus::screened;
    case TrialStatus::screened: return to == TrialStatus::pruned || to == TrialStatus::finalist;
    case TrialStatus::finalist: return to == TrialStatus::best;
    case TrialStatus::best: return to == TrialStatus::extended;
    case TrialStatus::pruned:
    case TrialStatus::extended: return false;
  }
  return false;
}

CommandTrainer::CommandTrainer(std::string command) : command_(std::move(command)) {
  if (command_.empty()) throw Error(Errc::InvalidArgument, "trainer command is empty");
}

std::string CommandTrainer::train_command(const Config& config,
                                          const std::optional<std::string>& from_checkpoint,
                                          int epochs) const {
  std::string cmd = command_ + " train --epochs " + std::to_string(epochs);
  if (from_checkpoint) cmd += " --from-checkpoint " + shell_quote(*from_checkpoint);
  for (const auto& [name, value] : config.items()) {
    cmd += " --" + name + " " + shell_quote(flag_value(value));
  }
  return cmd;
}

std::string CommandTrainer::evaluate_command(const std::string& checkpoint) const {
  return command_ + " evaluate --checkpoint " + shell_quote(checkpoint);
}

std::string CommandTrainer::train(const Config& config,
                                  const std::optional<std::string>& from_checkpoint,
                                  int epochs) {
  return run_command(train_command(config, from_checkpoint, epochs));
}

double CommandTrainer::evaluate(const std::string& checkpoint) {
  const auto out = run_command(evaluate_command(checkpoint));
  try {
    std::size_t used = 0;
    const double v = std::stod(out, &used);
    if (used != out.size()) throw std::invalid_argument(out);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::TrainerError, "evaluate printed a non-numeric score: " + out);
  }
}

GridSearcher::GridSearcher(SearchSpace space, SearchSettings settings,
                           std::optional<std::filesystem::path> dir)
    : space_(std::move(space)), settings_(settings), dir_(std::move(dir)) {
  const auto& s = settings_;
  if (s.epoch_partial < 1 || s.epoch_partial >= s.epochs) {
    throw Error(Errc::InvalidSchedule, "need 1 <= epoch_partial < epochs (got M=" +
                                           std::to_string(s.epoch_partial) + ", L=" +
                                           std::to_string(s.epochs) + ")");
  }
  if (s.n_max_config < 1) throw Error(Errc::InvalidSchedule, "n_max_config must be >= 1");
  if (s.extension_cap < 0) throw Error(Errc::InvalidSchedule, "extension_cap must be >= 0");
  if (s.workers < 1) throw Error(Errc::InvalidSchedule, "workers must be >= 1");
  if (space_.grid_size() == 0) throw Error(Errc::InvalidArgument, "search space is empty");
}

SearchResult GridSearcher::run(Trainer& trainer) {
  return SearchRun(space_, settings_, dir_, trainer).execute();
}

}  // namespace qagkit
