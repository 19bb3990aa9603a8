// qagkit command-line front end.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qagkit/dataset.hpp"
#include "qagkit/error.hpp"
#include "qagkit/gridsearch.hpp"
#include "qagkit/pipeline.hpp"
#include "qagkit/qaaligned.hpp"
#include "qagkit/service.hpp"
#include "qagkit/textproc.hpp"

namespace {

using nlohmann::json;
using namespace qagkit;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Prediction files: JSON [[[q, a], ...], ...] aligned with gold paragraph
// groups, or a QG-Bench JSONL file grouped the same way as the gold.
std::vector<QAPairSet> load_pairs(const std::string& path, SplitName split, bool lenient) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    const auto j = json::parse(read_file(path));
    std::vector<QAPairSet> sets;
    for (std::size_t c = 0; c < j.size(); ++c) {
      QAPairSet s{std::to_string(c), {}};
      for (const auto& p : j.at(c)) s.pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
      sets.push_back(std::move(s));
    }
    return sets;
  }
  std::vector<QAPairSet> sets;
  for (auto& g : group_by_paragraph(load_dataset(path, split, {lenient}))) sets.push_back(std::move(g.pairs));
  return sets;
}

int cmd_validate(const std::string& path, SplitName split) {
  LoadReport report;
  const auto ds = load_dataset(path, split, {}, &report);
  std::cout << "ok: " << ds.records.size() << " records\n";
  return 0;
}

int cmd_stats(const std::string& path, SplitName split, bool lenient) {
  LoadReport report;
  const auto ds = load_dataset(path, split, {lenient}, &report);
  const auto groups = group_by_paragraph(ds);
  std::cout << "split\t" << split_name(split) << "\n"
            << "records\t" << ds.records.size() << "\n"
            << "paragraphs\t" << groups.size() << "\n"
            << "pairs_per_paragraph\t" << fixed(pairs_per_paragraph(groups), 1) << "\n";
  if (report.skipped > 0) {
    std::cout << "skipped\t" << report.skipped << "\n";
    for (const auto& [line, why] : report.problems) std::cerr << "line " << line << ": " << why << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& gold_path, const std::string& pred_path, const std::string& metric_name,
             const std::string& lang, SplitName split, const std::string& per_paragraph) {
  const auto gold = load_pairs(gold_path, split, false);
  const auto pred = load_pairs(pred_path, split, false);
  const auto score = corpus_qaaligned(gold, pred, make_metric(metric_name, parse_language(lang)));
  std::cout << "metric\t" << score.base_metric << "\n"
            << "f1\t" << fixed(score.f1, 4) << "\n"
            << "precision\t" << fixed(score.precision, 4) << "\n"
            << "recall\t" << fixed(score.recall, 4) << "\n";
  if (!per_paragraph.empty()) {
    std::ofstream out(per_paragraph);
    out << "context\tf1\tprecision\trecall\n";
    for (const auto& p : score.per_paragraph) {
      out << p.context_id << '\t' << fixed(p.f1, 4) << '\t' << fixed(p.precision, 4) << '\t'
          << fixed(p.recall, 4) << '\n';
    }
  }
  return 0;
}

struct GenerateArgs {
  std::string text;
  std::string file;
  std::string lang = "en";
  std::string ae_endpoint = "stub";
  std::string qg_endpoint = "stub";
  std::string answer;
  int beam = 4;
  double top_p = 0.95;
  int max_length = 64;
  std::string perplexity_endpoint;
  std::string abbreviations;
};

std::shared_ptr<GenerationBackend> backend_for(const std::string& endpoint, BackendRole role,
                                               Language lang) {
  if (endpoint == "stub") return stub_backend(role, lang);
  HttpBackendOptions opts;
  opts.language = lang;
  return http_backend(endpoint, opts);
}

int cmd_generate(const GenerateArgs& a) {
  const Language lang = parse_language(a.lang);
  std::string text = a.file.empty() ? a.text : read_file(a.file);
  const Paragraph p(std::move(text), lang);
  const DecodingParams params(a.beam, a.top_p, a.max_length);
  PipelineOptions opts;
  if (!a.abbreviations.empty()) {
    opts.abbreviations = std::make_shared<const AbbreviationList>(AbbreviationList::load(a.abbreviations));
  }
  if (!a.perplexity_endpoint.empty()) {
    opts.perplexity = std::make_shared<HttpPerplexityScorer>(a.perplexity_endpoint);
  }
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  const auto qg = backend_for(a.qg_endpoint, BackendRole::qg, lang);
  if (!a.answer.empty()) {
    const auto q = generate_question(p, a.answer, *qg, params, opts);
    out.push_back({{"question", q},
                   {"answer", a.answer},
                   {"overlap", round4(lexical_overlap_score(q, p.text()))}});
  } else {
    const auto ae = backend_for(a.ae_endpoint, BackendRole::ae, lang);
    const auto r = generate_qa(p, *ae, *qg, params, opts);
    for (std::size_t i = 0; i < r.pairs.pairs.size(); ++i) {
      nlohmann::ordered_json item = {{"question", r.pairs.pairs[i].question()},
                   {"answer", r.pairs.pairs[i].answer()},
                   {"overlap", round4(r.pair_diagnostics[i].overlap_score)}};
      if (r.pair_diagnostics[i].perplexity) item["perplexity"] = *r.pair_diagnostics[i].perplexity;
      out.push_back(std::move(item));
    }
    for (const auto& m : r.diagnostics.messages) std::cerr << m << "\n";
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_search(const std::string& space_path, const std::string& trainer_cmd,
               const SearchSettings& settings, const std::string& dir) {
  const auto space = SearchSpace::from_json(nlohmann::ordered_json::parse(read_file(space_path)));
  CommandTrainer trainer(trainer_cmd);
  std::optional<std::filesystem::path> d;
  if (!dir.empty()) d = dir;
  const auto r = GridSearcher(space, settings, d).run(trainer);
  for (const auto& e : r.log) {
    std::cout << e.event << "\ttrial=" << e.trial << "\tepochs=" << e.epochs_done << "\tscore="
              << (e.score ? fixed(*e.score, 6) : std::string("-")) << "\t"
              << trial_status_name(e.status) << "\n";
  }
  std::cout << "best\t" << r.best.config.dump() << "\tscore=" << fixed(*r.best.best_val_score, 6)
            << "\tcheckpoint=" << *r.best.best_checkpoint_ref << "\n"
            << "total_trained_epochs\t" << r.total_trained_epochs << "\n";
  return 0;
}

int cmd_serve(std::string config, int port, const std::string& host, std::size_t max_concurrent,
              const std::string& abbreviations) {
  if (const char* env = std::getenv("QAGKIT_CONFIG"); env && *env) config = env;
  if (const char* env = std::getenv("QAGKIT_PORT"); env && *env) port = std::stoi(env);
  ModelRegistry registry = config.empty() ? ModelRegistry{} : ModelRegistry::load(config);
  ServiceOptions opts;
  opts.max_concurrent_requests = max_concurrent;
  if (!abbreviations.empty()) {
    opts.pipeline.abbreviations = std::make_shared<const AbbreviationList>(AbbreviationList::load(abbreviations));
  }
  auto service = std::make_shared<const Service>(std::move(registry), opts);

  // Signals are taken synchronously by one thread; every other thread
  // inherits the blocked mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  HttpServer server(service);
  const int bound = server.bind(host, port);
  std::cerr << "qagkit serving " << service->registry().entries().size() << " model(s) on http://"
            << host << ":" << bound << "\n";
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.wait_until_ready();
    server.stop();
  });
  server.listen();
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Question-answer generation toolkit"};
  app.require_subcommand(1);

  std::string split_s = "test";
  bool lenient = false;

  auto* dataset = app.add_subcommand("dataset", "Inspect QG-Bench JSONL files");
  dataset->require_subcommand(1);
  std::string ds_path;
  auto* validate = dataset->add_subcommand("validate", "Check every record");
  validate->add_option("path", ds_path, "JSONL file or dataset directory")->required();
  validate->add_option("--split", split_s, "Split when path is a directory");
  auto* stats = dataset->add_subcommand("stats", "Paragraph and pair counts");
  stats->add_option("path", ds_path, "JSONL file or dataset directory")->required();
  stats->add_option("--split", split_s, "Split when path is a directory");
  stats->add_flag("--lenient", lenient, "Skip invalid lines");

  auto* eval = app.add_subcommand("eval", "QAAligned F1 of predictions against gold");
  std::string gold, pred, metric = "rouge_l", lang = "en", per_paragraph;
  eval->add_option("--gold", gold, "Gold JSONL or JSON")->required();
  eval->add_option("--pred", pred, "Predicted JSONL or JSON")->required();
  eval->add_option("--metric", metric, "exact_match | bleu4 | rouge_l");
  eval->add_option("--lang", lang, "Language code");
  eval->add_option("--split", split_s, "Split when paths are directories");
  eval->add_option("--per-paragraph", per_paragraph, "Write per-paragraph scores as TSV");

  auto* gen = app.add_subcommand("generate", "Generate question-answer pairs for a paragraph");
  GenerateArgs ga;
  auto* text_opt = gen->add_option("--text", ga.text, "Paragraph text");
  auto* file_opt = gen->add_option("--file", ga.file, "Read the paragraph from a file");
  text_opt->excludes(file_opt);
  gen->add_option("--lang", ga.lang, "Language code");
  gen->add_option("--ae-endpoint", ga.ae_endpoint, "Answer extraction endpoint or 'stub'");
  gen->add_option("--qg-endpoint", ga.qg_endpoint, "Question generation endpoint or 'stub'");
  gen->add_option("--answer", ga.answer, "Generate a single question for this answer");
  gen->add_option("--beam", ga.beam, "Beam size");
  gen->add_option("--top-p", ga.top_p, "Nucleus sampling threshold");
  gen->add_option("--max-length", ga.max_length, "Maximum output length");
  gen->add_option("--perplexity-endpoint", ga.perplexity_endpoint, "Perplexity scorer endpoint");
  gen->add_option("--abbreviations", ga.abbreviations, "Abbreviation list, one per line");
  bool stub = false;
  gen->add_flag("--stub", stub, "Use stub backends for both models");

  auto* search = app.add_subcommand("search", "Two-stage hyperparameter grid search");
  std::string space_path, trainer_cmd, dir;
  SearchSettings settings;
  search->add_option("--space", space_path, "Search space JSON")->required();
  search->add_option("--trainer-cmd", trainer_cmd, "Trainer command")->required();
  search->add_option("--epochs", settings.epochs, "Epochs for finalists (L)");
  search->add_option("--epoch-partial", settings.epoch_partial, "Screening epochs (M)");
  search->add_option("--n-max-config", settings.n_max_config, "Finalists kept (K)");
  search->add_option("--extension-cap", settings.extension_cap, "Maximum extension epochs");
  search->add_option("--workers", settings.workers, "Parallel trainer calls");
  search->add_option("--dir", dir, "Run directory for the resumable manifest");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::string config;
  int port = 8080;
  std::string host = "0.0.0.0";
  std::size_t max_concurrent = 64;
  serve->add_option("--config", config, "Model registry (TOML or JSON)");
  serve->add_option("--port", port, "Listen port");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--max-concurrent", max_concurrent, "Concurrent request ceiling");
  std::string serve_abbreviations;
  serve->add_option("--abbreviations", serve_abbreviations, "Abbreviation list, one per line");

  CLI11_PARSE(app, argc, argv);

  try {
    const SplitName split = parse_split_name(split_s);
    if (*validate) return cmd_validate(ds_path, split);
    if (*stats) return cmd_stats(ds_path, split, lenient);
    if (*eval) return cmd_eval(gold, pred, metric, lang, split, per_paragraph);
    if (*gen) {
      if (ga.text.empty() && ga.file.empty()) throw Error(Errc::InvalidArgument, "need --text or --file");
      if (stub) ga.ae_endpoint = ga.qg_endpoint = "stub";
      return cmd_generate(ga);
    }
    if (*search) return cmd_search(space_path, trainer_cmd, settings, dir);
    if (*serve) return cmd_serve(config, port, host, max_concurrent, serve_abbreviations);
  } catch (const Error& e) {
    std::cerr << "error: " << errc_name(e.code()) << ": " << e.what();
    if (e.line()) std::cerr << " (line " << *e.line() << ")";
    std::cerr << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
