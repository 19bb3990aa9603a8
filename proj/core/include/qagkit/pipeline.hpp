#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qagkit/metrics.hpp"
#include "qagkit/textproc.hpp"
#include "qagkit/types.hpp"

namespace qagkit {

struct BackendDescriptor {
  std::string name;
  Language language = Language::en;
};

/// A text-to-text generator. generate() returns exactly one output per input,
/// in input order, and must be safe to call from several threads at once.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::vector<std::string> generate(std::span<const std::string> inputs,
                                            const DecodingParams& params) const = 0;
  virtual BackendDescriptor descriptor() const = 0;
};

enum class BackendRole { ae, qg };

/// Deterministic stand-in for real models.
///
/// AE: within the highlighted sentence, the longest maximal run of
/// whitespace tokens that are capitalized words or digit strings (ties go to
/// the earliest run), punctuation at the run's edges excluded; punctuation
/// between two tokens splits the run. Without such a run, the sentence's
/// first token. QG: "What is mentioned in the text: A?"
/// for the highlighted answer A.
class StubBackend final : public GenerationBackend {
 public:
  explicit StubBackend(BackendRole role, Language lang = Language::en,
                       std::string highlight_token = std::string(kHighlightToken));

  std::vector<std::string> generate(std::span<const std::string> inputs,
                                    const DecodingParams& params) const override;
  BackendDescriptor descriptor() const override;

  std::string answer_for(std::string_view highlighted_paragraph) const;
  std::string question_for(std::string_view highlighted_paragraph) const;

 private:
  BackendRole role_;
  Language lang_;
  std::string token_;
};

std::shared_ptr<GenerationBackend> stub_backend(BackendRole role,
                                                Language lang = Language::en);

struct HttpBackendOptions {
  std::optional<std::string> auth_token;
  /// Total attempts per request, counting the first one.
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{250};
  std::chrono::milliseconds timeout{std::chrono::seconds(30)};
  /// Inputs per POST /generate call.
  std::size_t max_batch = 32;
  Language language = Language::en;
};

/// Client for a remote model server:
/// POST {endpoint}/generate
///   {"inputs": [...], "beam_size": b, "top_p": p, "max_length": n}
///   -> {"outputs": [...]}
///
/// Transport failures and 5xx replies are retried with exponential backoff
/// (base, 2·base, ...). 4xx replies and malformed or mis-sized responses fail
/// immediately. All failures raise Errc::BackendError; a timeout on the final
/// attempt also sets Error::timed_out().
class HttpBackend final : public GenerationBackend {
 public:
  explicit HttpBackend(std::string endpoint, HttpBackendOptions options = {});

  std::vector<std::string> generate(std::span<const std::string> inputs,
                                    const DecodingParams& params) const override;
  BackendDescriptor descriptor() const override;

 private:
  std::vector<std::string> post_batch(std::span<const std::string> inputs,
                                      const DecodingParams& params) const;

  std::string endpoint_;
  HttpBackendOptions options_;
};

std::shared_ptr<GenerationBackend> http_backend(std::string endpoint,
                                                HttpBackendOptions options = {});

/// Optional ranking signal; lower perplexity ranks first.
class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;
  /// One value per pair, in order.
  virtual std::vector<double> score(std::string_view paragraph,
                                    std::span<const QAPair> pairs) const = 0;
};

/// POST {endpoint}/perplexity {"context": p, "texts": ["question: q, answer: a", ...]}
///   -> {"perplexities": [...]}
class HttpPerplexityScorer final : public PerplexityScorer {
 public:
  explicit HttpPerplexityScorer(
      std::string endpoint,
      std::chrono::milliseconds timeout = std::chrono::seconds(30));
  std::vector<double> score(std::string_view paragraph,
                            std::span<const QAPair> pairs) const override;

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

struct PipelineOptions {
  /// Concurrent backend calls per pipeline stage.
  std::size_t max_in_flight = 4;
  /// AE outputs are split on "<sep>"; at most this many answers are kept per
  /// sentence.
  std::size_t answers_per_sentence = 1;
  std::string highlight_token = std::string(kHighlightToken);
  OverlapOptions overlap;
  std::shared_ptr<const AbbreviationList> abbreviations;
  std::shared_ptr<const PerplexityScorer> perplexity;
};

struct ExtractedAnswer {
  std::string text;
  std::size_t sentence_index = 0;
};

struct AnswerExtraction {
  std::vector<ExtractedAnswer> answers;
  std::size_t sentences = 0;
  std::size_t dropped_empty = 0;
  std::size_t dropped_not_in_paragraph = 0;
  std::size_t dropped_duplicates = 0;
  std::size_t failed_calls = 0;
  std::vector<std::string> messages;
};

/// Runs AE once per sentence (sentence-highlighted paragraph as input).
/// Outputs are trimmed; empty outputs, outputs that are not a substring of
/// the paragraph, and repeats of an earlier answer are dropped and counted.
/// Answers follow sentence order.
///
/// Errors: NoSentences for a paragraph without non-whitespace text;
/// BackendError when every AE call failed.
AnswerExtraction extract_answers(const Paragraph& p, const GenerationBackend& ae,
                                 const DecodingParams& params = {},
                                 const PipelineOptions& options = {});

/// Highlights the first occurrence of `answer` and runs QG on it; returns
/// the trimmed output.
///
/// Errors: AnswerNotInParagraph (also for an empty answer); BackendError;
/// EmptyGeneration.
std::string generate_question(const Paragraph& p, std::string_view answer,
                              const GenerationBackend& qg,
                              const DecodingParams& params = {},
                              const PipelineOptions& options = {});

struct PairDiagnostics {
  std::size_t source_sentence_index = 0;
  double overlap_score = 0.0;
  std::optional<double> perplexity;
};

struct QAGDiagnostics {
  std::size_t sentences = 0;
  std::size_t answers_extracted = 0;
  std::size_t dropped_answers = 0;
  std::size_t failed_ae_calls = 0;
  std::size_t failed_questions = 0;
  std::vector<std::string> messages;
};

struct QAGResult {
  /// Ranked: ascending perplexity when a scorer is configured, then
  /// ascending overlap score; ties keep sentence order.
  QAPairSet pairs;
  /// Parallel to pairs.pairs.
  std::vector<PairDiagnostics> pair_diagnostics;
  QAGDiagnostics diagnostics;
};

/// extract_answers, then generate_question for every answer. Failed
/// question generations are dropped and counted.
///
/// Errors: NoSentences; BackendError when every AE call or every QG call
/// failed.
QAGResult generate_qa(const Paragraph& p, const GenerationBackend& ae,
                      const GenerationBackend& qg,
                      const DecodingParams& params = {},
                      const PipelineOptions& options = {});

}  // namespace qagkit
