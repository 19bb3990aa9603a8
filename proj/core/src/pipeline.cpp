#include "qagkit/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "parallel.hpp"
#include "qagkit/error.hpp"
#include "qagkit/qaaligned.hpp"
#include "qagkit/unicode.hpp"

namespace qagkit {

namespace {

using json = nlohmann::json;

constexpr std::string_view kAnswerSeparator = "<sep>";

struct Token {
  std::size_t begin;  // scalar offsets of the punctuation-stripped core
  std::size_t end;
  bool qualifies;
  bool lead_punct;
  bool trail_punct;
};

std::vector<Token> stub_tokens(std::u32string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && unicode::is_space(s[i])) ++i;
    if (i == s.size()) break;
    std::size_t j = i;
    while (j < s.size() && !unicode::is_space(s[j])) ++j;
    std::size_t lo = i;
    std::size_t hi = j;
    while (lo < hi && unicode::is_punct(s[lo])) ++lo;
    while (hi > lo && unicode::is_punct(s[hi - 1])) --hi;
    bool qualifies = false;
    if (lo < hi) {
      const bool digits = std::all_of(s.begin() + lo, s.begin() + hi,
                                      [](char32_t c) { return unicode::is_digit(c); });
      qualifies = digits || unicode::is_upper(s[lo]);
    } else {
      lo = i;
      hi = j;
    }
    out.push_back({lo, hi, qualifies, lo > i, hi < j});
    i = j;
  }
  return out;
}

std::vector<std::string> split_answers(std::string_view output, std::size_t limit) {
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (pieces.size() < limit) {
    const std::size_t pos = output.find(kAnswerSeparator, start);
    pieces.emplace_back(output.substr(start, pos == std::string_view::npos
                                                 ? std::string_view::npos
                                                 : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + kAnswerSeparator.size();
  }
  return pieces;
}

// Result slot for one backend call issued by the pipeline.
struct CallResult {
  std::optional<std::string> output;
  std::optional<Error> error;
};

CallResult call_one(const GenerationBackend& backend, const std::string& input,
                    const DecodingParams& params) {
  CallResult r;
  try {
    auto out = backend.generate(std::span<const std::string>(&input, 1), params);
    if (out.size() != 1) {
      r.error = Error(Errc::BackendError, "backend returned " +
                                              std::to_string(out.size()) +
                                              " outputs for 1 input");
    } else {
      r.output = std::move(out.front());
    }
  } catch (const Error& e) {
    r.error = e;
  } catch (const std::exception& e) {
    r.error = Error(Errc::BackendError, e.what());
  }
  return r;
}

const AbbreviationList& abbreviations_of(const PipelineOptions& options) {
  return options.abbreviations ? *options.abbreviations : AbbreviationList::defaults();
}

Error as_backend_error(const Error& e) {
  if (e.code() == Errc::BackendError) return e;
  Error wrapped(Errc::BackendError, e.what());
  if (e.http_status()) wrapped.with_http_status(*e.http_status());
  if (e.timed_out()) wrapped.with_timeout();
  return wrapped;
}

}  // namespace

// ---------------------------------------------------------------------------
// StubBackend

StubBackend::StubBackend(BackendRole role, Language lang, std::string highlight_token)
    : role_(role), lang_(lang), token_(std::move(highlight_token)) {}

std::vector<std::string> StubBackend::generate(std::span<const std::string> inputs,
                                               const DecodingParams&) const {
  std::vector<std::string> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    out.push_back(role_ == BackendRole::ae ? answer_for(in) : question_for(in));
  }
  return out;
}

BackendDescriptor StubBackend::descriptor() const {
  return {role_ == BackendRole::ae ? "stub-ae" : "stub-qg", lang_};
}

std::string StubBackend::answer_for(std::string_view highlighted_paragraph) const {
  const auto sentence = highlighted_span(highlighted_paragraph, token_);
  if (!sentence || sentence->empty()) return {};
  const std::u32string s = unicode::decode(*sentence);
  const auto tokens = stub_tokens(s);
  if (tokens.empty()) return {};

  std::size_t best_begin = 0;
  std::size_t best_len = 0;
  for (std::size_t i = 0; i < tokens.size();) {
    if (!tokens[i].qualifies) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < tokens.size() && tokens[j].qualifies && !tokens[j].lead_punct && !tokens[j - 1].trail_punct) ++j;
    if (j - i > best_len) {
      best_begin = i;
      best_len = j - i;
    }
    i = j;
  }
  std::u32string_view view(s);
  if (best_len == 0) {
    return unicode::encode(view.substr(tokens[0].begin, tokens[0].end - tokens[0].begin));
  }
  const std::size_t b = tokens[best_begin].begin;
  const std::size_t e = tokens[best_begin + best_len - 1].end;
  return unicode::encode(view.substr(b, e - b));
}

std::string StubBackend::question_for(std::string_view highlighted_paragraph) const {
  const auto answer = highlighted_span(highlighted_paragraph, token_);
  if (!answer || answer->empty()) return {};
  return "What is mentioned in the text: " + *answer + "?";
}

std::shared_ptr<GenerationBackend> stub_backend(BackendRole role, Language lang) {
  return std::make_shared<StubBackend>(role, lang);
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(std::string endpoint, HttpBackendOptions options)
    : endpoint_(std::move(endpoint)), options_(std::move(options)) {
  detail::parse_endpoint(endpoint_);
  if (options_.max_attempts < 1) {
    throw Error(Errc::InvalidArgument, "max_attempts must be at least 1");
  }
  if (options_.max_batch == 0) {
    throw Error(Errc::InvalidArgument, "max_batch must be positive");
  }
}

BackendDescriptor HttpBackend::descriptor() const {
  return {"http:" + endpoint_, options_.language};
}

std::vector<std::string> HttpBackend::generate(std::span<const std::string> inputs,
                                               const DecodingParams& params) const {
  std::vector<std::string> outputs;
  outputs.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); i += options_.max_batch) {
    const auto batch = inputs.subspan(i, std::min(options_.max_batch, inputs.size() - i));
    auto part = post_batch(batch, params);
    std::move(part.begin(), part.end(), std::back_inserter(outputs));
  }
  return outputs;
}

std::vector<std::string> HttpBackend::post_batch(std::span<const std::string> inputs,
                                                 const DecodingParams& params) const {
  const auto ep = detail::parse_endpoint(endpoint_);
  const json request = {
      {"inputs", std::vector<std::string>(inputs.begin(), inputs.end())},
      {"beam_size", params.beam_size()},
      {"top_p", params.top_p()},
      {"max_length", params.max_output_length()},
  };
  const std::string body = request.dump();
  httplib::Headers headers;
  if (options_.auth_token) {
    headers.emplace("Authorization", "Bearer " + *options_.auth_token);
  }

  std::optional<Error> last;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(options_.backoff_base * (1 << (attempt - 2)));
    }
    httplib::Client client(ep.base);
    detail::set_timeouts(client, options_.timeout);
    auto res = client.Post(ep.path("/generate"), headers, body, "application/json");
    if (!res) {
      Error e(Errc::BackendError, "transport failure calling " + endpoint_ + ": " +
                                      httplib::to_string(res.error()));
      if (detail::is_timeout(res.error())) e.with_timeout();
      last = std::move(e);
      continue;
    }
    if (res->status >= 500) {
      last = Error(Errc::BackendError, endpoint_ + " returned HTTP " +
                                           std::to_string(res->status))
                 .with_http_status(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(Errc::BackendError,
                  endpoint_ + " returned HTTP " + std::to_string(res->status))
          .with_http_status(res->status);
    }
    std::vector<std::string> outputs;
    try {
      outputs = json::parse(res->body).at("outputs").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw Error(Errc::BackendError,
                  std::string("protocol error: malformed response (") + e.what() + ")");
    }
    if (outputs.size() != inputs.size()) {
      throw Error(Errc::BackendError, "protocol error: " +
                                          std::to_string(outputs.size()) +
                                          " outputs for " +
                                          std::to_string(inputs.size()) + " inputs");
    }
    return outputs;
  }
  Error e(Errc::BackendError, std::string(last->what()) + " (after " +
                                  std::to_string(options_.max_attempts) + " attempts)");
  if (last->http_status()) e.with_http_status(*last->http_status());
  if (last->timed_out()) e.with_timeout();
  throw e;
}

std::shared_ptr<GenerationBackend> http_backend(std::string endpoint,
                                                HttpBackendOptions options) {
  return std::make_shared<HttpBackend>(std::move(endpoint), std::move(options));
}

// ---------------------------------------------------------------------------
// HttpPerplexityScorer

HttpPerplexityScorer::HttpPerplexityScorer(std::string endpoint,
                                           std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
  detail::parse_endpoint(endpoint_);
}

std::vector<double> HttpPerplexityScorer::score(std::string_view paragraph,
                                                std::span<const QAPair> pairs) const {
  const auto ep = detail::parse_endpoint(endpoint_);
  std::vector<std::string> texts;
  texts.reserve(pairs.size());
  for (const auto& p : pairs) texts.push_back(serialize_pair(p));
  const json request = {{"context", std::string(paragraph)}, {"texts", texts}};

  httplib::Client client(ep.base);
  detail::set_timeouts(client, timeout_);
  auto res = client.Post(ep.path("/perplexity"), request.dump(), "application/json");
  if (!res) {
    throw Error(Errc::BackendError,
                "perplexity scorer unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::BackendError,
                "perplexity scorer returned HTTP " + std::to_string(res->status))
        .with_http_status(res->status);
  }
  std::vector<double> values;
  try {
    values = json::parse(res->body).at("perplexities").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::BackendError, std::string("malformed perplexity response: ") + e.what());
  }
  if (values.size() != pairs.size()) {
    throw Error(Errc::BackendError, "perplexity scorer returned the wrong count");
  }
  return values;
}

// ---------------------------------------------------------------------------
// Pipeline

AnswerExtraction extract_answers(const Paragraph& p, const GenerationBackend& ae,
                                 const DecodingParams& params,
                                 const PipelineOptions& options) {
  const auto spans = split_sentences(p, abbreviations_of(options));
  if (spans.empty()) throw Error(Errc::NoSentences, "paragraph has no sentences");

  std::vector<std::string> inputs;
  inputs.reserve(spans.size());
  for (const auto& span : spans) {
    inputs.push_back(make_sentence_highlight(p, span, options.highlight_token).text());
  }
  std::vector<CallResult> results(inputs.size());
  detail::bounded_for(inputs.size(), options.max_in_flight, [&](std::size_t i) {
    results[i] = call_one(ae, inputs[i], params);
  });

  AnswerExtraction out;
  out.sentences = spans.size();
  std::unordered_set<std::string> seen;
  std::optional<Error> first_error;
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto& r = results[i];
    if (!r.output) {
      ++out.failed_calls;
      out.messages.push_back("sentence " + std::to_string(i) + ": " + r.error->what());
      if (!first_error) first_error = *r.error;
      continue;
    }
    for (const auto& piece : split_answers(*r.output, std::max<std::size_t>(1, options.answers_per_sentence))) {
      std::string answer(unicode::trim(piece));
      if (answer.empty()) {
        ++out.dropped_empty;
        continue;
      }
      if (p.text().find(answer) == std::string::npos) {
        ++out.dropped_not_in_paragraph;
        out.messages.push_back("sentence " + std::to_string(i) +
                               ": answer not found in paragraph: " + answer);
        continue;
      }
      if (!seen.insert(answer).second) {
        ++out.dropped_duplicates;
        continue;
      }
      out.answers.push_back({std::move(answer), i});
    }
  }
  if (out.failed_calls == results.size()) throw as_backend_error(*first_error);
  return out;
}

std::string generate_question(const Paragraph& p, std::string_view answer,
                              const GenerationBackend& qg,
                              const DecodingParams& params,
                              const PipelineOptions& options) {
  if (answer.empty()) {
    throw Error(Errc::AnswerNotInParagraph, "answer is empty");
  }
  const std::size_t byte_pos = p.text().find(answer);
  if (byte_pos == std::string::npos) {
    throw Error(Errc::AnswerNotInParagraph,
                "answer not found in paragraph: " + std::string(answer));
  }
  const std::size_t start = unicode::scalar_offset(p.text(), byte_pos);
  const std::size_t end = start + unicode::length(answer);
  const auto input =
      make_answer_highlight(p, {start, end}, options.highlight_token).text();
  auto result = call_one(qg, input, params);
  if (!result.output) throw as_backend_error(*result.error);
  std::string question(unicode::trim(*result.output));
  if (question.empty()) {
    throw Error(Errc::EmptyGeneration, "backend returned an empty question");
  }
  return question;
}

QAGResult generate_qa(const Paragraph& p, const GenerationBackend& ae,
                      const GenerationBackend& qg, const DecodingParams& params,
                      const PipelineOptions& options) {
  const auto extraction = extract_answers(p, ae, params, options);

  QAGResult result;
  auto& diag = result.diagnostics;
  diag.sentences = extraction.sentences;
  diag.answers_extracted = extraction.answers.size();
  diag.dropped_answers = extraction.dropped_empty +
                         extraction.dropped_not_in_paragraph +
                         extraction.dropped_duplicates;
  diag.failed_ae_calls = extraction.failed_calls;
  diag.messages = extraction.messages;

  const auto& answers = extraction.answers;
  struct Slot {
    std::optional<std::string> question;
    std::optional<Error> error;
  };
  std::vector<Slot> slots(answers.size());
  detail::bounded_for(answers.size(), options.max_in_flight, [&](std::size_t i) {
    try {
      slots[i].question = generate_question(p, answers[i].text, qg, params, options);
    } catch (const Error& e) {
      slots[i].error = e;
    } catch (const std::exception& e) {
      slots[i].error = Error(Errc::BackendError, e.what());
    }
  });

  struct Candidate {
    QAPair pair;
    PairDiagnostics diag;
  };
  std::vector<Candidate> candidates;
  std::optional<Error> first_error;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].question) {
      ++diag.failed_questions;
      diag.messages.push_back("answer '" + answers[i].text + "': " + slots[i].error->what());
      if (!first_error) first_error = *slots[i].error;
      continue;
    }
    PairDiagnostics d;
    d.source_sentence_index = answers[i].sentence_index;
    d.overlap_score = lexical_overlap_score(*slots[i].question, p.text(), options.overlap);
    candidates.push_back({QAPair(*slots[i].question, answers[i].text), d});
  }
  if (!answers.empty() && candidates.empty()) {
    const Error& e = *first_error;
    if (e.code() == Errc::BackendError) throw e;
    throw Error(Errc::BackendError, std::string("every question generation failed: ") + e.what());
  }

  bool ranked_by_perplexity = false;
  if (options.perplexity && !candidates.empty()) {
    std::vector<QAPair> pairs;
    for (const auto& c : candidates) pairs.push_back(c.pair);
    try {
      const auto ppl = options.perplexity->score(p.text(), pairs);
      for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].diag.perplexity = ppl[i];
      ranked_by_perplexity = true;
    } catch (const std::exception& e) {
      diag.messages.push_back(std::string("perplexity unavailable: ") + e.what());
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [ranked_by_perplexity](const Candidate& a, const Candidate& b) {
                     if (ranked_by_perplexity && *a.diag.perplexity != *b.diag.perplexity) {
                       return *a.diag.perplexity < *b.diag.perplexity;
                     }
                     return a.diag.overlap_score < b.diag.overlap_score;
                   });

  result.pairs.pairs.reserve(candidates.size());
  result.pair_diagnostics.reserve(candidates.size());
  for (auto& c : candidates) {
    result.pairs.pairs.push_back(std::move(c.pair));
    result.pair_diagnostics.push_back(c.diag);
  }
  return result;
}

}  // namespace qagkit
