#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qagkit/types.hpp"

namespace qagkit {

// Reference-based base metrics. Each maps (candidate, reference) to [0, 1]
// and scores 1 on identical non-empty input.

/// 1 iff the two strings match after trimming outer whitespace.
double exact_match(std::string_view candidate, std::string_view reference);

/// Sentence-level BLEU over n = 1..4 with uniform weights.
///
/// Modified (clipped) n-gram precisions; brevity penalty exp(1 - |r|/|c|)
/// when |c| < |r|. A zero precision at n >= 2 is replaced by 1/(2·|c|). Orders
/// for which the candidate has no n-grams at all (|c| < n) are left out and
/// the remaining orders weighted uniformly. Empty candidate or reference
/// scores 0, as does a zero unigram precision.
double bleu4(std::span<const std::string> candidate,
             std::span<const std::string> reference);
double bleu4(std::string_view candidate, std::string_view reference,
             Language lang = Language::en);

/// ROUGE-L F-measure (beta = 1) over the token LCS.
double rouge_l(std::span<const std::string> candidate,
               std::span<const std::string> reference);
double rouge_l(std::string_view candidate, std::string_view reference,
               Language lang = Language::en);

/// Maps tokens to unit-norm vectors. Implementations must be deterministic
/// and safe to call concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> embed(
      std::span<const std::string> tokens) const = 0;
  virtual std::string name() const = 0;
};

/// Seeded pseudo-random embeddings keyed on the token bytes. Equal tokens get
/// equal vectors; anything else is effectively independent.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::uint64_t seed = 0, std::size_t dim = 16);

  std::vector<std::vector<double>> embed(
      std::span<const std::string> tokens) const override;
  std::vector<double> embed_one(std::string_view token) const;
  std::string name() const override { return "hash"; }
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

/// Client for an external encoder service:
/// POST {endpoint}/embed {"tokens": [...]} -> {"vectors": [[...]], "dim": n}.
/// Transport failures and non-200 replies raise ProviderUnavailable; replies
/// whose shape disagrees with the request raise DimensionMismatch.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(
      std::string endpoint,
      std::chrono::milliseconds timeout = std::chrono::seconds(30));

  std::vector<std::vector<double>> embed(
      std::span<const std::string> tokens) const override;
  std::string name() const override { return "http:" + endpoint_; }

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

/// Greedy-matching similarity in the style of BERTScore: recall is the mean
/// over reference tokens of the best cosine against candidate tokens,
/// precision the mirror image, F1 their harmonic mean. Cosines are clamped to
/// [0, 1]; identical token strings count as exactly 1.
double embedding_f1(std::string_view candidate, std::string_view reference,
                    const EmbeddingProvider& provider,
                    Language lang = Language::en);

struct OverlapOptions {
  /// Compare lowercased text instead of the raw strings.
  bool casefold = false;
};

/// 1 - |longest common substring of q and p| / |q|, lengths in scalar
/// values. Lower means the question copies more of the paragraph. Throws
/// EmptyQuestion when q is empty.
double lexical_overlap_score(std::string_view question,
                             std::string_view paragraph,
                             OverlapOptions options = {});

enum class MetricKind { exact_match, bleu4, rouge_l, embedding_f1 };

/// Throws UnknownMetric.
MetricKind parse_metric_kind(std::string_view name);
std::string_view metric_name(MetricKind kind) noexcept;

/// A named base metric bound to its language (and provider, for
/// embedding_f1), callable as metric(candidate, reference).
class BaseMetric {
 public:
  using Fn = std::function<double(std::string_view, std::string_view)>;

  BaseMetric(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  const std::string& name() const noexcept { return name_; }
  double operator()(std::string_view candidate,
                    std::string_view reference) const {
    return fn_(candidate, reference);
  }

 private:
  std::string name_;
  Fn fn_;
};

/// Throws ProviderUnavailable for embedding_f1 without a provider.
BaseMetric make_metric(MetricKind kind, Language lang = Language::en,
                       std::shared_ptr<const EmbeddingProvider> provider = nullptr);
BaseMetric make_metric(std::string_view name, Language lang = Language::en,
                       std::shared_ptr<const EmbeddingProvider> provider = nullptr);

}  // namespace qagkit
