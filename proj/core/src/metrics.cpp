#include "qagkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "qagkit/error.hpp"
#include "qagkit/textproc.hpp"
#include "qagkit/unicode.hpp"

namespace qagkit {

namespace {

using NgramCounts = std::map<std::vector<std::string_view>, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string_view> gram(tokens.begin() + i, tokens.begin() + i + n);
    ++counts[std::move(gram)];
  }
  return counts;
}

std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                      : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

double exact_match(std::string_view candidate, std::string_view reference) {
  return unicode::trim(candidate) == unicode::trim(reference) ? 1.0 : 0.0;
}

double bleu4(std::span<const std::string> candidate,
             std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t c_len = candidate.size();
  const std::size_t orders = std::min<std::size_t>(4, c_len);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto cand = count_ngrams(candidate, n);
    const auto ref = count_ngrams(reference, n);
    std::size_t matched = 0;
    for (const auto& [gram, count] : cand) {
      if (auto it = ref.find(gram); it != ref.end()) {
        matched += std::min(count, it->second);
      }
    }
    double precision = 0.0;
    if (matched == 0) {
      if (n == 1) return 0.0;
      precision = 1.0 / (2.0 * static_cast<double>(c_len));
    } else {
      precision = static_cast<double>(matched) /
                  static_cast<double>(c_len - n + 1);
    }
    log_sum += std::log(precision);
  }
  const double bp =
      c_len < reference.size()
          ? std::exp(1.0 - static_cast<double>(reference.size()) /
                               static_cast<double>(c_len))
          : 1.0;
  return std::clamp(bp * std::exp(log_sum / static_cast<double>(orders)), 0.0, 1.0);
}

double bleu4(std::string_view candidate, std::string_view reference,
             Language lang) {
  return bleu4(tokenize_for_metrics(candidate, lang),
               tokenize_for_metrics(reference, lang));
}

double rouge_l(std::span<const std::string> candidate,
               std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l(std::string_view candidate, std::string_view reference,
               Language lang) {
  return rouge_l(tokenize_for_metrics(candidate, lang),
                 tokenize_for_metrics(reference, lang));
}

HashEmbeddingProvider::HashEmbeddingProvider(std::uint64_t seed, std::size_t dim)
    : seed_(seed), dim_(dim) {
  if (dim_ == 0) throw Error(Errc::InvalidArgument, "embedding dim must be positive");
}

std::vector<double> HashEmbeddingProvider::embed_one(std::string_view token) const {
  std::uint64_t state = fnv1a(token, seed_);
  std::vector<double> v(dim_);
  double norm = 0.0;
  for (auto& x : v) {
    // 53 random bits mapped onto [-1, 1).
    x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v.assign(dim_, 0.0);
    v[0] = 1.0;
    return v;
  }
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> HashEmbeddingProvider::embed(
    std::span<const std::string> tokens) const {
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(embed_one(t));
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string endpoint,
                                             std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
  detail::parse_endpoint(endpoint_);
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(
    std::span<const std::string> tokens) const {
  const auto ep = detail::parse_endpoint(endpoint_);
  httplib::Client client(ep.base);
  detail::set_timeouts(client, timeout_);

  const nlohmann::json request = {
      {"tokens", std::vector<std::string>(tokens.begin(), tokens.end())}};
  auto res = client.Post(ep.path("/embed"), request.dump(), "application/json");
  if (!res) {
    throw Error(Errc::ProviderUnavailable,
                "embedding service unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::ProviderUnavailable,
                "embedding service returned HTTP " + std::to_string(res->status))
        .with_http_status(res->status);
  }
  std::vector<std::vector<double>> vectors;
  std::size_t dim = 0;
  try {
    const auto body = nlohmann::json::parse(res->body);
    vectors = body.at("vectors").get<std::vector<std::vector<double>>>();
    dim = body.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ProviderUnavailable,
                std::string("malformed embedding response: ") + e.what());
  }
  if (vectors.size() != tokens.size()) {
    throw Error(Errc::DimensionMismatch,
                "embedding service returned " + std::to_string(vectors.size()) +
                    " vectors for " + std::to_string(tokens.size()) + " tokens");
  }
  for (const auto& v : vectors) {
    if (v.size() != dim) {
      throw Error(Errc::DimensionMismatch,
                  "embedding vector length disagrees with reported dim");
    }
  }
  return vectors;
}

double embedding_f1(std::string_view candidate, std::string_view reference,
                    const EmbeddingProvider& provider, Language lang) {
  const auto c = tokenize_for_metrics(candidate, lang);
  const auto r = tokenize_for_metrics(reference, lang);
  if (c.empty() || r.empty()) return 0.0;

  const auto cv = provider.embed(c);
  const auto rv = provider.embed(r);
  if (cv.size() != c.size() || rv.size() != r.size()) {
    throw Error(Errc::DimensionMismatch, "provider returned wrong vector count");
  }
  const std::size_t dim = cv.front().size();
  auto check = [dim](const auto& vs) {
    for (const auto& v : vs) {
      if (v.size() != dim) {
        throw Error(Errc::DimensionMismatch, "embedding dimensions differ");
      }
    }
  };
  check(cv);
  check(rv);

  // sim[i][j]: candidate token i against reference token j.
  std::vector<std::vector<double>> sim(c.size(), std::vector<double>(r.size()));
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (c[i] == r[j]) {
        sim[i][j] = 1.0;
        continue;
      }
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += cv[i][k] * rv[j][k];
      sim[i][j] = std::clamp(dot, 0.0, 1.0);
    }
  }
  double recall = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    double best = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) best = std::max(best, sim[i][j]);
    recall += best;
  }
  recall /= static_cast<double>(r.size());
  double precision = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    precision += *std::max_element(sim[i].begin(), sim[i].end());
  }
  precision /= static_cast<double>(c.size());
  if (precision + recall == 0.0) return 0.0;
  return std::clamp(2.0 * precision * recall / (precision + recall), 0.0, 1.0);
}

double lexical_overlap_score(std::string_view question,
                             std::string_view paragraph,
                             OverlapOptions options) {
  if (question.empty()) throw Error(Errc::EmptyQuestion, "question is empty");
  std::u32string q = unicode::decode(question);
  std::u32string p = unicode::decode(paragraph);
  if (options.casefold) {
    q = unicode::to_lower(q);
    p = unicode::to_lower(p);
  }
  const std::size_t shared = longest_common_substring_len(q, p);
  return 1.0 - static_cast<double>(shared) / static_cast<double>(q.size());
}

MetricKind parse_metric_kind(std::string_view name) {
  if (name == "exact_match") return MetricKind::exact_match;
  if (name == "bleu4") return MetricKind::bleu4;
  if (name == "rouge_l") return MetricKind::rouge_l;
  if (name == "embedding_f1") return MetricKind::embedding_f1;
  throw Error(Errc::UnknownMetric, "unknown metric '" + std::string(name) + "'");
}

std::string_view metric_name(MetricKind kind) noexcept {
  switch (kind) {
    case MetricKind::exact_match: return "exact_match";
    case MetricKind::bleu4: return "bleu4";
    case MetricKind::rouge_l: return "rouge_l";
    case MetricKind::embedding_f1: return "embedding_f1";
  }
  return "unknown";
}

BaseMetric make_metric(MetricKind kind, Language lang,
                       std::shared_ptr<const EmbeddingProvider> provider) {
  std::string name(metric_name(kind));
  switch (kind) {
    case MetricKind::exact_match:
      return {std::move(name), [](std::string_view c, std::string_view r) {
                return exact_match(c, r);
              }};
    case MetricKind::bleu4:
      return {std::move(name), [lang](std::string_view c, std::string_view r) {
                return bleu4(c, r, lang);
              }};
    case MetricKind::rouge_l:
      return {std::move(name), [lang](std::string_view c, std::string_view r) {
                return rouge_l(c, r, lang);
              }};
    case MetricKind::embedding_f1:
      if (!provider) {
        throw Error(Errc::ProviderUnavailable,
                    "embedding_f1 needs an embedding provider");
      }
      return {std::move(name),
              [lang, provider](std::string_view c, std::string_view r) {
                return embedding_f1(c, r, *provider, lang);
              }};
  }
  throw Error(Errc::UnknownMetric, "unknown metric");
}

BaseMetric make_metric(std::string_view name, Language lang,
                       std::shared_ptr<const EmbeddingProvider> provider) {
  return make_metric(parse_metric_kind(name), lang, std::move(provider));
}

}  // namespace qagkit
