#include "qagkit/qaaligned.hpp"

#include <algorithm>
#include <unordered_map>

#include "qagkit/error.hpp"

namespace qagkit {

namespace {

double harmonic(double p, double r) {
  return (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
}

std::unordered_map<std::string, const QAPairSet*> index_by_context(
    const std::vector<QAPairSet>& sets, const char* side) {
  std::unordered_map<std::string, const QAPairSet*> index;
  for (const auto& s : sets) {
    if (!index.emplace(s.context_id, &s).second) {
      throw Error(Errc::DuplicateContextId,
                  std::string("duplicate context_id '") + s.context_id +
                      "' in " + side);
    }
  }
  return index;
}

// Summing in sorted order makes the mean independent of input order down to
// the last bit.
double order_free_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

std::string serialize_pair(const QAPair& pair) {
  return "question: " + pair.question() + ", answer: " + pair.answer();
}

double pair_similarity(const QAPair& gold, const QAPair& generated,
                       const BaseMetric& metric) {
  return metric(serialize_pair(generated), serialize_pair(gold));
}

QAAlignedScore qaaligned_score(const QAPairSet& gold, const QAPairSet& generated,
                               const BaseMetric& metric) {
  QAAlignedScore score;
  score.base_metric = metric.name();
  const auto& g = gold.pairs;
  const auto& h = generated.pairs;
  if (g.empty() && h.empty()) {
    score.f1 = score.precision = score.recall = 1.0;
    return score;
  }
  if (g.empty() || h.empty()) return score;

  std::vector<std::string> gold_text;
  gold_text.reserve(g.size());
  for (const auto& p : g) gold_text.push_back(serialize_pair(p));
  std::vector<std::string> gen_text;
  gen_text.reserve(h.size());
  for (const auto& p : h) gen_text.push_back(serialize_pair(p));

  // best_for_gen[j] = max_i d(i, j); best_for_gold[i] = max_j d(i, j)
  std::vector<double> best_for_gen(h.size(), 0.0);
  std::vector<double> best_for_gold(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < h.size(); ++j) {
      const double d = metric(gen_text[j], gold_text[i]);
      best_for_gen[j] = std::max(best_for_gen[j], d);
      best_for_gold[i] = std::max(best_for_gold[i], d);
    }
  }
  score.recall = order_free_mean(std::move(best_for_gen));
  score.precision = order_free_mean(std::move(best_for_gold));
  score.f1 = harmonic(score.precision, score.recall);
  return score;
}

QAAlignedScore corpus_qaaligned(const std::vector<QAPairSet>& gold,
                                const std::vector<QAPairSet>& generated,
                                const BaseMetric& metric) {
  if (gold.empty()) throw Error(Errc::EmptyInput, "no gold contexts");
  index_by_context(gold, "gold");
  const auto gen_index = index_by_context(generated, "predictions");

  QAAlignedScore corpus;
  corpus.base_metric = metric.name();
  corpus.per_paragraph.reserve(gold.size());
  const QAPairSet empty;
  std::vector<double> f1s, precisions, recalls;
  for (const auto& g : gold) {
    const auto it = gen_index.find(g.context_id);
    const QAPairSet& h = (it == gen_index.end()) ? empty : *it->second;
    const auto s = qaaligned_score(g, h, metric);
    corpus.per_paragraph.push_back({g.context_id, s.f1, s.precision, s.recall});
    f1s.push_back(s.f1);
    precisions.push_back(s.precision);
    recalls.push_back(s.recall);
  }
  corpus.f1 = order_free_mean(std::move(f1s));
  corpus.precision = order_free_mean(std::move(precisions));
  corpus.recall = order_free_mean(std::move(recalls));
  return corpus;
}

}  // namespace qagkit
