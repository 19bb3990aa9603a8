#pragma once

#include <string>
#include <vector>

#include "qagkit/metrics.hpp"
#include "qagkit/types.hpp"

namespace qagkit {

struct ParagraphScore {
  std::string context_id;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct QAAlignedScore {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::string base_metric;
  /// Filled by corpus_qaaligned; empty for a single-paragraph score.
  std::vector<ParagraphScore> per_paragraph;
};

/// "question: {q}, answer: {a}"
std::string serialize_pair(const QAPair& pair);

/// s(t(gold), t(gen)) with the generated serialization passed as the
/// candidate and the gold serialization as the reference.
double pair_similarity(const QAPair& gold, const QAPair& generated,
                       const BaseMetric& metric);

/// QAAligned F1/P/R for one paragraph.
///
/// With d the |gold| x |gen| similarity matrix:
///   R = mean over generated pairs of the max d against any gold pair
///   P = mean over gold pairs of the max d against any generated pair
///   F1 = 2PR / (P + R), or 0 when P + R = 0.
///
/// Note the naming: R averages over the generated side and P over the gold
/// side, the reverse of the usual precision/recall convention.
///
/// The metric is evaluated exactly |gold|·|gen| times. Both sets empty scores
/// (1, 1, 1); exactly one empty scores (0, 0, 0).
QAAlignedScore qaaligned_score(const QAPairSet& gold, const QAPairSet& generated,
                               const BaseMetric& metric);

/// Macro average of per-paragraph scores over the gold contexts. Generated
/// sets are matched by context_id; a gold context without one is scored
/// against an empty set, and generated contexts absent from gold are
/// ignored. Throws DuplicateContextId when either side repeats an id and
/// EmptyInput when `gold` is empty.
QAAlignedScore corpus_qaaligned(const std::vector<QAPairSet>& gold,
                                const std::vector<QAPairSet>& generated,
                                const BaseMetric& metric);

}  // namespace qagkit
