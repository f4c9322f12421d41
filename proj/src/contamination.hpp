#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "entities.hpp"
#include "eval.hpp"

namespace r2d2 {

// Grades the evaluation metrics themselves: mix a known fraction of
// unfaithful sentences into an otherwise perfect corpus and watch whether
// each metric moves the way a faithfulness metric must.
struct ContaminationConfig {
  std::vector<int> percentages = {0, 25, 50, 75, 100};
  std::uint64_t seed = 7;

  void validate() const;
};

// One unfaithful twin per usable reference.  The twin is the knowledge
// replacement whose span starts latest in the sentence (ties broken by the
// lexicographically smallest replacement text), so the damage sits deep in
// otherwise-correct context.  References with no admissible replacement are
// excluded and counted.
struct ParallelCorpus {
  std::vector<size_t> kept;  // indices into the source corpus
  std::vector<TokenSequence> original;
  std::vector<TokenSequence> contaminated;
  std::vector<std::string> contaminated_sentence;
  // Contamination level p replaces the first round(p% * kept) entries of
  // this permutation, so lower levels are strict subsets of higher ones.
  std::vector<size_t> replace_order;
  long excluded = 0;
};

ParallelCorpus build_parallel_corpus(const std::vector<TableExample>& corpus,
                                     const EntityRecognizer& recognizer,
                                     const Vocabulary& vocab, std::uint64_t seed);

// Which kept entries are contaminated at a level (sorted indices).
std::vector<size_t> contaminated_subset(const ParallelCorpus& parallel, int percentage);

struct MetricSeries {
  std::string metric;
  std::vector<double> values;        // one per percentage
  double spearman_vs_pct = 0.0;      // 0 when the series is constant
  std::string verdict;               // decreasing | increasing | flat | mixed
};

struct ReliabilityReport {
  std::vector<int> percentages;
  std::vector<MetricSeries> series;  // rc, ri, rm, mi, mm, bleu [, scorer]
  long kept = 0;
  long excluded = 0;
};

// Evaluates the metric suite at every contamination level.  Entity metrics
// are pooled over the corpus; scorer (optional) contributes a mean-score
// series under its own name.
ReliabilityReport reliability_table(const std::vector<TableExample>& corpus,
                                    const ParallelCorpus& parallel,
                                    const EntityRecognizer& recognizer,
                                    const ContaminationConfig& cfg, SentenceScorer* scorer);

std::string reliability_to_json(const ReliabilityReport& report);
// Long-format rows (metric, percentage, value) for plotting.
std::string reliability_scatter_tsv(const ReliabilityReport& report);

}  // namespace r2d2
