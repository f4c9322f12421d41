#pragma once

#include <array>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "entities.hpp"

namespace r2d2 {

// Faithfulness rates for one generated sentence, all in percent.  The
// prediction's entities are partitioned by membership in the reference and
// the input table:
//   ri  in reference, in input        (grounded and right)
//   rm  in reference, not in input    (right despite missing evidence)
//   mi  not in reference, in input    (copied the wrong cell)
//   mm  not in reference, not in input (invented)
// ri + rm + mi + mm = 100 whenever the prediction has entities.
// rc is the share of reference entities the prediction recovered.
struct NerMetrics {
  double rc = 0.0;
  double ri = 0.0;
  double rm = 0.0;
  double mi = 0.0;
  double mm = 0.0;
  bool empty_prediction = false;  // no entities predicted: partition set to 0
  bool empty_reference = false;   // no entities in reference: rc set to 100
};

using EntitySet = std::set<std::string>;  // normalized forms

NerMetrics ner_metrics(const EntitySet& predicted, const EntitySet& reference,
                       const EntitySet& input);

struct NerCorpusReport {
  NerMetrics micro;  // pooled entity counts across the corpus
  NerMetrics macro_avg;
  std::vector<NerMetrics> per_example;
  int empty_predictions = 0;
  int empty_references = 0;
};

struct NerTriple {
  EntitySet predicted;
  EntitySet reference;
  EntitySet input;
};

NerCorpusReport ner_corpus_metrics(const std::vector<NerTriple>& triples);

// Corpus-level BLEU, n-grams up to 4, geometric mean, brevity penalty.
// A zero clipped count is replaced by kBleuEps; an empty denominator makes
// that order vacuous (precision 1), so identical corpora score exactly 100.
constexpr double kBleuEps = 1e-9;

struct BleuReport {
  double bleu = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  long pred_len = 0;
  long ref_len = 0;
};

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& predictions,
                       const std::vector<std::vector<std::string>>& references);
// Whitespace-split convenience overload.
BleuReport corpus_bleu_text(const std::vector<std::string>& predictions,
                            const std::vector<std::string>& references);

// Plug-in point for sentence-level faithfulness scores produced elsewhere.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual std::string name() const = 0;
  // Must return a value in [0, 1].
  virtual double score(const TableExample& example, const std::string& sentence) = 0;
};

// Looks up scores from a jsonl file of {example_id, sentence, score}.
// Scores outside [0, 1] are rejected at load time; a lookup miss is an error.
class PrescoredFileScorer : public SentenceScorer {
 public:
  explicit PrescoredFileScorer(const std::string& path);
  std::string name() const override { return name_; }
  double score(const TableExample& example, const std::string& sentence) override;

 private:
  std::string name_;
  std::map<std::pair<std::string, std::string>, double> scores_;
};

// "file:PATH" is the only registered kind; anything else raises an error
// naming the available kinds.
std::unique_ptr<SentenceScorer> make_sentence_scorer(const std::string& spec);

// Correlation helpers (used by the metric-reliability harness).
double pearson(const std::vector<double>& x, const std::vector<double>& y);
// Average-rank ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace r2d2
