#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "entities.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "perturb.hpp"

namespace r2d2 {

struct TrainConfig {
  std::uint64_t seed = 7;
  int epochs = 15;
  int batch_size = 8;
  double lr = 5e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Mixing weight between the generation side (likelihood + unlikelihood)
  // and the detection side of the combined loss.
  double lambda_weight = 0.5;
  std::string rd_granularity = "token";  // "sentence" or "token"
  bool use_rd = true;
  bool use_ul = true;
  // Averages token-level detection losses over steps instead of summing.
  bool token_mean = false;
  double divergence_abort = 1e4;
  double dev_fraction = 0.1;

  void validate() const;
};

// Per-epoch sums over all groups g of the epoch:
//   gen_sum = sum (nll_g + ul_sum_g) / (n_g + 1)
//   det_sum = sum (rd_true_g + rd_false_sum_g) / (n_g + 1)
//   combined_sum = lambda * gen_sum + (1 - lambda) * det_sum, exactly.
// Disabled terms stay exactly zero.
struct EpochLog {
  int epoch = 0;
  long groups = 0;
  double gen_sum = 0.0;
  double det_sum = 0.0;
  double combined_sum = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  long optimizer_steps = 0;
};

// One Adam update from the accumulated gradients, then gradients reset.
// step_count must start at 0 and be passed back in unchanged between calls.
void adam_step(std::vector<ad::Parameter*> params, const TrainConfig& cfg, long& step_count);

// Deterministic split on a hash of the example id; an example lands in dev
// with probability dev_fraction regardless of corpus order.
bool is_dev_example(const std::string& table_id, double dev_fraction, std::uint64_t seed);
void split_dataset(const std::vector<TableExample>& corpus, double dev_fraction,
                   std::uint64_t seed, std::vector<TableExample>* train,
                   std::vector<TableExample>* dev);

// Likelihood-only training of the generator (no detection heads touched).
TrainLog warmup_finetune(Model& model, const std::vector<TableExample>& examples,
                         const TrainConfig& cfg);

// Joint training: likelihood on the reference, unlikelihood on replaced
// spans, and replacement detection on both, combined per group as
//   (1/(n+1)) [lambda (nll + sum ul) + (1-lambda) (rd_true + sum rd_false)].
// Perturbations are grouped by example id; examples without any
// perturbations train with n = 0.
TrainLog r2d2_finetune(Model& model, const std::vector<TableExample>& examples,
                       const std::vector<Perturbation>& perturbations, const TrainConfig& cfg);

// Mann-Whitney AUC with half credit for ties.
double roc_auc(const std::vector<double>& positive_scores,
               const std::vector<double>& negative_scores);

struct DiscriminationEval {
  std::vector<double> positive_scores;  // reference sentences
  std::vector<double> negative_scores;  // perturbed sentences
  double auc = 0.0;
};

// Scores every reference of `examples` and every perturbation belonging to
// one of them with the model's discrimination output.
DiscriminationEval discrimination_eval(Model& model, const std::vector<TableExample>& examples,
                                       const std::vector<Perturbation>& perturbations);

// Mean teacher-forced probability the generator assigns to the replaced
// tokens of each perturbation (the quantity unlikelihood pushes down).
double mean_replaced_token_prob(Model& model, const std::vector<TableExample>& examples,
                                const std::vector<Perturbation>& perturbations);

struct EvalReport {
  NerCorpusReport ner;
  BleuReport bleu;
  std::vector<std::string> predictions;  // one generated sentence per example
};

// Greedy-decodes every example and measures entity faithfulness and BLEU
// against the references.  BLEU and entity sets are case-insensitive.
EvalReport evaluate_model(Model& model, const std::vector<TableExample>& examples,
                          const EntityRecognizer& recognizer);

}  // namespace r2d2
