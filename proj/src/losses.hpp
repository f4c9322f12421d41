#pragma once

#include <span>
#include <vector>

namespace r2d2::losses {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before every
// logarithm, so all losses stay finite for inputs in [0, 1].
constexpr double kProbEps = 1e-7;

double clamp_prob(double p);

// Binary cross-entropy on the sentence-level entailment probability.
// label 1 = entailed, 0 = contradictory.
double rd_sentence_loss(double p_entailed, int label);
// d loss / d p (zero where the clamp is active).
double rd_sentence_loss_grad(double p_entailed, int label);

// Per-step binary cross-entropy summed over the sentence.
double rd_token_loss(std::span<const double> token_probs, std::span<const int> labels);
std::vector<double> rd_token_loss_grad(std::span<const double> token_probs,
                                       std::span<const int> labels);

// Unlikelihood on the replaced span, likelihood elsewhere:
//   sum_{t in span} -log(1 - p_t)  +  sum_{t not in span} -log p_t
// where p_t is the teacher-forced gold-token probability.
double unlikelihood_loss(std::span<const double> gold_token_probs, std::span<const int> span_mask);
std::vector<double> unlikelihood_loss_grad(std::span<const double> gold_token_probs,
                                           std::span<const int> span_mask);

// Plain negative log likelihood: sum_t -log p_t.
double nll_loss(std::span<const double> gold_token_probs);
std::vector<double> nll_loss_grad(std::span<const double> gold_token_probs);

// Per-instance-group combination:
//   (1 / (N + 1)) * [ lambda * (nll + sum ul) + (1 - lambda) * (rd_true + sum rd_false) ]
// ul_list and rd_false_list must both have length N.
double r2d2_loss(double nll, std::span<const double> ul_list, double rd_true,
                 std::span<const double> rd_false_list, double lambda_weight);

// The logged per-group record.  combined always equals the recombination of
// the parts (checked by recombine()).
struct LossBreakdown {
  double nll = 0.0;
  double ul_sum = 0.0;
  double rd_true = 0.0;
  double rd_false_sum = 0.0;
  double lambda_weight = 0.5;
  int n_false = 0;
  double combined = 0.0;

  double recombine() const;
};

LossBreakdown make_breakdown(double nll, std::span<const double> ul_list, double rd_true,
                             std::span<const double> rd_false_list, double lambda_weight);

}  // namespace r2d2::losses
