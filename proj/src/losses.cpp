#include "losses.hpp"

#include <cmath>
#include <string>

#include "util.hpp"

namespace r2d2::losses {

double clamp_prob(double p) {
  if (!(p == p)) fail(Error::Kind::InvalidArgument, "probability is NaN");
  if (p < kProbEps) return kProbEps;
  if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
  return p;
}

namespace {

bool clamped(double p) { return p < kProbEps || p > 1.0 - kProbEps; }

void check_label(int label) {
  if (label != 0 && label != 1)
    fail(Error::Kind::InvalidArgument, "label must be 0 or 1, got " + std::to_string(label));
}

void check_lengths(size_t probs, size_t labels) {
  if (probs != labels)
    fail(Error::Kind::InvalidArgument,
         "probability/label length mismatch: " + std::to_string(probs) + " vs " +
             std::to_string(labels));
}

}  // namespace

double rd_sentence_loss(double p_entailed, int label) {
  check_label(label);
  double pc = clamp_prob(p_entailed);
  return label == 1 ? -std::log(pc) : -std::log(1.0 - pc);
}

double rd_sentence_loss_grad(double p_entailed, int label) {
  check_label(label);
  if (clamped(p_entailed)) return 0.0;
  return label == 1 ? -1.0 / p_entailed : 1.0 / (1.0 - p_entailed);
}

double rd_token_loss(std::span<const double> token_probs, std::span<const int> labels) {
  check_lengths(token_probs.size(), labels.size());
  double total = 0.0;
  for (size_t t = 0; t < token_probs.size(); ++t)
    total += rd_sentence_loss(token_probs[t], labels[t]);
  return total;
}

std::vector<double> rd_token_loss_grad(std::span<const double> token_probs,
                                       std::span<const int> labels) {
  check_lengths(token_probs.size(), labels.size());
  std::vector<double> grad(token_probs.size());
  for (size_t t = 0; t < token_probs.size(); ++t)
    grad[t] = rd_sentence_loss_grad(token_probs[t], labels[t]);
  return grad;
}

double unlikelihood_loss(std::span<const double> gold_token_probs,
                         std::span<const int> span_mask) {
  check_lengths(gold_token_probs.size(), span_mask.size());
  double total = 0.0;
  for (size_t t = 0; t < gold_token_probs.size(); ++t) {
    check_label(span_mask[t]);
    double pc = clamp_prob(gold_token_probs[t]);
    total += span_mask[t] == 1 ? -std::log(1.0 - pc) : -std::log(pc);
  }
  return total;
}

std::vector<double> unlikelihood_loss_grad(std::span<const double> gold_token_probs,
                                           std::span<const int> span_mask) {
  check_lengths(gold_token_probs.size(), span_mask.size());
  std::vector<double> grad(gold_token_probs.size());
  for (size_t t = 0; t < gold_token_probs.size(); ++t) {
    check_label(span_mask[t]);
    if (clamped(gold_token_probs[t])) {
      grad[t] = 0.0;
    } else {
      grad[t] = span_mask[t] == 1 ? 1.0 / (1.0 - gold_token_probs[t])
                                  : -1.0 / gold_token_probs[t];
    }
  }
  return grad;
}

double nll_loss(std::span<const double> gold_token_probs) {
  double total = 0.0;
  for (double p : gold_token_probs) total += -std::log(clamp_prob(p));
  return total;
}

std::vector<double> nll_loss_grad(std::span<const double> gold_token_probs) {
  std::vector<double> grad(gold_token_probs.size());
  for (size_t t = 0; t < gold_token_probs.size(); ++t)
    grad[t] = clamped(gold_token_probs[t]) ? 0.0 : -1.0 / gold_token_probs[t];
  return grad;
}

double r2d2_loss(double nll, std::span<const double> ul_list, double rd_true,
                 std::span<const double> rd_false_list, double lambda_weight) {
  return make_breakdown(nll, ul_list, rd_true, rd_false_list, lambda_weight).combined;
}

double LossBreakdown::recombine() const {
  double denom = static_cast<double>(n_false) + 1.0;
  return (lambda_weight * (nll + ul_sum) + (1.0 - lambda_weight) * (rd_true + rd_false_sum)) /
         denom;
}

LossBreakdown make_breakdown(double nll, std::span<const double> ul_list, double rd_true,
                             std::span<const double> rd_false_list, double lambda_weight) {
  if (ul_list.size() != rd_false_list.size())
    fail(Error::Kind::InvalidArgument,
         "unlikelihood/detection list length mismatch: " + std::to_string(ul_list.size()) +
             " vs " + std::to_string(rd_false_list.size()));
  if (!(lambda_weight >= 0.0 && lambda_weight <= 1.0))
    fail(Error::Kind::InvalidArgument, "lambda must lie in [0, 1]");
  LossBreakdown b;
  b.nll = nll;
  b.rd_true = rd_true;
  b.lambda_weight = lambda_weight;
  b.n_false = static_cast<int>(ul_list.size());
  for (double v : ul_list) b.ul_sum += v;
  for (double v : rd_false_list) b.rd_false_sum += v;
  b.combined = b.recombine();
  return b;
}

}  // namespace r2d2::losses
