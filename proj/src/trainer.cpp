#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "losses.hpp"

namespace r2d2 {

void TrainConfig::validate() const {
  if (epochs < 0) fail(Error::Kind::Config, "epochs must be non-negative");
  if (batch_size < 1) fail(Error::Kind::Config, "batch size must be >= 1");
  if (!(lr > 0.0)) fail(Error::Kind::Config, "learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    fail(Error::Kind::Config, "adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail(Error::Kind::Config, "adam epsilon must be positive");
  if (!(lambda_weight >= 0.0 && lambda_weight <= 1.0))
    fail(Error::Kind::Config, "lambda must lie in [0, 1]");
  if (rd_granularity != "sentence" && rd_granularity != "token")
    fail(Error::Kind::Config,
         "unknown detection granularity '" + rd_granularity + "' (expected sentence or token)");
  if (!(divergence_abort > 0.0)) fail(Error::Kind::Config, "divergence threshold must be positive");
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0))
    fail(Error::Kind::Config, "dev fraction must lie in [0, 1)");
}

void adam_step(std::vector<ad::Parameter*> params, const TrainConfig& cfg, long& step_count) {
  ++step_count;
  double b1 = cfg.adam_beta1;
  double b2 = cfg.adam_beta2;
  double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count));
  for (ad::Parameter* p : params) {
    p->adam_m = b1 * p->adam_m + (1.0 - b1) * p->grad;
    p->adam_v = (b2 * p->adam_v.array() + (1.0 - b2) * p->grad.array().square()).matrix();
    p->value.array() -=
        cfg.lr * (p->adam_m.array() / c1) / ((p->adam_v.array() / c2).sqrt() + cfg.adam_eps);
    p->zero_grad();
  }
}

bool is_dev_example(const std::string& table_id, double dev_fraction, std::uint64_t seed) {
  std::uint64_t h = derive_seed(seed, {"dev-split", table_id});
  double u = static_cast<double>(h % 1000000ull) / 1000000.0;
  return u < dev_fraction;
}

void split_dataset(const std::vector<TableExample>& corpus, double dev_fraction,
                   std::uint64_t seed, std::vector<TableExample>* train,
                   std::vector<TableExample>* dev) {
  for (const auto& ex : corpus) {
    if (is_dev_example(ex.table_id, dev_fraction, seed))
      dev->push_back(ex);
    else
      train->push_back(ex);
  }
}

namespace {

struct Group {
  const TableExample* example = nullptr;
  TokenSequence src;
  TokenSequence ref;
  std::vector<const Perturbation*> perturbations;
};

std::vector<Group> build_groups(const Model& model, const std::vector<TableExample>& examples,
                                const std::vector<Perturbation>& perturbations) {
  std::map<std::string, std::vector<const Perturbation*>> by_id;
  for (const auto& p : perturbations) by_id[p.example_id].push_back(&p);

  std::vector<Group> groups;
  groups.reserve(examples.size());
  for (const auto& ex : examples) {
    Group g;
    g.example = &ex;
    g.src = linearize(ex, model.vocab());
    g.ref = tokenize(ex.reference, model.vocab());
    auto it = by_id.find(ex.table_id);
    if (it != by_id.end()) g.perturbations = it->second;
    groups.push_back(std::move(g));
  }
  return groups;
}

// Gradient scale applied on top of batch averaging for one loss term.
struct GroupResult {
  double gen = 0.0;  // (nll + sum ul) / (n + 1)
  double det = 0.0;  // (rd_true + sum rd_false) / (n + 1)
};

GroupResult process_group(Model& model, const Group& g, const TrainConfig& cfg,
                          Rng* dropout_rng, double batch_scale) {
  double n_false = static_cast<double>(g.perturbations.size());
  double denom = n_false + 1.0;
  double coef_gen = cfg.lambda_weight / denom * batch_scale;
  double coef_det = (1.0 - cfg.lambda_weight) / denom * batch_scale;
  bool token_rd = cfg.rd_granularity == "token";

  double nll = 0.0, ul_sum = 0.0, rd_true = 0.0, rd_false_sum = 0.0;

  {
    ad::Tape tape;
    DecodeTrace trace = model.forward(tape, g.src.ids, g.ref.ids, dropout_rng);
    std::vector<double> gold = model.gold_probs(tape, trace);
    nll = losses::nll_loss(gold);
    std::vector<double> gnll = losses::nll_loss_grad(gold);
    for (size_t t = 0; t < gold.size(); ++t)
      tape.grad(trace.probs)(static_cast<long>(t), trace.targets[t]) += coef_gen * gnll[t];

    if (cfg.use_rd) {
      if (token_rd) {
        const Eigen::MatrixXd& tp = tape.value(trace.token_probs);
        size_t steps = static_cast<size_t>(tp.rows());
        std::vector<double> probs(steps);
        for (size_t t = 0; t < steps; ++t) probs[t] = tp(static_cast<long>(t), 0);
        std::vector<int> labels(steps, 1);
        double scale = cfg.token_mean ? 1.0 / static_cast<double>(steps) : 1.0;
        rd_true = scale * losses::rd_token_loss(probs, labels);
        std::vector<double> grd = losses::rd_token_loss_grad(probs, labels);
        for (size_t t = 0; t < steps; ++t)
          tape.grad(trace.token_probs)(static_cast<long>(t), 0) += coef_det * scale * grd[t];
      } else {
        double pt = tape.value(trace.sentence_prob)(0, 0);
        rd_true = losses::rd_sentence_loss(pt, 1);
        tape.grad(trace.sentence_prob)(0, 0) += coef_det * losses::rd_sentence_loss_grad(pt, 1);
      }
    }
    tape.backward();
  }

  for (const Perturbation* pert : g.perturbations) {
    ad::Tape tape;
    DecodeTrace trace = model.forward(tape, g.src.ids, pert->tokens.ids, dropout_rng);
    size_t steps = pert->tokens.size() + 1;

    if (cfg.use_ul) {
      std::vector<double> gold = model.gold_probs(tape, trace);
      std::vector<int> span_mask(steps, 0);
      for (int t = pert->span_start; t < pert->span_end; ++t) span_mask[static_cast<size_t>(t)] = 1;
      double ul = losses::unlikelihood_loss(gold, span_mask);
      ul_sum += ul;
      std::vector<double> gul = losses::unlikelihood_loss_grad(gold, span_mask);
      for (size_t t = 0; t < gold.size(); ++t)
        tape.grad(trace.probs)(static_cast<long>(t), trace.targets[t]) += coef_gen * gul[t];
    }

    if (cfg.use_rd) {
      if (token_rd) {
        if (pert->token_labels.size() != steps)
          fail(Error::Kind::Runtime, "perturbation of " + pert->example_id +
                                         " has labels for " +
                                         std::to_string(pert->token_labels.size()) +
                                         " steps, expected " + std::to_string(steps));
        const Eigen::MatrixXd& tp = tape.value(trace.token_probs);
        std::vector<double> probs(steps);
        for (size_t t = 0; t < steps; ++t) probs[t] = tp(static_cast<long>(t), 0);
        double scale = cfg.token_mean ? 1.0 / static_cast<double>(steps) : 1.0;
        double rd = scale * losses::rd_token_loss(probs, pert->token_labels);
        rd_false_sum += rd;
        std::vector<double> grd = losses::rd_token_loss_grad(probs, pert->token_labels);
        for (size_t t = 0; t < steps; ++t)
          tape.grad(trace.token_probs)(static_cast<long>(t), 0) += coef_det * scale * grd[t];
      } else {
        double pf = tape.value(trace.sentence_prob)(0, 0);
        rd_false_sum += losses::rd_sentence_loss(pf, 0);
        tape.grad(trace.sentence_prob)(0, 0) += coef_det * losses::rd_sentence_loss_grad(pf, 0);
      }
    }
    tape.backward();
  }

  GroupResult r;
  r.gen = (nll + ul_sum) / denom;
  r.det = (rd_true + rd_false_sum) / denom;
  return r;
}

TrainLog run_training(Model& model, const std::vector<TableExample>& examples,
                      const std::vector<Perturbation>& perturbations, const TrainConfig& cfg) {
  cfg.validate();
  if (examples.empty()) fail(Error::Kind::InvalidArgument, "no training examples");
  if (cfg.use_rd) {
    if (cfg.rd_granularity == "token" && !model.config().token_head)
      fail(Error::Kind::Config, "token-level detection needs a model with a token head");
    if (cfg.rd_granularity == "sentence" && !model.config().sentence_head)
      fail(Error::Kind::Config, "sentence-level detection needs a model with a sentence head");
  }

  std::vector<Group> groups = build_groups(model, examples, perturbations);
  std::vector<ad::Parameter*> params = model.parameters();
  TrainLog log;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::string epoch_tag = std::to_string(epoch);
    Rng order_rng(derive_seed(cfg.seed, {"train", "order", epoch_tag}));
    Rng dropout_rng(derive_seed(cfg.seed, {"train", "dropout", epoch_tag}));
    std::vector<size_t> order = order_rng.permutation(groups.size());

    EpochLog elog;
    elog.epoch = epoch;
    elog.groups = static_cast<long>(groups.size());
    long double gen_sum = 0.0L, det_sum = 0.0L, combined_sum = 0.0L;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      double batch_scale = 1.0 / static_cast<double>(end - start);
      for (size_t i = start; i < end; ++i) {
        const Group& g = groups[order[i]];
        GroupResult r = process_group(model, g, cfg, &dropout_rng, batch_scale);
        double combined = cfg.lambda_weight * r.gen + (1.0 - cfg.lambda_weight) * r.det;
        if (!std::isfinite(combined) || combined > cfg.divergence_abort)
          fail(Error::Kind::Runtime,
               "training diverged at epoch " + epoch_tag + " on " + g.example->table_id +
                   ": loss " + std::to_string(combined));
        gen_sum += r.gen;
        det_sum += r.det;
        combined_sum += combined;
      }
      adam_step(params, cfg, log.optimizer_steps);
    }

    elog.gen_sum = static_cast<double>(gen_sum);
    elog.det_sum = static_cast<double>(det_sum);
    elog.combined_sum = static_cast<double>(combined_sum);
    log.epochs.push_back(elog);
  }
  return log;
}

}  // namespace

TrainLog warmup_finetune(Model& model, const std::vector<TableExample>& examples,
                         const TrainConfig& cfg) {
  TrainConfig warm = cfg;
  warm.use_rd = false;
  warm.use_ul = false;
  warm.lambda_weight = 1.0;
  return run_training(model, examples, {}, warm);
}

TrainLog r2d2_finetune(Model& model, const std::vector<TableExample>& examples,
                       const std::vector<Perturbation>& perturbations, const TrainConfig& cfg) {
  return run_training(model, examples, perturbations, cfg);
}

double roc_auc(const std::vector<double>& positive_scores,
               const std::vector<double>& negative_scores) {
  if (positive_scores.empty() || negative_scores.empty())
    fail(Error::Kind::InvalidArgument, "both score sets must be non-empty");
  double wins = 0.0;
  for (double p : positive_scores)
    for (double n : negative_scores) {
      if (p > n) wins += 1.0;
      else if (p == n) wins += 0.5;
    }
  return wins /
         (static_cast<double>(positive_scores.size()) * static_cast<double>(negative_scores.size()));
}

DiscriminationEval discrimination_eval(Model& model, const std::vector<TableExample>& examples,
                                       const std::vector<Perturbation>& perturbations) {
  std::map<std::string, std::vector<const Perturbation*>> by_id;
  for (const auto& p : perturbations) by_id[p.example_id].push_back(&p);

  DiscriminationEval out;
  for (const auto& ex : examples) {
    TokenSequence src = linearize(ex, model.vocab());
    TokenSequence ref = tokenize(ex.reference, model.vocab());
    out.positive_scores.push_back(model.sentence_score(src.ids, ref.ids));
    auto it = by_id.find(ex.table_id);
    if (it == by_id.end()) continue;
    for (const Perturbation* p : it->second)
      out.negative_scores.push_back(model.sentence_score(src.ids, p->tokens.ids));
  }
  out.auc = roc_auc(out.positive_scores, out.negative_scores);
  return out;
}

double mean_replaced_token_prob(Model& model, const std::vector<TableExample>& examples,
                                const std::vector<Perturbation>& perturbations) {
  std::map<std::string, const TableExample*> by_id;
  for (const auto& ex : examples) by_id[ex.table_id] = &ex;

  double sum = 0.0;
  long count = 0;
  for (const auto& p : perturbations) {
    auto it = by_id.find(p.example_id);
    if (it == by_id.end()) continue;
    TokenSequence src = linearize(*it->second, model.vocab());
    ad::Tape tape;
    DecodeTrace trace = model.forward(tape, src.ids, p.tokens.ids, nullptr);
    std::vector<double> gold = model.gold_probs(tape, trace);
    for (int t = p.span_start; t < p.span_end; ++t) {
      sum += gold[static_cast<size_t>(t)];
      ++count;
    }
  }
  if (count == 0) fail(Error::Kind::InvalidArgument, "no replaced tokens to score");
  return sum / static_cast<double>(count);
}

EvalReport evaluate_model(Model& model, const std::vector<TableExample>& examples,
                          const EntityRecognizer& recognizer) {
  if (examples.empty()) fail(Error::Kind::InvalidArgument, "no examples to evaluate");
  const Vocabulary& vocab = model.vocab();
  EvalReport report;
  std::vector<NerTriple> triples;
  std::vector<std::vector<std::string>> pred_tokens, ref_tokens;

  for (const auto& ex : examples) {
    TokenSequence src = linearize(ex, vocab);
    std::vector<int> ids = model.greedy_decode(src.ids, model.config().max_len - 1);
    TokenSequence pred;
    pred.ids = ids;
    pred.surface.reserve(ids.size());
    for (int id : ids) pred.surface.push_back(vocab.surface(id));
    report.predictions.push_back(detokenize(pred));

    TokenSequence ref = tokenize(ex.reference, vocab);
    NerTriple t;
    for (const auto& s : extract_entities(pred, &ex, recognizer, ex.table_id + "#pred"))
      t.predicted.insert(s.normalized);
    for (const auto& s : extract_entities(ref, &ex, recognizer, ex.table_id + "#ref"))
      t.reference.insert(s.normalized);
    t.input = all_table_entities(ex);
    triples.push_back(std::move(t));

    std::vector<std::string> pt, rt;
    for (const auto& s : pred.surface) pt.push_back(lowercase(s));
    for (const auto& s : ref.surface) rt.push_back(lowercase(s));
    pred_tokens.push_back(std::move(pt));
    ref_tokens.push_back(std::move(rt));
  }

  report.ner = ner_corpus_metrics(triples);
  report.bleu = corpus_bleu(pred_tokens, ref_tokens);
  return report;
}

}  // namespace r2d2
