#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "entities.hpp"
#include "model.hpp"
#include "perturb.hpp"
#include "trainer.hpp"
#include "util.hpp"

using namespace r2d2;

namespace {

ModelConfig micro_config(bool token_head = false, bool sentence_head = false) {
  ModelConfig c;
  c.d_model = 8;
  c.layers = 1;
  c.heads = 2;
  c.ffn_mult = 2;
  c.dropout = 0.0;
  c.max_len = 96;
  c.init_seed = 3;
  c.token_head = token_head;
  c.sentence_head = sentence_head;
  return c;
}

std::vector<TableExample> tiny_corpus(int n, std::uint64_t seed = 5) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.num_examples = n;
  spec.min_rows = 3;
  spec.max_rows = 4;
  return generate_synthetic(spec);
}

std::vector<Perturbation> make_perturbations(const std::vector<TableExample>& corpus,
                                             const Vocabulary& vocab,
                                             const std::string& size = "small") {
  TableMatchRecognizer rec;
  PerturbConfig cfg;
  cfg.strategy = "knowledge";
  cfg.size = size;
  cfg.seed = 23;
  std::vector<Perturbation> all;
  for (const auto& e : corpus) {
    auto set = generate_perturbations(e, rec, vocab, cfg, nullptr);
    all.insert(all.end(), set.items.begin(), set.items.end());
  }
  return all;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig c;
  c.validate();
  c.epochs = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.lambda_weight = 1.2;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.rd_granularity = "word";
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.dev_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("adam first step moves each parameter by lr against the gradient sign") {
  ad::Parameter p("w", Eigen::MatrixXd::Zero(2, 2));
  p.grad << 1.0, -2.0, 0.5, -0.1;
  Eigen::MatrixXd grad_before = p.grad;
  TrainConfig cfg;
  cfg.lr = 0.1;
  long steps = 0;
  adam_step({&p}, cfg, steps);
  CHECK(steps == 1);
  // With bias correction the first update is -lr * sign(g) up to eps.
  for (long i = 0; i < 4; ++i) {
    double g = grad_before.data()[i];
    if (g == 0.0) continue;
    CHECK(p.value.data()[i] ==
          doctest::Approx(-0.1 * (g > 0 ? 1.0 : -1.0)).epsilon(1e-4));
  }
  // Gradients are cleared after the step.
  CHECK(p.grad.isZero(0.0));

  // Zero gradient leaves the parameter alone on the first step.
  ad::Parameter q("q", Eigen::MatrixXd::Ones(1, 1));
  long steps2 = 0;
  adam_step({&q}, cfg, steps2);
  CHECK(q.value(0, 0) == 1.0);
}

TEST_CASE("dev split is deterministic, order independent, and roughly sized") {
  auto corpus = tiny_corpus(300);
  std::vector<TableExample> train, dev;
  split_dataset(corpus, 0.1, 7, &train, &dev);
  CHECK(train.size() + dev.size() == corpus.size());
  CHECK(dev.size() > 10);
  CHECK(dev.size() < 60);

  // Membership depends only on the id, not position.
  for (const auto& e : dev) CHECK(is_dev_example(e.table_id, 0.1, 7));
  for (const auto& e : train) CHECK(!is_dev_example(e.table_id, 0.1, 7));

  // A different seed produces a different split.
  std::vector<TableExample> train2, dev2;
  split_dataset(corpus, 0.1, 8, &train2, &dev2);
  std::set<std::string> ids1, ids2;
  for (const auto& e : dev) ids1.insert(e.table_id);
  for (const auto& e : dev2) ids2.insert(e.table_id);
  CHECK(ids1 != ids2);

  // Zero fraction: everything trains.
  std::vector<TableExample> t3, d3;
  split_dataset(corpus, 0.0, 7, &t3, &d3);
  CHECK(d3.empty());
}

TEST_CASE("warmup training lowers the likelihood loss") {
  auto corpus = tiny_corpus(12);
  Vocabulary vocab = build_vocabulary(corpus);
  Model model(micro_config(), vocab);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 4;
  cfg.lr = 3e-3;
  cfg.dev_fraction = 0.0;
  TrainLog log = warmup_finetune(model, corpus, cfg);
  REQUIRE(log.epochs.size() == 8);
  CHECK(log.epochs.front().combined_sum > log.epochs.back().combined_sum);
  // Likelihood-only: the detection side is exactly zero.
  for (const auto& ep : log.epochs) {
    CHECK(ep.det_sum == 0.0);
    CHECK(ep.combined_sum == ep.gen_sum);
    CHECK(ep.groups == 12);
  }
  CHECK(log.optimizer_steps == 8 * 3);
}

TEST_CASE("warmup equals joint training with lambda 1 and no perturbations") {
  auto corpus = tiny_corpus(10);
  Vocabulary vocab = build_vocabulary(corpus);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.lambda_weight = 1.0;
  cfg.use_rd = false;
  cfg.use_ul = false;

  Model a(micro_config(), vocab);
  warmup_finetune(a, corpus, cfg);

  Model b(micro_config(), vocab);
  r2d2_finetune(b, corpus, {}, cfg);

  CHECK(a.parameter_fingerprint() == b.parameter_fingerprint());
}

TEST_CASE("epoch log recombines exactly and the loss is finite") {
  auto corpus = tiny_corpus(8);
  Vocabulary vocab = build_vocabulary(corpus);
  auto perturbations = make_perturbations(corpus, vocab);
  REQUIRE(!perturbations.empty());

  Model model(micro_config(true, false), vocab);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.lambda_weight = 0.4;
  cfg.rd_granularity = "token";
  TrainLog log = r2d2_finetune(model, corpus, perturbations, cfg);
  for (const auto& ep : log.epochs) {
    CHECK(std::isfinite(ep.combined_sum));
    CHECK(ep.gen_sum > 0.0);
    CHECK(ep.det_sum > 0.0);
    CHECK(std::abs(ep.combined_sum - (0.4 * ep.gen_sum + 0.6 * ep.det_sum)) <= 1e-9);
  }
}

TEST_CASE("disabling terms zeroes them exactly") {
  auto corpus = tiny_corpus(6);
  Vocabulary vocab = build_vocabulary(corpus);
  auto perturbations = make_perturbations(corpus, vocab);

  // Detection off: det_sum identically zero even with perturbations present.
  Model gen_only(micro_config(), vocab);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.use_rd = false;
  cfg.use_ul = true;
  TrainLog log = r2d2_finetune(gen_only, corpus, perturbations, cfg);
  for (const auto& ep : log.epochs) CHECK(ep.det_sum == 0.0);

  // Unlikelihood off while detection on: gen side is pure likelihood.
  Model det_on(micro_config(true, false), vocab);
  TrainConfig cfg2 = cfg;
  cfg2.use_rd = true;
  cfg2.use_ul = false;
  TrainLog log2 = r2d2_finetune(det_on, corpus, perturbations, cfg2);
  for (const auto& ep : log2.epochs) CHECK(ep.det_sum > 0.0);
}

TEST_CASE("joint training needs the head matching its granularity") {
  auto corpus = tiny_corpus(4);
  Vocabulary vocab = build_vocabulary(corpus);
  auto perturbations = make_perturbations(corpus, vocab);
  TrainConfig cfg;
  cfg.rd_granularity = "token";

  Model headless(micro_config(false, false), vocab);
  CHECK_THROWS_AS(r2d2_finetune(headless, corpus, perturbations, cfg), Error);

  cfg.rd_granularity = "sentence";
  Model token_only(micro_config(true, false), vocab);
  CHECK_THROWS_AS(r2d2_finetune(token_only, corpus, perturbations, cfg), Error);
}

TEST_CASE("sentence granularity trains the sentence head") {
  auto corpus = tiny_corpus(6);
  Vocabulary vocab = build_vocabulary(corpus);
  auto perturbations = make_perturbations(corpus, vocab);
  Model model(micro_config(false, true), vocab);
  Eigen::MatrixXd head_before = model.find_parameter("sent_head.w")->value;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.rd_granularity = "sentence";
  TrainLog log = r2d2_finetune(model, corpus, perturbations, cfg);
  CHECK(log.epochs.back().det_sum > 0.0);
  CHECK((model.find_parameter("sent_head.w")->value - head_before).cwiseAbs().maxCoeff() >
        0.0);
}

TEST_CASE("training is deterministic per seed") {
  auto corpus = tiny_corpus(8);
  Vocabulary vocab = build_vocabulary(corpus);
  auto perturbations = make_perturbations(corpus, vocab);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.seed = 31;

  Model a(micro_config(true, false), vocab);
  TrainLog la = r2d2_finetune(a, corpus, perturbations, cfg);
  Model b(micro_config(true, false), vocab);
  TrainLog lb = r2d2_finetune(b, corpus, perturbations, cfg);
  CHECK(a.parameter_fingerprint() == b.parameter_fingerprint());
  REQUIRE(la.epochs.size() == lb.epochs.size());
  for (size_t i = 0; i < la.epochs.size(); ++i)
    CHECK(la.epochs[i].combined_sum == lb.epochs[i].combined_sum);

  Model c(micro_config(true, false), vocab);
  TrainConfig cfg2 = cfg;
  cfg2.seed = 32;
  r2d2_finetune(c, corpus, perturbations, cfg2);
  CHECK(c.parameter_fingerprint() != a.parameter_fingerprint());
}

TEST_CASE("token_mean rescales the token detection loss") {
  auto corpus = tiny_corpus(6);
  Vocabulary vocab = build_vocabulary(corpus);
  auto perturbations = make_perturbations(corpus, vocab);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 1e-9;  // Effectively freeze so both runs see the same weights.
  cfg.rd_granularity = "token";

  Model a(micro_config(true, false), vocab);
  TrainLog summed = r2d2_finetune(a, corpus, perturbations, cfg);
  Model b(micro_config(true, false), vocab);
  TrainConfig cfg2 = cfg;
  cfg2.token_mean = true;
  TrainLog averaged = r2d2_finetune(b, corpus, perturbations, cfg2);
  CHECK(averaged.epochs[0].det_sum < summed.epochs[0].det_sum);
  CHECK(averaged.epochs[0].det_sum > 0.0);
}

TEST_CASE("divergence aborts with a runtime error") {
  auto corpus = tiny_corpus(4);
  Vocabulary vocab = build_vocabulary(corpus);
  Model model(micro_config(), vocab);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.divergence_abort = 1e-6;  // Any real loss exceeds this.
  CHECK_THROWS_AS(warmup_finetune(model, corpus, cfg), Error);
  try {
    warmup_finetune(model, corpus, cfg);
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::Runtime);
  }
}

TEST_CASE("roc auc on hand-checked score sets") {
  // Perfect separation.
  CHECK(roc_auc({0.9, 0.8}, {0.1, 0.2}) == 1.0);
  // Perfectly wrong.
  CHECK(roc_auc({0.1, 0.2}, {0.9, 0.8}) == 0.0);
  // All tied: half credit.
  CHECK(roc_auc({0.5, 0.5}, {0.5, 0.5}) == 0.5);
  // One inversion among four pairs.
  CHECK(roc_auc({0.7, 0.3}, {0.5, 0.1}) == 0.75);
  CHECK_THROWS_AS(roc_auc({}, {0.5}), Error);
  CHECK_THROWS_AS(roc_auc({0.5}, {}), Error);
}

TEST_CASE("discrimination eval scores references against perturbations") {
  auto corpus = tiny_corpus(6);
  Vocabulary vocab = build_vocabulary(corpus);
  auto perturbations = make_perturbations(corpus, vocab);
  Model model(micro_config(true, false), vocab);
  DiscriminationEval ev = discrimination_eval(model, corpus, perturbations);
  CHECK(ev.positive_scores.size() == corpus.size());
  CHECK(ev.negative_scores.size() == perturbations.size());
  for (double s : ev.positive_scores) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  CHECK(ev.auc >= 0.0);
  CHECK(ev.auc <= 1.0);
  CHECK(ev.auc == roc_auc(ev.positive_scores, ev.negative_scores));
}

TEST_CASE("mean replaced token probability averages over replaced spans") {
  auto corpus = tiny_corpus(5);
  Vocabulary vocab = build_vocabulary(corpus);
  auto perturbations = make_perturbations(corpus, vocab);
  REQUIRE(!perturbations.empty());
  Model model(micro_config(), vocab);
  double m = mean_replaced_token_prob(model, corpus, perturbations);
  CHECK(m > 0.0);
  CHECK(m < 1.0);
  // Perturbations pointing at unknown examples are an error.
  Perturbation ghost = perturbations[0];
  ghost.example_id = "missing";
  CHECK_THROWS_AS(mean_replaced_token_prob(model, corpus, {ghost}), Error);
}

TEST_CASE("evaluate_model produces aligned predictions and metrics") {
  auto corpus = tiny_corpus(5);
  Vocabulary vocab = build_vocabulary(corpus);
  Model model(micro_config(), vocab);
  TableMatchRecognizer rec;
  EvalReport report = evaluate_model(model, corpus, rec);
  CHECK(report.predictions.size() == corpus.size());
  CHECK(report.ner.per_example.size() == corpus.size());
  CHECK(report.bleu.bleu >= 0.0);
  CHECK(report.bleu.ref_len > 0);
}
