#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "eval.hpp"
#include "util.hpp"

using namespace r2d2;
namespace fs = std::filesystem;

TEST_CASE("entity partition rates on a canonical fixture") {
  EntitySet pred{"a", "b", "c"};
  EntitySet ref{"a", "b", "d"};
  EntitySet input{"a", "b", "c", "d"};
  NerMetrics m = ner_metrics(pred, ref, input);
  CHECK(m.rc == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
  CHECK(m.ri == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
  CHECK(m.rm == 0.0);
  CHECK(m.mi == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
  CHECK(m.mm == 0.0);
  CHECK(!m.empty_prediction);
  CHECK(!m.empty_reference);
  CHECK(m.ri + m.rm + m.mi + m.mm == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("entity partition covers all four cells") {
  // pred: a (ref+input), e (ref only), c (input only), z (neither).
  EntitySet pred{"a", "e", "c", "z"};
  EntitySet ref{"a", "e", "q"};
  EntitySet input{"a", "c"};
  NerMetrics m = ner_metrics(pred, ref, input);
  CHECK(m.ri == 25.0);
  CHECK(m.rm == 25.0);
  CHECK(m.mi == 25.0);
  CHECK(m.mm == 25.0);
  CHECK(m.rc == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("empty prediction and empty reference are flagged") {
  NerMetrics empty_pred = ner_metrics({}, {"a"}, {"a"});
  CHECK(empty_pred.empty_prediction);
  CHECK(empty_pred.rc == 0.0);
  CHECK(empty_pred.ri == 0.0);
  CHECK(empty_pred.mm == 0.0);

  NerMetrics empty_ref = ner_metrics({"a"}, {}, {"a"});
  CHECK(empty_ref.empty_reference);
  CHECK(empty_ref.rc == 100.0);
  CHECK(empty_ref.mi == 100.0);

  NerMetrics both = ner_metrics({}, {}, {});
  CHECK(both.empty_prediction);
  CHECK(both.empty_reference);
  CHECK(both.rc == 100.0);
}

TEST_CASE("corpus rates pool counts for micro and average for macro") {
  std::vector<NerTriple> triples{
      {{"a", "b"}, {"a", "b"}, {"a", "b"}},        // perfect: rc 100, ri 100
      {{"x"}, {"a"}, {"x"}},                       // rc 0, mi 100
  };
  NerCorpusReport r = ner_corpus_metrics(triples);
  // Micro: recovered 2 of 3 reference entities; prediction pool 3 with 2 ri, 1 mi.
  CHECK(r.micro.rc == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
  CHECK(r.micro.ri == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
  CHECK(r.micro.mi == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
  // Macro: mean of (100, 0) and (100, 0).
  CHECK(r.macro_avg.rc == 50.0);
  CHECK(r.macro_avg.ri == 50.0);
  CHECK(r.macro_avg.mi == 50.0);
  CHECK(r.per_example.size() == 2);
  CHECK(r.empty_predictions == 0);
  CHECK(r.empty_references == 0);

  std::vector<NerTriple> with_empty{{{}, {"a"}, {}}};
  NerCorpusReport r2 = ner_corpus_metrics(with_empty);
  CHECK(r2.empty_predictions == 1);
}

TEST_CASE("identical corpora score BLEU exactly 100") {
  std::vector<std::string> sents{"ana silva scored 12 points .", "ben okoye scored 7 points ."};
  BleuReport r = corpus_bleu_text(sents, sents);
  CHECK(r.bleu == 100.0);
  CHECK(r.brevity_penalty == 1.0);
  for (double p : r.precisions) CHECK(p == 1.0);

  // Even a corpus of sentences shorter than 4 tokens is exact: missing
  // orders are vacuous rather than zero.
  std::vector<std::string> shorts{"yes .", "no"};
  BleuReport r2 = corpus_bleu_text(shorts, shorts);
  CHECK(r2.bleu == 100.0);
}

TEST_CASE("corpus BLEU matches an independently computed fixture") {
  // Five prediction/reference pairs; the expected number comes from a
  // from-scratch implementation of the same clipped-precision formula.
  std::vector<std::string> preds{
      "the cat sat on the mat",
      "ana silva scored 12 points in 1961",
      "a quick brown fox jumps over the lazy dog",
      "the match ended in a draw",
      "portugal won the final by two goals",
  };
  std::vector<std::string> refs{
      "the cat sat on the mat",
      "ana silva scored 12 points in the 1961 final",
      "the quick brown fox jumped over a lazy dog",
      "the match ended with a draw",
      "portugal won the final match by two clear goals",
  };
  // Frozen from tests/oracles/bleu_oracle.py.
  BleuReport r = corpus_bleu_text(preds, refs);
  CHECK(r.bleu == doctest::Approx(50.84898922799993).epsilon(1e-9));
  CHECK(r.pred_len == 35);
  CHECK(r.ref_len == 39);
  CHECK(r.brevity_penalty == doctest::Approx(0.8920030614530944).epsilon(1e-12));
  CHECK(r.precisions[0] == doctest::Approx(33.0 / 35.0).epsilon(1e-12));
  CHECK(r.precisions[1] == doctest::Approx(20.0 / 30.0).epsilon(1e-12));
  CHECK(r.precisions[2] == doctest::Approx(12.0 / 25.0).epsilon(1e-12));
  CHECK(r.precisions[3] == doctest::Approx(7.0 / 20.0).epsilon(1e-12));
}

TEST_CASE("clipping caps repeated n-grams at the reference count") {
  // "the the the" against "the cat": only one "the" may count.
  BleuReport r = corpus_bleu_text({"the the the"}, {"the cat"});
  CHECK(r.precisions[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("brevity penalty punishes short predictions only") {
  BleuReport shorter = corpus_bleu_text({"the cat"}, {"the cat sat on the mat"});
  CHECK(shorter.brevity_penalty == doctest::Approx(std::exp(1.0 - 6.0 / 2.0)).epsilon(1e-12));
  BleuReport longer = corpus_bleu_text({"the cat sat on the mat"}, {"the cat"});
  CHECK(longer.brevity_penalty == 1.0);
}

TEST_CASE("degenerate BLEU inputs") {
  // Empty prediction corpus-side: zero.
  BleuReport r = corpus_bleu_text({""}, {"the cat"});
  CHECK(r.bleu == 0.0);
  // No overlap at all: epsilon-level, not zero (clipped counts are floored).
  BleuReport r2 = corpus_bleu_text({"x y z w"}, {"a b c d"});
  CHECK(r2.bleu > 0.0);
  CHECK(r2.bleu < 1e-3);
  // Mismatched corpus sizes are an error.
  std::vector<std::string> one{"a"};
  std::vector<std::string> two{"a", "b"};
  CHECK_THROWS_AS(corpus_bleu_text(one, two), Error);
  // Empty corpora are an error.
  std::vector<std::string> none;
  CHECK_THROWS_AS(corpus_bleu_text(none, none), Error);
}

TEST_CASE("prescored file scorer replays and validates") {
  fs::path dir = fs::temp_directory_path() / "r2d2_test_eval";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string path = (dir / "scores.jsonl").string();
  write_file(path,
             "{\"example_id\":\"t1\",\"sentence\":\"good one\",\"score\":0.9}\n"
             "{\"example_id\":\"t1\",\"sentence\":\"bad one\",\"score\":0.1}\n");

  PrescoredFileScorer scorer(path);
  TableExample e;
  e.table_id = "t1";
  e.header = {"A"};
  e.rows = {{"x"}};
  e.reference = "r";
  CHECK(scorer.score(e, "good one") == 0.9);
  CHECK(scorer.score(e, "bad one") == 0.1);
  CHECK_THROWS_AS(scorer.score(e, "unseen"), Error);

  write_file(path, "{\"example_id\":\"t1\",\"sentence\":\"s\",\"score\":1.5}\n");
  CHECK_THROWS_AS(PrescoredFileScorer{path}, Error);

  write_file(path, "{\"example_id\":\"t1\",\"sentence\":\"s\",\"score\":0.5}\n");
  CHECK(make_sentence_scorer("file:" + path)->score(e, "s") == 0.5);
  CHECK_THROWS_AS(make_sentence_scorer("magic"), Error);
  fs::remove_all(dir);
}

TEST_CASE("pearson correlation") {
  std::vector<double> x{1, 2, 3, 4};
  std::vector<double> up{2, 4, 6, 8};
  std::vector<double> down{8, 6, 4, 2};
  CHECK(pearson(x, up) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(x, down) == doctest::Approx(-1.0).epsilon(1e-12));
  std::vector<double> wavy{1, 3, 2, 4};
  double r = pearson(x, wavy);
  CHECK(r > 0.0);
  CHECK(r < 1.0);
  std::vector<double> flat{5, 5, 5, 5};
  CHECK_THROWS_AS(pearson(x, flat), Error);
  std::vector<double> shorty{1};
  CHECK_THROWS_AS(pearson(shorty, shorty), Error);
}

TEST_CASE("spearman uses average ranks for ties") {
  std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> monotone{10, 20, 30, 40, 50};
  CHECK(spearman(x, monotone) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> inverse{5, 4, 3, 2, 1};
  CHECK(spearman(x, inverse) == doctest::Approx(-1.0).epsilon(1e-12));

  // Nonlinear but monotone still gives exactly 1.
  std::vector<double> convex{1, 10, 100, 1000, 10000};
  CHECK(spearman(x, convex) == doctest::Approx(1.0).epsilon(1e-12));

  // Tied values share an average rank.
  std::vector<double> tied{1, 2, 2, 3, 4};
  double s = spearman(x, tied);
  CHECK(s > 0.9);
  CHECK(s < 1.0);
}
