#include "contamination.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "perturb.hpp"
#include "util.hpp"

namespace r2d2 {

using json = nlohmann::json;

void ContaminationConfig::validate() const {
  if (percentages.size() < 2)
    fail(Error::Kind::Config, "need at least two contamination levels");
  std::set<int> distinct;
  for (int p : percentages) {
    if (p < 0 || p > 100)
      fail(Error::Kind::Config, "contamination percentage " + std::to_string(p) +
                                    " outside [0, 100]");
    distinct.insert(p);
  }
  if (distinct.size() < 2)
    fail(Error::Kind::Config, "contamination levels must not all be equal");
}

ParallelCorpus build_parallel_corpus(const std::vector<TableExample>& corpus,
                                     const EntityRecognizer& recognizer,
                                     const Vocabulary& vocab, std::uint64_t seed) {
  PerturbConfig pcfg;
  pcfg.strategy = "knowledge";
  pcfg.size = "full";
  pcfg.seed = seed;

  ParallelCorpus out;
  for (size_t i = 0; i < corpus.size(); ++i) {
    PerturbationSet set = generate_perturbations(corpus[i], recognizer, vocab, pcfg, nullptr);
    if (set.items.empty()) {
      ++out.excluded;
      continue;
    }
    const Perturbation* best = &set.items.front();
    for (const auto& item : set.items) {
      if (item.span_start > best->span_start ||
          (item.span_start == best->span_start && item.replacement < best->replacement))
        best = &item;
    }
    out.kept.push_back(i);
    out.original.push_back(tokenize(corpus[i].reference, vocab));
    out.contaminated.push_back(best->tokens);
    out.contaminated_sentence.push_back(best->sentence);
  }
  Rng rng(derive_seed(seed, {"contamination", "order"}));
  out.replace_order = rng.permutation(out.kept.size());
  return out;
}

std::vector<size_t> contaminated_subset(const ParallelCorpus& parallel, int percentage) {
  size_t n = parallel.kept.size();
  size_t take = static_cast<size_t>(
      std::llround(static_cast<double>(percentage) * static_cast<double>(n) / 100.0));
  take = std::min(take, n);
  std::vector<size_t> subset(parallel.replace_order.begin(),
                             parallel.replace_order.begin() + static_cast<long>(take));
  std::sort(subset.begin(), subset.end());
  return subset;
}

namespace {

std::string classify(const std::vector<double>& values) {
  bool strictly_down = true, strictly_up = true, flat = true;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] >= values[i - 1]) strictly_down = false;
    if (values[i] <= values[i - 1]) strictly_up = false;
    if (values[i] != values[i - 1]) flat = false;
  }
  if (flat) return "flat";
  if (strictly_down) return "decreasing";
  if (strictly_up) return "increasing";
  return "mixed";
}

MetricSeries finish_series(std::string name, std::vector<double> values,
                           const std::vector<double>& pct) {
  MetricSeries s;
  s.metric = std::move(name);
  s.verdict = classify(values);
  s.spearman_vs_pct = s.verdict == "flat" ? 0.0 : spearman(pct, values);
  s.values = std::move(values);
  return s;
}

}  // namespace

ReliabilityReport reliability_table(const std::vector<TableExample>& corpus,
                                    const ParallelCorpus& parallel,
                                    const EntityRecognizer& recognizer,
                                    const ContaminationConfig& cfg, SentenceScorer* scorer) {
  cfg.validate();
  if (parallel.kept.empty())
    fail(Error::Kind::InvalidArgument, "parallel corpus is empty; nothing to contaminate");

  size_t n = parallel.kept.size();
  std::vector<EntitySet> ref_entities(n), input_entities(n), cont_entities(n);
  std::vector<std::vector<std::string>> ref_tokens(n), cont_tokens(n);
  for (size_t k = 0; k < n; ++k) {
    const TableExample& ex = corpus[parallel.kept[k]];
    for (const auto& s :
         extract_entities(parallel.original[k], &ex, recognizer, ex.table_id + "#ref"))
      ref_entities[k].insert(s.normalized);
    for (const auto& s :
         extract_entities(parallel.contaminated[k], &ex, recognizer, ex.table_id + "#bad"))
      cont_entities[k].insert(s.normalized);
    input_entities[k] = all_table_entities(ex);
    for (const auto& w : parallel.original[k].surface) ref_tokens[k].push_back(lowercase(w));
    for (const auto& w : parallel.contaminated[k].surface) cont_tokens[k].push_back(lowercase(w));
  }

  std::vector<double> pct;
  std::vector<double> rc, ri, rm, mi, mm, bleu, scorer_mean;
  for (int p : cfg.percentages) {
    pct.push_back(static_cast<double>(p));
    std::vector<size_t> subset = contaminated_subset(parallel, p);
    std::vector<bool> is_bad(n, false);
    for (size_t k : subset) is_bad[k] = true;

    std::vector<NerTriple> triples(n);
    std::vector<std::vector<std::string>> pred_tokens(n);
    double score_sum = 0.0;
    for (size_t k = 0; k < n; ++k) {
      triples[k].predicted = is_bad[k] ? cont_entities[k] : ref_entities[k];
      triples[k].reference = ref_entities[k];
      triples[k].input = input_entities[k];
      pred_tokens[k] = is_bad[k] ? cont_tokens[k] : ref_tokens[k];
      if (scorer != nullptr) {
        const TableExample& ex = corpus[parallel.kept[k]];
        std::string sentence =
            is_bad[k] ? parallel.contaminated_sentence[k] : detokenize(parallel.original[k]);
        score_sum += scorer->score(ex, sentence);
      }
    }
    NerCorpusReport ner = ner_corpus_metrics(triples);
    rc.push_back(ner.micro.rc);
    ri.push_back(ner.micro.ri);
    rm.push_back(ner.micro.rm);
    mi.push_back(ner.micro.mi);
    mm.push_back(ner.micro.mm);
    bleu.push_back(corpus_bleu(pred_tokens, ref_tokens).bleu);
    if (scorer != nullptr) scorer_mean.push_back(score_sum / static_cast<double>(n));
  }

  ReliabilityReport report;
  report.percentages = cfg.percentages;
  report.kept = static_cast<long>(n);
  report.excluded = parallel.excluded;
  report.series.push_back(finish_series("rc", std::move(rc), pct));
  report.series.push_back(finish_series("ri", std::move(ri), pct));
  report.series.push_back(finish_series("rm", std::move(rm), pct));
  report.series.push_back(finish_series("mi", std::move(mi), pct));
  report.series.push_back(finish_series("mm", std::move(mm), pct));
  report.series.push_back(finish_series("bleu", std::move(bleu), pct));
  if (scorer != nullptr)
    report.series.push_back(finish_series(scorer->name(), std::move(scorer_mean), pct));
  return report;
}

std::string reliability_to_json(const ReliabilityReport& report) {
  json j;
  j["percentages"] = report.percentages;
  j["kept"] = report.kept;
  j["excluded"] = report.excluded;
  j["series"] = json::array();
  for (const auto& s : report.series) {
    j["series"].push_back({{"metric", s.metric},
                           {"values", s.values},
                           {"spearman_vs_pct", s.spearman_vs_pct},
                           {"verdict", s.verdict}});
  }
  return j.dump(2);
}

std::string reliability_scatter_tsv(const ReliabilityReport& report) {
  std::string out = "metric\tpercentage\tvalue\n";
  for (const auto& s : report.series)
    for (size_t i = 0; i < s.values.size(); ++i)
      out += s.metric + "\t" + std::to_string(report.percentages[i]) + "\t" +
             std::to_string(s.values[i]) + "\n";
  return out;
}

}  // namespace r2d2
