#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "util.hpp"

namespace r2d2 {

using json = nlohmann::json;

namespace {

struct NerCounts {
  long ref_size = 0;
  long pred_size = 0;
  long ref_hit = 0;  // |reference ∩ predicted|
  long ri = 0, rm = 0, mi = 0, mm = 0;
};

NerCounts ner_counts(const EntitySet& predicted, const EntitySet& reference,
                     const EntitySet& input) {
  NerCounts c;
  c.ref_size = static_cast<long>(reference.size());
  c.pred_size = static_cast<long>(predicted.size());
  for (const auto& e : reference)
    if (predicted.count(e)) ++c.ref_hit;
  for (const auto& e : predicted) {
    bool in_ref = reference.count(e) > 0;
    bool in_input = input.count(e) > 0;
    if (in_ref && in_input) ++c.ri;
    else if (in_ref) ++c.rm;
    else if (in_input) ++c.mi;
    else ++c.mm;
  }
  return c;
}

NerMetrics metrics_from_counts(const NerCounts& c) {
  NerMetrics m;
  if (c.ref_size == 0) {
    m.rc = 100.0;
    m.empty_reference = true;
  } else {
    m.rc = 100.0 * static_cast<double>(c.ref_hit) / static_cast<double>(c.ref_size);
  }
  if (c.pred_size == 0) {
    m.empty_prediction = true;
  } else {
    double denom = static_cast<double>(c.pred_size);
    m.ri = 100.0 * static_cast<double>(c.ri) / denom;
    m.rm = 100.0 * static_cast<double>(c.rm) / denom;
    m.mi = 100.0 * static_cast<double>(c.mi) / denom;
    m.mm = 100.0 * static_cast<double>(c.mm) / denom;
  }
  return m;
}

}  // namespace

NerMetrics ner_metrics(const EntitySet& predicted, const EntitySet& reference,
                       const EntitySet& input) {
  return metrics_from_counts(ner_counts(predicted, reference, input));
}

NerCorpusReport ner_corpus_metrics(const std::vector<NerTriple>& triples) {
  NerCorpusReport report;
  NerCounts pooled;
  NerMetrics sums;
  for (const auto& t : triples) {
    NerCounts c = ner_counts(t.predicted, t.reference, t.input);
    pooled.ref_size += c.ref_size;
    pooled.pred_size += c.pred_size;
    pooled.ref_hit += c.ref_hit;
    pooled.ri += c.ri;
    pooled.rm += c.rm;
    pooled.mi += c.mi;
    pooled.mm += c.mm;
    NerMetrics m = metrics_from_counts(c);
    if (m.empty_prediction) ++report.empty_predictions;
    if (m.empty_reference) ++report.empty_references;
    sums.rc += m.rc;
    sums.ri += m.ri;
    sums.rm += m.rm;
    sums.mi += m.mi;
    sums.mm += m.mm;
    report.per_example.push_back(m);
  }
  report.micro = metrics_from_counts(pooled);
  if (!triples.empty()) {
    double n = static_cast<double>(triples.size());
    report.macro_avg.rc = sums.rc / n;
    report.macro_avg.ri = sums.ri / n;
    report.macro_avg.rm = sums.rm / n;
    report.macro_avg.mi = sums.mi / n;
    report.macro_avg.mm = sums.mm / n;
  }
  return report;
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, long> ngram_counts(const std::vector<std::string>& tokens, size_t n) {
  std::map<Ngram, long> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& predictions,
                       const std::vector<std::vector<std::string>>& references) {
  if (predictions.size() != references.size())
    fail(Error::Kind::InvalidArgument,
         "prediction/reference count mismatch: " + std::to_string(predictions.size()) + " vs " +
             std::to_string(references.size()));
  if (predictions.empty()) fail(Error::Kind::InvalidArgument, "empty corpus");

  BleuReport report;
  std::array<long, 4> clipped{};
  std::array<long, 4> total{};
  for (size_t i = 0; i < predictions.size(); ++i) {
    report.pred_len += static_cast<long>(predictions[i].size());
    report.ref_len += static_cast<long>(references[i].size());
    for (size_t n = 1; n <= 4; ++n) {
      auto pred_counts = ngram_counts(predictions[i], n);
      auto ref_counts = ngram_counts(references[i], n);
      for (const auto& [gram, count] : pred_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) clipped[n - 1] += std::min(count, it->second);
      }
    }
  }

  double log_sum = 0.0;
  for (size_t n = 0; n < 4; ++n) {
    double num = clipped[n] > 0 ? static_cast<double>(clipped[n]) : kBleuEps;
    double den = total[n] > 0 ? static_cast<double>(total[n]) : kBleuEps;
    report.precisions[n] = num / den;
    log_sum += 0.25 * std::log(report.precisions[n]);
  }
  if (report.pred_len == 0) {
    report.brevity_penalty = 0.0;
    report.bleu = 0.0;
    return report;
  }
  report.brevity_penalty =
      report.pred_len > report.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(report.ref_len) /
                               static_cast<double>(report.pred_len));
  report.bleu = 100.0 * report.brevity_penalty * std::exp(log_sum);
  return report;
}

BleuReport corpus_bleu_text(const std::vector<std::string>& predictions,
                            const std::vector<std::string>& references) {
  auto split_ws = [](const std::string& s) {
    std::vector<std::string> out;
    for (auto& w : split(collapse_whitespace(s), ' '))
      if (!w.empty()) out.push_back(w);
    return out;
  };
  std::vector<std::vector<std::string>> p, r;
  p.reserve(predictions.size());
  r.reserve(references.size());
  for (const auto& s : predictions) p.push_back(split_ws(s));
  for (const auto& s : references) r.push_back(split_ws(s));
  return corpus_bleu(p, r);
}

PrescoredFileScorer::PrescoredFileScorer(const std::string& path) : name_("file:" + path) {
  for (const auto& [lineno, line] : read_jsonl_lines(path)) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(Error::Kind::Io, path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    std::string id, sentence;
    double score = 0.0;
    try {
      id = j.at("example_id").get<std::string>();
      sentence = j.at("sentence").get<std::string>();
      score = j.at("score").get<double>();
    } catch (const json::exception& e) {
      fail(Error::Kind::Io, path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!(score >= 0.0 && score <= 1.0))
      fail(Error::Kind::Io, path + " line " + std::to_string(lineno) + ": score " +
                                std::to_string(score) + " outside [0, 1]");
    scores_[{id, sentence}] = score;
  }
}

double PrescoredFileScorer::score(const TableExample& example, const std::string& sentence) {
  auto it = scores_.find({example.table_id, sentence});
  if (it == scores_.end())
    fail(Error::Kind::InvalidArgument,
         "no prescored value for " + example.table_id + ": " + sentence);
  return it->second;
}

std::unique_ptr<SentenceScorer> make_sentence_scorer(const std::string& spec) {
  if (spec.rfind("file:", 0) == 0) {
    return std::make_unique<PrescoredFileScorer>(spec.substr(5));
  }
  fail(Error::Kind::Config,
       "unknown scorer '" + spec + "' (available: file:PATH)");
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    fail(Error::Kind::InvalidArgument, "correlation needs two equal-length series of >= 2");
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    fail(Error::Kind::InvalidArgument, "correlation undefined for a constant series");
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> ranks_with_ties(const std::vector<double>& v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks_with_ties(x), ranks_with_ties(y));
}

}  // namespace r2d2
