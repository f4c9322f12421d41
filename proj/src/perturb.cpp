#include "perturb.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

namespace r2d2 {

using json = nlohmann::json;

std::optional<int> size_cap(const std::string& size_name) {
  if (size_name == "xsmall") return 1;
  if (size_name == "small") return 3;
  if (size_name == "medium") return 5;
  if (size_name == "large") return 10;
  if (size_name == "full") return std::nullopt;
  fail(Error::Kind::Config,
       "unknown perturbation size '" + size_name +
           "' (expected xsmall, small, medium, large or full)");
}

TokenLabelStyle token_label_style_from_string(const std::string& name) {
  if (name == "prefix") return TokenLabelStyle::kPrefix;
  if (name == "span") return TokenLabelStyle::kSpan;
  fail(Error::Kind::Config,
       "unknown token label style '" + name + "' (expected prefix or span)");
}

void PerturbConfig::validate() const {
  if (strategy != "knowledge" && strategy != "model")
    fail(Error::Kind::Config,
         "unknown perturbation strategy '" + strategy + "' (expected knowledge or model)");
  size_cap(size);
  if (model_samples < 1) fail(Error::Kind::Config, "model_samples must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) fail(Error::Kind::Config, "top_p must lie in (0, 1]");
  if (max_sample_steps < 1) fail(Error::Kind::Config, "max_sample_steps must be >= 1");
}

size_t select_target_entity(const std::vector<EntitySpan>& entities, Rng& rng) {
  if (entities.empty()) fail(Error::Kind::InvalidArgument, "no entities to select from");
  std::vector<double> weights(entities.size());
  for (size_t i = 0; i < entities.size(); ++i)
    weights[i] = static_cast<double>(entities[i].start + 1);
  return rng.weighted_choice(weights);
}

std::vector<std::string> knowledge_candidates(const TableExample& example,
                                              const std::string& target_normalized) {
  std::set<size_t> columns;
  for (const auto& row : example.rows)
    for (size_t c = 0; c < row.size(); ++c)
      if (normalize_entity(row[c]) == target_normalized) columns.insert(c);

  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& row : example.rows)
    for (size_t c : columns) {
      if (c >= row.size()) continue;
      std::string norm = normalize_entity(row[c]);
      if (norm.empty() || norm == target_normalized || seen.count(norm)) continue;
      seen.insert(norm);
      out.push_back(row[c]);
    }
  return out;
}

std::vector<std::string> model_candidates(const TableExample& example,
                                          const TokenSequence& reference,
                                          const EntitySpan& target, GeneratorSampler& sampler,
                                          const EntityRecognizer& recognizer,
                                          const Vocabulary& vocab, const PerturbConfig& cfg,
                                          Rng& rng) {
  TokenSequence src = linearize(example, vocab);
  std::vector<int> prefix(reference.ids.begin(), reference.ids.begin() + target.start);
  auto continuations = sampler.sample(src.ids, prefix, cfg.model_samples, rng);

  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string target_norm = normalize_entity(target.surface);
  for (size_t s = 0; s < continuations.size(); ++s) {
    TokenSequence seq;
    seq.ids = continuations[s];
    seq.surface.reserve(seq.ids.size());
    for (int id : seq.ids) seq.surface.push_back(vocab.surface(id));
    auto spans = extract_entities(seq, &example, recognizer,
                                  example.table_id + "#sample" + std::to_string(s));
    for (const auto& span : spans) {
      if (span.start < target.start) continue;
      if (span.normalized != target_norm && !seen.count(span.normalized)) {
        seen.insert(span.normalized);
        out.push_back(span.surface);
      }
      break;  // only the first entity at or after the replaced position
    }
  }
  return out;
}

std::vector<int> entailed_labels(size_t token_count) {
  return std::vector<int>(token_count + 1, 1);
}

Perturbation apply_replacement(const TableExample& example, const TokenSequence& reference,
                               const EntitySpan& target, const std::string& replacement,
                               const Vocabulary& vocab, TokenLabelStyle style,
                               const std::string& source) {
  int n = static_cast<int>(reference.size());
  if (target.start < 0 || target.end > n || target.start >= target.end)
    fail(Error::Kind::InvalidArgument, "replacement span out of range");
  TokenSequence repl = tokenize(replacement, vocab);
  if (repl.empty())
    fail(Error::Kind::InvalidArgument, "replacement text '" + replacement + "' has no tokens");

  Perturbation p;
  p.example_id = example.table_id;
  p.source = source;
  p.target = normalize_entity(target.surface);
  p.replacement = replacement;
  p.span_start = target.start;
  p.span_end = target.start + static_cast<int>(repl.size());

  p.tokens.ids.assign(reference.ids.begin(), reference.ids.begin() + target.start);
  p.tokens.surface.assign(reference.surface.begin(), reference.surface.begin() + target.start);
  p.tokens.ids.insert(p.tokens.ids.end(), repl.ids.begin(), repl.ids.end());
  p.tokens.surface.insert(p.tokens.surface.end(), repl.surface.begin(), repl.surface.end());
  p.tokens.ids.insert(p.tokens.ids.end(), reference.ids.begin() + target.end,
                      reference.ids.end());
  p.tokens.surface.insert(p.tokens.surface.end(), reference.surface.begin() + target.end,
                          reference.surface.end());
  p.sentence = detokenize(p.tokens);

  size_t steps = p.tokens.size() + 1;
  p.token_labels.resize(steps);
  for (size_t t = 0; t < steps; ++t) {
    bool faithful = style == TokenLabelStyle::kPrefix
                        ? static_cast<int>(t) < p.span_start
                        : (static_cast<int>(t) < p.span_start ||
                           static_cast<int>(t) >= p.span_end);
    p.token_labels[t] = faithful ? 1 : 0;
  }
  return p;
}

namespace {

struct TargetPool {
  EntitySpan span;
  std::vector<std::string> candidates;
  bool computed = false;
};

void compute_candidates(TargetPool& pool, const TableExample& example,
                        const TokenSequence& reference, const EntityRecognizer& recognizer,
                        const Vocabulary& vocab, const PerturbConfig& cfg,
                        GeneratorSampler* sampler, Rng& rng) {
  if (pool.computed) return;
  pool.computed = true;
  if (cfg.strategy == "knowledge") {
    pool.candidates = knowledge_candidates(example, pool.span.normalized);
  } else {
    if (sampler == nullptr)
      fail(Error::Kind::InvalidArgument, "model strategy requires a generator sampler");
    pool.candidates =
        model_candidates(example, reference, pool.span, *sampler, recognizer, vocab, cfg, rng);
  }
}

}  // namespace

PerturbationSet generate_perturbations(const TableExample& example,
                                       const EntityRecognizer& recognizer,
                                       const Vocabulary& vocab, const PerturbConfig& cfg,
                                       GeneratorSampler* sampler) {
  cfg.validate();
  PerturbationSet result;
  TokenSequence reference = tokenize(example.reference, vocab);
  auto entities = extract_entities(reference, &example, recognizer, example.table_id);
  if (entities.empty()) {
    result.diagnostic = "no entities recognized in reference of " + example.table_id;
    return result;
  }

  Rng rng(derive_seed(cfg.seed, {"perturb", example.table_id}));
  std::vector<TargetPool> pools;
  pools.reserve(entities.size());
  for (const auto& e : entities) pools.push_back(TargetPool{e, {}, false});

  std::optional<int> cap = size_cap(cfg.size);
  if (!cap.has_value()) {
    for (auto& pool : pools) {
      compute_candidates(pool, example, reference, recognizer, vocab, cfg, sampler, rng);
      for (const auto& cand : pool.candidates)
        result.items.push_back(apply_replacement(example, reference, pool.span, cand, vocab,
                                                 cfg.label_style, cfg.strategy));
    }
    if (result.items.empty())
      result.diagnostic = "no admissible replacements for " + example.table_id;
    return result;
  }

  int want = *cap;
  while (static_cast<int>(result.items.size()) < want) {
    std::vector<size_t> eligible;
    std::vector<double> weights;
    for (size_t i = 0; i < pools.size(); ++i) {
      if (pools[i].computed && pools[i].candidates.empty()) continue;
      eligible.push_back(i);
      weights.push_back(static_cast<double>(pools[i].span.start + 1));
    }
    if (eligible.empty()) break;
    TargetPool& pool = pools[eligible[rng.weighted_choice(weights)]];
    compute_candidates(pool, example, reference, recognizer, vocab, cfg, sampler, rng);
    if (pool.candidates.empty()) continue;
    size_t pick = static_cast<size_t>(rng.uniform_int(pool.candidates.size()));
    std::string cand = pool.candidates[pick];
    pool.candidates.erase(pool.candidates.begin() + static_cast<long>(pick));
    result.items.push_back(
        apply_replacement(example, reference, pool.span, cand, vocab, cfg.label_style,
                          cfg.strategy));
  }
  if (static_cast<int>(result.items.size()) < want)
    result.diagnostic = "built " + std::to_string(result.items.size()) + " of " +
                        std::to_string(want) + " requested variants for " + example.table_id;
  return result;
}

namespace {

json rle_encode(const std::vector<int>& labels) {
  json runs = json::array();
  size_t i = 0;
  while (i < labels.size()) {
    size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    runs.push_back(json::array({labels[i], j - i}));
    i = j;
  }
  return runs;
}

std::vector<int> rle_decode(const json& runs, int lineno) {
  std::vector<int> out;
  if (!runs.is_array())
    fail(Error::Kind::Io, "line " + std::to_string(lineno) + ": labels must be an array");
  for (const auto& run : runs) {
    if (!run.is_array() || run.size() != 2)
      fail(Error::Kind::Io, "line " + std::to_string(lineno) + ": bad label run");
    int value = run[0].get<int>();
    long count = run[1].get<long>();
    if ((value != 0 && value != 1) || count <= 0)
      fail(Error::Kind::Io, "line " + std::to_string(lineno) + ": bad label run");
    out.insert(out.end(), static_cast<size_t>(count), value);
  }
  return out;
}

}  // namespace

std::string perturbation_to_json_line(const Perturbation& p) {
  json j = {
      {"example_id", p.example_id},
      {"sentence", p.sentence},
      {"source", p.source},
      {"span", json::array({p.span_start, p.span_end})},
      {"target", p.target},
      {"replacement", p.replacement},
      {"labels", rle_encode(p.token_labels)},
  };
  return j.dump();
}

Perturbation perturbation_from_json_line(const std::string& line, int lineno,
                                         const Vocabulary& vocab) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(Error::Kind::Io, "line " + std::to_string(lineno) + ": " + e.what());
  }
  Perturbation p;
  try {
    p.example_id = j.at("example_id").get<std::string>();
    p.sentence = j.at("sentence").get<std::string>();
    p.source = j.at("source").get<std::string>();
    p.span_start = j.at("span").at(0).get<int>();
    p.span_end = j.at("span").at(1).get<int>();
    p.target = j.at("target").get<std::string>();
    p.replacement = j.at("replacement").get<std::string>();
    p.token_labels = rle_decode(j.at("labels"), lineno);
  } catch (const json::exception& e) {
    fail(Error::Kind::Io, "line " + std::to_string(lineno) + ": " + e.what());
  }
  p.tokens = tokenize(p.sentence, vocab);
  if (p.token_labels.size() != p.tokens.size() + 1)
    fail(Error::Kind::Io, "line " + std::to_string(lineno) + ": label length " +
                              std::to_string(p.token_labels.size()) + " does not match " +
                              std::to_string(p.tokens.size()) + " tokens + 1");
  if (p.span_start < 0 || p.span_end > static_cast<int>(p.tokens.size()) ||
      p.span_start > p.span_end)
    fail(Error::Kind::Io, "line " + std::to_string(lineno) + ": span out of range");
  return p;
}

void save_perturbations(const std::string& path, const std::vector<Perturbation>& items) {
  std::string out;
  for (const auto& p : items) {
    out += perturbation_to_json_line(p);
    out += '\n';
  }
  write_file(path, out);
}

std::vector<Perturbation> load_perturbations(const std::string& path, const Vocabulary& vocab) {
  std::vector<Perturbation> out;
  for (const auto& [lineno, line] : read_jsonl_lines(path))
    out.push_back(perturbation_from_json_line(line, lineno, vocab));
  return out;
}

}  // namespace r2d2
