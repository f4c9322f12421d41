#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "entities.hpp"
#include "util.hpp"

namespace r2d2 {

// One unfaithful variant of a reference sentence.  Token labels cover every
// decoding step including the trailing end-marker step, so their length is
// tokens.size() + 1.  Label 1 marks a step still consistent with the table.
struct Perturbation {
  std::string example_id;
  std::string sentence;
  TokenSequence tokens;
  std::vector<int> token_labels;
  std::string source;  // "knowledge" or "model"
  int span_start = -1; // replaced token span [span_start, span_end)
  int span_end = -1;
  std::string target;       // normalized entity that was replaced
  std::string replacement;  // surface text spliced in
};

struct PerturbationSet {
  std::vector<Perturbation> items;
  // Non-empty when fewer variants than requested could be built; says why.
  std::string diagnostic;
};

// Number of variants per example: xsmall 1, small 3, medium 5, large 10;
// nullopt for "full" (every admissible replacement).
std::optional<int> size_cap(const std::string& size_name);

// prefix: labels are 1 strictly before the replaced span and 0 from its
// first token onward (the damage persists to the end marker).
// span: labels are 0 exactly on the replaced tokens and 1 elsewhere.
enum class TokenLabelStyle { kPrefix, kSpan };
TokenLabelStyle token_label_style_from_string(const std::string& name);

struct PerturbConfig {
  std::string strategy = "knowledge";  // "knowledge" or "model"
  std::string size = "medium";
  TokenLabelStyle label_style = TokenLabelStyle::kPrefix;
  std::uint64_t seed = 7;
  int model_samples = 8;  // continuations drawn per target entity
  double top_p = 0.9;
  int max_sample_steps = 24;

  void validate() const;
};

// Abstracts the generator so candidate extraction is testable without a
// trained model.  Returns k sampled continuations of prefix_ids (prefix
// included in each).
class GeneratorSampler {
 public:
  virtual ~GeneratorSampler() = default;
  virtual std::vector<std::vector<int>> sample(const std::vector<int>& src_ids,
                                               const std::vector<int>& prefix_ids, int k,
                                               Rng& rng) = 0;
};

// Later entities carry more established context, so draws are weighted by
// start position + 1.
size_t select_target_entity(const std::vector<EntitySpan>& entities, Rng& rng);

// Same-column alternatives: for every column containing a cell that
// normalizes to the target, every other normalized value in those columns.
// Surfaces are the raw cell texts, deduplicated by normalized form, in
// row-major first-seen order.
std::vector<std::string> knowledge_candidates(const TableExample& example,
                                              const std::string& target_normalized);

// Entities the generator itself proposes: sample continuations of the
// reference prefix up to the target span, then take the first recognized
// entity at or after the span start that differs from the target.
std::vector<std::string> model_candidates(const TableExample& example,
                                          const TokenSequence& reference,
                                          const EntitySpan& target, GeneratorSampler& sampler,
                                          const EntityRecognizer& recognizer,
                                          const Vocabulary& vocab, const PerturbConfig& cfg,
                                          Rng& rng);

// Splices replacement text over tokens [span.start, span.end) and builds the
// step labels for the requested style.
Perturbation apply_replacement(const TableExample& example, const TokenSequence& reference,
                               const EntitySpan& target, const std::string& replacement,
                               const Vocabulary& vocab, TokenLabelStyle style,
                               const std::string& source);

// All-ones labels for the unperturbed reference (length tokens + 1).
std::vector<int> entailed_labels(size_t token_count);

// Builds up to size_cap(cfg.size) variants for one example by sampling
// (entity, candidate) pairs without replacement; "full" enumerates every
// pair deterministically.  sampler may be null for the knowledge strategy.
PerturbationSet generate_perturbations(const TableExample& example,
                                       const EntityRecognizer& recognizer,
                                       const Vocabulary& vocab, const PerturbConfig& cfg,
                                       GeneratorSampler* sampler);

// JSONL round trip.  Labels are stored run-length encoded.
std::string perturbation_to_json_line(const Perturbation& p);
Perturbation perturbation_from_json_line(const std::string& line, int lineno,
                                         const Vocabulary& vocab);
void save_perturbations(const std::string& path, const std::vector<Perturbation>& items);
std::vector<Perturbation> load_perturbations(const std::string& path, const Vocabulary& vocab);

}  // namespace r2d2
