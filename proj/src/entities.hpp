#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "corpus.hpp"

namespace r2d2 {

// A token-index span [start, end) in a sentence, with the raw surface text
// and its normalized entity form.
struct EntitySpan {
  int start = 0;
  int end = 0;
  std::string surface;
  std::string normalized;

  friend bool operator==(const EntitySpan& a, const EntitySpan& b) = default;
};

// Canonical entity form used for every set comparison: case-folded,
// whitespace-collapsed, leading articles and trailing punctuation stripped.
// Idempotent and total.
std::string normalize_entity(std::string_view surface);

// Pluggable recognizer.  sentence_id is a caller-side key that lets
// file-backed recognizers inject externally computed spans; the built-in
// matchers ignore it.
class EntityRecognizer {
 public:
  virtual ~EntityRecognizer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<EntitySpan> extract(const TokenSequence& sentence,
                                          const TableExample* context,
                                          std::string_view sentence_id) const = 0;
};

// Default recognizer: maximal-length matches of the context table's cell
// values (normalized) against the sentence, leftmost-longest, non-overlapping.
// Without a context it finds nothing.
class TableMatchRecognizer : public EntityRecognizer {
 public:
  std::string name() const override { return "table"; }
  std::vector<EntitySpan> extract(const TokenSequence& sentence, const TableExample* context,
                                  std::string_view sentence_id) const override;
};

// Same matching, against a fixed gazetteer (e.g. all cell values of a corpus).
class GazetteerRecognizer : public EntityRecognizer {
 public:
  explicit GazetteerRecognizer(std::set<std::string> normalized_entities);
  static GazetteerRecognizer from_corpus(const std::vector<TableExample>& corpus);

  std::string name() const override { return "gazetteer"; }
  std::vector<EntitySpan> extract(const TokenSequence& sentence, const TableExample* context,
                                  std::string_view sentence_id) const override;

 private:
  std::set<std::string> entities_;
};

// Adapter for pre-extracted entity files so external NER output can be
// injected bit-exactly.  File: one JSON object per line,
//   {"id": "...", "spans": [[start, end, "surface"], ...]}
class PrecomputedRecognizer : public EntityRecognizer {
 public:
  explicit PrecomputedRecognizer(const std::string& path);

  std::string name() const override { return "file"; }
  std::vector<EntitySpan> extract(const TokenSequence& sentence, const TableExample* context,
                                  std::string_view sentence_id) const override;

 private:
  std::map<std::string, std::vector<EntitySpan>, std::less<>> spans_by_id_;
  std::string path_;
};

// Recognizer factory for configuration values: "table", "gazetteer"
// (requires corpus), or "file:PATH".
std::unique_ptr<EntityRecognizer> make_recognizer(const std::string& config_name,
                                                  const std::vector<TableExample>* corpus);

// Runs the recognizer and enforces the interface contract (spans sorted by
// start, non-overlapping, indices in range).
std::vector<EntitySpan> extract_entities(const TokenSequence& sentence,
                                         const TableExample* context,
                                         const EntityRecognizer& recognizer,
                                         std::string_view sentence_id = {});

// Per-column deduplicated normalized cell values.  Always covers the full
// table, independent of highlighted cells.
std::map<int, std::set<std::string>> table_entity_sets(const TableExample& example);

// Union over all columns.
std::set<std::string> all_table_entities(const TableExample& example);

}  // namespace r2d2
