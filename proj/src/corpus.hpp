#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "util.hpp"

namespace r2d2 {

// One data-to-text instance: a structured table with optional query,
// metadata and highlighted cells, plus the entailed reference sentence.
struct TableExample {
  std::string table_id;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::string> metadata;  // ordered for deterministic emission
  std::optional<std::string> query;
  std::optional<std::vector<std::pair<int, int>>> highlighted_cells;
  std::string reference;

  // Throws Error::InvalidArgument on any invariant violation:
  // ragged rows, out-of-range highlights, empty reference.
  void validate() const;
};

// Token ids paired with their surface strings; both always the same length.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::string> surface;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

class Vocabulary {
 public:
  // Reserved ids.  Fixed positions so files and checkpoints agree.
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kQueryMarker = 4;
  static constexpr int kMetaMarker = 5;
  static constexpr int kCellMarker = 6;
  static constexpr int kNumReserved = 7;

  Vocabulary();

  // Builds from word types (lowercased internally, deduplicated, sorted).
  static Vocabulary build(const std::vector<std::string>& words);
  static Vocabulary from_token_list(const std::vector<std::string>& tokens);

  int id(const std::string& word) const;  // lowercased lookup; kUnk if absent
  bool contains(const std::string& word) const;
  const std::string& surface(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Splits text into word pieces: whitespace-separated chunks with leading and
// trailing ASCII punctuation peeled off as single-character tokens.  Numbers
// stay whole.  Vocabulary-free; shared by tokenize() and vocabulary building.
std::vector<std::string> split_words(std::string_view text);

// Whitespace-and-punctuation tokenizer with lowercased vocabulary lookup.
// Unknown words map to Vocabulary::kUnk but keep their surface.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

// Joins surfaces with single spaces; inverse of tokenize up to whitespace.
std::string detokenize(const TokenSequence& seq);

struct LinearizeStats {
  int unknown_tokens = 0;
};

// Flattens an example to the model input sequence, in fixed order:
// query (if present), metadata pairs (sorted by key), then row-major cells
// each prefixed by its column name.  When highlighted_cells is present only
// those cells are emitted, in row-major order.  Distinct marker tokens
// separate the segments.
TokenSequence linearize(const TableExample& example, const Vocabulary& vocab,
                        LinearizeStats* stats = nullptr);

// Line-delimited JSON dataset IO.  Blank lines are skipped; any malformed
// record raises an error naming the line and field.
std::vector<TableExample> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<TableExample>& examples);
std::string example_to_json_line(const TableExample& e);
TableExample example_from_json_line(const std::string& line, int lineno);

// ---- synthetic corpus ----

struct SyntheticSpec {
  std::uint64_t seed = 7;
  int num_examples = 100;
  int min_rows = 3;
  int max_rows = 6;
  // gazetteer sizes per column type
  int persons = 40;
  int countries = 16;
  int years = 30;
  int scores = 60;
  std::vector<int> templates = {0, 1, 2, 3};

  void validate() const;
};

// A generated example plus the oracle facts the templates used, so tests can
// check entity extraction and perturbation enumeration exactly.
struct SyntheticExample {
  TableExample example;
  std::vector<std::string> queried_entities;  // cell values the template put into the reference
  int target_row = 0;
  int template_id = 0;
};

std::vector<SyntheticExample> generate_synthetic_detailed(const SyntheticSpec& spec);
std::vector<TableExample> generate_synthetic(const SyntheticSpec& spec);

// Sorted unique lowercased word types across linearization inputs and
// references of the corpus, used to build the working vocabulary.
Vocabulary build_vocabulary(const std::vector<TableExample>& corpus);

}  // namespace r2d2
