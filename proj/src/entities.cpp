#include "entities.hpp"

#include <algorithm>

#include <json.hpp>

namespace r2d2 {

using nlohmann::json;

namespace {

bool is_article(std::string_view w) { return w == "the" || w == "a" || w == "an"; }

// Lowercased token with punctuation stripped from both ends; "" for pure
// punctuation tokens.
std::string token_core(std::string_view tok) {
  std::size_t a = 0, b = tok.size();
  while (a < b && is_ascii_punct(tok[a])) ++a;
  while (b > a && is_ascii_punct(tok[b - 1])) --b;
  return lowercase(tok.substr(a, b - a));
}

}  // namespace

std::string normalize_entity(std::string_view surface) {
  std::string s = collapse_whitespace(lowercase(surface));
  bool changed = true;
  while (changed) {
    changed = false;
    const std::size_t sp = s.find(' ');
    const std::string first = sp == std::string::npos ? s : s.substr(0, sp);
    if (!first.empty() && is_article(first)) {
      s = sp == std::string::npos ? std::string() : s.substr(sp + 1);
      changed = true;
    }
    while (!s.empty() && is_ascii_punct(s.back())) {
      s.pop_back();
      changed = true;
    }
    if (changed) s = collapse_whitespace(s);
  }
  return s;
}

namespace {

// Shared matcher: greedy leftmost-longest scan of the sentence against a set
// of normalized candidate phrases.
std::vector<EntitySpan> match_candidates(const TokenSequence& sentence,
                                         const std::set<std::string>& candidates) {
  std::vector<EntitySpan> spans;
  if (candidates.empty()) return spans;
  std::size_t max_words = 1;
  for (const auto& c : candidates) {
    const std::size_t words = static_cast<std::size_t>(std::count(c.begin(), c.end(), ' ')) + 1;
    max_words = std::max(max_words, words);
  }
  const std::size_t n = sentence.size();
  std::size_t i = 0;
  while (i < n) {
    bool matched = false;
    const std::size_t max_len = std::min(max_words, n - i);
    for (std::size_t len = max_len; len >= 1; --len) {
      const std::string& first = sentence.surface[i];
      const std::string& last = sentence.surface[i + len - 1];
      // boundary tokens must carry content: no bare punctuation, and no
      // leading article (the span starts at the entity itself)
      const std::string first_core = token_core(first);
      if (first_core.empty() || is_article(first_core)) break;  // no span can start here
      if (token_core(last).empty()) continue;
      std::string window;
      for (std::size_t k = 0; k < len; ++k) {
        if (k) window += ' ';
        window += sentence.surface[i + k];
      }
      const std::string norm = normalize_entity(window);
      if (!norm.empty() && candidates.count(norm)) {
        EntitySpan span;
        span.start = static_cast<int>(i);
        span.end = static_cast<int>(i + len);
        span.surface = window;
        span.normalized = norm;
        spans.push_back(std::move(span));
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return spans;
}

}  // namespace

std::vector<EntitySpan> TableMatchRecognizer::extract(const TokenSequence& sentence,
                                                      const TableExample* context,
                                                      std::string_view) const {
  if (!context) return {};
  return match_candidates(sentence, all_table_entities(*context));
}

GazetteerRecognizer::GazetteerRecognizer(std::set<std::string> normalized_entities)
    : entities_(std::move(normalized_entities)) {}

GazetteerRecognizer GazetteerRecognizer::from_corpus(const std::vector<TableExample>& corpus) {
  std::set<std::string> all;
  for (const auto& e : corpus) {
    auto ents = all_table_entities(e);
    all.insert(ents.begin(), ents.end());
  }
  return GazetteerRecognizer(std::move(all));
}

std::vector<EntitySpan> GazetteerRecognizer::extract(const TokenSequence& sentence,
                                                     const TableExample*, std::string_view) const {
  return match_candidates(sentence, entities_);
}

PrecomputedRecognizer::PrecomputedRecognizer(const std::string& path) : path_(path) {
  for (const auto& [lineno, line] : read_jsonl_lines(path)) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(Error::Kind::Io, "entity file " + path + " line " + std::to_string(lineno) +
                                ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("spans") ||
        !j["spans"].is_array())
      fail(Error::Kind::Io,
           "entity file " + path + " line " + std::to_string(lineno) + ": need {id, spans}");
    std::vector<EntitySpan> spans;
    for (const auto& s : j["spans"]) {
      if (!s.is_array() || s.size() != 3 || !s[0].is_number_integer() ||
          !s[1].is_number_integer() || !s[2].is_string())
        fail(Error::Kind::Io, "entity file " + path + " line " + std::to_string(lineno) +
                                  ": span must be [start, end, surface]");
      EntitySpan span;
      span.start = s[0].get<int>();
      span.end = s[1].get<int>();
      span.surface = s[2].get<std::string>();
      span.normalized = normalize_entity(span.surface);
      spans.push_back(std::move(span));
    }
    spans_by_id_.insert_or_assign(j["id"].get<std::string>(), std::move(spans));
  }
}

std::vector<EntitySpan> PrecomputedRecognizer::extract(const TokenSequence&, const TableExample*,
                                                       std::string_view sentence_id) const {
  auto it = spans_by_id_.find(sentence_id);
  if (it == spans_by_id_.end())
    fail(Error::Kind::InvalidArgument,
         "entity file " + path_ + " has no spans for sentence id '" + std::string(sentence_id) + "'");
  return it->second;
}

std::unique_ptr<EntityRecognizer> make_recognizer(const std::string& config_name,
                                                  const std::vector<TableExample>* corpus) {
  if (config_name == "table" || config_name.empty()) return std::make_unique<TableMatchRecognizer>();
  if (config_name == "gazetteer") {
    if (!corpus) fail(Error::Kind::Config, "gazetteer recognizer needs a corpus");
    return std::make_unique<GazetteerRecognizer>(GazetteerRecognizer::from_corpus(*corpus));
  }
  if (config_name.rfind("file:", 0) == 0)
    return std::make_unique<PrecomputedRecognizer>(config_name.substr(5));
  fail(Error::Kind::Config, "unknown recognizer '" + config_name +
                                "' (available: table, gazetteer, file:PATH)");
}

std::vector<EntitySpan> extract_entities(const TokenSequence& sentence, const TableExample* context,
                                         const EntityRecognizer& recognizer,
                                         std::string_view sentence_id) {
  auto spans = recognizer.extract(sentence, context, sentence_id);
  int prev_end = 0;
  for (const auto& s : spans) {
    if (s.start < prev_end || s.start >= s.end || s.end > static_cast<int>(sentence.size()))
      fail(Error::Kind::Runtime, "recognizer '" + recognizer.name() +
                                     "' violated the span contract (sorted, non-overlapping, in range)");
    prev_end = s.end;
  }
  return spans;
}

std::map<int, std::set<std::string>> table_entity_sets(const TableExample& example) {
  std::map<int, std::set<std::string>> by_column;
  for (std::size_t c = 0; c < example.header.size(); ++c) by_column[static_cast<int>(c)] = {};
  for (const auto& row : example.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::string norm = normalize_entity(row[c]);
      if (!norm.empty()) by_column[static_cast<int>(c)].insert(std::move(norm));
    }
  }
  return by_column;
}

std::set<std::string> all_table_entities(const TableExample& example) {
  std::set<std::string> all;
  for (auto& [col, ents] : table_entity_sets(example)) all.insert(ents.begin(), ents.end());
  return all;
}

}  // namespace r2d2
