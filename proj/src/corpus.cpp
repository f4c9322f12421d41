#include "corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <json.hpp>

namespace r2d2 {

using nlohmann::json;

void TableExample::validate() const {
  if (table_id.empty()) fail(Error::Kind::InvalidArgument, "example has empty table_id");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      fail(Error::Kind::InvalidArgument,
           "example " + table_id + ": row " + std::to_string(r) + " has " +
               std::to_string(rows[r].size()) + " cells, header has " +
               std::to_string(header.size()));
    }
  }
  if (highlighted_cells) {
    for (const auto& [r, c] : *highlighted_cells) {
      if (r < 0 || c < 0 || r >= static_cast<int>(rows.size()) ||
          c >= static_cast<int>(header.size())) {
        fail(Error::Kind::InvalidArgument,
             "example " + table_id + ": highlighted cell (" + std::to_string(r) + "," +
                 std::to_string(c) + ") out of range");
      }
    }
  }
  if (reference.empty()) fail(Error::Kind::InvalidArgument, "example " + table_id + ": empty reference");
}

namespace {
const char* kReservedSurfaces[Vocabulary::kNumReserved] = {
    "<pad>", "<s>", "</s>", "<unk>", "<q>", "<meta>", "<cell>"};
}

Vocabulary::Vocabulary() {
  for (int i = 0; i < kNumReserved; ++i) {
    tokens_.emplace_back(kReservedSurfaces[i]);
    index_.emplace(tokens_.back(), i);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& words) {
  std::set<std::string> uniq;
  for (const auto& w : words) {
    if (!w.empty()) uniq.insert(lowercase(w));
  }
  Vocabulary v;
  for (const auto& w : uniq) {
    if (v.index_.count(w)) continue;  // reserved surface collision
    v.index_.emplace(w, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(w);
  }
  return v;
}

Vocabulary Vocabulary::from_token_list(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < kNumReserved)
    fail(Error::Kind::Config, "vocabulary token list shorter than reserved block");
  for (int i = 0; i < kNumReserved; ++i) {
    if (tokens[i] != kReservedSurfaces[i])
      fail(Error::Kind::Config, "vocabulary reserved token mismatch at id " + std::to_string(i));
  }
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
    if (v.index_.count(tokens[i]))
      fail(Error::Kind::Config, "vocabulary token list contains duplicate: " + tokens[i]);
    v.index_.emplace(tokens[i], static_cast<int>(i));
    v.tokens_.push_back(tokens[i]);
  }
  return v;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(lowercase(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& word) const {
  return index_.count(lowercase(word)) != 0;
}

const std::string& Vocabulary::surface(int id) const {
  if (id < 0 || id >= size()) fail(Error::Kind::InvalidArgument, "token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\x1f", h);
  }
  return h;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    std::size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view chunk = text.substr(i, j - i);
    // peel leading punctuation
    std::size_t a = 0, b = chunk.size();
    while (a < b && is_ascii_punct(chunk[a])) {
      out.emplace_back(1, chunk[a]);
      ++a;
    }
    // find trailing punctuation boundary
    std::size_t tb = b;
    while (tb > a && is_ascii_punct(chunk[tb - 1])) --tb;
    if (tb > a) out.emplace_back(chunk.substr(a, tb - a));
    for (std::size_t k = tb; k < b; ++k) out.emplace_back(1, chunk[k]);
    i = j;
  }
  return out;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSequence seq;
  for (auto& w : split_words(text)) {
    seq.ids.push_back(vocab.id(w));
    seq.surface.push_back(std::move(w));
  }
  return seq;
}

std::string detokenize(const TokenSequence& seq) { return join(seq.surface, " "); }

namespace {

void append_text(TokenSequence& seq, std::string_view text, const Vocabulary& vocab,
                 LinearizeStats* stats) {
  for (auto& w : split_words(text)) {
    const int id = vocab.id(w);
    if (id == Vocabulary::kUnk && stats) ++stats->unknown_tokens;
    seq.ids.push_back(id);
    seq.surface.push_back(std::move(w));
  }
}

void append_marker(TokenSequence& seq, int marker_id, const Vocabulary& vocab) {
  seq.ids.push_back(marker_id);
  seq.surface.push_back(vocab.surface(marker_id));
}

}  // namespace

TokenSequence linearize(const TableExample& example, const Vocabulary& vocab,
                        LinearizeStats* stats) {
  example.validate();
  TokenSequence seq;
  if (example.query) {
    append_marker(seq, Vocabulary::kQueryMarker, vocab);
    append_text(seq, *example.query, vocab, stats);
  }
  for (const auto& [key, value] : example.metadata) {  // std::map iterates key-sorted
    append_marker(seq, Vocabulary::kMetaMarker, vocab);
    append_text(seq, key, vocab, stats);
    append_text(seq, value, vocab, stats);
  }
  auto emit_cell = [&](int r, int c) {
    append_marker(seq, Vocabulary::kCellMarker, vocab);
    append_text(seq, example.header[static_cast<std::size_t>(c)], vocab, stats);
    append_text(seq, example.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)], vocab,
                stats);
  };
  if (example.highlighted_cells) {
    auto cells = *example.highlighted_cells;
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    for (const auto& [r, c] : cells) emit_cell(r, c);
  } else {
    for (std::size_t r = 0; r < example.rows.size(); ++r)
      for (std::size_t c = 0; c < example.header.size(); ++c)
        emit_cell(static_cast<int>(r), static_cast<int>(c));
  }
  return seq;
}

namespace {

std::string field_error(int lineno, const std::string& field, const std::string& what) {
  return "dataset line " + std::to_string(lineno) + ", field '" + field + "': " + what;
}

std::string cell_to_string(const json& v, int lineno) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  fail(Error::Kind::Io, field_error(lineno, "rows", "cell must be a string or integer"));
}

}  // namespace

TableExample example_from_json_line(const std::string& line, int lineno) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(Error::Kind::Io, "dataset line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) fail(Error::Kind::Io, "dataset line " + std::to_string(lineno) + ": record is not an object");

  TableExample e;
  try {
    if (!j.contains("table_id") || !j["table_id"].is_string())
      fail(Error::Kind::Io, field_error(lineno, "table_id", "missing or not a string"));
    e.table_id = j["table_id"].get<std::string>();

    if (!j.contains("header") || !j["header"].is_array())
      fail(Error::Kind::Io, field_error(lineno, "header", "missing or not an array"));
    for (const auto& h : j["header"]) {
      if (!h.is_string()) fail(Error::Kind::Io, field_error(lineno, "header", "entry is not a string"));
      e.header.push_back(h.get<std::string>());
    }

    if (!j.contains("rows") || !j["rows"].is_array())
      fail(Error::Kind::Io, field_error(lineno, "rows", "missing or not an array"));
    for (const auto& row : j["rows"]) {
      if (!row.is_array()) fail(Error::Kind::Io, field_error(lineno, "rows", "row is not an array"));
      std::vector<std::string> cells;
      for (const auto& c : row) cells.push_back(cell_to_string(c, lineno));
      e.rows.push_back(std::move(cells));
    }

    if (j.contains("metadata")) {
      if (!j["metadata"].is_object()) fail(Error::Kind::Io, field_error(lineno, "metadata", "not an object"));
      for (const auto& [k, v] : j["metadata"].items()) {
        if (!v.is_string()) fail(Error::Kind::Io, field_error(lineno, "metadata", "value is not a string"));
        e.metadata.emplace(k, v.get<std::string>());
      }
    }

    if (j.contains("query")) {
      if (!j["query"].is_string()) fail(Error::Kind::Io, field_error(lineno, "query", "not a string"));
      e.query = j["query"].get<std::string>();
    }

    if (j.contains("highlighted_cells")) {
      if (!j["highlighted_cells"].is_array())
        fail(Error::Kind::Io, field_error(lineno, "highlighted_cells", "not an array"));
      std::vector<std::pair<int, int>> cells;
      for (const auto& pair : j["highlighted_cells"]) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
            !pair[1].is_number_integer())
          fail(Error::Kind::Io, field_error(lineno, "highlighted_cells", "entry is not an [int,int] pair"));
        cells.emplace_back(pair[0].get<int>(), pair[1].get<int>());
      }
      e.highlighted_cells = std::move(cells);
    }

    if (!j.contains("reference") || !j["reference"].is_string())
      fail(Error::Kind::Io, field_error(lineno, "reference", "missing or not a string"));
    e.reference = j["reference"].get<std::string>();
  } catch (const json::exception& ex) {
    fail(Error::Kind::Io, "dataset line " + std::to_string(lineno) + ": " + ex.what());
  }

  try {
    e.validate();
  } catch (const Error& err) {
    fail(Error::Kind::Io, "dataset line " + std::to_string(lineno) + ": " + err.what());
  }
  return e;
}

std::string example_to_json_line(const TableExample& e) {
  json j;
  j["table_id"] = e.table_id;
  j["header"] = e.header;
  j["rows"] = e.rows;
  if (!e.metadata.empty()) j["metadata"] = e.metadata;
  if (e.query) j["query"] = *e.query;
  if (e.highlighted_cells) {
    json cells = json::array();
    for (const auto& [r, c] : *e.highlighted_cells) cells.push_back(json::array({r, c}));
    j["highlighted_cells"] = cells;
  }
  j["reference"] = e.reference;
  return j.dump();
}

std::vector<TableExample> load_dataset(const std::string& path) {
  std::vector<TableExample> out;
  for (const auto& [lineno, line] : read_jsonl_lines(path)) {
    out.push_back(example_from_json_line(line, lineno));
  }
  return out;
}

void save_dataset(const std::string& path, const std::vector<TableExample>& examples) {
  std::string buf;
  for (const auto& e : examples) {
    buf += example_to_json_line(e);
    buf += '\n';
  }
  write_file(path, buf);
}

// ---- synthetic corpus ----

namespace {

const char* kFirstNames[] = {
    "amara", "bela",   "carlos", "daria",  "elio",  "farah", "goran",  "hana",
    "ivan",  "jonas",  "katya",  "liam",   "mira",  "nadia", "oskar",  "petra",
    "quinn", "ravi",   "sofia",  "tomas",  "uma",   "viktor", "wanda", "xenia",
    "yusuf", "zara",   "anders", "bianca", "casper", "delia"};

const char* kLastNames[] = {
    "abbot",   "berg",    "castro",  "dvorak",  "egede",   "fischer", "garcia", "holm",
    "ibsen",   "jensen",  "kovacs",  "lindqvist", "moreau", "novak",  "okafor", "petrov",
    "quist",   "rossi",   "santos",  "tanaka",  "ulrich",  "vance",   "weber",  "xu",
    "yamada",  "zielinski", "almeida", "brandt", "costa",   "duarte"};

const char* kCountries[] = {
    "sweden",  "norway",   "denmark", "finland", "iceland",  "brazil",  "canada",  "japan",
    "kenya",   "mexico",   "poland",  "portugal", "spain",   "france",  "italy",   "greece",
    "hungary", "austria",  "belgium", "croatia", "estonia",  "georgia", "ireland", "latvia"};

const char* kTitles[] = {"world championship", "continental cup", "summer games",
                         "winter classic", "masters series"};

constexpr int kNumFirst = static_cast<int>(sizeof(kFirstNames) / sizeof(kFirstNames[0]));
constexpr int kNumLast = static_cast<int>(sizeof(kLastNames) / sizeof(kLastNames[0]));
constexpr int kNumCountries = static_cast<int>(sizeof(kCountries) / sizeof(kCountries[0]));
constexpr int kNumTitles = static_cast<int>(sizeof(kTitles) / sizeof(kTitles[0]));
constexpr int kNumTemplates = 4;
constexpr int kYearBase = 1950;
constexpr int kMaxYears = 75;
constexpr int kMaxScores = 99;

std::string title_case(std::string_view word) {
  std::string out(word);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string person_name(int idx) {
  const int f = idx % kNumFirst;
  const int l = (idx / kNumFirst + idx) % kNumLast;
  return title_case(kFirstNames[f]) + " " + title_case(kLastNames[l]);
}

// Floyd's algorithm would do, but a partial shuffle over indices is clearer.
std::vector<int> pick_distinct(Rng& rng, int pool, int k) {
  std::vector<int> idx(static_cast<std::size_t>(pool));
  for (int i = 0; i < pool; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(pool - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_examples < 0) fail(Error::Kind::Config, "synthetic spec: num_examples must be >= 0");
  if (min_rows < 1 || max_rows < min_rows)
    fail(Error::Kind::Config, "synthetic spec: need 1 <= min_rows <= max_rows");
  if (persons < max_rows || years < max_rows || scores < max_rows)
    fail(Error::Kind::Config, "synthetic spec: gazetteers must cover max_rows distinct values");
  if (persons > kNumFirst * kNumLast) fail(Error::Kind::Config, "synthetic spec: persons gazetteer too large");
  if (countries < 1 || countries > kNumCountries)
    fail(Error::Kind::Config, "synthetic spec: countries must be in [1, " + std::to_string(kNumCountries) + "]");
  if (years > kMaxYears) fail(Error::Kind::Config, "synthetic spec: years gazetteer too large");
  if (scores > kMaxScores) fail(Error::Kind::Config, "synthetic spec: scores gazetteer too large");
  if (templates.empty()) fail(Error::Kind::Config, "synthetic spec: template set is empty");
  for (int t : templates) {
    if (t < 0 || t >= kNumTemplates)
      fail(Error::Kind::Config, "synthetic spec: unknown template id " + std::to_string(t));
  }
}

std::vector<SyntheticExample> generate_synthetic_detailed(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<SyntheticExample> out;
  out.reserve(static_cast<std::size_t>(spec.num_examples));

  for (int i = 0; i < spec.num_examples; ++i) {
    Rng rng(derive_seed(spec.seed, {"synth", std::to_string(i)}));
    const int n_rows =
        spec.min_rows + static_cast<int>(rng.uniform_int(
                            static_cast<std::uint64_t>(spec.max_rows - spec.min_rows + 1)));

    const auto person_idx = pick_distinct(rng, spec.persons, n_rows);
    const auto year_idx = pick_distinct(rng, spec.years, n_rows);
    const auto score_idx = pick_distinct(rng, spec.scores, n_rows);

    SyntheticExample s;
    TableExample& e = s.example;
    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "syn-%06d", i);
    e.table_id = idbuf;
    e.header = {"Player", "Country", "Year", "Score"};
    for (int r = 0; r < n_rows; ++r) {
      const std::string person = person_name(person_idx[static_cast<std::size_t>(r)]);
      const std::string country =
          title_case(kCountries[rng.uniform_int(static_cast<std::uint64_t>(spec.countries))]);
      const std::string year = std::to_string(kYearBase + year_idx[static_cast<std::size_t>(r)]);
      const std::string score = std::to_string(1 + score_idx[static_cast<std::size_t>(r)]);
      e.rows.push_back({person, country, year, score});
    }
    e.metadata["title"] = kTitles[rng.uniform_int(kNumTitles)];

    const int target = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_rows)));
    const int tmpl = spec.templates[rng.uniform_int(spec.templates.size())];
    const auto& row = e.rows[static_cast<std::size_t>(target)];
    const std::string& person = row[0];
    const std::string& country = row[1];
    const std::string& year = row[2];
    const std::string& score = row[3];

    switch (tmpl) {
      case 0:
        e.query = "Which country did " + person + " represent?";
        e.reference = person + " represented " + country + ".";
        s.queried_entities = {person, country};
        break;
      case 1:
        e.query = "In which year did " + person + " win?";
        e.reference = person + " won in " + year + ".";
        s.queried_entities = {person, year};
        break;
      case 2:
        e.query = "How many points did " + person + " score?";
        e.reference = person + " scored " + score + " points.";
        s.queried_entities = {person, score};
        break;
      case 3:
        e.query = "Who won in the year " + year + "?";
        e.reference = person + " won in " + year + ".";
        s.queried_entities = {person, year};
        break;
      default:
        fail(Error::Kind::Runtime, "unreachable template id");
    }
    s.target_row = target;
    s.template_id = tmpl;
    e.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TableExample> generate_synthetic(const SyntheticSpec& spec) {
  std::vector<TableExample> out;
  for (auto& s : generate_synthetic_detailed(spec)) out.push_back(std::move(s.example));
  return out;
}

Vocabulary build_vocabulary(const std::vector<TableExample>& corpus) {
  std::vector<std::string> words;
  auto add_text = [&](std::string_view text) {
    for (auto& w : split_words(text)) words.push_back(std::move(w));
  };
  for (const auto& e : corpus) {
    for (const auto& h : e.header) add_text(h);
    for (const auto& row : e.rows)
      for (const auto& cell : row) add_text(cell);
    for (const auto& [k, v] : e.metadata) {
      add_text(k);
      add_text(v);
    }
    if (e.query) add_text(*e.query);
    add_text(e.reference);
  }
  return Vocabulary::build(words);
}

}  // namespace r2d2
