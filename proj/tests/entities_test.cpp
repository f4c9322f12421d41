#include <doctest.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "entities.hpp"
#include "util.hpp"

using namespace r2d2;
namespace fs = std::filesystem;

namespace {

TableExample scoreboard() {
  TableExample e;
  e.table_id = "t1";
  e.header = {"Player", "Country", "Score"};
  e.rows = {{"Ana Silva", "Portugal", "12"},
            {"Ben Okoye", "Nigeria", "7"},
            {"The Rock", "Samoa", "12"}};
  e.reference = "Ana Silva of Portugal scored 12 points.";
  return e;
}

}  // namespace

TEST_CASE("normalize_entity case folds, trims and strips articles") {
  CHECK(normalize_entity("Ana   Silva ") == "ana silva");
  CHECK(normalize_entity("The Netherlands") == "netherlands");
  CHECK(normalize_entity("A Team") == "team");
  CHECK(normalize_entity("An Apple") == "apple");
  CHECK(normalize_entity("points.") == "points");
  CHECK(normalize_entity("U.S.") == "u.s");
  CHECK(normalize_entity("1957") == "1957");
  CHECK(normalize_entity("") == "");
  // Idempotent.
  CHECK(normalize_entity(normalize_entity("The  Ana SILVA.")) ==
        normalize_entity("The  Ana SILVA."));
}

TEST_CASE("table recognizer finds leftmost-longest cell matches") {
  TableExample e = scoreboard();
  Vocabulary v = build_vocabulary({e});
  TokenSequence sent = tokenize("Ana Silva of Portugal scored 12 points .", v);
  TableMatchRecognizer rec;
  auto spans = extract_entities(sent, &e, rec);
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].normalized == "ana silva");
  CHECK(spans[0].start == 0);
  CHECK(spans[0].end == 2);
  CHECK(spans[0].surface == "Ana Silva");
  CHECK(spans[1].normalized == "portugal");
  CHECK(spans[1].start == 3);
  CHECK(spans[2].normalized == "12");
  CHECK(spans[2].start == 5);
}

TEST_CASE("table recognizer prefers the longer of overlapping candidates") {
  TableExample e;
  e.table_id = "t";
  e.header = {"A", "B"};
  e.rows = {{"New York", "New York City"}};
  e.reference = "x";
  Vocabulary v = Vocabulary::build({"new", "york", "city", "visited"});
  TokenSequence sent = tokenize("visited New York City", v);
  TableMatchRecognizer rec;
  auto spans = extract_entities(sent, &e, rec);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].normalized == "new york city");
  CHECK(spans[0].start == 1);
  CHECK(spans[0].end == 4);
}

TEST_CASE("table recognizer without context finds nothing") {
  Vocabulary v = Vocabulary::build({"ana"});
  TokenSequence sent = tokenize("ana", v);
  TableMatchRecognizer rec;
  CHECK(extract_entities(sent, nullptr, rec).empty());
}

TEST_CASE("matches are non-overlapping and sorted") {
  TableExample e = scoreboard();
  Vocabulary v = build_vocabulary({e});
  // "12" appears twice; both occurrences are reported.
  TokenSequence sent = tokenize("12 then 12 again", v);
  TableMatchRecognizer rec;
  auto spans = extract_entities(sent, &e, rec);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].start == 0);
  CHECK(spans[1].start == 2);
  for (size_t i = 1; i < spans.size(); ++i) CHECK(spans[i - 1].end <= spans[i].start);
}

TEST_CASE("gazetteer recognizer matches a fixed entity set") {
  GazetteerRecognizer rec(std::set<std::string>{"ana silva", "nigeria"});
  Vocabulary v = Vocabulary::build({"ana", "silva", "visited", "nigeria", "."});
  TokenSequence sent = tokenize("Ana Silva visited Nigeria .", v);
  auto spans = extract_entities(sent, nullptr, rec);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].normalized == "ana silva");
  CHECK(spans[1].normalized == "nigeria");
  CHECK(spans[1].surface == "Nigeria");
}

TEST_CASE("gazetteer built from a corpus covers all cell values") {
  TableExample e = scoreboard();
  GazetteerRecognizer rec = GazetteerRecognizer::from_corpus({e});
  Vocabulary v = build_vocabulary({e});
  TokenSequence sent = tokenize("Ben Okoye and Samoa", v);
  auto spans = extract_entities(sent, nullptr, rec);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].normalized == "ben okoye");
  CHECK(spans[1].normalized == "samoa");
}

TEST_CASE("precomputed recognizer replays spans from a file") {
  fs::path dir = fs::temp_directory_path() / "r2d2_test_entities";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string path = (dir / "spans.jsonl").string();
  write_file(path,
             "{\"id\":\"s1\",\"spans\":[[0,2,\"Ana Silva\"],[3,4,\"Portugal\"]]}\n"
             "{\"id\":\"s2\",\"spans\":[]}\n");
  PrecomputedRecognizer rec(path);
  Vocabulary v = Vocabulary::build({"ana", "silva", "of", "portugal"});
  TokenSequence sent = tokenize("Ana Silva of Portugal", v);
  auto spans = extract_entities(sent, nullptr, rec, "s1");
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].surface == "Ana Silva");
  CHECK(spans[0].normalized == "ana silva");
  CHECK(extract_entities(sent, nullptr, rec, "s2").empty());
  CHECK_THROWS_AS(extract_entities(sent, nullptr, rec, "missing"), Error);

  // Out-of-range spans are rejected by the contract wrapper.
  write_file(path, "{\"id\":\"s1\",\"spans\":[[0,9,\"x\"]]}\n");
  PrecomputedRecognizer bad(path);
  CHECK_THROWS_AS(extract_entities(sent, nullptr, bad, "s1"), Error);
  fs::remove_all(dir);
}

TEST_CASE("make_recognizer dispatches on the config name") {
  std::vector<TableExample> corpus{scoreboard()};
  CHECK(make_recognizer("table", &corpus)->name() == "table");
  CHECK(make_recognizer("gazetteer", &corpus)->name() == "gazetteer");
  CHECK_THROWS_AS(make_recognizer("gazetteer", nullptr), Error);
  CHECK_THROWS_AS(make_recognizer("nope", &corpus), Error);

  fs::path dir = fs::temp_directory_path() / "r2d2_test_entities_factory";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string path = (dir / "spans.jsonl").string();
  write_file(path, "{\"id\":\"a\",\"spans\":[]}\n");
  CHECK(make_recognizer("file:" + path, nullptr)->name() == "file");
  fs::remove_all(dir);
}

TEST_CASE("table entity sets are per-column and deduplicated") {
  TableExample e = scoreboard();
  auto sets = table_entity_sets(e);
  REQUIRE(sets.size() == 3);
  CHECK(sets[0] == std::set<std::string>{"ana silva", "ben okoye", "rock"});
  CHECK(sets[1] == std::set<std::string>{"portugal", "nigeria", "samoa"});
  CHECK(sets[2] == std::set<std::string>{"12", "7"});

  auto all = all_table_entities(e);
  CHECK(all.size() == 8);
  CHECK(all.count("ana silva") == 1);
  CHECK(all.count("7") == 1);
}
