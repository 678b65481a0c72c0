#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "hpd/data.hpp"
#include "hpd/encoder.hpp"
#include "hpd/errors.hpp"
#include "test_support.hpp"

using namespace hpd::data;
using test_support::TempDir;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("load_triplets reads a small valid file") {
  TempDir dir("triplets");
  const std::string path = dir.file("t.jsonl");
  write_file(path,
             R"({"anchor":"a cat","entailment":"a feline","contradiction":"a dog"})"
             "\n"
             R"({"anchor":"b","entailment":"c","contradiction":"d"})"
             "\n"
             R"({"anchor":"e","entailment":"f","contradiction":"g"})"
             "\n");
  auto records = load_triplets(path);
  REQUIRE(records.size() == 3);
  CHECK(records[0].anchor == "a cat");
  CHECK(records[0].entailment == "a feline");
  CHECK(records[0].contradiction == "a dog");
}

TEST_CASE("load_triplets names the line missing a field") {
  TempDir dir("triplets-bad");
  const std::string path = dir.file("t.jsonl");
  write_file(path,
             R"({"anchor":"a","entailment":"b","contradiction":"c"})"
             "\n"
             R"({"anchor":"a","entailment":"b"})"
             "\n");
  try {
    load_triplets(path);
    FAIL("expected a parse error");
  } catch (const hpd::ParseError& e) {
    CHECK(contains(e.what(), ":2"));
    CHECK(contains(e.what(), "contradiction"));
  }
}

TEST_CASE("load_triplets treats CRLF like LF") {
  TempDir dir("triplets-crlf");
  const std::string lf = dir.file("lf.jsonl");
  const std::string crlf = dir.file("crlf.jsonl");
  write_file(lf,
             R"({"anchor":"a","entailment":"b","contradiction":"c"})"
             "\n");
  write_file(crlf,
             R"({"anchor":"a","entailment":"b","contradiction":"c"})"
             "\r\n");
  auto a = load_triplets(lf);
  auto b = load_triplets(crlf);
  REQUIRE(a.size() == b.size());
  CHECK(a[0].anchor == b[0].anchor);
  CHECK(a[0].contradiction == b[0].contradiction);
}

TEST_CASE("load_triplets rejects an empty file") {
  TempDir dir("triplets-empty");
  const std::string path = dir.file("t.jsonl");
  write_file(path, "");
  CHECK_THROWS_AS(load_triplets(path), hpd::InputError);
  CHECK_THROWS_AS(load_triplets(dir.file("missing.jsonl")), hpd::IoError);
}

TEST_CASE("scored pairs parse values and enforce the range") {
  TempDir dir("pairs");
  const std::string path = dir.file("p.tsv");
  write_file(path, "a\tb\t4.5\nc\td\t0\ne\tf\t5\n");
  auto pairs = load_scored_pairs(path);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].sent1 == "a");
  CHECK(pairs[0].sent2 == "b");
  CHECK(pairs[0].score == doctest::Approx(4.5));
  CHECK(pairs[1].score == 0.0);  // boundary values are inclusive
  CHECK(pairs[2].score == 5.0);

  write_file(path, "a\tb\t7.0\n");
  CHECK_THROWS_AS(load_scored_pairs(path), hpd::InputError);
  write_file(path, "a\tb\t-1\n");
  CHECK_THROWS_AS(load_scored_pairs(path), hpd::InputError);
  write_file(path, "a\tb\tbanana\n");
  CHECK_THROWS_AS(load_scored_pairs(path), hpd::ParseError);
  write_file(path, "a only one field\n");
  CHECK_THROWS_AS(load_scored_pairs(path), hpd::ParseError);
}

TEST_CASE("triplet and pair round-trips are field-exact") {
  TempDir dir("roundtrip");
  std::vector<TripletRecord> records{
      {"the \"quoted\" anchor", "tab\tfree", "unicode caf\xc3\xa9"},
      {"x", "y", "z"},
  };
  save_triplets(dir.file("t.jsonl"), records);
  auto records2 = load_triplets(dir.file("t.jsonl"));
  REQUIRE(records2.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(records2[i].anchor == records[i].anchor);
    CHECK(records2[i].entailment == records[i].entailment);
    CHECK(records2[i].contradiction == records[i].contradiction);
  }

  std::vector<ScoredPair> pairs{{"a b", "c d", 3.25}, {"e", "f", 0.2}};
  save_scored_pairs(dir.file("p.tsv"), pairs);
  auto pairs2 = load_scored_pairs(dir.file("p.tsv"));
  REQUIRE(pairs2.size() == 2);
  CHECK(pairs2[0].sent1 == "a b");
  CHECK(pairs2[0].score == 3.25);  // %.17g keeps doubles exact
  CHECK(pairs2[1].score == 0.2);

  std::vector<RetrievalDoc> docs{{7, "some text"}, {0, "more text"}};
  save_retrieval_docs(dir.file("d.jsonl"), docs);
  auto docs2 = load_retrieval_docs(dir.file("d.jsonl"));
  REQUIRE(docs2.size() == 2);
  CHECK(docs2[0].id == 7);
  CHECK(docs2[1].text == "more text");

  std::vector<std::pair<uint64_t, uint64_t>> gold{{1, 9}, {2, 0}};
  save_gold_pairs(dir.file("g.tsv"), gold);
  CHECK(load_gold_pairs(dir.file("g.tsv")) == gold);
}

TEST_CASE("augment with an empty table returns only the original") {
  TripletRecord rec{"good day", "fine day", "bad day"};
  auto out = augment(rec, {}, 1.0, 7);
  REQUIRE(out.size() == 1);
  CHECK(out[0].anchor == rec.anchor);
}

TEST_CASE("augment at rate one substitutes every eligible word") {
  SynonymTable table{{"good", {"fine"}}};
  TripletRecord rec{"good day", "it is good", "bad day"};
  auto out = augment(rec, table, 1.0, 7);
  REQUIRE(out.size() >= 2);
  CHECK(out[0].anchor == "good day");
  CHECK(out[1].anchor == "fine day");
  CHECK(out[1].entailment == "it is fine");
  CHECK(out[1].contradiction == "bad day");  // no eligible word
}

TEST_CASE("augment is deterministic per seed") {
  auto table = synth_synonyms();
  TripletRecord rec{"the cat quickly finds the book in the library",
                    "the kitten rapidly locates the novel in the library",
                    "the cat never quickly finds the book in the library"};
  auto a = augment(rec, table, 0.5, 99);
  auto b = augment(rec, table, 0.5, 99);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].anchor == b[i].anchor);
    CHECK(a[i].entailment == b[i].entailment);
  }
}

TEST_CASE("augment at rate zero returns only the original") {
  auto table = synth_synonyms();
  TripletRecord rec{"the cat finds the book", "the kitten locates the novel",
                    "the cat loses the book"};
  auto out = augment(rec, table, 0.0, 5);
  REQUIRE(out.size() == 1);
  CHECK(out[0].anchor == rec.anchor);
}

TEST_CASE("synth corpus has exactly the requested sizes, reproducibly") {
  SynthConfig cfg{10, 12, 15, 4};
  auto a = synth_corpus(cfg, 31);
  CHECK(a.triplets.size() == 10);
  CHECK(a.pairs.size() == 12);
  CHECK(a.docs.size() == 15);
  CHECK(a.queries.size() == 4);
  CHECK(a.gold.size() == 4);

  auto b = synth_corpus(cfg, 31);
  for (size_t i = 0; i < a.triplets.size(); ++i) {
    CHECK(a.triplets[i].anchor == b.triplets[i].anchor);
    CHECK(a.triplets[i].contradiction == b.triplets[i].contradiction);
  }
  for (size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].sent1 == b.pairs[i].sent1);
    CHECK(a.pairs[i].score == b.pairs[i].score);
  }
}

TEST_CASE("synth pair scores stay within the label range") {
  auto corpus = synth_corpus({50, 120, 20, 5}, 77);
  for (const auto& p : corpus.pairs) {
    CHECK(p.score >= 0.0);
    CHECK(p.score <= 5.0);
    CHECK(!p.sent1.empty());
    CHECK(!p.sent2.empty());
  }
}

TEST_CASE("every query shares a content word with its gold document") {
  auto corpus = synth_corpus({20, 20, 60, 25}, 13);
  std::map<uint64_t, std::string> doc_of;
  for (const auto& d : corpus.docs) doc_of[d.id] = d.text;
  REQUIRE(corpus.gold.size() == corpus.queries.size());

  const std::set<std::string> stop{"the", "in", "never"};
  for (size_t i = 0; i < corpus.queries.size(); ++i) {
    const auto& q = corpus.queries[i];
    CHECK(corpus.gold[i].first == q.id);
    const auto& gold_text = doc_of.at(corpus.gold[i].second);

    std::set<std::string> q_words;
    for (auto& w : hpd::encoder::split_words(q.text))
      if (!stop.count(w)) q_words.insert(w);
    bool shared = false;
    for (auto& w : hpd::encoder::split_words(gold_text))
      if (q_words.count(w)) shared = true;
    CHECK(shared);
  }
}

TEST_CASE("synth triplets are well-formed") {
  auto corpus = synth_corpus({40, 5, 5, 2}, 3);
  for (const auto& t : corpus.triplets) {
    CHECK(!t.anchor.empty());
    CHECK(!t.entailment.empty());
    CHECK(!t.contradiction.empty());
    CHECK(t.anchor != t.entailment);
    CHECK(t.anchor != t.contradiction);
  }
  // doc ids unique, texts distinct
  std::set<uint64_t> ids;
  std::set<std::string> texts;
  for (const auto& d : corpus.docs) {
    ids.insert(d.id);
    texts.insert(d.text);
  }
  CHECK(ids.size() == corpus.docs.size());
  CHECK(texts.size() == corpus.docs.size());
}

TEST_CASE("synonym files load into lowercase keyed tables") {
  TempDir dir("syn");
  const std::string path = dir.file("s.tsv");
  write_file(path, "good\tfine,great\nbad\tawful\n");
  auto table = load_synonyms(path);
  REQUIRE(table.size() == 2);
  REQUIRE(table.at("good").size() == 2);
  CHECK(table.at("good")[0] == "fine");
  CHECK(table.at("good")[1] == "great");
  CHECK(table.at("bad") == std::vector<std::string>{"awful"});

  write_file(path, "word\t\n");
  CHECK_THROWS_AS(load_synonyms(path), hpd::InputError);
}
