#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace hpd::data {

// Anchor with one paraphrase and one contradicting sentence.
struct TripletRecord {
  std::string anchor;
  std::string entailment;
  std::string contradiction;
};

struct ScoredPair {
  std::string sent1;
  std::string sent2;
  double score = 0.0;  // [0, 5]
};

// word -> replacement candidates; keys lowercase
using SynonymTable = std::map<std::string, std::vector<std::string>>;

struct RetrievalDoc {
  uint64_t id = 0;
  std::string text;
};

// JSONL with keys anchor/entailment/contradiction; parse failures carry the
// 1-based line number.
std::vector<TripletRecord> load_triplets(const std::string& path);
void save_triplets(const std::string& path,
                   const std::vector<TripletRecord>& records);

// TSV sent1<TAB>sent2<TAB>score, score in [0,5]
std::vector<ScoredPair> load_scored_pairs(const std::string& path);
void save_scored_pairs(const std::string& path,
                       const std::vector<ScoredPair>& pairs);

// JSONL with keys id/text
std::vector<RetrievalDoc> load_retrieval_docs(const std::string& path);
void save_retrieval_docs(const std::string& path,
                         const std::vector<RetrievalDoc>& docs);

// TSV query_id<TAB>gold_id
std::vector<std::pair<uint64_t, uint64_t>> load_gold_pairs(
    const std::string& path);
void save_gold_pairs(const std::string& path,
                     const std::vector<std::pair<uint64_t, uint64_t>>& gold);

// TSV word<TAB>alt1,alt2,...
SynonymTable load_synonyms(const std::string& path);

// Original plus up to `variants` synonym-substituted copies; each eligible
// word flips with probability rate; copies identical to the original (or to
// an earlier copy) are dropped.
std::vector<TripletRecord> augment(const TripletRecord& record,
                                   const SynonymTable& table, double rate,
                                   uint64_t seed, size_t variants = 2);

struct SynthConfig {
  size_t triplets = 500;
  size_t pairs = 200;
  size_t docs = 300;
  size_t queries = 50;
};

struct SynthCorpus {
  std::vector<TripletRecord> triplets;
  std::vector<ScoredPair> pairs;
  std::vector<RetrievalDoc> docs;
  std::vector<RetrievalDoc> queries;
  std::vector<std::pair<uint64_t, uint64_t>> gold;  // query id -> doc id
};

// Template sentences over synonym groups: entailment = re-realized surface
// forms of the same concepts, contradiction = antonym/negation flip, pair
// score = concept overlap scaled to [0,5], retrieval queries = paraphrases of
// their gold doc sharing at least one content word.
SynthCorpus synth_corpus(const SynthConfig& config, uint64_t seed);

// Substitution table induced by the generator lexicon (word -> other surface
// forms of its concept).
SynonymTable synth_synonyms();

}  // namespace hpd::data
