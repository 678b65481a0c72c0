#include "hpd/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hpd/errors.hpp"
#include "hpd/rng.hpp"

namespace hpd::data {

namespace {

using nlohmann::json;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string all = buf.str();

  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= all.size()) {
    size_t nl = all.find('\n', start);
    if (nl == std::string::npos) {
      if (start < all.size()) lines.push_back(all.substr(start));
      break;
    }
    std::string line = all.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  return lines;
}

std::string location(const std::string& path, size_t line_no) {
  return path + ":" + std::to_string(line_no);
}

std::string get_string_field(const json& j, const char* key,
                             const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ParseError(where + ": missing or non-string field \"" +
                     std::string(key) + "\"");
  }
  std::string v = j.at(key).get<std::string>();
  if (v.empty()) {
    throw InputError(where + ": empty field \"" + std::string(key) + "\"");
  }
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  for (;;) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

double parse_score(const std::string& text, const std::string& where) {
  const char* s = text.c_str();
  char* end = nullptr;
  double v = std::strtod(s, &end);
  if (end == s) throw ParseError(where + ": non-numeric score \"" + text + "\"");
  while (*end == ' ') ++end;
  if (*end != '\0') {
    throw ParseError(where + ": trailing garbage in score \"" + text + "\"");
  }
  if (!std::isfinite(v) || v < 0.0 || v > 5.0) {
    throw InputError(where + ": score " + text + " outside [0, 5]");
  }
  return v;
}

uint64_t parse_id(const std::string& text, const std::string& where) {
  const char* s = text.c_str();
  char* end = nullptr;
  unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0' || text[0] == '-') {
    throw ParseError(where + ": bad id \"" + text + "\"");
  }
  return static_cast<uint64_t>(v);
}

// atomic text write without dragging in the io module's heavier includes
void write_lines_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << content;
    if (!out) throw IoError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot rename " + tmp + " to " + path);
  }
}

std::string format_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<TripletRecord> load_triplets(const std::string& path) {
  std::vector<TripletRecord> records;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    const std::string where = location(path, i + 1);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError(where + ": invalid JSON object");
    }
    TripletRecord rec;
    rec.anchor = get_string_field(j, "anchor", where);
    rec.entailment = get_string_field(j, "entailment", where);
    rec.contradiction = get_string_field(j, "contradiction", where);
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw InputError("no triplet records in " + path);
  return records;
}

void save_triplets(const std::string& path,
                   const std::vector<TripletRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j{{"anchor", r.anchor},
           {"entailment", r.entailment},
           {"contradiction", r.contradiction}};
    out += j.dump();
    out += '\n';
  }
  write_lines_atomic(path, out);
}

std::vector<ScoredPair> load_scored_pairs(const std::string& path) {
  std::vector<ScoredPair> pairs;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = location(path, i + 1);
    auto fields = split_tabs(lines[i]);
    if (fields.size() != 3) {
      throw ParseError(where + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw InputError(where + ": empty sentence");
    }
    pairs.push_back({fields[0], fields[1], parse_score(fields[2], where)});
  }
  if (pairs.empty()) throw InputError("no scored pairs in " + path);
  return pairs;
}

void save_scored_pairs(const std::string& path,
                       const std::vector<ScoredPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += p.sent1;
    out += '\t';
    out += p.sent2;
    out += '\t';
    out += format_score(p.score);
    out += '\n';
  }
  write_lines_atomic(path, out);
}

std::vector<RetrievalDoc> load_retrieval_docs(const std::string& path) {
  std::vector<RetrievalDoc> docs;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = location(path, i + 1);
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError(where + ": invalid JSON object");
    }
    if (!j.contains("id") || !j.at("id").is_number_integer() ||
        j.at("id").get<int64_t>() < 0) {
      throw ParseError(where + ": missing or bad \"id\"");
    }
    RetrievalDoc doc;
    doc.id = j.at("id").get<uint64_t>();
    doc.text = get_string_field(j, "text", where);
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw InputError("no documents in " + path);
  return docs;
}

void save_retrieval_docs(const std::string& path,
                         const std::vector<RetrievalDoc>& docs) {
  std::string out;
  for (const auto& d : docs) {
    json j{{"id", d.id}, {"text", d.text}};
    out += j.dump();
    out += '\n';
  }
  write_lines_atomic(path, out);
}

std::vector<std::pair<uint64_t, uint64_t>> load_gold_pairs(
    const std::string& path) {
  std::vector<std::pair<uint64_t, uint64_t>> gold;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = location(path, i + 1);
    auto fields = split_tabs(lines[i]);
    if (fields.size() != 2) {
      throw ParseError(where + ": expected query_id<TAB>gold_id");
    }
    gold.emplace_back(parse_id(fields[0], where), parse_id(fields[1], where));
  }
  if (gold.empty()) throw InputError("no gold pairs in " + path);
  return gold;
}

void save_gold_pairs(const std::string& path,
                     const std::vector<std::pair<uint64_t, uint64_t>>& gold) {
  std::string out;
  for (const auto& [q, g] : gold) {
    out += std::to_string(q);
    out += '\t';
    out += std::to_string(g);
    out += '\n';
  }
  write_lines_atomic(path, out);
}

SynonymTable load_synonyms(const std::string& path) {
  SynonymTable table;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = location(path, i + 1);
    auto fields = split_tabs(lines[i]);
    if (fields.size() != 2 || fields[0].empty()) {
      throw ParseError(where + ": expected word<TAB>alternatives");
    }
    std::string key = fields[0];
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    std::vector<std::string> alts;
    size_t start = 0;
    const std::string& list = fields[1];
    while (start <= list.size()) {
      size_t comma = list.find(',', start);
      std::string alt = comma == std::string::npos
                            ? list.substr(start)
                            : list.substr(start, comma - start);
      if (!alt.empty()) alts.push_back(std::move(alt));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (alts.empty()) throw InputError(where + ": empty replacement list");
    table[key] = std::move(alts);
  }
  return table;
}

// ==================================================================
// augmentation
// ==================================================================

namespace {

std::string substitute_words(const std::string& text, const SynonymTable& table,
                             double rate, Rng& rng) {
  std::istringstream in(text);
  std::string word, out;
  bool first = true;
  while (in >> word) {
    std::string key = word;
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    std::string emit = word;
    auto it = table.find(key);
    if (it != table.end() && rng.uniform() < rate) {
      emit = it->second[rng.below(it->second.size())];
    }
    if (!first) out += ' ';
    out += emit;
    first = false;
  }
  return out;
}

}  // namespace

std::vector<TripletRecord> augment(const TripletRecord& record,
                                   const SynonymTable& table, double rate,
                                   uint64_t seed, size_t variants) {
  if (rate < 0.0 || rate > 1.0) {
    throw InputError("augment rate must be in [0, 1]");
  }
  std::vector<TripletRecord> out{record};
  if (table.empty()) return out;

  Rng rng(seed);
  auto same = [](const TripletRecord& a, const TripletRecord& b) {
    return a.anchor == b.anchor && a.entailment == b.entailment &&
           a.contradiction == b.contradiction;
  };
  for (size_t v = 0; v < variants; ++v) {
    TripletRecord var;
    var.anchor = substitute_words(record.anchor, table, rate, rng);
    var.entailment = substitute_words(record.entailment, table, rate, rng);
    var.contradiction =
        substitute_words(record.contradiction, table, rate, rng);
    bool duplicate = false;
    for (const auto& prev : out) {
      if (same(prev, var)) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) out.push_back(std::move(var));
  }
  return out;
}

// ==================================================================
// synthetic corpus
// ==================================================================

namespace {

struct Concept {
  std::vector<std::string> surfaces;
  int antonym = -1;  // index within the same slot, -1 when none
};

struct Lexicon {
  // slots: subject, adverb, verb, object, place
  std::vector<std::vector<Concept>> slots;
};

const Lexicon& lexicon() {
  static const Lexicon lex = [] {
    Lexicon l;
    l.slots.push_back({
        {{"dog", "puppy", "hound"}},
        {{"cat", "kitten", "feline"}},
        {{"man", "gentleman", "fellow"}},
        {{"woman", "lady"}},
        {{"child", "kid", "youngster"}},
        {{"bird", "sparrow", "robin"}},
        {{"farmer", "rancher"}},
        {{"singer", "vocalist"}},
    });
    l.slots.push_back({
        {{"quickly", "swiftly", "rapidly"}, 1},
        {{"slowly", "sluggishly"}, 0},
        {{"happily", "cheerfully", "gladly"}, 3},
        {{"sadly", "gloomily"}, 2},
        {{"quietly", "silently"}, 5},
        {{"loudly", "noisily"}, 4},
    });
    l.slots.push_back({
        {{"chases", "pursues", "follows"}, 1},
        {{"avoids", "evades", "dodges"}, 0},
        {{"likes", "enjoys", "loves"}, 3},
        {{"hates", "dislikes", "detests"}, 2},
        {{"opens", "unlocks"}, 5},
        {{"closes", "shuts", "seals"}, 4},
        {{"buys", "purchases", "acquires"}, 7},
        {{"sells", "trades"}, 6},
    });
    l.slots.push_back({
        {{"ball", "toy"}},
        {{"book", "novel"}},
        {{"meal", "dinner", "supper"}},
        {{"door", "gate"}},
        {{"car", "vehicle", "automobile"}},
        {{"song", "tune", "melody"}},
        {{"house", "home"}},
        {{"coat", "jacket"}},
    });
    l.slots.push_back({
        {{"park", "playground"}},
        {{"city", "town"}},
        {{"beach", "shore", "seaside"}},
        {{"forest", "woods"}},
        {{"market", "bazaar"}},
        {{"kitchen", "pantry"}},
    });
    return l;
  }();
  return lex;
}

constexpr size_t kSlots = 5;

struct Tuple {
  size_t concept_of[kSlots];
  bool negated = false;
};

Tuple random_tuple(Rng& rng) {
  Tuple t;
  const auto& lex = lexicon();
  for (size_t s = 0; s < kSlots; ++s)
    t.concept_of[s] = rng.below(lex.slots[s].size());
  return t;
}

struct Realization {
  std::string text;
  std::string surface[kSlots];
};

Realization realize(const Tuple& t, Rng& rng, int copy_slot = -1,
                    const std::string* copy_surface = nullptr) {
  const auto& lex = lexicon();
  Realization r;
  for (size_t s = 0; s < kSlots; ++s) {
    const auto& forms = lex.slots[s][t.concept_of[s]].surfaces;
    r.surface[s] = forms[rng.below(forms.size())];
  }
  if (copy_slot >= 0 && copy_surface) r.surface[copy_slot] = *copy_surface;
  // the S A V the O in the P, with "never" marking negation
  r.text = "the " + r.surface[0] + " " + (t.negated ? "never " : "") +
           r.surface[1] + " " + r.surface[2] + " the " + r.surface[3] +
           " in the " + r.surface[4];
  return r;
}

}  // namespace

SynthCorpus synth_corpus(const SynthConfig& config, uint64_t seed) {
  if (config.triplets < 1 || config.pairs < 1 || config.docs < 1 ||
      config.queries < 1) {
    throw InputError("synth_corpus sizes must be >= 1");
  }
  const auto& lex = lexicon();
  SynthCorpus out;
  Rng rng(seed);

  out.triplets.reserve(config.triplets);
  for (size_t i = 0; i < config.triplets; ++i) {
    Tuple t = random_tuple(rng);
    TripletRecord rec;
    rec.anchor = realize(t, rng).text;
    for (int attempt = 0; attempt < 8; ++attempt) {
      rec.entailment = realize(t, rng).text;
      if (rec.entailment != rec.anchor) break;
    }
    Tuple flip = t;
    double pick = rng.uniform();
    const int verb_ant = lex.slots[2][t.concept_of[2]].antonym;
    const int adv_ant = lex.slots[1][t.concept_of[1]].antonym;
    if (pick < 0.6 && verb_ant >= 0) {
      flip.concept_of[2] = static_cast<size_t>(verb_ant);
    } else if (pick < 0.8 && adv_ant >= 0) {
      flip.concept_of[1] = static_cast<size_t>(adv_ant);
    } else {
      flip.negated = true;
    }
    rec.contradiction = realize(flip, rng).text;
    out.triplets.push_back(std::move(rec));
  }

  out.pairs.reserve(config.pairs);
  for (size_t i = 0; i < config.pairs; ++i) {
    Tuple t1 = random_tuple(rng);
    Tuple t2 = t1;
    size_t replaced = rng.below(kSlots + 1);
    // choose `replaced` distinct slots and move them to fresh concepts
    size_t order[kSlots] = {0, 1, 2, 3, 4};
    for (size_t s = kSlots; s > 1; --s) {
      size_t j = rng.below(s);
      std::swap(order[s - 1], order[j]);
    }
    for (size_t r = 0; r < replaced; ++r) {
      size_t slot = order[r];
      size_t n = lex.slots[slot].size();
      size_t fresh = rng.below(n - 1);
      if (fresh >= t1.concept_of[slot]) ++fresh;  // skip the current concept
      t2.concept_of[slot] = fresh;
    }
    bool negflip = rng.uniform() < 0.25;
    if (negflip) t2.negated = true;
    double score = static_cast<double>(kSlots - replaced) *
                   (5.0 / static_cast<double>(kSlots));
    if (negflip) score *= 0.2;
    out.pairs.push_back({realize(t1, rng).text, realize(t2, rng).text, score});
  }

  std::vector<Tuple> doc_tuples(config.docs);
  std::vector<Realization> doc_realizations(config.docs);
  std::set<std::string> seen;
  out.docs.reserve(config.docs);
  for (size_t i = 0; i < config.docs; ++i) {
    for (;;) {
      doc_tuples[i] = random_tuple(rng);
      doc_realizations[i] = realize(doc_tuples[i], rng);
      if (seen.insert(doc_realizations[i].text).second) break;
    }
    out.docs.push_back({static_cast<uint64_t>(i), doc_realizations[i].text});
  }

  out.queries.reserve(config.queries);
  for (size_t q = 0; q < config.queries; ++q) {
    size_t g = rng.below(config.docs);
    int keep = static_cast<int>(rng.below(kSlots));
    Realization r = realize(doc_tuples[g], rng, keep,
                            &doc_realizations[g].surface[keep]);
    out.queries.push_back({static_cast<uint64_t>(q), r.text});
    out.gold.emplace_back(static_cast<uint64_t>(q), static_cast<uint64_t>(g));
  }
  return out;
}

SynonymTable synth_synonyms() {
  SynonymTable table;
  for (const auto& slot : lexicon().slots) {
    for (const auto& group : slot) {
      for (const auto& word : group.surfaces) {
        std::vector<std::string> others;
        for (const auto& alt : group.surfaces)
          if (alt != word) others.push_back(alt);
        if (!others.empty()) table[word] = std::move(others);
      }
    }
  }
  return table;
}

}  // namespace hpd::data
