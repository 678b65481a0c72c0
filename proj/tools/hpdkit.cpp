// command-line front end: train, reduce, distill, evaluate, index, bench

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hpd/data.hpp"
#include "hpd/distill.hpp"
#include "hpd/encoder.hpp"
#include "hpd/errors.hpp"
#include "hpd/evalsts.hpp"
#include "hpd/io.hpp"
#include "hpd/linalg.hpp"
#include "hpd/objectives.hpp"
#include "hpd/reduce.hpp"
#include "hpd/retrieval.hpp"
#include "hpd/rng.hpp"

namespace fs = std::filesystem;
using namespace hpd;

namespace {

// ==================================================================
// shared helpers
// ==================================================================

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Expands "--config FILE" into "--key value" tokens injected right after the
// subcommand name, so flags given explicitly on the command line always win.
std::vector<std::string> expand_config_args(const CLI::App& app,
                                            std::vector<std::string> args) {
  std::string config_path;
  for (auto it = args.begin(); it != args.end();) {
    if (*it == "--config") {
      if (it + 1 == args.end()) throw InputError("--config needs a file path");
      config_path = *(it + 1);
      it = args.erase(it, it + 2);
    } else if (it->rfind("--config=", 0) == 0) {
      config_path = it->substr(9);
      it = args.erase(it);
    } else {
      ++it;
    }
  }
  if (config_path.empty()) return args;

  auto sub_pos = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return !a.empty() && a[0] != '-';
  });
  if (sub_pos == args.end()) throw InputError("--config requires a subcommand");
  const CLI::App* sub = app.get_subcommand_no_throw(*sub_pos);
  if (sub == nullptr) throw InputError("unknown subcommand: " + *sub_pos);

  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };

  std::vector<std::string> inject;
  for (const auto& [key, value] : io::load_config(config_path)) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr)
      throw InputError(config_path + ": unknown setting \"" + key + "\"");
    if (given(flag)) continue;
    if (opt->get_expected_min() == 0) {
      std::string v = value;
      std::transform(v.begin(), v.end(), v.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (v == "1" || v == "true" || v == "yes" || v == "on")
        inject.push_back(flag);
      else if (v != "0" && v != "false" && v != "no" && v != "off")
        throw InputError(config_path + ": \"" + key + "\" expects a boolean");
    } else {
      inject.push_back(flag);
      inject.push_back(value);
    }
  }
  args.insert(sub_pos + 1, inject.begin(), inject.end());
  return args;
}

void add_config_flag(CLI::App* cmd) {
  static std::string ignored;  // consumed before CLI11 ever parses
  cmd->add_option("--config", ignored, "flat key = value settings file");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
}

struct ModelFlags {
  std::string checkpoint;
  std::string vocab;
  std::string transform;  // optional

  void add_options(CLI::App* cmd, bool required = true) {
    auto* m = cmd->add_option("--model", checkpoint, "encoder checkpoint (HPDW)");
    auto* v = cmd->add_option("--vocab", vocab, "vocabulary TSV");
    if (required) {
      m->required();
      v->required();
    }
    cmd->add_option("--transform", transform,
                    "optional transform applied to encoder output (HPDT)");
  }
};

evalsts::EmbedFn load_embed_fn(const ModelFlags& mf) {
  auto params = io::load_encoder(mf.checkpoint);
  auto vocab = io::load_vocab(mf.vocab);
  if (mf.transform.empty()) {
    return distill::make_embed_fn(std::move(params), std::move(vocab));
  }
  auto t = io::load_transform(mf.transform);
  auto head = io::to_projection(t);
  return distill::make_embed_fn(std::move(params), std::move(vocab), &head);
}

std::vector<std::string> distinct_sentences(
    const std::vector<data::TripletRecord>& triplets) {
  std::vector<std::string> pool;
  std::set<std::string> seen;
  for (const auto& t : triplets) {
    for (const auto* s : {&t.anchor, &t.entailment, &t.contradiction}) {
      if (seen.insert(*s).second) pool.push_back(*s);
    }
  }
  return pool;
}

linalg::Matrix embed_all(const evalsts::EmbedFn& embed,
                         const std::vector<std::string>& sentences) {
  if (sentences.empty()) throw InputError("no sentences to embed");
  auto first = embed(sentences[0]);
  linalg::Matrix out(sentences.size(), first.size());
  std::copy(first.begin(), first.end(), &out.data[0]);
  for (size_t i = 1; i < sentences.size(); ++i) {
    auto e = embed(sentences[i]);
    if (e.size() != out.cols) {
      throw ShapeError("inconsistent embedding width");
    }
    std::copy(e.begin(), e.end(), &out.data[i * out.cols]);
  }
  return out;
}

void write_loss_csv(const std::string& path,
                    const std::vector<double>& losses) {
  std::vector<std::string> rows;
  rows.reserve(losses.size());
  char buf[64];
  for (size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g", i + 1, losses[i]);
    rows.emplace_back(buf);
  }
  io::write_csv(path, "step,loss", rows);
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// sentences capped to a deterministic random sample
std::vector<std::string> sample_sentences(std::vector<std::string> pool,
                                          size_t cap, uint64_t seed) {
  if (pool.size() <= cap) return pool;
  Rng rng(seed);
  for (size_t i = pool.size(); i > 1; --i) {
    std::swap(pool[i - 1], pool[rng.below(i)]);
  }
  pool.resize(cap);
  return pool;
}

// ==================================================================
// train-teacher
// ==================================================================

struct TrainTeacherOpts {
  std::string triplets;
  std::string val_pairs;
  std::string out_dir = ".";
  size_t layers = 2, dim = 64, heads = 4, ffn_dim = 128, max_len = 32;
  size_t min_count = 2;
  distill::TrainConfig train;
  bool verbose = false;
};

void run_train_teacher(const TrainTeacherOpts& o) {
  ensure_dir(o.out_dir);
  auto triplets = data::load_triplets(o.triplets);
  std::vector<data::ScoredPair> val;
  if (!o.val_pairs.empty()) val = data::load_scored_pairs(o.val_pairs);

  std::vector<std::string> sentences;
  for (const auto& t : triplets) {
    sentences.push_back(t.anchor);
    sentences.push_back(t.entailment);
    sentences.push_back(t.contradiction);
  }
  auto vocab = encoder::build_vocab(sentences, o.min_count);

  encoder::EncoderConfig config;
  config.vocab_size = vocab.size();
  config.layers = o.layers;
  config.model_dim = o.dim;
  config.heads = o.heads;
  config.ffn_dim = o.ffn_dim;
  config.max_len = o.max_len;
  config.seed = o.train.seed;
  config.validate();

  if (o.verbose) {
    std::printf("training teacher: %zu triplets, vocab %zu, %zu params\n",
                triplets.size(), vocab.size(),
                encoder::EncoderParams::zeros(config).parameter_count());
  }
  auto result = distill::train_teacher(config, triplets, vocab, o.train, val);

  io::save_encoder(join_path(o.out_dir, "teacher.hpdw"), result.params);
  io::save_vocab(join_path(o.out_dir, "vocab.tsv"), vocab);
  write_loss_csv(join_path(o.out_dir, "teacher_loss.csv"),
                 result.loss_history);
  std::map<std::string, std::string> snapshot{
      {"layers", std::to_string(o.layers)},
      {"model_dim", std::to_string(o.dim)},
      {"heads", std::to_string(o.heads)},
      {"ffn_dim", std::to_string(o.ffn_dim)},
      {"max_len", std::to_string(o.max_len)},
      {"vocab_size", std::to_string(vocab.size())},
      {"epochs", std::to_string(o.train.epochs)},
      {"batch_size", std::to_string(o.train.batch_size)},
      {"learning_rate", fmt(o.train.learning_rate)},
      {"weight_decay", fmt(o.train.weight_decay)},
      {"temperature", fmt(o.train.temperature)},
      {"seed", std::to_string(o.train.seed)},
  };
  io::save_config(join_path(o.out_dir, "teacher_config.txt"), snapshot);

  if (!result.loss_history.empty()) {
    std::printf("final loss: %s\n", fmt(result.loss_history.back()).c_str());
  }
  if (!val.empty()) {
    std::printf("best validation rho: %s (step %zu)\n",
                fmt(result.best_val, "%.4f").c_str(), result.best_step);
  }
  std::printf("checkpoint: %s\n",
              join_path(o.out_dir, "teacher.hpdw").c_str());
}

// ==================================================================
// fit-pca
// ==================================================================

struct FitPcaOpts {
  std::string embeddings;
  ModelFlags model;
  std::string triplets;
  std::string out_dir = ".";
  std::string out;
  size_t dim = 0;
  size_t sample_size = 10000;
  uint64_t seed = 42;
  bool verbose = false;
};

void run_fit_pca(const FitPcaOpts& o) {
  ensure_dir(o.out_dir);
  linalg::Matrix samples(1, 1);
  if (!o.embeddings.empty()) {
    samples = io::load_embeddings(o.embeddings);
  } else {
    if (o.model.checkpoint.empty() || o.triplets.empty()) {
      throw InputError(
          "fit-pca needs --embeddings, or --model/--vocab/--triplets");
    }
    auto embed = load_embed_fn(o.model);
    auto pool = distinct_sentences(data::load_triplets(o.triplets));
    pool = sample_sentences(std::move(pool), o.sample_size, o.seed);
    samples = embed_all(embed, pool);
  }

  reduce::PcaFitInfo info;
  auto pca = reduce::fit_pca(samples, o.dim, &info);
  for (const auto& w : info.warnings) std::printf("warning: %s\n", w.c_str());

  const std::string out_path =
      o.out.empty() ? join_path(o.out_dir, "pca.hpdt") : o.out;
  io::save_transform(out_path, io::from_pca(pca));

  double total_var = 0.0, kept = 0.0;
  for (double v : pca.explained_variances) kept += v;
  total_var = kept;
  // trailing variance from the residual identity: total = trace of covariance
  {
    auto [mean, centered] = linalg::center_rows(samples);
    double trace = 0.0;
    for (size_t r = 0; r < centered.rows; ++r)
      for (size_t c = 0; c < centered.cols; ++c)
        trace += centered.at(r, c) * centered.at(r, c);
    total_var = trace / static_cast<double>(samples.rows);
  }
  std::printf("fitted %zu -> %zu on %zu samples\n", samples.cols, o.dim,
              samples.rows);
  std::printf("explained variance:");
  for (double v : pca.explained_variances) std::printf(" %s", fmt(v, "%.4g").c_str());
  std::printf("\ncaptured %.2f%% of total variance\n",
              total_var > 0.0 ? 100.0 * kept / total_var : 100.0);
  std::printf("transform: %s\n", out_path.c_str());
}

// ==================================================================
// distill
// ==================================================================

struct DistillOpts {
  std::string teacher;
  std::string vocab;
  std::string pca;
  std::string triplets;
  std::string val_pairs;
  std::string synonyms;
  std::string out_dir = ".";
  size_t layers = 1, dim = 32, heads = 4, ffn_dim = 64, max_len = 32;
  double augment_rate = 0.3;
  bool no_warm_start = false;
  bool whiten_after = false;
  distill::TrainConfig train;
  bool verbose = false;
};

void run_distill(const DistillOpts& o) {
  ensure_dir(o.out_dir);
  auto teacher_params = io::load_encoder(o.teacher);
  auto vocab = io::load_vocab(o.vocab);
  auto transform = io::load_transform(o.pca);
  if (transform.kind != io::TransformKind::kPca) {
    throw InputError(o.pca + " is not a PCA transform");
  }
  reduce::PcaTransform pca{transform.mean, transform.weights, {}};

  auto triplets = data::load_triplets(o.triplets);
  if (!o.synonyms.empty()) {
    auto table = data::load_synonyms(o.synonyms);
    std::vector<data::TripletRecord> expanded;
    for (size_t i = 0; i < triplets.size(); ++i) {
      auto variants =
          data::augment(triplets[i], table, o.augment_rate, o.train.seed + i);
      expanded.insert(expanded.end(), variants.begin(), variants.end());
    }
    triplets = std::move(expanded);
  }
  auto pool = distinct_sentences(triplets);

  std::vector<data::ScoredPair> val;
  if (!o.val_pairs.empty()) val = data::load_scored_pairs(o.val_pairs);

  encoder::EncoderConfig student_cfg;
  student_cfg.vocab_size = vocab.size();
  student_cfg.layers = o.layers;
  student_cfg.model_dim = o.dim;
  student_cfg.heads = o.heads;
  student_cfg.ffn_dim = o.ffn_dim;
  student_cfg.max_len = o.max_len;
  student_cfg.validate();

  const size_t d = pca.weights.cols;
  auto state = distill::init_distill_state(student_cfg, d, o.train.seed,
                                           o.no_warm_start ? nullptr : &pca);

  const size_t teacher_max_len = teacher_params.config.max_len;
  auto teacher_fn = [&](const std::string& s) {
    return encoder::encode(teacher_params,
                           encoder::tokenize(s, vocab, teacher_max_len));
  };
  if (o.verbose) {
    std::printf("distilling into %zu-wide student, target %zu dims, %zu sentences\n",
                o.dim, d, pool.size());
  }
  state = distill::distill(teacher_fn, pca, std::move(state), pool, vocab,
                           o.train, val);

  io::save_encoder(join_path(o.out_dir, "student.hpdw"), state.student);
  io::save_transform(join_path(o.out_dir, "projection.hpdt"),
                     io::from_projection(state.head));
  write_loss_csv(join_path(o.out_dir, "student_loss.csv"),
                 state.loss_history);
  std::map<std::string, std::string> snapshot{
      {"layers", std::to_string(o.layers)},
      {"model_dim", std::to_string(o.dim)},
      {"heads", std::to_string(o.heads)},
      {"ffn_dim", std::to_string(o.ffn_dim)},
      {"max_len", std::to_string(o.max_len)},
      {"target_dim", std::to_string(d)},
      {"epochs", std::to_string(o.train.epochs)},
      {"batch_size", std::to_string(o.train.batch_size)},
      {"learning_rate", fmt(o.train.learning_rate)},
      {"weight_decay", fmt(o.train.weight_decay)},
      {"warm_start", o.no_warm_start ? "0" : "1"},
      {"seed", std::to_string(o.train.seed)},
  };
  io::save_config(join_path(o.out_dir, "student_config.txt"), snapshot);

  if (o.whiten_after) {
    auto embed = distill::make_embed_fn(state.student, vocab, &state.head);
    auto reduced = embed_all(embed, pool);
    auto whiten = reduce::fit_whitening(reduced, d);
    auto composed = reduce::compose_whitening(state.head, whiten);
    io::save_transform(join_path(o.out_dir, "projection_whitened.hpdt"),
                       io::from_projection(composed));
    std::printf("whitened transform: %s\n",
                join_path(o.out_dir, "projection_whitened.hpdt").c_str());
  }

  if (!state.loss_history.empty()) {
    std::printf("final loss: %s\n", fmt(state.loss_history.back()).c_str());
  }
  if (!state.val_history.empty()) {
    std::printf("validation rho: %s\n",
                fmt(state.val_history.back().second, "%.4f").c_str());
  }
  std::printf("student: %s\n", join_path(o.out_dir, "student.hpdw").c_str());
}

// ==================================================================
// eval-sts
// ==================================================================

struct EvalStsOpts {
  ModelFlags model;
  std::vector<std::string> pairs;
  std::string out_dir = ".";
  std::string out;
};

void run_eval_sts(const EvalStsOpts& o) {
  ensure_dir(o.out_dir);
  auto embed = load_embed_fn(o.model);
  std::map<std::string, std::vector<data::ScoredPair>> datasets;
  for (const auto& spec_entry : o.pairs) {
    std::string name, path;
    const size_t eq = spec_entry.find('=');
    if (eq != std::string::npos) {
      name = spec_entry.substr(0, eq);
      path = spec_entry.substr(eq + 1);
    } else {
      path = spec_entry;
      name = fs::path(path).stem().string();
    }
    if (datasets.count(name)) {
      throw InputError("duplicate dataset name " + name);
    }
    datasets[name] = data::load_scored_pairs(path);
  }

  auto report = evalsts::eval_suite(embed, datasets);
  std::fputs(evalsts::report_table(report).c_str(), stdout);
  const std::string out_path =
      o.out.empty() ? join_path(o.out_dir, "sts_report.csv") : o.out;
  io::write_text_atomic(out_path, evalsts::report_csv(report));
  std::printf("report: %s\n", out_path.c_str());
}

// ==================================================================
// build-index
// ==================================================================

struct BuildIndexOpts {
  std::string embeddings;
  ModelFlags model;
  std::string corpus;
  std::string out_dir = ".";
  std::string out;
  size_t nlist = 32;
  size_t kmeans_iters = 25;
  uint64_t seed = 42;
};

void run_build_index(const BuildIndexOpts& o) {
  ensure_dir(o.out_dir);
  linalg::Matrix vectors(1, 1);
  std::vector<uint64_t> ids;
  if (!o.embeddings.empty()) {
    vectors = io::load_embeddings(o.embeddings);
    ids.resize(vectors.rows);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  } else {
    if (o.model.checkpoint.empty() || o.corpus.empty()) {
      throw InputError(
          "build-index needs --embeddings, or --model/--vocab/--corpus");
    }
    auto docs = data::load_retrieval_docs(o.corpus);
    auto embed = load_embed_fn(o.model);
    std::vector<std::string> texts;
    texts.reserve(docs.size());
    for (const auto& d : docs) {
      ids.push_back(d.id);
      texts.push_back(d.text);
    }
    vectors = embed_all(embed, texts);
  }

  auto index =
      retrieval::build_ivf(vectors, ids, o.nlist, o.seed, o.kmeans_iters);
  const std::string out_path =
      o.out.empty() ? join_path(o.out_dir, "index.hpdi") : o.out;
  io::save_index(out_path, index);
  auto mem = retrieval::memory_usage(index);
  std::printf("indexed %zu vectors (dim %zu) into %zu cells, %zu bytes\n",
              index.total, index.dim, index.nlist, mem.total());
  std::printf("index: %s\n", out_path.c_str());
}

// ==================================================================
// search
// ==================================================================

struct SearchOpts {
  std::string index;
  ModelFlags model;
  std::string query;
  size_t k = 10;
  size_t nprobe = 5;
};

void run_search(const SearchOpts& o) {
  auto index = io::load_index(o.index);
  auto embed = load_embed_fn(o.model);
  auto q = embed(o.query);
  auto hits = retrieval::search(index, q, o.k, o.nprobe);
  for (const auto& h : hits) {
    std::printf("%llu\t%.6f\n", static_cast<unsigned long long>(h.id),
                h.score);
  }
}

// ==================================================================
// bench
// ==================================================================

struct BenchOpts {
  std::string index;
  std::string baseline_index;
  std::string query_embeddings;
  ModelFlags model;
  std::string queries;
  std::string gold;
  std::string out_dir = ".";
  std::string out;
  size_t k = 10;
  size_t nprobe = 5;
  size_t reps = 5;
};

void run_bench(const BenchOpts& o) {
  ensure_dir(o.out_dir);
  auto index = io::load_index(o.index);

  linalg::Matrix queries(1, 1);
  std::vector<uint64_t> query_ids;
  if (!o.query_embeddings.empty()) {
    queries = io::load_embeddings(o.query_embeddings);
    query_ids.resize(queries.rows);
    for (size_t i = 0; i < query_ids.size(); ++i) query_ids[i] = i;
  } else {
    if (o.model.checkpoint.empty() || o.queries.empty()) {
      throw InputError(
          "bench needs --query-embeddings, or --model/--vocab/--queries");
    }
    auto docs = data::load_retrieval_docs(o.queries);
    auto embed = load_embed_fn(o.model);
    std::vector<std::string> texts;
    for (const auto& d : docs) {
      query_ids.push_back(d.id);
      texts.push_back(d.text);
    }
    queries = embed_all(embed, texts);
  }

  std::map<uint64_t, uint64_t> gold_of;
  for (const auto& [q, g] : data::load_gold_pairs(o.gold)) gold_of[q] = g;
  std::vector<uint64_t> gold(queries.rows);
  for (size_t i = 0; i < query_ids.size(); ++i) {
    auto it = gold_of.find(query_ids[i]);
    if (it == gold_of.end()) {
      throw InputError("query " + std::to_string(query_ids[i]) +
                       " has no gold id");
    }
    gold[i] = it->second;
  }

  auto report = retrieval::bench(index, queries, gold, o.k, o.nprobe, o.reps);
  std::printf("mrr@10:          %.4f\n", report.mrr_at_10);
  std::printf("time per 1k:     %.3f ms\n", report.time_ms_per_1k);
  std::printf("memory:          %zu bytes\n", report.memory_bytes);

  if (!o.baseline_index.empty()) {
    auto baseline = io::load_index(o.baseline_index);
    auto mem_main = retrieval::memory_usage(index);
    auto mem_base = retrieval::memory_usage(baseline);
    const double total_ratio = static_cast<double>(mem_base.total()) /
                               static_cast<double>(mem_main.total());
    const double payload_ratio =
        static_cast<double>(mem_base.payload_bytes) /
        static_cast<double>(mem_main.payload_bytes);
    std::printf("baseline memory: %zu bytes\n", mem_base.total());
    std::printf("memory ratio:    %.4f\n", total_ratio);
    std::printf("payload ratio:   %.4f\n", payload_ratio);
  }

  const std::string out_path =
      o.out.empty() ? join_path(o.out_dir, "bench.csv") : o.out;
  io::write_text_atomic(out_path, retrieval::bench_csv(report));
  std::printf("report: %s\n", out_path.c_str());
}

// ==================================================================
// pipeline
// ==================================================================

struct PipelineOpts {
  std::string out_dir = ".";
  size_t synth_triplets = 500;
  size_t synth_pairs = 300;
  size_t synth_docs = 300;
  size_t synth_queries = 50;
  size_t teacher_layers = 2, teacher_dim = 64, teacher_ffn = 128;
  size_t student_layers = 1, student_dim = 32, student_ffn = 64;
  size_t heads = 4, max_len = 16, dim = 16;
  size_t teacher_epochs = 3, distill_epochs = 10, batch_size = 32;
  double teacher_lr = 1e-3, distill_lr = 1e-3;
  uint64_t seed = 42;
  bool verbose = false;
};

void run_pipeline(const PipelineOpts& o) {
  ensure_dir(o.out_dir);

  // 1. synthetic corpus, plus a dev/val split of the scored pairs
  data::SynthConfig synth_cfg{o.synth_triplets, o.synth_pairs, o.synth_docs,
                              o.synth_queries};
  auto corpus = data::synth_corpus(synth_cfg, o.seed);
  std::vector<data::ScoredPair> dev, val;
  for (size_t i = 0; i < corpus.pairs.size(); ++i) {
    (i % 2 == 0 ? dev : val).push_back(corpus.pairs[i]);
  }
  data::save_triplets(join_path(o.out_dir, "synth_triplets.jsonl"),
                      corpus.triplets);
  data::save_scored_pairs(join_path(o.out_dir, "synth_pairs_dev.tsv"), dev);
  data::save_scored_pairs(join_path(o.out_dir, "synth_pairs_val.tsv"), val);
  data::save_retrieval_docs(join_path(o.out_dir, "synth_corpus.jsonl"),
                            corpus.docs);
  data::save_retrieval_docs(join_path(o.out_dir, "synth_queries.jsonl"),
                            corpus.queries);
  data::save_gold_pairs(join_path(o.out_dir, "synth_gold.tsv"), corpus.gold);
  std::printf("[1/5] synthetic corpus: %zu triplets, %zu pairs, %zu docs\n",
              corpus.triplets.size(), corpus.pairs.size(), corpus.docs.size());

  // 2. teacher
  std::vector<std::string> sentences;
  for (const auto& t : corpus.triplets) {
    sentences.push_back(t.anchor);
    sentences.push_back(t.entailment);
    sentences.push_back(t.contradiction);
  }
  auto vocab = encoder::build_vocab(sentences, 2);
  io::save_vocab(join_path(o.out_dir, "vocab.tsv"), vocab);

  encoder::EncoderConfig teacher_cfg;
  teacher_cfg.vocab_size = vocab.size();
  teacher_cfg.layers = o.teacher_layers;
  teacher_cfg.model_dim = o.teacher_dim;
  teacher_cfg.heads = o.heads;
  teacher_cfg.ffn_dim = o.teacher_ffn;
  teacher_cfg.max_len = o.max_len;
  teacher_cfg.seed = o.seed;
  teacher_cfg.validate();

  distill::TrainConfig tcfg;
  tcfg.epochs = o.teacher_epochs;
  tcfg.batch_size = o.batch_size;
  tcfg.learning_rate = o.teacher_lr;
  tcfg.seed = o.seed;
  auto teacher = distill::train_teacher(teacher_cfg, corpus.triplets, vocab,
                                        tcfg, dev);
  io::save_encoder(join_path(o.out_dir, "teacher.hpdw"), teacher.params);
  write_loss_csv(join_path(o.out_dir, "teacher_loss.csv"),
                 teacher.loss_history);
  std::printf("[2/5] teacher trained: %zu steps, best dev rho %.4f\n",
              teacher.loss_history.size(), teacher.best_val);

  // 3. PCA over the teacher embeddings of the sentence pool
  auto pool = distinct_sentences(corpus.triplets);
  pool = sample_sentences(std::move(pool), 10000, o.seed);
  auto teacher_embed = distill::make_embed_fn(teacher.params, vocab);
  auto sample = embed_all(teacher_embed, pool);
  reduce::PcaFitInfo info;
  auto pca = reduce::fit_pca(sample, o.dim, &info);
  for (const auto& w : info.warnings) std::printf("warning: %s\n", w.c_str());
  io::save_transform(join_path(o.out_dir, "pca.hpdt"), io::from_pca(pca));
  std::printf("[3/5] PCA fitted: %zu -> %zu over %zu sentences\n",
              o.teacher_dim, o.dim, pool.size());

  // 4. distill
  encoder::EncoderConfig student_cfg;
  student_cfg.vocab_size = vocab.size();
  student_cfg.layers = o.student_layers;
  student_cfg.model_dim = o.student_dim;
  student_cfg.heads = o.heads;
  student_cfg.ffn_dim = o.student_ffn;
  student_cfg.max_len = o.max_len;
  student_cfg.validate();

  distill::TrainConfig dcfg;
  dcfg.epochs = o.distill_epochs;
  dcfg.batch_size = o.batch_size;
  dcfg.learning_rate = o.distill_lr;
  dcfg.seed = o.seed;

  auto state = distill::init_distill_state(student_cfg, o.dim, o.seed, &pca);
  state = distill::distill(teacher_embed, pca, std::move(state), pool, vocab,
                           dcfg, dev);
  io::save_encoder(join_path(o.out_dir, "student.hpdw"), state.student);
  io::save_transform(join_path(o.out_dir, "projection.hpdt"),
                     io::from_projection(state.head));
  write_loss_csv(join_path(o.out_dir, "student_loss.csv"),
                 state.loss_history);
  std::printf("[4/5] distilled: %zu steps, final loss %s\n",
              state.loss_history.size(),
              state.loss_history.empty()
                  ? "n/a"
                  : fmt(state.loss_history.back()).c_str());

  // 5. evaluate on the held-out split: distilled student vs an untrained
  // student of the same shape, teacher for context
  auto distilled_embed =
      distill::make_embed_fn(state.student, vocab, &state.head);
  auto baseline_state = distill::init_distill_state(
      student_cfg, o.dim, o.seed ^ 0xbadc0ffeULL, nullptr);
  auto baseline_embed = distill::make_embed_fn(baseline_state.student, vocab,
                                               &baseline_state.head);

  const double rho_teacher = evalsts::eval_sts(teacher_embed, val);
  const double rho_distilled = evalsts::eval_sts(distilled_embed, val);
  const double rho_baseline = evalsts::eval_sts(baseline_embed, val);
  const double gap = rho_distilled - rho_baseline;

  std::vector<std::string> rows{
      "teacher," + fmt(rho_teacher * 100.0, "%.2f"),
      "distilled," + fmt(rho_distilled * 100.0, "%.2f"),
      "random_baseline," + fmt(rho_baseline * 100.0, "%.2f"),
      "gap," + fmt(gap * 100.0, "%.2f"),
  };
  io::write_csv(join_path(o.out_dir, "pipeline_report.csv"),
                "model,spearman_x100", rows);
  std::printf("[5/5] validation spearman x100\n");
  std::printf("  teacher:          %.2f\n", rho_teacher * 100.0);
  std::printf("  distilled:        %.2f\n", rho_distilled * 100.0);
  std::printf("  random baseline:  %.2f\n", rho_baseline * 100.0);
  std::printf("  gap:              %.2f\n", gap * 100.0);
  std::printf("report: %s\n",
              join_path(o.out_dir, "pipeline_report.csv").c_str());
}

// ==================================================================
// wiring
// ==================================================================

void add_train_config(CLI::App* cmd, distill::TrainConfig& t,
                      double default_lr) {
  t.learning_rate = default_lr;
  cmd->add_option("--epochs", t.epochs, "training epochs")
      ->capture_default_str();
  cmd->add_option("--batch-size", t.batch_size, "mini-batch size")
      ->capture_default_str();
  cmd->add_option("--lr", t.learning_rate, "AdamW learning rate")
      ->capture_default_str();
  cmd->add_option("--weight-decay", t.weight_decay, "decoupled weight decay")
      ->capture_default_str();
  cmd->add_option("--temperature", t.temperature,
                  "contrastive softmax temperature")
      ->capture_default_str();
  cmd->add_option("--clip-norm", t.clip_norm,
                  "global gradient-norm clip, <= 0 disables")
      ->capture_default_str();
  cmd->add_option("--eval-every", t.eval_every,
                  "validation cadence in steps")
      ->capture_default_str();
  cmd->add_option("--seed", t.seed, "RNG seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homomorphic projective distillation toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  TrainTeacherOpts tt;
  auto* c_tt = app.add_subcommand("train-teacher",
                                  "train the teacher encoder contrastively");
  add_config_flag(c_tt);
  c_tt->add_option("--triplets", tt.triplets, "triplet JSONL")->required();
  c_tt->add_option("--val-pairs", tt.val_pairs, "validation pairs TSV");
  c_tt->add_option("--out-dir", tt.out_dir, "output directory");
  c_tt->add_option("--layers", tt.layers, "encoder layers");
  c_tt->add_option("--dim", tt.dim, "model width");
  c_tt->add_option("--heads", tt.heads, "attention heads");
  c_tt->add_option("--ffn-dim", tt.ffn_dim, "feed-forward width");
  c_tt->add_option("--max-len", tt.max_len, "max tokens per sentence");
  c_tt->add_option("--vocab-min-count", tt.min_count,
                   "min word frequency kept in vocabulary");
  c_tt->add_flag("--verbose", tt.verbose, "chatty progress output");
  add_train_config(c_tt, tt.train, 1e-3);
  c_tt->callback([&tt] { run_train_teacher(tt); });

  FitPcaOpts fp;
  auto* c_fp = app.add_subcommand("fit-pca",
                                  "fit the reduction on teacher embeddings");
  add_config_flag(c_fp);
  c_fp->add_option("--dim", fp.dim, "target dimension d")->required();
  c_fp->add_option("--embeddings", fp.embeddings,
                   "precomputed embeddings (HPDE)");
  fp.model.add_options(c_fp, false);
  c_fp->add_option("--triplets", fp.triplets, "sentence source JSONL");
  c_fp->add_option("--sample-size", fp.sample_size, "max sentences sampled");
  c_fp->add_option("--seed", fp.seed, "sampling seed");
  c_fp->add_option("--out-dir", fp.out_dir, "output directory");
  c_fp->add_option("--out", fp.out, "transform path (default pca.hpdt)");
  c_fp->add_flag("--verbose", fp.verbose, "chatty progress output");
  c_fp->callback([&fp] { run_fit_pca(fp); });

  DistillOpts di;
  auto* c_di = app.add_subcommand(
      "distill", "train the student against the reduced teacher");
  add_config_flag(c_di);
  c_di->add_option("--teacher", di.teacher, "teacher checkpoint")->required();
  c_di->add_option("--vocab", di.vocab, "vocabulary TSV")->required();
  c_di->add_option("--pca", di.pca, "PCA transform (HPDT)")->required();
  c_di->add_option("--triplets", di.triplets, "sentence source JSONL")
      ->required();
  c_di->add_option("--val-pairs", di.val_pairs, "validation pairs TSV");
  c_di->add_option("--synonyms", di.synonyms, "synonym TSV for augmentation");
  c_di->add_option("--augment-rate", di.augment_rate,
                   "per-word substitution probability");
  c_di->add_option("--out-dir", di.out_dir, "output directory");
  c_di->add_option("--layers", di.layers, "student layers");
  c_di->add_option("--student-dim", di.dim, "student width");
  c_di->add_option("--heads", di.heads, "attention heads");
  c_di->add_option("--ffn-dim", di.ffn_dim, "feed-forward width");
  c_di->add_option("--max-len", di.max_len, "max tokens per sentence");
  c_di->add_flag("--no-warm-start", di.no_warm_start,
                 "random projection init instead of the PCA warm start");
  c_di->add_flag("--whiten-after", di.whiten_after,
                 "also write a whitening-composed projection");
  c_di->add_flag("--verbose", di.verbose, "chatty progress output");
  add_train_config(c_di, di.train, 1e-4);
  c_di->callback([&di] { run_distill(di); });

  EvalStsOpts es;
  auto* c_es = app.add_subcommand("eval-sts",
                                  "score similarity pairs and report Spearman");
  add_config_flag(c_es);
  es.model.add_options(c_es);
  c_es->add_option("--pairs", es.pairs,
                   "pairs TSV, repeatable, optionally name=path")
      ->required()
      ->expected(-1);
  c_es->add_option("--out-dir", es.out_dir, "output directory");
  c_es->add_option("--out", es.out, "CSV path (default sts_report.csv)");
  c_es->callback([&es] { run_eval_sts(es); });

  BuildIndexOpts bi;
  auto* c_bi = app.add_subcommand("build-index", "build the IVF index");
  add_config_flag(c_bi);
  c_bi->add_option("--embeddings", bi.embeddings,
                   "precomputed embeddings (HPDE)");
  bi.model.add_options(c_bi, false);
  c_bi->add_option("--corpus", bi.corpus, "corpus JSONL (id/text)");
  c_bi->add_option("--nlist", bi.nlist, "number of cells");
  c_bi->add_option("--kmeans-iters", bi.kmeans_iters, "max Lloyd iterations");
  c_bi->add_option("--seed", bi.seed, "k-means seed");
  c_bi->add_option("--out-dir", bi.out_dir, "output directory");
  c_bi->add_option("--out", bi.out, "index path (default index.hpdi)");
  c_bi->callback([&bi] { run_build_index(bi); });

  SearchOpts se;
  auto* c_se = app.add_subcommand("search", "query the IVF index");
  add_config_flag(c_se);
  c_se->add_option("--index", se.index, "index file (HPDI)")->required();
  se.model.add_options(c_se);
  c_se->add_option("--query", se.query, "query sentence")->required();
  c_se->add_option("--k", se.k, "results returned");
  c_se->add_option("--nprobe", se.nprobe, "cells probed");
  c_se->callback([&se] { run_search(se); });

  BenchOpts be;
  auto* c_be = app.add_subcommand("bench",
                                  "measure retrieval quality, speed, memory");
  add_config_flag(c_be);
  c_be->add_option("--index", be.index, "index file (HPDI)")->required();
  c_be->add_option("--baseline-index", be.baseline_index,
                   "second index for memory-ratio reporting");
  c_be->add_option("--query-embeddings", be.query_embeddings,
                   "precomputed query embeddings (HPDE)");
  be.model.add_options(c_be, false);
  c_be->add_option("--queries", be.queries, "query JSONL (id/text)");
  c_be->add_option("--gold", be.gold, "gold TSV query_id<TAB>gold_id")
      ->required();
  c_be->add_option("--k", be.k, "depth of returned lists");
  c_be->add_option("--nprobe", be.nprobe, "cells probed");
  c_be->add_option("--reps", be.reps, "timing repetitions (median)");
  c_be->add_option("--out-dir", be.out_dir, "output directory");
  c_be->add_option("--out", be.out, "CSV path (default bench.csv)");
  c_be->callback([&be] { run_bench(be); });

  PipelineOpts pl;
  auto* c_pl = app.add_subcommand(
      "pipeline", "synthetic corpus -> teacher -> PCA -> distill -> eval");
  add_config_flag(c_pl);
  c_pl->add_option("--out-dir", pl.out_dir, "output directory");
  c_pl->add_option("--synth-triplets", pl.synth_triplets, "triplet count");
  c_pl->add_option("--synth-pairs", pl.synth_pairs, "scored-pair count");
  c_pl->add_option("--synth-docs", pl.synth_docs, "retrieval corpus size");
  c_pl->add_option("--synth-queries", pl.synth_queries, "retrieval queries");
  c_pl->add_option("--teacher-layers", pl.teacher_layers, "teacher layers");
  c_pl->add_option("--teacher-dim", pl.teacher_dim, "teacher width");
  c_pl->add_option("--teacher-ffn", pl.teacher_ffn, "teacher FFN width");
  c_pl->add_option("--student-layers", pl.student_layers, "student layers");
  c_pl->add_option("--student-dim", pl.student_dim, "student width");
  c_pl->add_option("--student-ffn", pl.student_ffn, "student FFN width");
  c_pl->add_option("--heads", pl.heads, "attention heads");
  c_pl->add_option("--max-len", pl.max_len, "max tokens per sentence");
  c_pl->add_option("--dim", pl.dim, "final embedding dimension d");
  c_pl->add_option("--teacher-epochs", pl.teacher_epochs, "teacher epochs");
  c_pl->add_option("--distill-epochs", pl.distill_epochs, "distill epochs");
  c_pl->add_option("--batch-size", pl.batch_size, "mini-batch size");
  c_pl->add_option("--teacher-lr", pl.teacher_lr, "teacher learning rate");
  c_pl->add_option("--distill-lr", pl.distill_lr, "distill learning rate");
  c_pl->add_option("--seed", pl.seed, "RNG seed");
  c_pl->add_flag("--verbose", pl.verbose, "chatty progress output");
  c_pl->callback([&pl] { run_pipeline(pl); });

  try {
    app.name(argv[0]);
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config_args(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
