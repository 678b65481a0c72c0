// Final acceptance gate. Each numbered check prints exactly one verdict
// line; the process exits with the number of failed checks.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "hpd/distill.hpp"
#include "hpd/encoder.hpp"
#include "hpd/evalsts.hpp"
#include "hpd/io.hpp"
#include "hpd/linalg.hpp"
#include "hpd/objectives.hpp"
#include "hpd/reduce.hpp"
#include "hpd/retrieval.hpp"
#include "hpd/rng.hpp"
#include "test_support.hpp"

using namespace hpd;
using linalg::Matrix;
using test_support::random_matrix;
namespace fs = std::filesystem;

namespace {

int failures = 0;

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void verdict(int num, const std::string& name, bool ok,
             const std::string& detail) {
  std::printf("[%s] %d. %s (%s)\n", ok ? "PASS" : "FAIL", num, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

Matrix slice_cols(const Matrix& m, size_t cols) {
  Matrix out(m.rows, cols);
  for (size_t i = 0; i < m.rows; ++i)
    for (size_t j = 0; j < cols; ++j) out.at(i, j) = m.at(i, j);
  return out;
}

std::vector<uint64_t> iota_ids(size_t n) {
  std::vector<uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), uint64_t{0});
  return ids;
}

double median5(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ------------------------------------------------------------------
// 1. memory-ratio reproduction at d = 128 vs d = 1024
// ------------------------------------------------------------------
void check_memory_ratio() {
  const double t0 = now_s();
  Rng rng(101);
  Matrix wide = random_matrix(rng, 10000, 1024);
  Matrix narrow = slice_cols(wide, 128);
  const auto ids = iota_ids(10000);
  auto big = retrieval::build_ivf(wide, ids, 16, 1, 3);
  auto small = retrieval::build_ivf(narrow, ids, 16, 1, 3);
  auto mb = retrieval::memory_usage(big);
  auto ms = retrieval::memory_usage(small);
  const double payload =
      static_cast<double>(mb.payload_bytes) / static_cast<double>(ms.payload_bytes);
  const double total =
      static_cast<double>(mb.total()) / static_cast<double>(ms.total());
  const double secs = now_s() - t0;
  const bool ok = payload == 8.0 && std::fabs(total - 8.0) <= 0.16 && secs < 10.0;
  verdict(1, "memory ratio d=1024/d=128", ok,
          "payload " + fmt("%.2f", payload) + ", total " + fmt("%.4f", total) +
              ", " + fmt("%.1f", secs) + "s");
}

// ------------------------------------------------------------------
// 2. lower dimension searches strictly faster at matched settings
// ------------------------------------------------------------------
void check_speed_direction() {
  const double t0 = now_s();
  Rng rng(202);
  Matrix wide = random_matrix(rng, 50000, 1024);
  Matrix narrow = slice_cols(wide, 128);
  Matrix queries_wide = random_matrix(rng, 200, 1024);
  Matrix queries_narrow = slice_cols(queries_wide, 128);
  const auto ids = iota_ids(50000);

  auto big = retrieval::build_ivf(wide, ids, 32, 1, 2);
  wide = Matrix();  // builder copied the vectors; drop the 400 MB original
  auto small = retrieval::build_ivf(narrow, ids, 32, 1, 2);
  narrow = Matrix();

  auto pass_ms = [](const retrieval::IvfIndex& index, const Matrix& queries) {
    const double start = now_s();
    for (size_t i = 0; i < queries.rows; ++i) {
      volatile auto hits = retrieval::search(index, queries.row(i), 10, 8);
      (void)hits;
    }
    return (now_s() - start) * 1000.0;
  };

  std::vector<double> wide_ms, narrow_ms;
  for (int run = 0; run < 5; ++run) {
    wide_ms.push_back(pass_ms(big, queries_wide));
    narrow_ms.push_back(pass_ms(small, queries_narrow));
  }
  const double mw = median5(wide_ms);
  const double mn = median5(narrow_ms);
  const double secs = now_s() - t0;
  const bool ok = mn < mw && secs < 120.0;
  verdict(2, "search speed favors the narrow index", ok,
          "median " + fmt("%.1f", mn) + "ms vs " + fmt("%.1f", mw) + "ms per 200 queries, " +
              fmt("%.1f", secs) + "s");
}

// ------------------------------------------------------------------
// 3. PCA against an independent eigendecomposition oracle
// ------------------------------------------------------------------
double reconstruction_mse(const Matrix& samples, const Matrix& basis,
                          std::span<const double> mean) {
  // mean squared distance to the affine subspace spanned by basis columns
  double total = 0.0;
  for (size_t i = 0; i < samples.rows; ++i) {
    std::vector<double> centered(samples.cols);
    for (size_t j = 0; j < samples.cols; ++j)
      centered[j] = samples.at(i, j) - mean[j];
    std::vector<double> coeff(basis.cols, 0.0);
    for (size_t k = 0; k < basis.cols; ++k)
      for (size_t j = 0; j < samples.cols; ++j)
        coeff[k] += basis.at(j, k) * centered[j];
    for (size_t j = 0; j < samples.cols; ++j) {
      double rec = 0.0;
      for (size_t k = 0; k < basis.cols; ++k) rec += basis.at(j, k) * coeff[k];
      const double r = centered[j] - rec;
      total += r * r;
    }
  }
  return total / static_cast<double>(samples.rows);
}

Matrix random_orthonormal(Rng& rng, size_t dim, size_t d) {
  Matrix q(dim, d);
  for (size_t k = 0; k < d; ++k) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    for (size_t prev = 0; prev < k; ++prev) {
      double dot = 0.0;
      for (size_t j = 0; j < dim; ++j) dot += v[j] * q.at(j, prev);
      for (size_t j = 0; j < dim; ++j) v[j] -= dot * q.at(j, prev);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (size_t j = 0; j < dim; ++j) q.at(j, k) = v[j] / norm;
  }
  return q;
}

void check_pca() {
  const double t0 = now_s();
  Rng rng(303);
  Matrix samples = random_matrix(rng, 300, 16);
  for (size_t i = 0; i < samples.rows; ++i)
    for (size_t j = 0; j < samples.cols; ++j)
      samples.at(i, j) *= static_cast<double>(j + 1);

  const size_t d = 4;
  auto pca = reduce::fit_pca(samples, d);

  // oracle: eigenvalues of the (1/m)-normalized sample covariance
  auto centered = linalg::center_rows(samples);
  Matrix cov = linalg::matmul(linalg::transpose(centered.centered),
                              centered.centered);
  for (double& v : cov.data) v /= static_cast<double>(samples.rows);
  auto eig = linalg::eigh(cov);

  double var_err = 0.0;
  for (size_t k = 0; k < d; ++k)
    var_err = std::max(var_err,
                       std::fabs(pca.explained_variances[k] - eig.values[k]));

  double trailing = 0.0;
  for (size_t k = d; k < eig.values.size(); ++k) trailing += eig.values[k];
  const double resid = reconstruction_mse(samples, pca.weights, pca.mean);
  const double resid_rel = std::fabs(resid - trailing) / trailing;

  bool beats_random = true;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix basis = random_orthonormal(rng, 16, d);
    if (reconstruction_mse(samples, basis, pca.mean) + 1e-12 < resid)
      beats_random = false;
  }
  const double secs = now_s() - t0;
  const bool ok =
      var_err <= 1e-8 && resid_rel <= 1e-6 && beats_random && secs < 10.0;
  verdict(3, "PCA matches the covariance oracle", ok,
          "variance err " + fmt("%.1e", var_err) + ", residual rel " +
              fmt("%.1e", resid_rel) + ", beats 50 random bases, " +
              fmt("%.1f", secs) + "s");
}

// ------------------------------------------------------------------
// 4. finite-difference gradient checks across every loss surface
// ------------------------------------------------------------------
size_t one_percent(size_t n) { return std::max<size_t>(n / 100, 8); }

double fd_contrastive() {
  Rng rng(404);
  const size_t n = 4, dim = 8;
  Matrix flat = random_matrix(rng, 3 * n, dim);
  std::vector<double> x = flat.data;
  objectives::ContrastiveConfig cfg;
  cfg.temperature = 0.2;

  auto unpack = [&](std::span<const double> v) {
    objectives::TripletBatch batch;
    batch.anchors = Matrix(n, dim);
    batch.positives = Matrix(n, dim);
    batch.negatives = Matrix(n, dim);
    std::copy(v.begin(), v.begin() + n * dim, batch.anchors.data.begin());
    std::copy(v.begin() + n * dim, v.begin() + 2 * n * dim,
              batch.positives.data.begin());
    std::copy(v.begin() + 2 * n * dim, v.end(), batch.negatives.data.begin());
    return batch;
  };

  auto result = objectives::contrastive_loss(unpack(x), cfg);
  std::vector<double> grad;
  grad.insert(grad.end(), result.grad_anchors.data.begin(),
              result.grad_anchors.data.end());
  grad.insert(grad.end(), result.grad_positives.data.begin(),
              result.grad_positives.data.end());
  grad.insert(grad.end(), result.grad_negatives.data.begin(),
              result.grad_negatives.data.end());
  return objectives::finite_diff_check(
      [&](std::span<const double> v) {
        return objectives::contrastive_loss(unpack(v), cfg).loss;
      },
      x, grad, one_percent(x.size()), 1e-5, 1);
}

double fd_mse() {
  Rng rng(405);
  Matrix student = random_matrix(rng, 6, 5);
  Matrix teacher = random_matrix(rng, 6, 5);
  auto result = objectives::mse_loss(student, teacher);
  std::vector<double> x = student.data;
  return objectives::finite_diff_check(
      [&](std::span<const double> v) {
        Matrix s(6, 5);
        std::copy(v.begin(), v.end(), s.data.begin());
        return objectives::mse_loss(s, teacher).loss;
      },
      x, result.grad_student.data, one_percent(x.size()), 1e-5, 2);
}

double fd_projection() {
  Rng rng(406);
  const size_t in = 8, out = 3;
  auto head = reduce::init_projection(in, out, 11);
  std::vector<double> input(in), upstream(out);
  for (double& v : input) v = rng.normal();
  for (double& v : upstream) v = rng.normal();

  // flat layout [W | b | e]; loss = dot(upstream, project(head, e))
  std::vector<double> x = head.weights.data;
  x.insert(x.end(), head.bias.begin(), head.bias.end());
  x.insert(x.end(), input.begin(), input.end());

  auto eval = [&](std::span<const double> v) {
    reduce::ProjectionHead h;
    h.weights = Matrix(in, out);
    std::copy(v.begin(), v.begin() + in * out, h.weights.data.begin());
    h.bias.assign(v.begin() + in * out, v.begin() + in * out + out);
    std::vector<double> e(v.begin() + in * out + out, v.end());
    auto y = reduce::project(h, e);
    double loss = 0.0;
    for (size_t k = 0; k < out; ++k) loss += upstream[k] * y[k];
    return loss;
  };

  auto grads = reduce::project_backward(head, input, upstream);
  std::vector<double> grad = grads.grad_weights.data;
  grad.insert(grad.end(), grads.grad_bias.begin(), grads.grad_bias.end());
  grad.insert(grad.end(), grads.grad_input.begin(), grads.grad_input.end());
  return objectives::finite_diff_check(eval, x, grad, one_percent(x.size()),
                                       1e-5, 3);
}

double fd_encoder() {
  encoder::EncoderConfig config;
  config.vocab_size = 12;
  config.layers = 2;
  config.model_dim = 8;
  config.heads = 2;
  config.ffn_dim = 16;
  config.max_len = 6;
  config.seed = 9;
  auto params = encoder::init_params(config);
  encoder::TokenSequence seq;
  seq.ids = {2, 5, 7, 3};
  seq.mask = {1, 1, 1, 1};

  Rng rng(407);
  std::vector<double> upstream(config.model_dim);
  for (double& v : upstream) v = rng.normal();

  auto grads = encoder::encode_backward(params, seq, upstream);
  std::vector<double> x = distill::flatten_params(params);
  std::vector<double> grad = distill::flatten_params(grads);
  return objectives::finite_diff_check(
      [&](std::span<const double> v) {
        auto p = params;
        distill::unflatten_params(v, p);
        auto y = encoder::encode(p, seq);
        double loss = 0.0;
        for (size_t k = 0; k < y.size(); ++k) loss += upstream[k] * y[k];
        return loss;
      },
      x, grad, x.size() / 100 + 1, 1e-5, 4);
}

void check_gradients() {
  const double t0 = now_s();
  const double e1 = fd_contrastive();
  const double e2 = fd_mse();
  const double e3 = fd_projection();
  const double e4 = fd_encoder();
  const double worst = std::max({e1, e2, e3, e4});
  const double secs = now_s() - t0;
  const bool ok = worst <= 1e-4 && secs < 60.0;
  verdict(4, "finite differences agree with analytic gradients", ok,
          "contrastive " + fmt("%.1e", e1) + ", mse " + fmt("%.1e", e2) +
              ", projection " + fmt("%.1e", e3) + ", encoder " +
              fmt("%.1e", e4) + ", " + fmt("%.1f", secs) + "s");
}

// ------------------------------------------------------------------
// 5. distillation convergence on the linear task and the fixed point
// ------------------------------------------------------------------
std::vector<std::string> mimic_pool() {
  return {"the cat finds the book", "the kitten locates the novel",
          "the cat never finds the book", "a dog guards the gate",
          "a hound guards the door", "a dog abandons the gate",
          "the singer enjoys the song", "the performer likes the tune",
          "the singer hates the song", "a child reads in the park",
          "a kid reads in the garden", "a child sleeps in the park"};
}

void check_distill_convergence() {
  const double t0 = now_s();

  Rng rng(505);
  Matrix feats = random_matrix(rng, 64, 8);
  Matrix map = random_matrix(rng, 8, 3);
  Matrix targets = linalg::matmul(feats, map);
  distill::TrainConfig linear_cfg;
  linear_cfg.learning_rate = 0.01;
  linear_cfg.seed = 4;
  auto linear = distill::fit_projection_mse(feats, targets, 200, linear_cfg);
  const double ratio =
      linear.loss_history.back() / linear.loss_history.front();

  auto pool = mimic_pool();
  auto vocab = encoder::build_vocab(pool, 1);
  encoder::EncoderConfig config;
  config.vocab_size = vocab.size();
  config.layers = 1;
  config.model_dim = 16;
  config.heads = 2;
  config.ffn_dim = 32;
  config.max_len = 10;
  config.seed = 5;
  auto teacher_params = encoder::init_params(config);

  Matrix sample(pool.size(), config.model_dim);
  for (size_t i = 0; i < pool.size(); ++i) {
    auto e = encoder::encode(teacher_params,
                             encoder::tokenize(pool[i], vocab, config.max_len));
    for (size_t j = 0; j < e.size(); ++j) sample.at(i, j) = e[j];
  }
  auto pca = reduce::fit_pca(sample, 4);

  distill::DistillState state;
  state.student = teacher_params;
  state.head = reduce::warm_start_projection(pca, config.model_dim);
  distill::TrainConfig mimic_cfg;
  mimic_cfg.batch_size = pool.size();
  mimic_cfg.epochs = 100;
  mimic_cfg.learning_rate = 1e-8;
  mimic_cfg.weight_decay = 0.0;
  mimic_cfg.seed = 3;
  auto teacher_fn = [&](const std::string& s) {
    return encoder::encode(teacher_params,
                           encoder::tokenize(s, vocab, config.max_len));
  };
  auto mimic = distill::distill(teacher_fn, pca, std::move(state), pool, vocab,
                                mimic_cfg);
  double mimic_worst = 0.0;
  for (double loss : mimic.loss_history)
    mimic_worst = std::max(mimic_worst, loss);

  const double secs = now_s() - t0;
  const bool ok = mimic.loss_history.size() == 100 && ratio <= 0.1 &&
                  mimic_worst <= 1e-10 && secs < 60.0;
  verdict(5, "distillation converges and holds the fixed point", ok,
          "linear ratio " + fmt("%.1e", ratio) + ", mimic max loss " +
              fmt("%.1e", mimic_worst) + ", " + fmt("%.1f", secs) + "s");
}

// ------------------------------------------------------------------
// 6. Spearman against a brute-force rank-then-Pearson oracle
// ------------------------------------------------------------------
double spearman_oracle(const std::vector<double>& x,
                       const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = shared;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (size_t i = 0; i < x.size(); ++i) sx += rx[i], sy += ry[i];
  const double mx = sx / n, my = sy / n;
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  return num / std::sqrt(dx * dy);
}

void check_spearman() {
  const double t0 = now_s();
  Rng rng(606);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 5 + rng.below(40);
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      // quantized values so ties actually occur
      x[i] = static_cast<double>(rng.below(8));
      y[i] = static_cast<double>(rng.below(8)) + 0.25 * rng.normal();
    }
    bool degenerate = true;
    for (size_t i = 1; i < n; ++i)
      if (x[i] != x[0]) degenerate = false;
    if (degenerate) x[0] += 1.0;
    worst = std::max(worst,
                     std::fabs(evalsts::spearman(x, y) - spearman_oracle(x, y)));
  }

  const std::vector<double> tx{1, 2, 2, 4}, ty{1, 2, 3, 4};
  const double tie_err = std::fabs(evalsts::spearman(tx, ty) - 0.94868);
  const double secs = now_s() - t0;
  const bool ok = worst <= 1e-10 && tie_err <= 1e-5;
  verdict(6, "Spearman matches the rank oracle", ok,
          "oracle err " + fmt("%.1e", worst) + ", tie example err " +
              fmt("%.1e", tie_err) + ", " + fmt("%.1f", secs) + "s");
}

// ------------------------------------------------------------------
// 7. IVF search against the exact oracle
// ------------------------------------------------------------------
void check_retrieval_oracle() {
  const double t0 = now_s();
  Rng rng(707);
  Matrix corpus = random_matrix(rng, 2000, 32);
  Matrix queries = random_matrix(rng, 200, 32);
  const auto ids = iota_ids(2000);
  const size_t nlist = 16;
  auto index = retrieval::build_ivf(corpus, ids, nlist, 9);

  bool identical = true;
  for (size_t q = 0; q < queries.rows && identical; ++q) {
    auto approx = retrieval::search(index, queries.row(q), 10, nlist);
    auto exact = retrieval::exact_search(corpus, ids, queries.row(q), 10);
    if (approx.size() != exact.size()) identical = false;
    for (size_t i = 0; identical && i < approx.size(); ++i)
      if (approx[i].id != exact[i].id) identical = false;
  }

  // recall@10 against the exact top-10, non-decreasing in nprobe
  bool monotone = true;
  double prev = -1.0;
  std::vector<double> recalls;
  for (size_t nprobe : {1ul, 2ul, 4ul, 8ul, 16ul}) {
    double hit = 0, want = 0;
    for (size_t q = 0; q < queries.rows; ++q) {
      auto approx = retrieval::search(index, queries.row(q), 10, nprobe);
      auto exact = retrieval::exact_search(corpus, ids, queries.row(q), 10);
      for (const auto& g : exact) {
        ++want;
        for (const auto& h : approx)
          if (h.id == g.id) {
            ++hit;
            break;
          }
      }
    }
    const double recall = hit / want;
    recalls.push_back(recall);
    if (recall + 1e-12 < prev) monotone = false;
    prev = recall;
  }

  // planted duplicates: every query is an exact copy of a stored vector
  Matrix dup_queries(50, 32);
  std::vector<uint64_t> gold(50);
  for (size_t q = 0; q < 50; ++q) {
    const size_t row = 17 + q * 31;
    gold[q] = ids[row];
    for (size_t j = 0; j < 32; ++j) dup_queries.at(q, j) = corpus.at(row, j);
  }
  auto report = retrieval::bench(index, dup_queries, gold, 10, nlist, 1);
  std::vector<std::vector<uint64_t>> rankings;
  for (size_t q = 0; q < dup_queries.rows; ++q) {
    auto exact = retrieval::exact_search(corpus, ids, dup_queries.row(q), 10);
    std::vector<uint64_t> row_ids;
    for (const auto& h : exact) row_ids.push_back(h.id);
    rankings.push_back(std::move(row_ids));
  }
  const double brute = retrieval::mrr_at_10(rankings, gold);
  const bool mrr_match = report.mrr_at_10 == brute;

  const double secs = now_s() - t0;
  const bool ok = identical && monotone && mrr_match;
  verdict(7, "IVF search matches the exact-scan oracle", ok,
          std::string("full-probe identical ") + (identical ? "yes" : "NO") +
              ", recall " + fmt("%.3f", recalls.front()) + "->" +
              fmt("%.3f", recalls.back()) + " monotone " +
              (monotone ? "yes" : "NO") + ", planted-duplicate mrr " +
              fmt("%.4f", report.mrr_at_10) + (mrr_match ? " == " : " != ") +
              "oracle, " + fmt("%.1f", secs) + "s");
}

// ------------------------------------------------------------------
// 8. end-to-end pipeline on the synthetic corpus
// ------------------------------------------------------------------
int run_cmd(const std::string& args, const std::string& log) {
  const std::string cmd =
      std::string(HPDKIT_BIN_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, double> read_report(const std::string& path) {
  std::ifstream in(path);
  std::map<std::string, double> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    rows[line.substr(0, comma)] = std::strtod(line.c_str() + comma + 1, nullptr);
  }
  return rows;
}

void check_pipeline(const std::string& scratch) {
  const double t0 = now_s();
  const std::string dir = scratch + "/pipeline";
  const int code = run_cmd(
      "pipeline --out-dir " + dir +
          " --synth-triplets 500 --teacher-dim 64 --dim 16 --seed 42",
      scratch + "/pipeline.log");

  const std::vector<std::string> artifacts{
      "synth_triplets.jsonl", "synth_pairs_dev.tsv", "synth_pairs_val.tsv",
      "synth_corpus.jsonl",   "synth_queries.jsonl", "synth_gold.tsv",
      "vocab.tsv",            "teacher.hpdw",        "teacher_loss.csv",
      "pca.hpdt",             "student.hpdw",        "projection.hpdt",
      "student_loss.csv",     "pipeline_report.csv"};
  std::string missing;
  for (const auto& name : artifacts)
    if (!fs::exists(dir + "/" + name)) missing += " " + name;

  auto rows = read_report(dir + "/pipeline_report.csv");
  const double distilled = rows.count("distilled") ? rows["distilled"] : -1e9;
  const double baseline =
      rows.count("random_baseline") ? rows["random_baseline"] : 1e9;
  const double gap = (distilled - baseline) / 100.0;  // report is x100

  const double secs = now_s() - t0;
  const bool ok = code == 0 && missing.empty() && gap >= 0.2 && secs < 300.0;
  verdict(8, "pipeline distills a student that beats the random baseline", ok,
          "exit " + std::to_string(code) +
              (missing.empty() ? "" : ", missing" + missing) + ", rho " +
              fmt("%.3f", distilled / 100.0) + " vs " +
              fmt("%.3f", baseline / 100.0) + ", gap " + fmt("%.3f", gap) +
              ", " + fmt("%.0f", secs) + "s");
}

// ------------------------------------------------------------------
// 9. whitening flattens covariance; the composition flag changes output
// ------------------------------------------------------------------
void check_whitening(const std::string& scratch) {
  const double t0 = now_s();
  Rng rng(909);
  Matrix samples = random_matrix(rng, 400, 6);
  for (size_t i = 0; i < samples.rows; ++i)
    for (size_t j = 0; j < samples.cols; ++j)
      samples.at(i, j) = samples.at(i, j) * static_cast<double>(j + 1) +
                         0.5 * static_cast<double>(j);
  auto white = reduce::fit_whitening(samples, 6);
  Matrix out = reduce::apply_whitening_rows(white, samples);
  auto centered = linalg::center_rows(out);
  Matrix cov = linalg::matmul(linalg::transpose(centered.centered),
                              centered.centered);
  for (double& v : cov.data) v /= static_cast<double>(out.rows);
  double fro = 0.0;
  for (size_t i = 0; i < cov.rows; ++i)
    for (size_t j = 0; j < cov.cols; ++j) {
      const double want = i == j ? 1.0 : 0.0;
      fro += (cov.at(i, j) - want) * (cov.at(i, j) - want);
    }
  fro = std::sqrt(fro);

  // the composition flag must run and emit a distinct transform file
  const std::string pipe_dir = scratch + "/pipeline";
  const std::string dir = scratch + "/whiten";
  const int code = run_cmd(
      "distill --teacher " + pipe_dir + "/teacher.hpdw --vocab " + pipe_dir +
          "/vocab.tsv --pca " + pipe_dir + "/pca.hpdt --triplets " + pipe_dir +
          "/synth_triplets.jsonl --out-dir " + dir +
          " --layers 1 --student-dim 32 --heads 4 --ffn-dim 64 --max-len 16"
          " --epochs 1 --batch-size 32 --seed 3 --whiten-after",
      scratch + "/whiten.log");

  bool flag_works = code == 0 && fs::exists(dir + "/projection_whitened.hpdt");
  if (flag_works) {
    auto plain = io::load_transform(dir + "/projection.hpdt");
    auto composed = io::load_transform(dir + "/projection_whitened.hpdt");
    flag_works = plain.weights.data != composed.weights.data;
  }

  const double secs = now_s() - t0;
  const bool ok = fro <= 1e-4 && flag_works;
  verdict(9, "whitening yields identity covariance and composes", ok,
          "cov err " + fmt("%.1e", fro) + ", composed transform " +
              (flag_works ? "differs" : "MISSING/UNCHANGED") + ", " +
              fmt("%.1f", secs) + "s");
}

}  // namespace

int main() {
  const std::string scratch =
      (fs::temp_directory_path() / "hpd-acceptance").string();
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  check_memory_ratio();
  check_speed_direction();
  check_pca();
  check_gradients();
  check_distill_convergence();
  check_spearman();
  check_retrieval_oracle();
  check_pipeline(scratch);
  check_whitening(scratch);

  fs::remove_all(scratch);
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures;
}
