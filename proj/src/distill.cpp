#include "hpd/distill.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>

#include "hpd/errors.hpp"
#include "hpd/io.hpp"
#include "hpd/objectives.hpp"
#include "hpd/rng.hpp"
#include "hpd/util.hpp"

namespace hpd::distill {

void TrainConfig::validate() const {
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw InputError("learning_rate must be positive");
  if (weight_decay < 0.0) throw InputError("weight_decay must be >= 0");
  if (temperature <= 0.0) throw InputError("temperature must be positive");
  if (adam_beta1 <= 0.0 || adam_beta1 >= 1.0 || adam_beta2 <= 0.0 ||
      adam_beta2 >= 1.0) {
    throw InputError("adam betas must lie in (0, 1)");
  }
  if (adam_epsilon <= 0.0) throw InputError("adam_epsilon must be positive");
  if (eval_every < 1) throw InputError("eval_every must be >= 1");
}

void adamw_step(std::span<double> params, std::span<const double> grads,
                AdamState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size()) {
    throw ShapeError("adamw_step: " + std::to_string(grads.size()) +
                     " gradients for " + std::to_string(params.size()) +
                     " parameters");
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adamw_step: optimizer state does not match parameters");
  }
  ++state.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon) +
                                      cfg.weight_decay * params[i]);
  }
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  double n2 = 0.0;
  for (double g : grads) n2 += g * g;
  const double norm = std::sqrt(n2);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

std::vector<double> flatten_params(const encoder::EncoderParams& params) {
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  for (const auto& t : params.tensors()) {
    flat.insert(flat.end(), t.data->begin(), t.data->end());
  }
  return flat;
}

void unflatten_params(std::span<const double> flat,
                      encoder::EncoderParams& params) {
  size_t off = 0;
  for (auto& t : params.tensors()) {
    if (off + t.data->size() > flat.size()) {
      throw ShapeError("unflatten_params: flat vector too short");
    }
    std::copy_n(flat.begin() + off, t.data->size(), t.data->begin());
    off += t.data->size();
  }
  if (off != flat.size()) {
    throw ShapeError("unflatten_params: flat vector too long");
  }
}

namespace {

constexpr size_t kGradChunk = 8;

struct GradItem {
  const encoder::TokenSequence* seq;
  std::span<const double> upstream;
};

void add_params_into(const encoder::EncoderParams& grads,
                     std::span<double> out) {
  size_t off = 0;
  for (const auto& t : grads.tensors()) {
    const auto& src = *t.data;
    for (size_t i = 0; i < src.size(); ++i) out[off + i] += src[i];
    off += src.size();
  }
}

// Sum of per-item encoder gradients added into `out` (tensors() order).
// Chunk boundaries are fixed, so the reduction order — items within a chunk,
// then chunks ascending — is identical for any worker count.
void add_encoder_grads(const encoder::EncoderParams& params,
                       const std::vector<GradItem>& items,
                       std::span<double> out) {
  if (items.empty()) return;
  const size_t chunks = (items.size() + kGradChunk - 1) / kGradChunk;
  std::vector<std::vector<double>> partial(chunks);
  util::parallel_for(chunks, [&](size_t c) {
    const size_t lo = c * kGradChunk;
    const size_t hi = std::min(items.size(), lo + kGradChunk);
    std::vector<double> acc(params.parameter_count(), 0.0);
    for (size_t i = lo; i < hi; ++i) {
      auto g = encoder::encode_backward(params, *items[i].seq,
                                        items[i].upstream);
      add_params_into(g, acc);
    }
    partial[c] = std::move(acc);
  });
  for (size_t c = 0; c < chunks; ++c) {
    for (size_t i = 0; i < partial[c].size(); ++i) out[i] += partial[c][i];
  }
}

void check_finite_params(std::span<const double> flat, size_t step) {
  for (double v : flat) {
    if (!std::isfinite(v)) {
      throw NumericalError("step " + std::to_string(step) +
                           ": parameters diverged (non-finite values)");
    }
  }
}

void shuffle_indices(std::vector<size_t>& order, Rng& rng) {
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
}

}  // namespace

TeacherResult train_teacher(const encoder::EncoderConfig& config,
                            const std::vector<data::TripletRecord>& triplets,
                            const encoder::Vocab& vocab, const TrainConfig& cfg,
                            const std::vector<data::ScoredPair>& val_pairs) {
  config.validate();
  cfg.validate();
  if (triplets.empty()) throw InputError("train_teacher: empty triplet set");
  if (vocab.size() > config.vocab_size) {
    throw InputError("vocabulary size " + std::to_string(vocab.size()) +
                     " exceeds encoder vocab_size " +
                     std::to_string(config.vocab_size));
  }

  const size_t n = triplets.size();
  const size_t d = config.model_dim;
  std::vector<std::array<encoder::TokenSequence, 3>> toks(n);
  for (size_t i = 0; i < n; ++i) {
    toks[i][0] = encoder::tokenize(triplets[i].anchor, vocab, config.max_len);
    toks[i][1] =
        encoder::tokenize(triplets[i].entailment, vocab, config.max_len);
    toks[i][2] =
        encoder::tokenize(triplets[i].contradiction, vocab, config.max_len);
  }

  TeacherResult result;
  result.params = encoder::init_params(config);
  encoder::EncoderParams& params = result.params;

  const bool have_val = !val_pairs.empty();
  encoder::EncoderParams best = params;
  double best_val = -2.0;
  size_t best_step = 0;
  auto eval_now = [&](size_t at_step) {
    auto embed = [&](const std::string& s) {
      return encoder::encode(params,
                             encoder::tokenize(s, vocab, config.max_len));
    };
    const double rho = evalsts::eval_sts(embed, val_pairs);
    result.val_history.emplace_back(at_step, rho);
    if (rho > best_val) {
      best_val = rho;
      best = params;
      best_step = at_step;
    }
  };

  AdamState opt;
  Rng rng(cfg.seed);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  size_t step = 0;

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t batch = std::min(cfg.batch_size, n - start);
      linalg::Matrix anchors(batch, d), positives(batch, d),
          negatives(batch, d);
      util::parallel_for(3 * batch, [&](size_t slot) {
        const size_t b = slot % batch;
        const size_t role = slot / batch;
        auto e = encoder::encode(params, toks[order[start + b]][role]);
        linalg::Matrix& m =
            role == 0 ? anchors : (role == 1 ? positives : negatives);
        std::copy(e.begin(), e.end(), &m.data[b * d]);
      });

      ++step;
      objectives::ContrastiveResult res;
      try {
        res = objectives::contrastive_loss({anchors, positives, negatives},
                                           {cfg.temperature});
      } catch (const NumericalError& e) {
        throw NumericalError("step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(res.loss)) {
        throw NumericalError("step " + std::to_string(step) +
                             ": loss is not finite");
      }
      result.loss_history.push_back(res.loss);

      std::vector<GradItem> items;
      items.reserve(3 * batch);
      for (size_t b = 0; b < batch; ++b)
        items.push_back({&toks[order[start + b]][0], res.grad_anchors.row(b)});
      for (size_t b = 0; b < batch; ++b)
        items.push_back(
            {&toks[order[start + b]][1], res.grad_positives.row(b)});
      for (size_t b = 0; b < batch; ++b)
        items.push_back(
            {&toks[order[start + b]][2], res.grad_negatives.row(b)});

      std::vector<double> flat_g(params.parameter_count(), 0.0);
      add_encoder_grads(params, items, flat_g);
      if (cfg.clip_norm > 0.0) clip_global_norm(flat_g, cfg.clip_norm);

      auto flat_p = flatten_params(params);
      adamw_step(flat_p, flat_g, opt, cfg);
      check_finite_params(flat_p, step);
      unflatten_params(flat_p, params);

      if (have_val && step % cfg.eval_every == 0) eval_now(step);
    }
  }
  if (have_val &&
      (result.val_history.empty() || result.val_history.back().first != step)) {
    eval_now(step);
  }

  if (have_val) {
    result.params = std::move(best);
    result.best_val = best_val;
    result.best_step = best_step;
  }
  return result;
}

DistillState init_distill_state(const encoder::EncoderConfig& student_config,
                                size_t d, uint64_t seed,
                                const reduce::PcaTransform* warm_start) {
  encoder::EncoderConfig config = student_config;
  config.seed = seed;
  config.validate();
  if (d < 1 || d >= config.model_dim) {
    throw InputError("target dimension must satisfy 1 <= d < student width");
  }
  DistillState state;
  state.student = encoder::init_params(config);
  if (warm_start) {
    if (warm_start->weights.cols != d) {
      throw InputError("warm-start PCA produces " +
                       std::to_string(warm_start->weights.cols) +
                       " dims, expected " + std::to_string(d));
    }
    state.head = reduce::warm_start_projection(*warm_start, config.model_dim);
  } else {
    state.head = reduce::init_projection(config.model_dim, d,
                                         seed ^ 0x9e3779b97f4a7c15ULL);
  }
  return state;
}

DistillState distill(const TeacherFn& teacher, const reduce::PcaTransform& pca,
                     DistillState state,
                     const std::vector<std::string>& sentences,
                     const encoder::Vocab& vocab, const TrainConfig& cfg,
                     const std::vector<data::ScoredPair>& val_pairs) {
  cfg.validate();
  if (sentences.empty()) throw InputError("distill: empty sentence pool");
  const size_t d = state.head.weights.cols;
  if (pca.weights.cols != d) {
    throw InputError("dimension mismatch: reduction yields " +
                     std::to_string(pca.weights.cols) +
                     " dims but projection outputs " + std::to_string(d));
  }
  const encoder::EncoderConfig& config = state.student.config;
  if (state.head.weights.rows != config.model_dim) {
    throw InputError("projection input width " +
                     std::to_string(state.head.weights.rows) +
                     " does not match student width " +
                     std::to_string(config.model_dim));
  }
  if (vocab.size() > config.vocab_size) {
    throw InputError("vocabulary size exceeds student vocab_size");
  }

  const size_t n = sentences.size();
  std::vector<encoder::TokenSequence> toks(n);
  for (size_t i = 0; i < n; ++i) {
    toks[i] = encoder::tokenize(sentences[i], vocab, config.max_len);
  }

  // teacher path is frozen: all targets computed once, no gradients
  linalg::Matrix targets(n, d);
  util::parallel_for(n, [&](size_t i) {
    auto h = reduce::apply_pca(pca, teacher(sentences[i]));
    std::copy(h.begin(), h.end(), &targets.data[i * d]);
  });

  const size_t student_count = state.student.parameter_count();
  const size_t head_w = state.head.weights.data.size();
  const size_t total = student_count + head_w + state.head.bias.size();

  auto flatten_all = [&] {
    std::vector<double> flat = flatten_params(state.student);
    flat.insert(flat.end(), state.head.weights.data.begin(),
                state.head.weights.data.end());
    flat.insert(flat.end(), state.head.bias.begin(), state.head.bias.end());
    return flat;
  };
  auto unflatten_all = [&](std::span<const double> flat) {
    unflatten_params(flat.first(student_count), state.student);
    std::copy_n(flat.begin() + student_count, head_w,
                state.head.weights.data.begin());
    std::copy_n(flat.begin() + student_count + head_w, state.head.bias.size(),
                state.head.bias.begin());
  };

  const bool have_val = !val_pairs.empty();
  encoder::EncoderParams best_student = state.student;
  reduce::ProjectionHead best_head = state.head;
  double best_val = -2.0;
  auto eval_now = [&](size_t at_step) {
    auto embed = [&](const std::string& s) {
      auto e = encoder::encode(state.student,
                               encoder::tokenize(s, vocab, config.max_len));
      return reduce::project(state.head, e);
    };
    const double rho = evalsts::eval_sts(embed, val_pairs);
    state.val_history.emplace_back(at_step, rho);
    if (rho > best_val) {
      best_val = rho;
      best_student = state.student;
      best_head = state.head;
    }
  };

  Rng rng(cfg.seed);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t batch = std::min(cfg.batch_size, n - start);
      linalg::Matrix enc(batch, config.model_dim);
      linalg::Matrix proj(batch, d);
      linalg::Matrix target_batch(batch, d);
      util::parallel_for(batch, [&](size_t b) {
        auto e = encoder::encode(state.student, toks[order[start + b]]);
        std::copy(e.begin(), e.end(), &enc.data[b * config.model_dim]);
        auto h = reduce::project(state.head, e);
        std::copy(h.begin(), h.end(), &proj.data[b * d]);
      });
      for (size_t b = 0; b < batch; ++b) {
        const double* src = &targets.data[order[start + b] * d];
        std::copy_n(src, d, &target_batch.data[b * d]);
      }

      ++state.step;
      auto res = objectives::mse_loss(proj, target_batch);
      if (!std::isfinite(res.loss)) {
        throw NumericalError("step " + std::to_string(state.step) +
                             ": loss is not finite");
      }
      state.loss_history.push_back(res.loss);

      std::vector<double> flat_g(total, 0.0);
      std::vector<std::vector<double>> upstreams(batch);
      for (size_t b = 0; b < batch; ++b) {
        auto pg = reduce::project_backward(state.head, enc.row(b),
                                           res.grad_student.row(b));
        for (size_t i = 0; i < head_w; ++i)
          flat_g[student_count + i] += pg.grad_weights.data[i];
        for (size_t i = 0; i < pg.grad_bias.size(); ++i)
          flat_g[student_count + head_w + i] += pg.grad_bias[i];
        upstreams[b] = std::move(pg.grad_input);
      }

      std::vector<GradItem> items;
      items.reserve(batch);
      for (size_t b = 0; b < batch; ++b)
        items.push_back({&toks[order[start + b]], upstreams[b]});
      add_encoder_grads(state.student, items,
                        std::span<double>(flat_g).first(student_count));

      if (cfg.clip_norm > 0.0) clip_global_norm(flat_g, cfg.clip_norm);
      auto flat_p = flatten_all();
      adamw_step(flat_p, flat_g, state.opt, cfg);
      check_finite_params(flat_p, state.step);
      unflatten_all(flat_p);

      if (have_val && state.step % cfg.eval_every == 0) eval_now(state.step);
    }
  }
  if (have_val && (state.val_history.empty() ||
                   state.val_history.back().first != state.step)) {
    eval_now(state.step);
  }
  if (have_val) {
    state.student = std::move(best_student);
    state.head = std::move(best_head);
  }
  return state;
}

LinearFitResult fit_projection_mse(const linalg::Matrix& features,
                                   const linalg::Matrix& targets, size_t steps,
                                   const TrainConfig& cfg) {
  cfg.validate();
  if (features.rows != targets.rows) {
    throw ShapeError("fit_projection_mse: row count mismatch");
  }
  LinearFitResult result;
  result.head = reduce::init_projection(features.cols, targets.cols, cfg.seed);
  AdamState opt;
  const size_t head_w = result.head.weights.data.size();
  const size_t total = head_w + result.head.bias.size();

  for (size_t s = 0; s < steps; ++s) {
    linalg::Matrix proj(features.rows, targets.cols);
    for (size_t r = 0; r < features.rows; ++r) {
      auto h = reduce::project(result.head, features.row(r));
      std::copy(h.begin(), h.end(), &proj.data[r * proj.cols]);
    }
    auto res = objectives::mse_loss(proj, targets);
    if (!std::isfinite(res.loss)) {
      throw NumericalError("step " + std::to_string(s + 1) +
                           ": loss is not finite");
    }
    result.loss_history.push_back(res.loss);

    std::vector<double> flat_g(total, 0.0);
    for (size_t r = 0; r < features.rows; ++r) {
      auto pg = reduce::project_backward(result.head, features.row(r),
                                         res.grad_student.row(r));
      for (size_t i = 0; i < head_w; ++i) flat_g[i] += pg.grad_weights.data[i];
      for (size_t i = 0; i < pg.grad_bias.size(); ++i)
        flat_g[head_w + i] += pg.grad_bias[i];
    }
    if (cfg.clip_norm > 0.0) clip_global_norm(flat_g, cfg.clip_norm);

    std::vector<double> flat_p(result.head.weights.data);
    flat_p.insert(flat_p.end(), result.head.bias.begin(),
                  result.head.bias.end());
    adamw_step(flat_p, flat_g, opt, cfg);
    std::copy_n(flat_p.begin(), head_w, result.head.weights.data.begin());
    std::copy_n(flat_p.begin() + head_w, result.head.bias.size(),
                result.head.bias.begin());
  }
  return result;
}

TeacherOracle teacher_from_file(
    const std::string& embeddings_path,
    const std::vector<std::pair<uint64_t, std::string>>& id_to_sentence) {
  TeacherOracle oracle;
  oracle.embeddings = io::load_embeddings(embeddings_path);
  oracle.sentence_of.assign(oracle.embeddings.rows, "");
  for (const auto& [id, sentence] : id_to_sentence) {
    if (id >= oracle.embeddings.rows) {
      throw InputError("id " + std::to_string(id) +
                       " outside embedding file with " +
                       std::to_string(oracle.embeddings.rows) + " rows");
    }
    oracle.sentence_of[id] = sentence;
    oracle.id_of.emplace(sentence, id);
  }
  return oracle;
}

std::vector<double> TeacherOracle::by_id(uint64_t id) const {
  if (id >= embeddings.rows) {
    throw InputError("unknown vector id " + std::to_string(id));
  }
  auto r = embeddings.row(id);
  return {r.begin(), r.end()};
}

std::vector<double> TeacherOracle::by_sentence(
    const std::string& sentence) const {
  auto it = id_of.find(sentence);
  if (it == id_of.end()) {
    throw InputError("no stored embedding for sentence: " + sentence);
  }
  return by_id(it->second);
}

evalsts::EmbedFn make_embed_fn(encoder::EncoderParams params,
                               encoder::Vocab vocab,
                               const reduce::ProjectionHead* head) {
  auto p = std::make_shared<encoder::EncoderParams>(std::move(params));
  auto v = std::make_shared<encoder::Vocab>(std::move(vocab));
  auto h = head ? std::make_shared<reduce::ProjectionHead>(*head) : nullptr;
  return [p, v, h](const std::string& s) {
    auto e = encoder::encode(*p, encoder::tokenize(s, *v, p->config.max_len));
    return h ? reduce::project(*h, e) : e;
  };
}

}  // namespace hpd::distill
