#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hpd/data.hpp"
#include "hpd/encoder.hpp"
#include "hpd/evalsts.hpp"
#include "hpd/linalg.hpp"
#include "hpd/reduce.hpp"

namespace hpd::distill {

struct TrainConfig {
  size_t batch_size = 32;
  size_t epochs = 3;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double temperature = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint64_t seed = 42;
  size_t eval_every = 50;
  double clip_norm = 1.0;  // <= 0 disables clipping

  void validate() const;
};

// First/second-moment buffers plus the step counter; sized lazily on first
// use and shape-checked afterwards.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  size_t step = 0;
};

// Decoupled weight decay: p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd*p)
void adamw_step(std::span<double> params, std::span<const double> grads,
                AdamState& state, const TrainConfig& cfg);

// Scales grads to max_norm when their global L2 norm exceeds it; returns the
// pre-clip norm.
double clip_global_norm(std::span<double> grads, double max_norm);

// Flat parameter vector in tensors() order, and its inverse.
std::vector<double> flatten_params(const encoder::EncoderParams& params);
void unflatten_params(std::span<const double> flat,
                      encoder::EncoderParams& params);

struct TeacherResult {
  encoder::EncoderParams params;  // best by validation when pairs given
  std::vector<double> loss_history;
  std::vector<std::pair<size_t, double>> val_history;  // (step, rho)
  double best_val = 0.0;
  size_t best_step = 0;
};

TeacherResult train_teacher(const encoder::EncoderConfig& config,
                            const std::vector<data::TripletRecord>& triplets,
                            const encoder::Vocab& vocab,
                            const TrainConfig& cfg,
                            const std::vector<data::ScoredPair>& val_pairs = {});

struct DistillState {
  encoder::EncoderParams student;
  reduce::ProjectionHead head;
  AdamState opt;
  size_t step = 0;
  std::vector<double> loss_history;
  std::vector<std::pair<size_t, double>> val_history;
};

// Random student; projection warm-started from the teacher PCA when given.
DistillState init_distill_state(const encoder::EncoderConfig& student_config,
                                size_t d, uint64_t seed,
                                const reduce::PcaTransform* warm_start = nullptr);

// Raw (pre-reduction) teacher embedding for a sentence.
using TeacherFn = std::function<std::vector<double>(const std::string&)>;

// Minimizes mean squared error between apply_pca(teacher(s)) targets and
// project(head, student(s)); the teacher side carries no gradient.
DistillState distill(const TeacherFn& teacher, const reduce::PcaTransform& pca,
                     DistillState state,
                     const std::vector<std::string>& sentences,
                     const encoder::Vocab& vocab, const TrainConfig& cfg,
                     const std::vector<data::ScoredPair>& val_pairs = {});

// Trains only a projection head to map fixed feature rows onto target rows;
// full-batch steps. Backs the linear convergence checks.
struct LinearFitResult {
  reduce::ProjectionHead head;
  std::vector<double> loss_history;
};
LinearFitResult fit_projection_mse(const linalg::Matrix& features,
                                   const linalg::Matrix& targets, size_t steps,
                                   const TrainConfig& cfg);

// Stored-embedding teacher; row index doubles as the vector id.
struct TeacherOracle {
  linalg::Matrix embeddings;
  std::vector<std::string> sentence_of;  // row -> sentence
  std::map<std::string, uint64_t> id_of;

  std::vector<double> by_id(uint64_t id) const;
  std::vector<double> by_sentence(const std::string& sentence) const;
};

TeacherOracle teacher_from_file(
    const std::string& embeddings_path,
    const std::vector<std::pair<uint64_t, std::string>>& id_to_sentence);

// Embedding closure over copied parameters; optional projection applied on
// top of the pooled encoder output.
evalsts::EmbedFn make_embed_fn(encoder::EncoderParams params,
                               encoder::Vocab vocab,
                               const reduce::ProjectionHead* head = nullptr);

}  // namespace hpd::distill
