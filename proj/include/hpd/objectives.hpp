#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "hpd/linalg.hpp"

namespace hpd::objectives {

// Anchor/positive/negative embedding rows, all N x d.
struct TripletBatch {
  linalg::Matrix anchors;
  linalg::Matrix positives;
  linalg::Matrix negatives;
};

struct ContrastiveConfig {
  double temperature = 0.05;
};

// a.b / (|a||b|), clamped to [-1, 1].
double cosine_sim(std::span<const double> a, std::span<const double> b);

// Softmax cross-entropy over in-batch positives and hard negatives. Loss is
// the batch mean; gradients cover every anchor/positive/negative row.
struct ContrastiveResult {
  double loss = 0.0;
  linalg::Matrix grad_anchors;
  linalg::Matrix grad_positives;
  linalg::Matrix grad_negatives;
};
ContrastiveResult contrastive_loss(const TripletBatch& batch,
                                   const ContrastiveConfig& cfg);

// (1/M) sum_i |student_i - teacher_i|^2 with gradient over student rows.
struct MseResult {
  double loss = 0.0;
  linalg::Matrix grad_student;
};
MseResult mse_loss(const linalg::Matrix& student, const linalg::Matrix& teacher);

// Central-difference probe of an analytic gradient on `samples` random
// coordinates of x. Returns the max relative error observed.
double finite_diff_check(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::span<double> x, std::span<const double> analytic_grad, size_t samples,
    double step, uint64_t seed);

}  // namespace hpd::objectives
