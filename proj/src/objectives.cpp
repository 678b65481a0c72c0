#include "hpd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hpd/errors.hpp"
#include "hpd/rng.hpp"

namespace hpd::objectives {

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_sim: widths differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  const double na = linalg::norm2(a);
  const double nb = linalg::norm2(b);
  if (na == 0.0 || nb == 0.0) {
    throw DomainError("cosine_sim: zero-norm input");
  }
  return std::clamp(linalg::dot(a, b) / (na * nb), -1.0, 1.0);
}

namespace {

// d sim(a,b)/da = b/(|a||b|) - sim * a/|a|^2, accumulated with weight w.
void add_cosine_grad(std::span<const double> a, std::span<const double> b,
                     double sim, double w, std::span<double> ga,
                     std::span<double> gb) {
  const double na = linalg::norm2(a);
  const double nb = linalg::norm2(b);
  const double inv = 1.0 / (na * nb);
  for (size_t j = 0; j < a.size(); ++j) {
    ga[j] += w * (b[j] * inv - sim * a[j] / (na * na));
    gb[j] += w * (a[j] * inv - sim * b[j] / (nb * nb));
  }
}

void check_batch(const TripletBatch& batch) {
  const auto& a = batch.anchors;
  if (a.rows < 1) throw InputError("contrastive_loss: empty batch");
  if (batch.positives.rows != a.rows || batch.negatives.rows != a.rows ||
      batch.positives.cols != a.cols || batch.negatives.cols != a.cols) {
    throw ShapeError("contrastive_loss: anchor/positive/negative shapes differ");
  }
  auto check_rows = [](const linalg::Matrix& m, const char* which) {
    for (size_t i = 0; i < m.rows; ++i) {
      if (linalg::norm2(m.row(i)) == 0.0) {
        throw DomainError(std::string("contrastive_loss: zero-norm ") + which +
                          " row " + std::to_string(i));
      }
    }
  };
  check_rows(batch.anchors, "anchor");
  check_rows(batch.positives, "positive");
  check_rows(batch.negatives, "negative");
}

}  // namespace

ContrastiveResult contrastive_loss(const TripletBatch& batch,
                                   const ContrastiveConfig& cfg) {
  if (cfg.temperature <= 0.0) {
    throw InputError("contrastive_loss: temperature must be positive");
  }
  check_batch(batch);
  const size_t n = batch.anchors.rows;
  const size_t d = batch.anchors.cols;
  const double inv_tau = 1.0 / cfg.temperature;

  // logits[i][j]: j < n pairs anchor i with positive j, j >= n with negative j-n
  linalg::Matrix sims(n, 2 * n);
  linalg::Matrix probs(n, 2 * n);
  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double maxz = -1e300;
    for (size_t j = 0; j < 2 * n; ++j) {
      const auto other = j < n ? batch.positives.row(j) : batch.negatives.row(j - n);
      sims.at(i, j) = cosine_sim(batch.anchors.row(i), other);
      maxz = std::max(maxz, sims.at(i, j) * inv_tau);
    }
    double denom = 0.0;
    for (size_t j = 0; j < 2 * n; ++j) {
      probs.at(i, j) = std::exp(sims.at(i, j) * inv_tau - maxz);
      denom += probs.at(i, j);
    }
    for (size_t j = 0; j < 2 * n; ++j) probs.at(i, j) /= denom;
    const double li = -(sims.at(i, i) * inv_tau - maxz) + std::log(denom);
    if (!std::isfinite(li)) {
      throw NumericalError("contrastive_loss: non-finite loss at row " +
                           std::to_string(i));
    }
    loss += li;
  }
  loss /= static_cast<double>(n);

  ContrastiveResult result;
  result.loss = loss;
  result.grad_anchors = linalg::Matrix(n, d);
  result.grad_positives = linalg::Matrix(n, d);
  result.grad_negatives = linalg::Matrix(n, d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < 2 * n; ++j) {
      double g = probs.at(i, j);
      if (j == i) g -= 1.0;
      g *= inv_n * inv_tau;
      if (g == 0.0) continue;
      if (j < n) {
        add_cosine_grad(batch.anchors.row(i), batch.positives.row(j),
                        sims.at(i, j), g, result.grad_anchors.row(i),
                        result.grad_positives.row(j));
      } else {
        add_cosine_grad(batch.anchors.row(i), batch.negatives.row(j - n),
                        sims.at(i, j), g, result.grad_anchors.row(i),
                        result.grad_negatives.row(j - n));
      }
    }
  }
  return result;
}

MseResult mse_loss(const linalg::Matrix& student, const linalg::Matrix& teacher) {
  if (student.rows != teacher.rows || student.cols != teacher.cols) {
    throw ShapeError("mse_loss: shapes differ");
  }
  if (student.rows == 0) throw InputError("mse_loss: empty input");
  MseResult result;
  result.grad_student = linalg::Matrix(student.rows, student.cols);
  const double inv_m = 1.0 / static_cast<double>(student.rows);
  for (size_t i = 0; i < student.rows; ++i) {
    for (size_t j = 0; j < student.cols; ++j) {
      const double diff = student.at(i, j) - teacher.at(i, j);
      result.loss += diff * diff * inv_m;
      result.grad_student.at(i, j) = 2.0 * inv_m * diff;
    }
  }
  return result;
}

double finite_diff_check(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::span<double> x, std::span<const double> analytic_grad, size_t samples,
    double step, uint64_t seed) {
  if (step <= 0.0) throw InputError("finite_diff_check: step must be positive");
  if (x.size() != analytic_grad.size()) {
    throw ShapeError("finite_diff_check: gradient width mismatch");
  }
  Rng rng(seed);
  double max_rel = 0.0;
  for (size_t s = 0; s < samples; ++s) {
    const size_t idx = static_cast<size_t>(rng.below(x.size()));
    const double saved = x[idx];
    x[idx] = saved + step;
    const double up = loss_fn(x);
    x[idx] = saved - step;
    const double down = loss_fn(x);
    x[idx] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = analytic_grad[idx];
    const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
    max_rel = std::max(max_rel, std::fabs(numeric - analytic) / denom);
  }
  return max_rel;
}

}  // namespace hpd::objectives
