#include "hpd/reduce.hpp"

#include <cmath>
#include <cstdio>

#include "hpd/errors.hpp"
#include "hpd/rng.hpp"

namespace hpd::reduce {

namespace {

// Covariance eigendecomposition shared by PCA and whitening: returns
// eigenvalues of (1/m) E E^T descending, eigenvectors as columns.
linalg::EighResult covariance_eigh(const linalg::Matrix& samples,
                                   std::vector<double>* mean_out) {
  auto [mean, centered] = linalg::center_rows(samples);
  linalg::Matrix gram =
      linalg::matmul(linalg::transpose(centered), centered);
  const double inv_m = 1.0 / static_cast<double>(samples.rows);
  for (double& g : gram.data) g *= inv_m;
  auto eig = linalg::eigh(gram);
  if (mean_out) *mean_out = std::move(mean);
  return eig;
}

void check_fit_args(const linalg::Matrix& samples, size_t d) {
  if (d < 1) throw InputError("target dimension must be >= 1");
  if (samples.rows < d + 1) {
    throw InputError("need at least " + std::to_string(d + 1) +
                     " samples to fit " + std::to_string(d) +
                     " components, got " + std::to_string(samples.rows));
  }
}

linalg::Matrix leading_columns(const linalg::Matrix& vectors, size_t d) {
  linalg::Matrix w(vectors.rows, d);
  for (size_t i = 0; i < vectors.rows; ++i)
    for (size_t j = 0; j < d; ++j) w.at(i, j) = vectors.at(i, j);
  return w;
}

}  // namespace

PcaTransform fit_pca(const linalg::Matrix& samples, size_t d,
                     PcaFitInfo* info) {
  check_fit_args(samples, d);
  if (d >= samples.cols) {
    throw InputError("target dimension " + std::to_string(d) +
                     " must be below input width " +
                     std::to_string(samples.cols));
  }

  PcaTransform t;
  auto eig = covariance_eigh(samples, &t.mean);
  t.weights = leading_columns(eig.vectors, d);
  t.explained_variances.assign(eig.values.begin(), eig.values.begin() + d);

  if (info) {
    *info = PcaFitInfo{};
    const double top = eig.values.front() > 0.0 ? eig.values.front() : 0.0;
    const double rank_tol = top * 1e-12;
    for (double v : eig.values)
      if (v > rank_tol) ++info->rank;
    if (info->rank < d) {
      info->warnings.push_back(
          "sample rank " + std::to_string(info->rank) + " is below target " +
          std::to_string(d) + "; trailing components carry zero variance");
    }
    const double lead = t.explained_variances.back();
    const double next = eig.values[d];  // d < cols, so index is valid
    if (std::abs(lead - next) <= 1e-9 * std::max(1.0, std::abs(lead))) {
      info->degenerate = true;
      info->warnings.push_back(
          "eigenvalues straddling the cut are nearly equal; the retained "
          "basis is not unique");
    }
  }
  return t;
}

std::vector<double> apply_pca(const PcaTransform& t, std::span<const double> e) {
  const size_t in = t.weights.rows;
  const size_t out = t.weights.cols;
  if (e.size() != in) {
    throw ShapeError("apply_pca: expected width " + std::to_string(in) +
                     ", got " + std::to_string(e.size()));
  }
  std::vector<double> h(out, 0.0);
  for (size_t i = 0; i < in; ++i) {
    const double c = e[i] - t.mean[i];
    const double* wrow = &t.weights.data[i * out];
    for (size_t j = 0; j < out; ++j) h[j] += wrow[j] * c;
  }
  return h;
}

linalg::Matrix apply_pca_rows(const PcaTransform& t, const linalg::Matrix& rows) {
  linalg::Matrix out(rows.rows, t.weights.cols);
  for (size_t r = 0; r < rows.rows; ++r) {
    auto h = apply_pca(t, rows.row(r));
    std::copy(h.begin(), h.end(), &out.data[r * out.cols]);
  }
  return out;
}

WhiteningTransform fit_whitening(const linalg::Matrix& samples, size_t d) {
  check_fit_args(samples, d);
  if (d > samples.cols) {
    throw InputError("whitening dimension " + std::to_string(d) +
                     " exceeds input width " + std::to_string(samples.cols));
  }

  WhiteningTransform t;
  auto eig = covariance_eigh(samples, &t.mean);
  for (size_t j = 0; j < d; ++j) {
    if (eig.values[j] <= 1e-12) {
      throw DomainError("cannot whiten: component " + std::to_string(j) +
                        " has near-zero variance " +
                        std::to_string(eig.values[j]));
    }
  }
  t.weights = leading_columns(eig.vectors, d);
  for (size_t j = 0; j < d; ++j) {
    const double scale = 1.0 / std::sqrt(eig.values[j]);
    for (size_t i = 0; i < t.weights.rows; ++i) t.weights.at(i, j) *= scale;
  }
  return t;
}

std::vector<double> apply_whitening(const WhiteningTransform& t,
                                    std::span<const double> e) {
  PcaTransform view{t.mean, t.weights, {}};
  return apply_pca(view, e);
}

linalg::Matrix apply_whitening_rows(const WhiteningTransform& t,
                                    const linalg::Matrix& rows) {
  PcaTransform view{t.mean, t.weights, {}};
  return apply_pca_rows(view, rows);
}

std::vector<double> project(const ProjectionHead& head,
                            std::span<const double> e) {
  const size_t in = head.weights.rows;
  const size_t out = head.weights.cols;
  if (e.size() != in) {
    throw ShapeError("project: expected width " + std::to_string(in) +
                     ", got " + std::to_string(e.size()));
  }
  std::vector<double> h(head.bias);
  for (size_t i = 0; i < in; ++i) {
    const double ei = e[i];
    const double* wrow = &head.weights.data[i * out];
    for (size_t j = 0; j < out; ++j) h[j] += wrow[j] * ei;
  }
  return h;
}

ProjectionGrads project_backward(const ProjectionHead& head,
                                 std::span<const double> e,
                                 std::span<const double> upstream) {
  const size_t in = head.weights.rows;
  const size_t out = head.weights.cols;
  if (e.size() != in) {
    throw ShapeError("project_backward: input width " +
                     std::to_string(e.size()) + " vs head " +
                     std::to_string(in));
  }
  if (upstream.size() != out) {
    throw ShapeError("project_backward: upstream width " +
                     std::to_string(upstream.size()) + " vs head " +
                     std::to_string(out));
  }
  ProjectionGrads g;
  g.grad_bias.assign(upstream.begin(), upstream.end());
  g.grad_weights = linalg::Matrix(in, out);
  g.grad_input.assign(in, 0.0);
  for (size_t i = 0; i < in; ++i) {
    const double* wrow = &head.weights.data[i * out];
    double* grow = &g.grad_weights.data[i * out];
    double acc = 0.0;
    for (size_t j = 0; j < out; ++j) {
      grow[j] = e[i] * upstream[j];
      acc += wrow[j] * upstream[j];
    }
    g.grad_input[i] = acc;
  }
  return g;
}

ProjectionHead init_projection(size_t input_dim, size_t output_dim,
                               uint64_t seed) {
  if (input_dim < 1 || output_dim < 1 || output_dim >= input_dim) {
    throw InputError("projection needs 1 <= output dim < input dim");
  }
  ProjectionHead head;
  head.weights = linalg::Matrix(input_dim, output_dim);
  Rng rng(seed);
  const double std = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : head.weights.data) w = rng.normal(0.0, std);
  head.bias.assign(output_dim, 0.0);
  return head;
}

ProjectionHead warm_start_projection(const PcaTransform& teacher_pca,
                                     size_t input_dim) {
  const size_t d = teacher_pca.weights.cols;
  if (input_dim <= d) {
    throw InputError("student width " + std::to_string(input_dim) +
                     " must exceed target dimension " + std::to_string(d));
  }
  ProjectionHead head;
  head.weights = linalg::Matrix(input_dim, d);
  const size_t copy_rows = std::min(input_dim, teacher_pca.weights.rows);
  for (size_t i = 0; i < copy_rows; ++i)
    for (size_t j = 0; j < d; ++j)
      head.weights.at(i, j) = teacher_pca.weights.at(i, j);

  // b = -W^T mean, so the head equals the teacher transform on shared width.
  head.bias.assign(d, 0.0);
  for (size_t i = 0; i < teacher_pca.weights.rows; ++i)
    for (size_t j = 0; j < d; ++j)
      head.bias[j] -= teacher_pca.weights.at(i, j) * teacher_pca.mean[i];
  return head;
}

ProjectionHead compose_whitening(const ProjectionHead& head,
                                 const WhiteningTransform& post) {
  if (post.mean.size() != head.bias.size()) {
    throw ShapeError("compose_whitening: whitening width " +
                     std::to_string(post.mean.size()) +
                     " vs head output " + std::to_string(head.bias.size()));
  }
  ProjectionHead out;
  out.weights = linalg::matmul(head.weights, post.weights);
  out.bias.assign(post.weights.cols, 0.0);
  for (size_t i = 0; i < post.weights.rows; ++i) {
    const double shifted = head.bias[i] - post.mean[i];
    for (size_t j = 0; j < post.weights.cols; ++j)
      out.bias[j] += post.weights.at(i, j) * shifted;
  }
  return out;
}

}  // namespace hpd::reduce
