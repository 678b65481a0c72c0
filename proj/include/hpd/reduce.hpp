#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hpd/linalg.hpp"

namespace hpd::reduce {

// Mean vector and orthonormal projection columns fitted on a sample;
// explained_variances are the leading eigenvalues of the sample covariance.
struct PcaTransform {
  std::vector<double> mean;        // width d'
  linalg::Matrix weights;          // d' x d, orthonormal columns
  std::vector<double> explained_variances;  // length d, descending
};

struct PcaFitInfo {
  size_t rank = 0;
  bool degenerate = false;  // near-equal eigenvalues around/inside the cut
  std::vector<std::string> warnings;
};

// mean/center/SVD/truncate; throws InputError when the sample is too small
// (needs m >= d+1) or d >= d'.
PcaTransform fit_pca(const linalg::Matrix& samples, size_t d,
                     PcaFitInfo* info = nullptr);

// W^T (e - mean)
std::vector<double> apply_pca(const PcaTransform& t, std::span<const double> e);
linalg::Matrix apply_pca_rows(const PcaTransform& t, const linalg::Matrix& rows);

// Eigenvectors scaled by lambda^(-1/2): output covariance of the fit sample
// is the identity.
struct WhiteningTransform {
  std::vector<double> mean;  // width d'
  linalg::Matrix weights;    // d' x d
};

WhiteningTransform fit_whitening(const linalg::Matrix& samples, size_t d);
std::vector<double> apply_whitening(const WhiteningTransform& t,
                                    std::span<const double> e);
linalg::Matrix apply_whitening_rows(const WhiteningTransform& t,
                                    const linalg::Matrix& rows);

// Learnable affine reduction attached to the student: W^T e + b.
struct ProjectionHead {
  linalg::Matrix weights;    // d'_s x d
  std::vector<double> bias;  // width d
};

std::vector<double> project(const ProjectionHead& head, std::span<const double> e);

struct ProjectionGrads {
  linalg::Matrix grad_weights;
  std::vector<double> grad_bias;
  std::vector<double> grad_input;
};
// grad_b = upstream; grad_W = e * upstream^T; grad_e = W * upstream
ProjectionGrads project_backward(const ProjectionHead& head,
                                 std::span<const double> e,
                                 std::span<const double> upstream);

// Scaled-Gaussian init, std 1/sqrt(d'_s).
ProjectionHead init_projection(size_t input_dim, size_t output_dim,
                               uint64_t seed);

// Teacher PCA weights truncated/zero-padded to the student width; bias set
// so the head reproduces the teacher transform when widths coincide.
ProjectionHead warm_start_projection(const PcaTransform& teacher_pca,
                                     size_t input_dim);

// Folds whitening fitted on head outputs into the head itself:
// Ww^T(W^T e + b - mw) = (W Ww)^T e + Ww^T (b - mw).
ProjectionHead compose_whitening(const ProjectionHead& head,
                                 const WhiteningTransform& post);

}  // namespace hpd::reduce
