#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hpd::linalg {

// Dense row-major matrix of 64-bit reals.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(size_t i, size_t j) { return data[i * cols + j]; }
  double at(size_t i, size_t j) const { return data[i * cols + j]; }

  std::span<double> row(size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(size_t i) const {
    return {data.data() + i * cols, cols};
  }

  static Matrix identity(size_t n);
  bool all_finite() const;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Row mean and the mean-subtracted rows.
struct Centered {
  std::vector<double> mean;
  Matrix centered;
};
Centered center_rows(const Matrix& points);

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues descending; eigenvectors are the columns of `vectors`, each
// with its largest-magnitude component made positive.
struct EighResult {
  std::vector<double> values;
  Matrix vectors;
};
EighResult eigh(const Matrix& sym);

// SVD of E through the Gram matrix E*E^T: V holds left singular vectors,
// singular_values are sqrt of the Gram eigenvalues, ut = V^T E with rows
// rescaled. Suited to PCA where rows(E) stays small.
struct SvdResult {
  Matrix v;                            // rows(E) x rows(E)
  std::vector<double> singular_values; // length rows(E), descending
  Matrix ut;                           // rows(E) x cols(E)
};
SvdResult svd(const Matrix& e);

}  // namespace hpd::linalg
