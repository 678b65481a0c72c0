#include "hpd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hpd/errors.hpp"

namespace hpd::linalg {

Matrix Matrix::identity(size_t n) {
  Matrix m(n, n);
  for (size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: inner dimensions differ (" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) +
                     ")");
  }
  Matrix out(a.rows, b.cols);
  // i-k-j order: streams over rows of b, deterministic accumulation
  for (size_t i = 0; i < a.rows; ++i) {
    double* out_row = out.data.data() + i * out.cols;
    for (size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      const double* b_row = b.data.data() + k * b.cols;
      for (size_t j = 0; j < b.cols; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Centered center_rows(const Matrix& points) {
  if (points.rows == 0) throw InputError("center_rows: no rows");
  Centered result;
  result.mean.assign(points.cols, 0.0);
  for (size_t i = 0; i < points.rows; ++i)
    for (size_t j = 0; j < points.cols; ++j)
      result.mean[j] += points.at(i, j);
  for (double& m : result.mean) m /= static_cast<double>(points.rows);
  result.centered = Matrix(points.rows, points.cols);
  for (size_t i = 0; i < points.rows; ++i)
    for (size_t j = 0; j < points.cols; ++j)
      result.centered.at(i, j) = points.at(i, j) - result.mean[j];
  return result;
}

namespace {

constexpr size_t kMaxJacobiSweeps = 64;

double offdiag_norm(const Matrix& a) {
  double s = 0.0;
  for (size_t p = 0; p + 1 < a.rows; ++p)
    for (size_t q = p + 1; q < a.cols; ++q) s += a.at(p, q) * a.at(p, q);
  return std::sqrt(2.0 * s);
}

// Flip each column so its largest-magnitude entry is positive; first such
// entry wins on ties. Keeps eigenvector output deterministic.
void fix_column_signs(Matrix& vecs) {
  for (size_t j = 0; j < vecs.cols; ++j) {
    size_t arg = 0;
    double best = 0.0;
    for (size_t i = 0; i < vecs.rows; ++i) {
      const double mag = std::fabs(vecs.at(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (vecs.at(arg, j) < 0.0) {
      for (size_t i = 0; i < vecs.rows; ++i) vecs.at(i, j) = -vecs.at(i, j);
    }
  }
}

}  // namespace

EighResult eigh(const Matrix& sym) {
  if (sym.rows != sym.cols) {
    throw ShapeError("eigh: matrix is " + std::to_string(sym.rows) + "x" +
                     std::to_string(sym.cols) + ", expected square");
  }
  const size_t n = sym.rows;
  double max_abs = 0.0;
  for (double v : sym.data) max_abs = std::max(max_abs, std::fabs(v));
  const double sym_tol = 1e-9 * std::max(1.0, max_abs);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (std::fabs(sym.at(i, j) - sym.at(j, i)) > sym_tol) {
        throw InputError("eigh: input is not symmetric at (" +
                         std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }

  Matrix a = sym;
  // enforce exact symmetry so rotations stay consistent
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      a.at(j, i) = a.at(i, j) = 0.5 * (a.at(i, j) + a.at(j, i));

  Matrix v = Matrix::identity(n);
  double frob = 0.0;
  for (double x : a.data) frob += x * x;
  frob = std::sqrt(frob);
  const double tol = 1e-14 * std::max(1.0, frob);

  size_t sweep = 0;
  for (; sweep < kMaxJacobiSweeps; ++sweep) {
    if (offdiag_norm(a) <= tol) break;
    for (size_t p = 0; p + 1 < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::fabs(apq) <= tol / static_cast<double>(n)) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // rotate rows/cols p,q of a
        for (size_t i = 0; i < n; ++i) {
          const double aip = a.at(i, p);
          const double aiq = a.at(i, q);
          a.at(i, p) = c * aip - s * aiq;
          a.at(i, q) = s * aip + c * aiq;
        }
        for (size_t i = 0; i < n; ++i) {
          const double api = a.at(p, i);
          const double aqi = a.at(q, i);
          a.at(p, i) = c * api - s * aqi;
          a.at(q, i) = s * api + c * aqi;
        }
        // accumulate eigenvectors
        for (size_t i = 0; i < n; ++i) {
          const double vip = v.at(i, p);
          const double viq = v.at(i, q);
          v.at(i, p) = c * vip - s * viq;
          v.at(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  if (sweep == kMaxJacobiSweeps && offdiag_norm(a) > tol) {
    throw NumericalError("eigh: Jacobi did not converge after " +
                         std::to_string(kMaxJacobiSweeps) + " sweeps");
  }

  // sort descending; stable keeps diagonal order for tied eigenvalues
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return a.at(x, x) > a.at(y, y);
  });

  EighResult result;
  result.values.resize(n);
  result.vectors = Matrix(n, n);
  for (size_t j = 0; j < n; ++j) {
    result.values[j] = a.at(order[j], order[j]);
    for (size_t i = 0; i < n; ++i)
      result.vectors.at(i, j) = v.at(i, order[j]);
  }
  fix_column_signs(result.vectors);
  return result;
}

SvdResult svd(const Matrix& e) {
  if (!e.all_finite()) throw InputError("svd: input has non-finite entries");
  const size_t r = e.rows;
  const size_t c = e.cols;

  // Gram matrix E E^T, r x r
  Matrix gram(r, r);
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = i; j < r; ++j) {
      const double g = dot(e.row(i), e.row(j));
      gram.at(i, j) = g;
      gram.at(j, i) = g;
    }
  }

  EighResult eig = eigh(gram);

  SvdResult result;
  result.v = std::move(eig.vectors);
  result.singular_values.resize(r);
  for (size_t i = 0; i < r; ++i)
    result.singular_values[i] = std::sqrt(std::max(0.0, eig.values[i]));

  // U^T = diag(1/s) V^T E; rows for (near-)zero singular values are zeroed,
  // they contribute nothing to the reconstruction.
  result.ut = Matrix(r, c);
  const double s_floor =
      result.singular_values.empty()
          ? 0.0
          : result.singular_values[0] * 1e-12;
  for (size_t i = 0; i < r; ++i) {
    const double s = result.singular_values[i];
    if (s <= s_floor) continue;
    for (size_t j = 0; j < c; ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < r; ++k) acc += result.v.at(k, i) * e.at(k, j);
      result.ut.at(i, j) = acc / s;
    }
  }
  return result;
}

}  // namespace hpd::linalg
