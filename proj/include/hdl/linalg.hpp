#pragma once

// Small dense linear algebra over any scalar the autodiff types model.
// Sizes here are tiny (2k x 2k for k constraints), so everything is plain
// row-major storage with O(n^3) algorithms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "hdl/autodiff.hpp"
#include "hdl/errors.hpp"

namespace hdl::linalg {

template <class S>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, S(0.0)) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  S& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const S& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<S> data_;
};

// Gaussian elimination with partial pivoting. Returns nullopt when the
// smallest pivot falls below rank_tol times the largest, i.e. the matrix is
// numerically rank deficient.
template <class S>
std::optional<std::vector<S>> lu_solve(Matrix<S> a, std::vector<S> b, double rank_tol = 1e-12) {
  using ad::value_of;
  const std::size_t n = a.rows();
  double max_pivot = 0.0;
  double min_pivot = INFINITY;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::abs(value_of(a(col, col)));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double cand = std::abs(value_of(a(r, col)));
      if (cand > best) {
        best = cand;
        piv = r;
      }
    }
    max_pivot = std::max(max_pivot, best);
    min_pivot = std::min(min_pivot, best);
    if (best == 0.0) return std::nullopt;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
      std::swap(b[col], b[piv]);
    }
    const S inv = S(1.0) / a(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      if constexpr (std::is_same_v<S, double>) {
        if (a(r, col) == 0.0) continue;
      }
      const S f = a(r, col) * inv;
      for (std::size_t c = col + 1; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  if (n > 0 && min_pivot < rank_tol * max_pivot) return std::nullopt;
  std::vector<S> x(n);
  for (std::size_t i = n; i-- > 0;) {
    S acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a(i, c) * x[c];
    x[i] = acc / a(i, i);
  }
  return x;
}

// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
// eigenvalues and the column eigenvector matrix.
template <class S>
std::pair<std::vector<S>, Matrix<S>> symmetric_eigen(Matrix<S> a, int max_sweeps = 100) {
  using ad::value_of;
  using std::sqrt;
  const std::size_t n = a.rows();
  Matrix<S> v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = S(1.0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += value_of(a(i, i)) * value_of(a(i, i));
      for (std::size_t j = i + 1; j < n; ++j) off += value_of(a(i, j)) * value_of(a(i, j));
    }
    if (off <= 1e-30 * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (value_of(a(p, q)) == 0.0) continue;
        const S theta = (a(q, q) - a(p, p)) / (S(2.0) * a(p, q));
        const double sign = value_of(theta) >= 0.0 ? 1.0 : -1.0;
        const S abs_theta = value_of(theta) >= 0.0 ? theta : -theta;
        const S t = S(sign) / (abs_theta + sqrt(theta * theta + S(1.0)));
        const S c = S(1.0) / sqrt(t * t + S(1.0));
        const S s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const S akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const S apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const S vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<S> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = a(i, i);
  return {w, v};
}

// Least-squares solution x = A^+ b via the eigen-decomposition of A^T A.
// Singular values below cutoff * sigma_max are discarded. Throws when no
// singular value survives.
template <class S>
std::vector<S> pinv_solve(const Matrix<S>& a, const std::vector<S>& b, double cutoff = 1e-10) {
  using ad::value_of;
  const std::size_t m = a.rows(), n = a.cols();
  Matrix<S> ata(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      S acc(0.0);
      for (std::size_t r = 0; r < m; ++r) acc += a(r, i) * a(r, j);
      ata(i, j) = acc;
    }
  std::vector<S> atb(n, S(0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < m; ++r) atb[i] += a(r, i) * b[r];
  auto [w, v] = symmetric_eigen(ata);
  double wmax = 0.0;
  for (const S& wi : w) wmax = std::max(wmax, value_of(wi));
  if (!(wmax > 0.0)) throw SingularConstraintError("constraint system has no usable singular values");
  const double floor = cutoff * cutoff * wmax;  // sigma^2 cutoff
  std::vector<S> x(n, S(0.0));
  int kept = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (value_of(w[k]) <= floor) continue;
    ++kept;
    S proj(0.0);
    for (std::size_t i = 0; i < n; ++i) proj += v(i, k) * atb[i];
    proj = proj / w[k];
    for (std::size_t i = 0; i < n; ++i) x[i] += v(i, k) * proj;
  }
  if (kept == 0) throw SingularConstraintError("constraint system is singular");
  return x;
}

// LU first; least squares when the pivots reveal rank deficiency.
template <class S>
std::vector<S> solve(const Matrix<S>& a, const std::vector<S>& b) {
  if (auto x = lu_solve(a, b)) return *x;
  return pinv_solve(a, b);
}

}  // namespace hdl::linalg
