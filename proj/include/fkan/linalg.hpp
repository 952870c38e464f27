#pragma once

// Small dense helpers: row-major matrix, Cholesky factorization, Thomas
// tridiagonal solve, and a cyclic Jacobi eigensolver for symmetric matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fkan/ad.hpp"

namespace fkan::linalg {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Throws std::runtime_error when a pivot is not positive.
inline Mat cholesky(const Mat& m) {
  if (m.rows != m.cols) throw std::invalid_argument("cholesky: square matrix required");
  const std::size_t n = m.rows;
  Mat L(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      if (i == j) {
        if (s <= 0.0) throw std::runtime_error("cholesky: matrix not positive definite");
        L(i, i) = std::sqrt(s);
      } else {
        L(i, j) = s / L(j, j);
      }
    }
  }
  return L;
}

/// Solves the tridiagonal system with diagonals (lower, diag, upper).
inline std::vector<double> solve_tridiag(std::vector<double> lower,
                                         std::vector<double> diag,
                                         std::vector<double> upper,
                                         std::vector<double> rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double w = lower[i] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<double> x(n);
  x[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
  }
  return x;
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending. Rotations run until the off-diagonal Frobenius norm falls
/// below 1e-12 times the matrix norm.
inline std::vector<double> sym_eigenvalues(const Mat& input) {
  if (input.rows != input.cols) {
    throw std::invalid_argument("sym_eigenvalues: square matrix required");
  }
  const std::size_t n = input.rows;
  double amax = 0.0;
  for (double v : input.a) amax = std::max(amax, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > 1e-9 * std::max(1.0, amax)) {
        throw ContractViolation("sym_eigenvalues: matrix is not symmetric");
      }
    }
  }
  Mat A = input;
  double norm = 0.0;
  for (double v : A.a) norm += v * v;
  norm = std::sqrt(norm);
  const double tol = 1e-12 * std::max(norm, 1e-300);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * A(i, j) * A(i, j);
    }
    if (std::sqrt(off) < tol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = A(i, i);
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  return eig;
}

}  // namespace fkan::linalg
