#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace osha::nn {

// Dense row-major matrix of doubles. All graph values and gradients use it;
// vectors are 1xN rows.
struct Mat {
  int r = 0, c = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int rows, int cols, double fill = 0.0)
      : r(rows), c(cols), a(static_cast<std::size_t>(rows) * cols, fill) {}

  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * c + j]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * c + j]; }
  std::size_t size() const { return a.size(); }
  bool same_shape(const Mat& o) const { return r == o.r && c == o.c; }

  static Mat row(std::initializer_list<double> xs) {
    Mat m(1, static_cast<int>(xs.size()));
    int j = 0;
    for (double x : xs) m.a[j++] = x;
    return m;
  }
};

inline Mat xavier(int rows, int cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat m(rows, cols);
  for (auto& x : m.a) x = u(rng);
  return m;
}

// C = A * B, written with an ikj loop so the inner loop vectorizes.
inline void matmul_into(const Mat& A, const Mat& B, Mat& C) {
  assert(A.c == B.r && C.r == A.r && C.c == B.c);
  std::fill(C.a.begin(), C.a.end(), 0.0);
  for (int i = 0; i < A.r; ++i) {
    const double* arow = &A.a[static_cast<std::size_t>(i) * A.c];
    double* crow = &C.a[static_cast<std::size_t>(i) * C.c];
    for (int k = 0; k < A.c; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &B.a[static_cast<std::size_t>(k) * B.c];
      for (int j = 0; j < B.c; ++j) crow[j] += aik * brow[j];
    }
  }
}

// C += A^T * B
inline void matmul_at_b_acc(const Mat& A, const Mat& B, Mat& C) {
  assert(A.r == B.r && C.r == A.c && C.c == B.c);
  for (int k = 0; k < A.r; ++k) {
    const double* arow = &A.a[static_cast<std::size_t>(k) * A.c];
    const double* brow = &B.a[static_cast<std::size_t>(k) * B.c];
    for (int i = 0; i < A.c; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = &C.a[static_cast<std::size_t>(i) * C.c];
      for (int j = 0; j < B.c; ++j) crow[j] += aki * brow[j];
    }
  }
}

// C += A * B^T
inline void matmul_a_bt_acc(const Mat& A, const Mat& B, Mat& C) {
  assert(A.c == B.c && C.r == A.r && C.c == B.r);
  for (int i = 0; i < A.r; ++i) {
    const double* arow = &A.a[static_cast<std::size_t>(i) * A.c];
    double* crow = &C.a[static_cast<std::size_t>(i) * C.c];
    for (int j = 0; j < B.r; ++j) {
      const double* brow = &B.a[static_cast<std::size_t>(j) * B.c];
      double acc = 0.0;
      for (int k = 0; k < A.c; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  }
}

} // namespace osha::nn
