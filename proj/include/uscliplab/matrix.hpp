#pragma once

#include <stdexcept>
#include <vector>

namespace usclip {

// Dense row-major matrix of doubles. Deliberately minimal: the model code
// writes its own loops, this is just a shape-checked container.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative shape");
  }

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return a.size(); }
};

// A (n x d) times B^T (m x d) -> n x m. Used for cosine tables where both
// operands are stored row-major by sample.
inline Mat matmul_nt(const Mat& A, const Mat& B) {
  if (A.cols != B.cols) throw std::invalid_argument("matmul_nt: inner dims differ");
  Mat C(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    for (int j = 0; j < B.rows; ++j) {
      const double* bj = B.row(j);
      double s = 0.0;
      for (int k = 0; k < A.cols; ++k) s += ai[k] * bj[k];
      C.at(i, j) = s;
    }
  }
  return C;
}

// Plain A (n x k) times B (k x m).
inline Mat matmul(const Mat& A, const Mat& B) {
  if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dims differ");
  Mat C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    for (int k = 0; k < A.cols; ++k) {
      double v = ai[k];
      if (v == 0.0) continue;
      const double* bk = B.row(k);
      double* ci = C.row(i);
      for (int j = 0; j < B.cols; ++j) ci[j] += v * bk[j];
    }
  }
  return C;
}

// A^T (n x d -> d x n) times B (n x m) -> d x m accumulation helper.
inline Mat matmul_tn(const Mat& A, const Mat& B) {
  if (A.rows != B.rows) throw std::invalid_argument("matmul_tn: outer dims differ");
  Mat C(A.cols, B.cols);
  for (int n = 0; n < A.rows; ++n) {
    const double* an = A.row(n);
    const double* bn = B.row(n);
    for (int d = 0; d < A.cols; ++d) {
      double v = an[d];
      if (v == 0.0) continue;
      double* cd = C.row(d);
      for (int m = 0; m < B.cols; ++m) cd[m] += v * bn[m];
    }
  }
  return C;
}

}  // namespace usclip
