#pragma once

#include <cstddef>
#include <vector>

#include "arl/common.hpp"

namespace arl {

// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const {
    return a[static_cast<size_t>(i) * cols + j];
  }
  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

  void fill(double v) { std::fill(a.begin(), a.end(), v); }

  bool finite() const {
    for (double x : a)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Column batch: `count` samples of dimension `dim`, stored feature-major so
// that the sample index is the fast axis (v[f * count + s]). This keeps the
// inner loops of batched network passes on unit stride.
struct BatchMat {
  int dim = 0;
  int count = 0;
  std::vector<double> v;

  BatchMat() = default;
  BatchMat(int d, int n) : dim(d), count(n), v(static_cast<size_t>(d) * n, 0.0) {}

  double& at(int f, int s) { return v[static_cast<size_t>(f) * count + s]; }
  double at(int f, int s) const { return v[static_cast<size_t>(f) * count + s]; }
  double* feature(int f) { return v.data() + static_cast<size_t>(f) * count; }
  const double* feature(int f) const {
    return v.data() + static_cast<size_t>(f) * count;
  }

  Vec column(int s) const {
    Vec out(dim);
    for (int f = 0; f < dim; ++f) out[f] = at(f, s);
    return out;
  }

  void set_column(int s, const Vec& x) {
    require(static_cast<int>(x.size()) == dim, "BatchMat::set_column: dim mismatch");
    for (int f = 0; f < dim; ++f) at(f, s) = x[f];
  }
};

// y = W x + b. Accumulation runs over k ascending for every output element;
// the batched kernel below preserves the same order so both paths agree
// bit-for-bit.
inline void matvec_add(const Matrix& w, const Vec& x, const Vec& b, Vec& y) {
  require(static_cast<int>(x.size()) == w.cols, "matvec_add: input dim mismatch");
  require(static_cast<int>(b.size()) == w.rows, "matvec_add: bias dim mismatch");
  y.assign(w.rows, 0.0);
  for (int j = 0; j < w.rows; ++j) {
    const double* wr = w.row(j);
    double acc = b[j];
    for (int k = 0; k < w.cols; ++k) acc += wr[k] * x[k];
    y[j] = acc;
  }
}

// Y = W X + b (broadcast), feature-major batches.
inline void matmul_add(const Matrix& w, const BatchMat& x, const Vec& b,
                       BatchMat& y) {
  require(x.dim == w.cols, "matmul_add: input dim mismatch");
  y = BatchMat(w.rows, x.count);
  const int n = x.count;
  for (int j = 0; j < w.rows; ++j) {
    double* yj = y.feature(j);
    const double bj = b[j];
    for (int s = 0; s < n; ++s) yj[s] = bj;
    const double* wr = w.row(j);
    for (int k = 0; k < w.cols; ++k) {
      const double wjk = wr[k];
      const double* xk = x.feature(k);
      for (int s = 0; s < n; ++s) yj[s] += wjk * xk[s];
    }
  }
}

}  // namespace arl
