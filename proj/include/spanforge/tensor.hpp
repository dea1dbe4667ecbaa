#pragma once

// Minimal dense 2-D tensor of doubles. 64-bit throughout so finite-difference
// checks have headroom.

#include <cmath>
#include <string>
#include <vector>

#include "spanforge/common.hpp"

namespace spanforge {

struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const {
    return a.data() + static_cast<size_t>(r) * cols;
  }
  size_t size() const { return a.size(); }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

// out = x * w, shapes (n×k)·(k×m)
inline void matmul(const Mat& x, const Mat& w, Mat& out) {
  if (x.cols != w.rows || out.rows != x.rows || out.cols != w.cols)
    throw ShapeMismatch("matmul " + std::to_string(x.rows) + "x" +
                        std::to_string(x.cols) + " * " +
                        std::to_string(w.rows) + "x" + std::to_string(w.cols));
  out.zero();
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double* oi = out.row(i);
    for (int k = 0; k < x.cols; ++k) {
      double v = xi[k];
      if (v == 0.0) continue;
      const double* wk = w.row(k);
      for (int j = 0; j < w.cols; ++j) oi[j] += v * wk[j];
    }
  }
}

// out += x^T * y, shapes (n×k)^T·(n×m) -> (k×m); gradient accumulation
inline void matmul_at_b_acc(const Mat& x, const Mat& y, Mat& out) {
  if (x.rows != y.rows || out.rows != x.cols || out.cols != y.cols)
    throw ShapeMismatch("matmul_at_b");
  for (int n = 0; n < x.rows; ++n) {
    const double* xn = x.row(n);
    const double* yn = y.row(n);
    for (int k = 0; k < x.cols; ++k) {
      double v = xn[k];
      if (v == 0.0) continue;
      double* ok = out.row(k);
      for (int j = 0; j < y.cols; ++j) ok[j] += v * yn[j];
    }
  }
}

// out = x * w^T, shapes (n×m)·(k×m)^T -> (n×k)
inline void matmul_bt(const Mat& x, const Mat& w, Mat& out) {
  if (x.cols != w.cols || out.rows != x.rows || out.cols != w.rows)
    throw ShapeMismatch("matmul_bt");
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double* oi = out.row(i);
    for (int k = 0; k < w.rows; ++k) {
      const double* wk = w.row(k);
      double s = 0.0;
      for (int j = 0; j < x.cols; ++j) s += xi[j] * wk[j];
      oi[k] = s;
    }
  }
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

inline bool all_finite(const Mat& m) {
  for (double v : m.a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace spanforge
