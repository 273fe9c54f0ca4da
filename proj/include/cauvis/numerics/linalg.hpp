#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "cauvis/numerics/matrix.hpp"

namespace cauvis {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + a.shape_str() + " x " + b.shape_str() +
                     ")");
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// aᵀ·b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: row counts differ (" + a.shape_str() + ", " + b.shape_str() + ")");
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.row(k).data();
    const double* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

// a·bᵀ without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: column counts differ (" + a.shape_str() + ", " + b.shape_str() +
                     ")");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename F>
Matrix map(const Matrix& a, F&& f) {
  Matrix out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Matrix zip(const Matrix& a, const Matrix& b, F&& f, const char* op) {
  require_same_shape(a, b, op);
  Matrix out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  return zip(a, b, [](double x, double y) { return x + y; }, "add");
}
inline Matrix sub(const Matrix& a, const Matrix& b) {
  return zip(a, b, [](double x, double y) { return x - y; }, "sub");
}
inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  return zip(a, b, [](double x, double y) { return x * y; }, "hadamard");
}
inline Matrix scale(const Matrix& a, double s) {
  return map(a, [s](double x) { return x * s; });
}

inline void add_inplace(Matrix& acc, const Matrix& b) {
  require_same_shape(acc, b, "add_inplace");
  auto x = acc.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix sigmoid(const Matrix& a) { return map(a, logistic); }

// Row-wise softmax with per-row max subtraction.
inline Matrix row_softmax(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto in = s.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (double& v : o) v /= z;
  }
  return out;
}

inline double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

}  // namespace cauvis
