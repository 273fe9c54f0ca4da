#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "cauvis/autograd/tape.hpp"
#include "cauvis/numerics/fourier.hpp"
#include "cauvis/numerics/linalg.hpp"

// Differentiable operations over Tape. Each op computes its value with the
// plain numerics kernels and registers the vector-Jacobian product.
namespace cauvis::ad {

inline Var matmul(Var a, Var b) {
  return a.tape().record(
      cauvis::matmul(a.value(), b.value()), {a, b},
      [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, matmul_nt(g, b.value()));
        t.accumulate(b, matmul_tn(a.value(), g));
      },
      "matmul");
}

// a·bᵀ
inline Var matmul_nt(Var a, Var b) {
  return a.tape().record(
      cauvis::matmul_nt(a.value(), b.value()), {a, b},
      [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, cauvis::matmul(g, b.value()));
        t.accumulate(b, matmul_tn(g, a.value()));
      },
      "matmul_nt");
}

inline Var add(Var a, Var b) {
  return a.tape().record(
      cauvis::add(a.value(), b.value()), {a, b},
      [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
      },
      "add");
}

inline Var sub(Var a, Var b) {
  return a.tape().record(
      cauvis::sub(a.value(), b.value()), {a, b},
      [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, cauvis::scale(g, -1.0));
      },
      "sub");
}

inline Var hadamard(Var a, Var b) {
  return a.tape().record(
      cauvis::hadamard(a.value(), b.value()), {a, b},
      [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, cauvis::hadamard(g, b.value()));
        t.accumulate(b, cauvis::hadamard(g, a.value()));
      },
      "hadamard");
}

inline Var scale(Var a, double s) {
  return a.tape().record(
      cauvis::scale(a.value(), s), {a},
      [a, s](Tape& t, const Matrix& g) { t.accumulate(a, cauvis::scale(g, s)); }, "scale");
}

// s (1×1) times every entry of a.
inline Var scale_by(Var s, Var a) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: scalar must be 1x1");
  const double sv = s.value()(0, 0);
  return a.tape().record(
      cauvis::scale(a.value(), sv), {s, a},
      [s, a, sv](Tape& t, const Matrix& g) {
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g.data()[i] * a.value().data()[i];
        t.accumulate(s, Matrix(1, 1, dot));
        t.accumulate(a, cauvis::scale(g, sv));
      },
      "scale_by");
}

// Adds a 1×cols row vector to every row.
inline Var add_row(Var a, Var bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row: bias " + bias.value().shape_str() + " vs " + a.value().shape_str());
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias.value()(0, j);
  return a.tape().record(
      std::move(out), {a, bias},
      [a, bias](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        Matrix gb(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
        t.accumulate(bias, gb);
      },
      "add_row");
}

inline Var sigmoid(Var a) {
  Matrix y = cauvis::sigmoid(a.value());
  return a.tape().record(
      y, {a},
      [a, y](Tape& t, const Matrix& g) {
        t.accumulate(a, zip(g, y, [](double gi, double yi) { return gi * yi * (1.0 - yi); },
                            "sigmoid'"));
      },
      "sigmoid");
}

inline Var tanh(Var a) {
  Matrix y = map(a.value(), [](double v) { return std::tanh(v); });
  return a.tape().record(
      y, {a},
      [a, y](Tape& t, const Matrix& g) {
        t.accumulate(a, zip(g, y, [](double gi, double yi) { return gi * (1.0 - yi * yi); },
                            "tanh'"));
      },
      "tanh");
}

inline Var square(Var a) {
  return a.tape().record(
      map(a.value(), [](double v) { return v * v; }), {a},
      [a](Tape& t, const Matrix& g) {
        t.accumulate(a, zip(g, a.value(), [](double gi, double x) { return 2.0 * gi * x; },
                            "square'"));
      },
      "square");
}

inline Var row_softmax(Var a) {
  Matrix y = cauvis::row_softmax(a.value());
  return a.tape().record(
      y, {a},
      [a, y](Tape& t, const Matrix& g) {
        Matrix ga(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
        }
        t.accumulate(a, ga);
      },
      "row_softmax");
}

inline Var sum(Var a) {
  return a.tape().record(
      Matrix(1, 1, cauvis::sum(a.value())), {a},
      [a](Tape& t, const Matrix& g) {
        t.accumulate(a, Matrix(a.rows(), a.cols(), g(0, 0)));
      },
      "sum");
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

// 1×cols column means.
inline Var col_mean(Var a) {
  const std::size_t rows = a.rows();
  Matrix out(1, a.cols());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a.value()(i, j);
  for (double& v : out.data()) v /= static_cast<double>(rows);
  return a.tape().record(
      std::move(out), {a},
      [a, rows](Tape& t, const Matrix& g) {
        Matrix ga(rows, g.cols());
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) = g(0, j) / static_cast<double>(rows);
        t.accumulate(a, ga);
      },
      "col_mean");
}

// Mean absolute value; subgradient 0 at exact zeros.
inline Var mean_abs(Var a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += std::abs(v);
  return a.tape().record(
      Matrix(1, 1, s / n), {a},
      [a, n](Tape& t, const Matrix& g) {
        const double gs = g(0, 0) / n;
        t.accumulate(a, map(a.value(), [gs](double v) {
                       return v > 0.0 ? gs : (v < 0.0 ? -gs : 0.0);
                     }));
      },
      "mean_abs");
}

// sqrt(mean(a²) + eps) − sqrt(eps): a root-mean-square that is exactly zero at
// a = 0 and has a finite gradient there.
inline Var smooth_rms(Var a, double eps = 1e-12) {
  const double n = static_cast<double>(a.value().size());
  double ss = 0.0;
  for (double v : a.value().data()) ss += v * v;
  const double root = std::sqrt(ss / n + eps);
  return a.tape().record(
      Matrix(1, 1, root - std::sqrt(eps)), {a},
      [a, n, root](Tape& t, const Matrix& g) {
        t.accumulate(a, cauvis::scale(a.value(), g(0, 0) / (n * root)));
      },
      "smooth_rms");
}

// Fixed-mask frequency filter on every column (see cauvis::spectral_filter).
// The mask is real and negation-symmetric, so the adjoint is the same filter.
inline Var spectral_filter(Var a, const FrequencyMask& mask) {
  return a.tape().record(
      cauvis::spectral_filter(a.value(), mask), {a},
      [a, mask](Tape& t, const Matrix& g) { t.accumulate(a, cauvis::spectral_filter(g, mask)); },
      "spectral_filter");
}

// Mean negative log-likelihood of integer labels under row-softmax of logits.
inline Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  const Matrix& z = logits.value();
  if (labels.size() != z.rows()) throw ShapeError("softmax_cross_entropy: label count mismatch");
  Matrix p = cauvis::row_softmax(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= z.cols()) throw LookupError("softmax_cross_entropy: label out of range");
    const double mx = *std::max_element(z.row(i).begin(), z.row(i).end());
    double lse = 0.0;
    for (double v : z.row(i)) lse += std::exp(v - mx);
    loss += (std::log(lse) + mx) - z(i, y);
  }
  const double rows = static_cast<double>(z.rows());
  return logits.tape().record(
      Matrix(1, 1, loss / rows), {logits},
      [logits, p, labels, rows](Tape& t, const Matrix& g) {
        Matrix gz = p;
        for (std::size_t i = 0; i < gz.rows(); ++i) gz(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        t.accumulate(logits, cauvis::scale(gz, g(0, 0) / rows));
      },
      "softmax_cross_entropy");
}

}  // namespace cauvis::ad
