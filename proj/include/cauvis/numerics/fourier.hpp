#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "cauvis/numerics/matrix.hpp"

namespace cauvis {

// Multiplicative gate over a 2-D spectrum in unshifted (DC at (0,0)) layout.
struct FrequencyMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  double cutoff = 0.0;

  double operator()(std::size_t r, std::size_t c) const noexcept { return values[r * cols + c]; }
};

namespace detail {

inline bool is_pow2(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

// In-place 1-D transform of `n` complex samples spaced by `stride`.
// sign = -1 forward, +1 inverse (unscaled).
class Transform1D {
 public:
  Transform1D(std::size_t n, int sign) : n_(n), cos_(n), sin_(n) {
    for (std::size_t k = 0; k < n; ++k) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      cos_[k] = std::cos(ang);
      sin_[k] = sign * std::sin(ang);
    }
    buf_re_.resize(n);
    buf_im_.resize(n);
  }

  void naive(double* re, double* im, std::size_t stride) {
    for (std::size_t k = 0; k < n_; ++k) {
      double sr = 0.0, si = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        const std::size_t t = (j * k) % n_;
        const double xr = re[j * stride];
        const double xi = im[j * stride];
        sr += xr * cos_[t] - xi * sin_[t];
        si += xr * sin_[t] + xi * cos_[t];
      }
      buf_re_[k] = sr;
      buf_im_[k] = si;
    }
    for (std::size_t k = 0; k < n_; ++k) {
      re[k * stride] = buf_re_[k];
      im[k * stride] = buf_im_[k];
    }
  }

  // Iterative radix-2 Cooley-Tukey. For a constant input every butterfly
  // difference is exactly zero, so non-DC bins come out as exact zeros.
  void radix2(double* re, double* im, std::size_t stride) {
    for (std::size_t k = 0; k < n_; ++k) {
      buf_re_[k] = re[k * stride];
      buf_im_[k] = im[k * stride];
    }
    for (std::size_t i = 1, j = 0; i < n_; ++i) {
      std::size_t bit = n_ >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) {
        std::swap(buf_re_[i], buf_re_[j]);
        std::swap(buf_im_[i], buf_im_[j]);
      }
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t step = n_ / len;
      const std::size_t half = len / 2;
      for (std::size_t i = 0; i < n_; i += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const double wr = cos_[j * step];
          const double wi = sin_[j * step];
          const std::size_t a = i + j;
          const std::size_t b = a + half;
          const double tr = buf_re_[b] * wr - buf_im_[b] * wi;
          const double ti = buf_re_[b] * wi + buf_im_[b] * wr;
          buf_re_[b] = buf_re_[a] - tr;
          buf_im_[b] = buf_im_[a] - ti;
          buf_re_[a] += tr;
          buf_im_[a] += ti;
        }
      }
    }
    for (std::size_t k = 0; k < n_; ++k) {
      re[k * stride] = buf_re_[k];
      im[k * stride] = buf_im_[k];
    }
  }

  void operator()(double* re, double* im, std::size_t stride, bool allow_fast) {
    if (allow_fast && is_pow2(n_)) {
      radix2(re, im, stride);
    } else {
      naive(re, im, stride);
    }
  }

 private:
  std::size_t n_;
  std::vector<double> cos_, sin_;
  std::vector<double> buf_re_, buf_im_;
};

inline void transform2d(ComplexMap& x, int sign, bool allow_fast) {
  if (x.rows == 0 || x.cols == 0) return;
  Transform1D along_row(x.cols, sign);
  for (std::size_t r = 0; r < x.rows; ++r) {
    along_row(x.re.data() + r * x.cols, x.im.data() + r * x.cols, 1, allow_fast);
  }
  Transform1D along_col(x.rows, sign);
  for (std::size_t c = 0; c < x.cols; ++c) {
    along_col(x.re.data() + c, x.im.data() + c, x.cols, allow_fast);
  }
}

}  // namespace detail

// Which 1-D kernel a transform may use. `Naive` forces the O(n²) per-axis sum
// for every size; `Auto` takes radix-2 where the axis length is a power of two.
enum class DftPath { Auto, Naive };

inline ComplexMap dft2(const Matrix& x, DftPath path = DftPath::Auto) {
  ComplexMap out(x.rows(), x.cols());
  std::copy(x.data().begin(), x.data().end(), out.re.begin());
  detail::transform2d(out, -1, path == DftPath::Auto);
  return out;
}

inline ComplexMap idft2_complex(const ComplexMap& spec, DftPath path = DftPath::Auto) {
  ComplexMap out = spec;
  detail::transform2d(out, +1, path == DftPath::Auto);
  const double scale = 1.0 / static_cast<double>(spec.rows * spec.cols);
  for (auto& v : out.re) v *= scale;
  for (auto& v : out.im) v *= scale;
  return out;
}

// Real part of the inverse transform.
inline Matrix idft2(const ComplexMap& spec, DftPath path = DftPath::Auto) {
  ComplexMap z = idft2_complex(spec, path);
  return Matrix(spec.rows, spec.cols, std::move(z.re));
}

// Normalized radial frequency of unshifted index (i, j): 0 at DC, 1 at the
// two-axis Nyquist corner.
inline double radial_frequency(std::size_t i, std::size_t j, std::size_t rows, std::size_t cols) {
  const double fi = static_cast<double>(std::min(i, rows - i)) / static_cast<double>(rows);
  const double fj = static_cast<double>(std::min(j, cols - j)) / static_cast<double>(cols);
  return std::sqrt(fi * fi + fj * fj) / std::sqrt(0.5);
}

inline FrequencyMask make_highpass(std::size_t rows, std::size_t cols, double cutoff) {
  if (!(cutoff >= 0.0 && cutoff <= 1.0)) {
    throw ConfigError("make_highpass: cutoff " + std::to_string(cutoff) + " outside [0,1]");
  }
  if (rows == 0 || cols == 0) throw ConfigError("make_highpass: empty grid");
  FrequencyMask m{rows, cols, std::vector<double>(rows * cols, 1.0), cutoff};
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (radial_frequency(i, j, rows, cols) < cutoff) m.values[i * cols + j] = 0.0;
  return m;
}

inline FrequencyMask all_pass(std::size_t rows, std::size_t cols) {
  return make_highpass(rows, cols, 0.0);
}

// 1 − m: the low-pass complement.
inline FrequencyMask complement(const FrequencyMask& m) {
  FrequencyMask out = m;
  for (auto& v : out.values) v = 1.0 - v;
  return out;
}

inline ComplexMap apply_mask(const ComplexMap& x, const FrequencyMask& m) {
  if (x.rows != m.rows || x.cols != m.cols) {
    throw ShapeError("apply_mask: spectrum " + std::to_string(x.rows) + "x" +
                     std::to_string(x.cols) + " vs mask " + std::to_string(m.rows) + "x" +
                     std::to_string(m.cols));
  }
  ComplexMap out = x;
  for (std::size_t i = 0; i < out.re.size(); ++i) {
    out.re[i] *= m.values[i];
    out.im[i] *= m.values[i];
  }
  return out;
}

// idft2(m ⊙ dft2(x)) for a single h×w map.
inline Matrix filter_map(const Matrix& x, const FrequencyMask& m, DftPath path = DftPath::Auto) {
  return idft2(apply_mask(dft2(x, path), m), path);
}

inline bool is_negation_symmetric(const FrequencyMask& m) {
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      if (m(i, j) != m((m.rows - i) % m.rows, (m.cols - j) % m.cols)) return false;
  return true;
}

// Applies the mask to every column of `x` (n×D), each column read as a
// row-major mask.rows × mask.cols grid. For a negation-symmetric real mask the
// operator is real, linear and self-adjoint, and two channels share one
// complex transform (one in the real part, one in the imaginary part).
inline Matrix spectral_filter(const Matrix& x, const FrequencyMask& m,
                              DftPath path = DftPath::Auto) {
  const std::size_t n = m.rows * m.cols;
  if (x.rows() != n) {
    throw ShapeError("spectral_filter: " + std::to_string(x.rows()) + " tokens do not form a " +
                     std::to_string(m.rows) + "x" + std::to_string(m.cols) + " grid");
  }
  if (!is_negation_symmetric(m)) {
    throw NumericError("spectral_filter: mask is not negation-symmetric, output would be complex");
  }
  Matrix out(x.rows(), x.cols());
  detail::Transform1D fr(m.cols, -1), fc(m.rows, -1), ir(m.cols, +1), ic(m.rows, +1);
  const bool fast = path == DftPath::Auto;
  const double inv = 1.0 / static_cast<double>(n);
  ComplexMap g(m.rows, m.cols);
  for (std::size_t ch = 0; ch < x.cols(); ch += 2) {
    const bool pair = ch + 1 < x.cols();
    for (std::size_t t = 0; t < n; ++t) {
      g.re[t] = x(t, ch);
      g.im[t] = pair ? x(t, ch + 1) : 0.0;
    }
    for (std::size_t r = 0; r < m.rows; ++r) fr(g.re.data() + r * m.cols, g.im.data() + r * m.cols, 1, fast);
    for (std::size_t c = 0; c < m.cols; ++c) fc(g.re.data() + c, g.im.data() + c, m.cols, fast);
    for (std::size_t t = 0; t < n; ++t) {
      g.re[t] *= m.values[t];
      g.im[t] *= m.values[t];
    }
    for (std::size_t r = 0; r < m.rows; ++r) ir(g.re.data() + r * m.cols, g.im.data() + r * m.cols, 1, fast);
    for (std::size_t c = 0; c < m.cols; ++c) ic(g.re.data() + c, g.im.data() + c, m.cols, fast);
    for (std::size_t t = 0; t < n; ++t) {
      out(t, ch) = g.re[t] * inv;
      if (pair) out(t, ch + 1) = g.im[t] * inv;
    }
  }
  return out;
}

}  // namespace cauvis
