#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cauvis/numerics/linalg.hpp"

namespace cauvis {

struct SvdOptions {
  std::size_t max_sweeps = 80;
  // Pairs are rotated while |a_p·a_q| > tolerance·‖a_p‖‖a_q‖.
  double tolerance = 1e-14;
};

// a = u·diag(sigma)·vt, sigma descending and nonnegative.
// Thin: u is m×r, vt is r×n with r = min(m, n). Full: u is m×m, vt is n×n.
struct SvdResult {
  Matrix u;
  std::vector<double> sigma;
  Matrix vt;
};

namespace detail {

// One-sided (Hestenes) Jacobi on the columns of a tall matrix (m ≥ n).
// On return `work` holds u·diag(sigma) column-wise and `v` the right vectors.
inline void hestenes_jacobi(Matrix& work, Matrix& v, const SvdOptions& opt) {
  const std::size_t m = work.rows();
  const std::size_t n = work.cols();
  v = Matrix::identity(n);
  if (n < 2) return;

  for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double ap = work(i, p);
          const double aq = work(i, q);
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        if (gamma == 0.0 || alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= opt.tolerance * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double ap = work(i, p);
          const double aq = work(i, q);
          work(i, p) = c * ap - s * aq;
          work(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericError("svd: one-sided Jacobi did not converge within " +
                         std::to_string(opt.max_sweeps) + " sweeps",
                     opt.max_sweeps);
}

// Extend the orthonormal columns [0, filled) of q (m×c, c ≤ m) to c orthonormal
// columns. Each new column starts from the standard basis vector e_i with the
// largest residual 1 − Σ_j q(i,j)², then Gram-Schmidt is applied twice.
inline void complete_basis(Matrix& q, std::size_t filled) {
  const std::size_t m = q.rows();
  std::vector<double> captured(m, 0.0), cand(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < filled; ++j) captured[i] += q(i, j) * q(i, j);
  while (filled < q.cols()) {
    const std::size_t e = static_cast<std::size_t>(
        std::min_element(captured.begin(), captured.end()) - captured.begin());
    std::fill(cand.begin(), cand.end(), 0.0);
    cand[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < filled; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += q(i, j) * cand[i];
        for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * q(i, j);
      }
    }
    double nrm = 0.0;
    for (double c : cand) nrm += c * c;
    nrm = std::sqrt(nrm);
    if (!(nrm > 0.0)) throw NumericError("svd: basis completion failed");
    for (std::size_t i = 0; i < m; ++i) {
      q(i, filled) = cand[i] / nrm;
      captured[i] += q(i, filled) * q(i, filled);
    }
    ++filled;
  }
}

// Core routine on a tall matrix. Returns u (m×m if full, else m×n), sigma, v (n×n).
inline void svd_tall(const Matrix& a, bool full, const SvdOptions& opt, Matrix& u,
                     std::vector<double>& sigma, Matrix& v) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix work = a;
  Matrix vraw;
  hestenes_jacobi(work, vraw, opt);

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += work(i, j) * work(i, j);
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  const double smax = n ? norms[order[0]] : 0.0;
  const double cutoff = smax * static_cast<double>(std::max(m, n)) *
                        std::numeric_limits<double>::epsilon();

  u = Matrix(m, full ? m : n);
  v = Matrix(n, n);
  sigma.assign(n, 0.0);
  std::size_t nonzero = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    for (std::size_t i = 0; i < n; ++i) v(i, k) = vraw(i, j);
    if (norms[j] > cutoff && norms[j] > 0.0) {
      sigma[k] = norms[j];
      for (std::size_t i = 0; i < m; ++i) u(i, k) = work(i, j) / norms[j];
      ++nonzero;
    }
  }
  // Columns belonging to zero singular values are filled with an orthonormal
  // completion so u stays orthogonal on rank-deficient input.
  if (nonzero < u.cols()) {
    Matrix q(m, u.cols());
    for (std::size_t k = 0; k < nonzero; ++k)
      for (std::size_t i = 0; i < m; ++i) q(i, k) = u(i, k);
    complete_basis(q, nonzero);
    for (std::size_t k = nonzero; k < u.cols(); ++k)
      for (std::size_t i = 0; i < m; ++i) u(i, k) = q(i, k);
  }
}

}  // namespace detail

// Singular value decomposition by one-sided Jacobi rotations. `full` selects
// square orthogonal factors; otherwise the economy factors are returned.
inline SvdResult svd(const Matrix& a, bool full = true, const SvdOptions& opt = {}) {
  if (!a.is_finite()) throw NumericError("svd: input contains non-finite entries");
  SvdResult r;
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (m >= n) {
    Matrix v;
    detail::svd_tall(a, full, opt, r.u, r.sigma, v);
    r.vt = transpose(v);
  } else {
    // aᵀ = u'·Σ·v'ᵀ  ⇒  a = v'·Σ·u'ᵀ.
    Matrix u2, v2;
    detail::svd_tall(transpose(a), full, opt, u2, r.sigma, v2);
    r.u = std::move(v2);
    r.vt = transpose(u2);
  }
  return r;
}

inline SvdResult svd_thin(const Matrix& a, const SvdOptions& opt = {}) { return svd(a, false, opt); }

// u·diag(sigma)·vt for either thin or full factors.
inline Matrix reconstruct(const SvdResult& s) {
  const std::size_t r = s.sigma.size();
  Matrix us(s.u.rows(), r);
  for (std::size_t i = 0; i < s.u.rows(); ++i)
    for (std::size_t k = 0; k < r; ++k) us(i, k) = s.u(i, k) * s.sigma[k];
  Matrix vt_r(r, s.vt.cols());
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t j = 0; j < s.vt.cols(); ++j) vt_r(k, j) = s.vt(k, j);
  return matmul(us, vt_r);
}

}  // namespace cauvis
