#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cauvis/autograd/ops.hpp"
#include "cauvis/numerics/linalg.hpp"
#include "cauvis/numerics/random.hpp"
#include "cauvis/numerics/svd.hpp"

// Cross-attention prompts: image tokens query a bank of learnable prompt
// tokens, and the pre-softmax score map is split spectrally into a dominant
// ("causal") part and a residual tail.
namespace cauvis::cap {

struct PromptBank {
  Matrix tokens;  // t×d

  std::size_t length() const noexcept { return tokens.rows(); }
  std::size_t dim() const noexcept { return tokens.cols(); }

  static PromptBank zeros(std::size_t t, std::size_t d) { return {Matrix(t, d)}; }
  static PromptBank random(std::size_t t, std::size_t d, CounterRng& rng, double stddev) {
    return {random_normal(t, d, rng, stddev)};
  }
};

struct ProjectionWeights {
  Matrix w_q, w_k, w_v;  // d×d each

  static ProjectionWeights identity(std::size_t d) {
    return {Matrix::identity(d), Matrix::identity(d), Matrix::identity(d)};
  }
  static ProjectionWeights random(std::size_t d, CounterRng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    return {random_normal(d, d, rng, s), random_normal(d, d, rng, s), random_normal(d, d, rng, s)};
  }
};

// Thin SVD of a score map plus the causal rank k. Indices [0, k) form the
// causal subspace, [k, T) the tail.
struct SpectralDecomposition {
  Matrix u;                   // n×T
  std::vector<double> sigma;  // T, descending
  Matrix vt;                  // T×t
  std::size_t k = 0;

  std::size_t rank_count() const noexcept { return sigma.size(); }
};

struct QKV {
  Matrix q, k, v;
};

inline QKV project_qkv(const Matrix& x, const PromptBank& p, const ProjectionWeights& w) {
  if (x.cols() != w.w_q.rows() || p.dim() != w.w_k.rows() || p.dim() != w.w_v.rows()) {
    throw ShapeError("project_qkv: feature dim " + std::to_string(x.cols()) + ", prompt dim " +
                     std::to_string(p.dim()) + ", projection " + w.w_q.shape_str());
  }
  return {matmul(x, w.w_q), matmul(p.tokens, w.w_k), matmul(p.tokens, w.w_v)};
}

// q·kᵀ/√d
inline Matrix attention_scores(const Matrix& q, const Matrix& k) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention_scores: " + q.shape_str() + " vs " + k.shape_str());
  }
  return scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
}

// Σσᵢ² over the tail divided by the total; 0 when the spectrum is empty.
inline double tail_energy_ratio(const std::vector<double>& sigma, std::size_t k) {
  double total = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    total += sigma[i] * sigma[i];
    if (i >= k) tail += sigma[i] * sigma[i];
  }
  return total > 0.0 ? tail / total : 0.0;
}

// Cumulative σ² fraction per index; a zero spectrum is reported as fully
// captured (all ones).
inline std::vector<double> cumulative_energy(const std::vector<double>& sigma) {
  double total = 0.0;
  for (double s : sigma) total += s * s;
  std::vector<double> out(sigma.size(), 1.0);
  if (total == 0.0) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    acc += sigma[i] * sigma[i];
    out[i] = acc / total;
  }
  if (!out.empty()) out.back() = 1.0;
  return out;
}

// Smallest k whose leading singular values carry at least `fraction` of the
// energy.
inline std::size_t default_rank(const std::vector<double>& sigma, double fraction = 0.9) {
  const auto cum = cumulative_energy(sigma);
  for (std::size_t i = 0; i < cum.size(); ++i)
    if (cum[i] >= fraction) return i + 1;
  return sigma.size();
}

inline SpectralDecomposition decompose(const Matrix& a, std::size_t k) {
  const std::size_t T = std::min(a.rows(), a.cols());
  if (k > T) {
    throw ConfigError("spectral split: k=" + std::to_string(k) + " exceeds min(rows, cols)=" +
                      std::to_string(T));
  }
  SvdResult s = svd_thin(a);
  return {std::move(s.u), std::move(s.sigma), std::move(s.vt), k};
}

// U_c·Σ_c·V_cᵀ from a decomposition.
inline Matrix causal_part(const SpectralDecomposition& dec) {
  Matrix out(dec.u.rows(), dec.vt.cols());
  for (std::size_t r = 0; r < dec.k; ++r) {
    const double s = dec.sigma[r];
    if (s == 0.0) continue;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      const double us = dec.u(i, r) * s;
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += us * dec.vt(r, j);
    }
  }
  return out;
}

struct SpectralSplit {
  Matrix a_c;
  Matrix a_perp;
  SpectralDecomposition dec;
};

// a = a_c + a_perp with a_c the top-k singular triplets. The degenerate
// ranks are returned exactly: k = T gives (a, 0) and k = 0 gives (0, a).
inline SpectralSplit spectral_split(const Matrix& a, std::size_t k) {
  SpectralDecomposition dec = decompose(a, k);
  SpectralSplit out;
  if (k == dec.rank_count()) {
    out.a_c = a;
    out.a_perp = Matrix(a.rows(), a.cols());
  } else if (k == 0) {
    out.a_c = Matrix(a.rows(), a.cols());
    out.a_perp = a;
  } else {
    out.a_c = causal_part(dec);
    out.a_perp = sub(a, out.a_c);
  }
  out.dec = std::move(dec);
  return out;
}

// lambda · Σ_{i≥k} σᵢ
inline double tail_penalty(const SpectralDecomposition& dec, double lambda_tail) {
  double s = 0.0;
  for (std::size_t i = dec.k; i < dec.sigma.size(); ++i) s += dec.sigma[i];
  return lambda_tail * s;
}

// U_c·Σ_c padded to T columns (column i is σᵢuᵢ for i < k, zero otherwise).
// This is A_c·V. With `v_basis_check` the identity is verified against the
// reconstructed A_c.
inline Matrix causal_update(const SpectralDecomposition& dec, bool v_basis_check = false) {
  const std::size_t T = dec.rank_count();
  Matrix out(dec.u.rows(), T);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t r = 0; r < dec.k; ++r) out(i, r) = dec.u(i, r) * dec.sigma[r];
  if (v_basis_check) {
    const Matrix via_v = matmul_nt(causal_part(dec), dec.vt);  // A_c·V
    const double scale_ref = std::max(1.0, dec.sigma.empty() ? 0.0 : dec.sigma.front());
    const double err = max_abs_diff(via_v, out);
    if (err > 1e-8 * scale_ref) {
      throw NumericError("causal_update: A_c·V deviates from U_c·Σ_c by " + std::to_string(err));
    }
  }
  return out;
}

enum class CapMode { Full, Filtered };

struct CapConfig {
  // Causal rank; nullopt picks the smallest k holding 90% of σ² per input.
  std::optional<std::size_t> k;
  CapMode mode = CapMode::Full;
  double lambda_tail = 0.0;
};

struct CapVars {
  ad::Var delta_x;  // n×d update routed to the image tokens
  ad::Var scores;   // pre-softmax n×t map
  ad::Var penalty;  // 1×1 tail penalty on the pre-softmax map
  SpectralDecomposition dec;
};

// Tail penalty as a tape node. The SVD is a stop-gradient: the backward pass
// uses the subgradient λ·U_tail·V_tailᵀ of the tail σ sum, restricted to
// nonzero singular values.
inline ad::Var tail_penalty_node(ad::Var scores, const SpectralDecomposition& dec,
                                 double lambda_tail) {
  const double value = tail_penalty(dec, lambda_tail);
  return scores.tape().record(
      Matrix(1, 1, value), {scores},
      [scores, dec, lambda_tail](ad::Tape& t, const Matrix& g) {
        Matrix ga(dec.u.rows(), dec.vt.cols());
        const double w = lambda_tail * g(0, 0);
        for (std::size_t r = dec.k; r < dec.sigma.size(); ++r) {
          if (dec.sigma[r] <= 0.0) continue;
          for (std::size_t i = 0; i < ga.rows(); ++i) {
            const double ui = w * dec.u(i, r);
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += ui * dec.vt(r, j);
          }
        }
        t.accumulate(scores, ga);
      },
      "tail_penalty");
}

// U_c·U_cᵀ·A with the basis held constant (same stop-gradient rule); the full
// rank returns A itself.
inline ad::Var project_causal(ad::Var scores, const SpectralDecomposition& dec) {
  if (dec.k == dec.rank_count()) return scores;
  Matrix uc(dec.u.rows(), dec.k);
  for (std::size_t i = 0; i < uc.rows(); ++i)
    for (std::size_t r = 0; r < dec.k; ++r) uc(i, r) = dec.u(i, r);
  auto project = [uc](const Matrix& m) { return matmul(uc, matmul_tn(uc, m)); };
  return scores.tape().record(
      project(scores.value()), {scores},
      [scores, project](ad::Tape& t, const Matrix& g) { t.accumulate(scores, project(g)); },
      "project_causal");
}

inline void require_nondegenerate(std::size_t n, std::size_t t) {
  if (n == 0 || t == 0) {
    throw ConfigError("cross-attention needs at least one token and one prompt (n=" +
                      std::to_string(n) + ", t=" + std::to_string(t) + ")");
  }
}

// Cross-attention of tokens x (n×d) over prompts (t×d).
//   full:     ΔX = softmax(A)·V
//   filtered: ΔX = softmax(A_c)·V
// The penalty always comes from the decomposition of the pre-softmax A.
inline CapVars cap_forward(ad::Var x, ad::Var prompts, ad::Var w_q, ad::Var w_k, ad::Var w_v,
                           const CapConfig& cfg) {
  require_nondegenerate(x.rows(), prompts.rows());
  if (x.cols() != w_q.rows() || prompts.cols() != w_k.rows() || prompts.cols() != w_v.rows()) {
    throw ShapeError("cap_forward: inconsistent feature/prompt/projection dims");
  }
  ad::Var q = ad::matmul(x, w_q);
  ad::Var k = ad::matmul(prompts, w_k);
  ad::Var v = ad::matmul(prompts, w_v);
  ad::Var scores =
      ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));

  SvdResult s = svd_thin(scores.value());
  const std::size_t rank = cfg.k ? *cfg.k : default_rank(s.sigma);
  if (rank > s.sigma.size()) {
    throw ConfigError("cap_forward: k=" + std::to_string(rank) + " exceeds min(n, t)=" +
                      std::to_string(s.sigma.size()));
  }
  SpectralDecomposition dec{std::move(s.u), std::move(s.sigma), std::move(s.vt), rank};

  ad::Var attn_in = cfg.mode == CapMode::Full ? scores : project_causal(scores, dec);
  ad::Var delta = ad::matmul(ad::row_softmax(attn_in), v);
  ad::Var penalty = tail_penalty_node(scores, dec, cfg.lambda_tail);
  return {delta, scores, penalty, std::move(dec)};
}

struct CapOutput {
  Matrix delta_x;
  Matrix scores;
  SpectralDecomposition dec;
  double penalty = 0.0;
};

inline CapOutput cap_forward(const Matrix& x, const PromptBank& p, const ProjectionWeights& w,
                             const CapConfig& cfg) {
  ad::Tape tape(false);
  CapVars r = cap_forward(tape.constant(x), tape.constant(p.tokens), tape.constant(w.w_q),
                          tape.constant(w.w_k), tape.constant(w.w_v), cfg);
  return {r.delta_x.value(), r.scores.value(), std::move(r.dec), r.penalty.value()(0, 0)};
}

}  // namespace cauvis::cap
