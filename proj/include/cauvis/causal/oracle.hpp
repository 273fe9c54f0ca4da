#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cauvis/autograd/ops.hpp"
#include "cauvis/causal/scm.hpp"
#include "cauvis/numerics/fourier.hpp"
#include "cauvis/numerics/linalg.hpp"
#include "cauvis/numerics/random.hpp"

namespace cauvis::causal {

// ---------------------------------------------------------------------------
// Attention as back-door adjustment.

enum class ConfounderWeighting { Marginal, Conditional };

struct EquivalenceReport {
  double max_abs_diff = 0.0;
  std::vector<double> per_x;  // max |ΔX_i − P(y|do(x_i))| for each x
  Matrix attention;           // |X|×|Z|
  Matrix delta_x;             // |X|×|Y|
};

// One query per x state, one key per z state. Scores are log-weights so that
// the row softmax reproduces the weighting exactly up to rounding; value j
// seen from query i is P(y | x_i, z_j).
inline EquivalenceReport attention_backdoor_equiv(
    const DiscreteSCM& scm, ConfounderWeighting weighting = ConfounderWeighting::Marginal) {
  scm.validate();
  const std::size_t nx = scm.x_states, nz = scm.z_states, ny = scm.y_states;
  Matrix scores(nx, nz);
  for (std::size_t i = 0; i < nx; ++i) {
    const Distribution w =
        weighting == ConfounderWeighting::Marginal ? scm.p_z : posterior_z(scm, i);
    for (std::size_t j = 0; j < nz; ++j) scores(i, j) = std::log(w[j]);
  }
  EquivalenceReport rep;
  rep.attention = row_softmax(scores);
  rep.delta_x = Matrix(nx, ny);
  rep.per_x.assign(nx, 0.0);
  for (std::size_t i = 0; i < nx; ++i) {
    Matrix values(nz, ny);
    for (std::size_t j = 0; j < nz; ++j)
      for (std::size_t y = 0; y < ny; ++y) values(j, y) = scm.outcome(i, j)[y];
    Matrix a_row(1, nz);
    for (std::size_t j = 0; j < nz; ++j) a_row(0, j) = rep.attention(i, j);
    const Matrix dx = matmul(a_row, values);
    const Distribution bd = backdoor_adjust(scm, i);
    for (std::size_t y = 0; y < ny; ++y) {
      rep.delta_x(i, y) = dx(0, y);
      rep.per_x[i] = std::max(rep.per_x[i], std::abs(dx(0, y) - bd[y]));
    }
    rep.max_abs_diff = std::max(rep.max_abs_diff, rep.per_x[i]);
  }
  return rep;
}

// Interventional sampling: z ~ P(z), then y ~ P(y | x, z).
inline Distribution simulate_interventional(const DiscreteSCM& scm, std::size_t x,
                                            std::size_t draws, CounterRng& rng) {
  if (x >= scm.x_states) throw LookupError("simulate_interventional: x index out of range");
  auto pick = [&rng](const Distribution& d) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
      acc += d[i];
      if (u < acc) return i;
    }
    return d.size() - 1;
  };
  Distribution counts(scm.y_states, 0.0);
  for (std::size_t n = 0; n < draws; ++n) {
    const std::size_t z = pick(scm.p_z);
    counts[pick(scm.outcome(x, z))] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(draws);
  return counts;
}

// ---------------------------------------------------------------------------
// Ideal identity E_z[f(X,z)] = Σ_i u_i σ_i.

// u holds one u_i per row (|Y| columns); sigma holds the matching scales.
inline double ideal_identity_check(const DiscreteSCM& scm, std::size_t x, const Matrix& u,
                                   const std::vector<double>& sigma) {
  if (u.rows() != sigma.size()) {
    throw ShapeError("ideal_identity_check: " + std::to_string(u.rows()) + " vectors vs " +
                     std::to_string(sigma.size()) + " scales");
  }
  if (u.cols() != scm.y_states) {
    throw ShapeError("ideal_identity_check: vectors have " + std::to_string(u.cols()) +
                     " entries, outcome space has " + std::to_string(scm.y_states));
  }
  const Distribution expect = backdoor_adjust(scm, x);
  double worst = 0.0;
  for (std::size_t y = 0; y < scm.y_states; ++y) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.rows(); ++i) s += u(i, y) * sigma[i];
    worst = std::max(worst, std::abs(expect[y] - s));
  }
  return worst;
}

struct IdentityConstruction {
  Matrix u;
  std::vector<double> sigma;
};

// The isomorphic construction f(X, z_i) = u_i with σ_i = P(z_i).
inline IdentityConstruction isomorphic_construction(const DiscreteSCM& scm, std::size_t x) {
  if (x >= scm.x_states) throw LookupError("isomorphic_construction: x index out of range");
  IdentityConstruction c{Matrix(scm.z_states, scm.y_states), scm.p_z};
  for (std::size_t i = 0; i < scm.z_states; ++i)
    for (std::size_t y = 0; y < scm.y_states; ++y) c.u(i, y) = scm.outcome(x, i)[y];
  return c;
}

struct PerturbationSweep {
  std::vector<double> eps;
  std::vector<double> error;
  double fitted_slope = 0.0;     // least squares through the origin
  double predicted_slope = 0.0;  // max_y |Σ_i σ_i n_iy|
};

// Perturbs u_i along a fixed random direction n scaled by each ε.
inline PerturbationSweep identity_perturbation_sweep(const DiscreteSCM& scm, std::size_t x,
                                                     const std::vector<double>& eps,
                                                     CounterRng& rng) {
  const IdentityConstruction base = isomorphic_construction(scm, x);
  const Matrix noise = random_normal(base.u.rows(), base.u.cols(), rng, 1.0);
  PerturbationSweep out;
  out.eps = eps;
  for (std::size_t y = 0; y < base.u.cols(); ++y) {
    double s = 0.0;
    for (std::size_t i = 0; i < base.u.rows(); ++i) s += base.sigma[i] * noise(i, y);
    out.predicted_slope = std::max(out.predicted_slope, std::abs(s));
  }
  double num = 0.0, den = 0.0;
  for (double e : eps) {
    const Matrix u = add(base.u, scale(noise, e));
    const double err = ideal_identity_check(scm, x, u, base.sigma);
    out.error.push_back(err);
    num += e * err;
    den += e * e;
  }
  out.fitted_slope = den > 0.0 ? num / den : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Frequency-domain causal / spurious features.

struct CausalFilter {
  FrequencyMask h_causal;

  static CausalFilter highpass(std::size_t h, std::size_t w, double cutoff) {
    return {make_highpass(h, w, cutoff)};
  }
  // f_S: the low-pass complement of f_C.
  CausalFilter spurious() const { return {complement(h_causal)}; }
};

// Accepts either a single h×w map or h·w tokens × channels.
inline Matrix causal_filter_apply(const Matrix& x, const CausalFilter& f) {
  const FrequencyMask& m = f.h_causal;
  if (x.rows() == m.rows && x.cols() == m.cols) return filter_map(x, m);
  if (x.rows() == m.rows * m.cols) return spectral_filter(x, m);
  throw ShapeError("causal_filter_apply: input " + x.shape_str() + " does not fit a " +
                   std::to_string(m.rows) + "x" + std::to_string(m.cols) + " grid");
}

// Mean directional-derivative norm of the prompt→feature map along random
// unit directions, by central differences.
inline double invariance_check(const std::function<Matrix(const Matrix&)>& f, const Matrix& prompts,
                               std::size_t num_probes, double eps, std::uint64_t seed = 0) {
  if (!(eps > 0.0)) throw ConfigError("invariance_check: eps must be positive");
  if (num_probes == 0) throw ConfigError("invariance_check: num_probes must be >= 1");
  CounterRng rng(seed, "invariance-probe");
  double total = 0.0;
  for (std::size_t p = 0; p < num_probes; ++p) {
    Matrix dir = random_normal(prompts.rows(), prompts.cols(), rng, 1.0);
    const double n = frobenius_norm(dir);
    if (n == 0.0) throw NumericError("invariance_check: degenerate probe direction");
    dir = scale(dir, 1.0 / n);
    const Matrix up = f(add(prompts, scale(dir, eps)));
    const Matrix down = f(sub(prompts, scale(dir, eps)));
    if (!up.is_finite() || !down.is_finite()) {
      throw NumericError("invariance_check: non-finite model evaluation on probe " +
                         std::to_string(p));
    }
    total += frobenius_norm(sub(up, down)) / (2.0 * eps);
  }
  return total / static_cast<double>(num_probes);
}

// ---------------------------------------------------------------------------
// Joint loss  mean|f_S(x+δ)| + λ·rms(f_C(x+δ) − f_C(x)),  the root regularized
// as sqrt(s + 1e-12) − sqrt(1e-12) so the loss is 0 at δ = 0.

inline constexpr double kJointLossEps = 1e-12;

inline ad::Var causal_loss(ad::Var f_s_out, ad::Var f_c_shifted, ad::Var f_c_clean,
                           double lambda_inv) {
  ad::Var l1 = ad::mean_abs(f_s_out);
  if (lambda_inv == 0.0) return l1;
  return ad::add(l1, ad::scale(ad::smooth_rms(ad::sub(f_c_shifted, f_c_clean), kJointLossEps),
                               lambda_inv));
}

inline double causal_loss(const Matrix& f_s_out, const Matrix& f_c_shifted,
                          const Matrix& f_c_clean, double lambda_inv) {
  ad::Tape t(false);
  return causal_loss(t.constant(f_s_out), t.constant(f_c_shifted), t.constant(f_c_clean),
                     lambda_inv)
      .value()(0, 0);
}

// Batch average of the per-sample joint loss.
inline double causal_loss(const std::vector<Matrix>& f_s_out,
                          const std::vector<Matrix>& f_c_shifted,
                          const std::vector<Matrix>& f_c_clean, double lambda_inv) {
  if (f_s_out.size() != f_c_shifted.size() || f_s_out.size() != f_c_clean.size()) {
    throw ShapeError("causal_loss: batch sizes differ");
  }
  if (f_s_out.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t b = 0; b < f_s_out.size(); ++b)
    acc += causal_loss(f_s_out[b], f_c_shifted[b], f_c_clean[b], lambda_inv);
  return acc / static_cast<double>(f_s_out.size());
}

}  // namespace cauvis::causal
