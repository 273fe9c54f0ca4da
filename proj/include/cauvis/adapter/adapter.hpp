#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cauvis/autograd/ops.hpp"
#include "cauvis/cap/cross_attention.hpp"
#include "cauvis/numerics/fourier.hpp"
#include "cauvis/numerics/random.hpp"

// Dual-branch adapter and the composed Cauvis layer.
//
//   ΔX      = CAP(x, prompts)                      cross-attention update
//   g       = causal_branch(ΔX) ⊙ ΔX               gated prompt update
//   a       = aux_branch(x)                        high-passed bottleneck
//   x_next  = x + fuse(g, a; alpha)
//           = fuse(x + g, x + a; alpha)
//
// With zero prompts ΔX is exactly zero, and with a zero up-projection the aux
// output is exactly zero on power-of-two grids, so x_next == x bitwise.
namespace cauvis::adapter {

enum class AuxOrder { Replace, Residual };
enum class PromptInit { Zeros, Random };

// Run-config adapter block.
struct AdapterConfig {
  std::size_t embed_dim = 32;
  std::size_t prompt_len = 100;
  std::optional<std::size_t> rank_k;  // unset: smallest k holding 90% of σ² per input
  double cutoff = 0.8;
  std::size_t h = 16;
  std::size_t w = 16;
  double fusion_init = 0.0;
  AuxOrder aux_order = AuxOrder::Replace;
  cap::CapMode mode = cap::CapMode::Full;
  PromptInit prompt_init = PromptInit::Zeros;
  double prompt_init_scale = 0.5;

  std::size_t tokens() const noexcept { return h * w; }

  void validate() const {
    if (embed_dim == 0) throw ConfigError("adapter.embed_dim must be >= 1");
    if (prompt_len == 0) throw ConfigError("adapter.prompt_len must be >= 1");
    if (h == 0 || w == 0) throw ConfigError("adapter grid h, w must be >= 1");
    if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw ConfigError("adapter.cutoff must lie in [0,1]");
    if (rank_k && *rank_k > std::min(tokens(), prompt_len)) {
      throw ConfigError("adapter.rank_k exceeds min(h*w, prompt_len)");
    }
    if (!std::isfinite(fusion_init)) throw ConfigError("adapter.fusion_init must be finite");
  }
};

inline void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = nlohmann::json{{"embed_dim", c.embed_dim},
                     {"prompt_len", c.prompt_len},
                     {"rank_k", c.rank_k ? nlohmann::json(*c.rank_k) : nlohmann::json(nullptr)},
                     {"cutoff", c.cutoff},
                     {"h", c.h},
                     {"w", c.w},
                     {"fusion_init", c.fusion_init},
                     {"aux_order", c.aux_order == AuxOrder::Replace ? "replace" : "residual"},
                     {"mode", c.mode == cap::CapMode::Full ? "full" : "filtered"},
                     {"prompt_init", c.prompt_init == PromptInit::Zeros ? "zeros" : "random"},
                     {"prompt_init_scale", c.prompt_init_scale}};
}

// Unknown keys are rejected; missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, AdapterConfig& c) {
  if (!j.is_object()) throw ConfigError("adapter config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "embed_dim") c.embed_dim = val.get<std::size_t>();
      else if (key == "prompt_len") c.prompt_len = val.get<std::size_t>();
      else if (key == "rank_k") c.rank_k = val.is_null() ? std::nullopt : std::optional(val.get<std::size_t>());
      else if (key == "cutoff") c.cutoff = val.get<double>();
      else if (key == "h") c.h = val.get<std::size_t>();
      else if (key == "w") c.w = val.get<std::size_t>();
      else if (key == "fusion_init") c.fusion_init = val.get<double>();
      else if (key == "aux_order") {
        const auto s = val.get<std::string>();
        if (s != "replace" && s != "residual") throw ConfigError("aux_order: replace|residual");
        c.aux_order = s == "replace" ? AuxOrder::Replace : AuxOrder::Residual;
      } else if (key == "mode") {
        const auto s = val.get<std::string>();
        if (s != "full" && s != "filtered") throw ConfigError("mode: full|filtered");
        c.mode = s == "full" ? cap::CapMode::Full : cap::CapMode::Filtered;
      } else if (key == "prompt_init") {
        const auto s = val.get<std::string>();
        if (s != "zeros" && s != "random") throw ConfigError("prompt_init: zeros|random");
        c.prompt_init = s == "zeros" ? PromptInit::Zeros : PromptInit::Random;
      } else if (key == "prompt_init_scale") c.prompt_init_scale = val.get<double>();
      else throw ConfigError("unknown adapter config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("adapter config key '" + key + "': " + e.what());
    }
  }
}

struct CausalBranchParams {
  Matrix w1, b1, w2, b2;  // d×d, 1×d, d×d, 1×d

  static CausalBranchParams zeros(std::size_t d) {
    return {Matrix(d, d), Matrix(1, d), Matrix(d, d), Matrix(1, d)};
  }
  static CausalBranchParams random(std::size_t d, CounterRng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    return {random_normal(d, d, rng, s), Matrix(1, d), random_normal(d, d, rng, s), Matrix(1, d)};
  }
};

struct AuxBranchParams {
  Matrix w_down;  // D×r
  Matrix w_up;    // r×D
  FrequencyMask mask;

  static std::size_t bottleneck(std::size_t dim) {
    return std::max<std::size_t>(1, (dim + 15) / 16);
  }

  // Random down-projection, zero up-projection.
  static AuxBranchParams make(std::size_t dim, std::size_t h, std::size_t w, double cutoff,
                              CounterRng& rng) {
    const std::size_t r = bottleneck(dim);
    return {random_normal(dim, r, rng, 1.0 / std::sqrt(static_cast<double>(dim))), Matrix(r, dim),
            make_highpass(h, w, cutoff)};
  }
};

// Fusion ratio stored unconstrained and squashed through the logistic map.
struct FusionState {
  double alpha = 0.0;
  double ratio() const { return logistic(alpha); }
};

// σ(MLP(p̃)) with a sigmoid hidden layer: rows of p_tilde map to (0,1)^d.
inline ad::Var causal_branch(ad::Var p_tilde, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2) {
  if (p_tilde.cols() != w1.rows() || w1.cols() != w2.rows()) {
    throw ShapeError("causal_branch: activation " + p_tilde.value().shape_str() +
                     " vs weights " + w1.value().shape_str() + ", " + w2.value().shape_str());
  }
  ad::Var hidden = ad::sigmoid(ad::add_row(ad::matmul(p_tilde, w1), b1));
  return ad::sigmoid(ad::add_row(ad::matmul(hidden, w2), b2));
}

inline Matrix causal_branch(const Matrix& p_tilde, const CausalBranchParams& p) {
  ad::Tape t(false);
  return causal_branch(t.constant(p_tilde), t.constant(p.w1), t.constant(p.b1),
                       t.constant(p.w2), t.constant(p.b2))
      .value();
}

// x₁ = σ(x·W_down·W_up) (plus x under Residual order), then the mask is applied
// per channel over the h×w grid.
inline ad::Var aux_branch(ad::Var x, ad::Var w_down, ad::Var w_up, const FrequencyMask& mask,
                          AuxOrder order = AuxOrder::Replace) {
  if (x.rows() != mask.rows * mask.cols) {
    throw ShapeError("aux_branch: " + std::to_string(x.rows()) + " tokens do not match the " +
                     std::to_string(mask.rows) + "x" + std::to_string(mask.cols) + " grid");
  }
  if (x.cols() != w_down.rows() || w_down.cols() != w_up.rows() || w_up.cols() != x.cols()) {
    throw ShapeError("aux_branch: bottleneck shapes do not match channel dim " +
                     std::to_string(x.cols()));
  }
  ad::Var x1 = ad::sigmoid(ad::matmul(ad::matmul(x, w_down), w_up));
  if (order == AuxOrder::Residual) x1 = ad::add(x, x1);
  return ad::spectral_filter(x1, mask);
}

inline Matrix aux_branch(const Matrix& x, const AuxBranchParams& p,
                         AuxOrder order = AuxOrder::Replace) {
  ad::Tape t(false);
  return aux_branch(t.constant(x), t.constant(p.w_down), t.constant(p.w_up), p.mask, order).value();
}

// (1−s)·base + s·prompt_feat evaluated as base + s·(prompt_feat − base),
// s = logistic(alpha).
inline ad::Var fuse(ad::Var base, ad::Var prompt_feat, ad::Var alpha) {
  if (!base.value().same_shape(prompt_feat.value())) {
    throw ShapeError("fuse: " + base.value().shape_str() + " vs " +
                     prompt_feat.value().shape_str());
  }
  ad::Var s = ad::sigmoid(alpha);
  return ad::add(base, ad::scale_by(s, ad::sub(prompt_feat, base)));
}

inline Matrix fuse(const Matrix& base, const Matrix& prompt_feat, const FusionState& f) {
  ad::Tape t(false);
  return fuse(t.constant(base), t.constant(prompt_feat), t.constant(Matrix(1, 1, f.alpha))).value();
}

// Parameter ids of one layer under a prefix, e.g. "L0.".
struct LayerIds {
  std::string prefix;
  std::string prompts() const { return prefix + "prompts"; }
  std::string w_q() const { return prefix + "cap.w_q"; }
  std::string w_k() const { return prefix + "cap.w_k"; }
  std::string w_v() const { return prefix + "cap.w_v"; }
  std::string c_w1() const { return prefix + "causal.w1"; }
  std::string c_b1() const { return prefix + "causal.b1"; }
  std::string c_w2() const { return prefix + "causal.w2"; }
  std::string c_b2() const { return prefix + "causal.b2"; }
  std::string w_down() const { return prefix + "aux.w_down"; }
  std::string w_up() const { return prefix + "aux.w_up"; }
  std::string alpha() const { return prefix + "fusion.alpha"; }
};

// Every learnable piece of one Cauvis layer.
struct LayerWeights {
  cap::PromptBank prompts;
  cap::ProjectionWeights proj;
  CausalBranchParams causal;
  AuxBranchParams aux;
  FusionState fusion;

  // Documented initialization: prompts per config (zeros by default), random
  // projections and causal MLP, random W_down, zero W_up, alpha = fusion_init.
  static LayerWeights init(const AdapterConfig& cfg, CounterRng& rng) {
    cfg.validate();
    const std::size_t d = cfg.embed_dim;
    LayerWeights w;
    w.prompts = cfg.prompt_init == PromptInit::Zeros
                    ? cap::PromptBank::zeros(cfg.prompt_len, d)
                    : cap::PromptBank::random(cfg.prompt_len, d, rng, cfg.prompt_init_scale);
    w.proj = cap::ProjectionWeights::random(d, rng);
    w.causal = CausalBranchParams::random(d, rng);
    w.aux = AuxBranchParams::make(d, cfg.h, cfg.w, cfg.cutoff, rng);
    w.fusion = FusionState{cfg.fusion_init};
    return w;
  }

  void store_into(ad::ParameterStore& ps, const LayerIds& ids) const {
    ps.add(ids.prompts(), prompts.tokens);
    ps.add(ids.w_q(), proj.w_q);
    ps.add(ids.w_k(), proj.w_k);
    ps.add(ids.w_v(), proj.w_v);
    ps.add(ids.c_w1(), causal.w1);
    ps.add(ids.c_b1(), causal.b1);
    ps.add(ids.c_w2(), causal.w2);
    ps.add(ids.c_b2(), causal.b2);
    ps.add(ids.w_down(), aux.w_down);
    ps.add(ids.w_up(), aux.w_up);
    ps.add(ids.alpha(), Matrix(1, 1, fusion.alpha));
  }
};

struct LayerOutput {
  ad::Var x_next;
  ad::Var gated;    // g = y ⊙ ΔX
  ad::Var aux_out;  // high-passed bottleneck
  cap::CapVars cap;
};

struct LayerVars {
  ad::Var prompts, w_q, w_k, w_v, c_w1, c_b1, c_w2, c_b2, w_down, w_up, alpha;

  static LayerVars bind(ad::Tape& t, ad::ParameterStore& ps, const LayerIds& ids) {
    return {t.parameter(ps.at(ids.prompts())), t.parameter(ps.at(ids.w_q())),
            t.parameter(ps.at(ids.w_k())),     t.parameter(ps.at(ids.w_v())),
            t.parameter(ps.at(ids.c_w1())),    t.parameter(ps.at(ids.c_b1())),
            t.parameter(ps.at(ids.c_w2())),    t.parameter(ps.at(ids.c_b2())),
            t.parameter(ps.at(ids.w_down())),  t.parameter(ps.at(ids.w_up())),
            t.parameter(ps.at(ids.alpha()))};
  }

  static LayerVars constants(ad::Tape& t, const LayerWeights& w) {
    return {t.constant(w.prompts.tokens), t.constant(w.proj.w_q),  t.constant(w.proj.w_k),
            t.constant(w.proj.w_v),       t.constant(w.causal.w1), t.constant(w.causal.b1),
            t.constant(w.causal.w2),      t.constant(w.causal.b2), t.constant(w.aux.w_down),
            t.constant(w.aux.w_up),       t.constant(Matrix(1, 1, w.fusion.alpha))};
  }
};

struct LayerConfig {
  cap::CapConfig cap;
  AuxOrder aux_order = AuxOrder::Replace;
};

inline LayerConfig layer_config(const AdapterConfig& a, double lambda_tail) {
  return {cap::CapConfig{a.rank_k, a.mode, lambda_tail}, a.aux_order};
}

inline LayerOutput cauvis_layer_forward(ad::Var x, const LayerVars& v, const FrequencyMask& mask,
                                        const LayerConfig& cfg) {
  cap::CapVars c = cap::cap_forward(x, v.prompts, v.w_q, v.w_k, v.w_v, cfg.cap);
  ad::Var y = causal_branch(c.delta_x, v.c_w1, v.c_b1, v.c_w2, v.c_b2);
  ad::Var gated = ad::hadamard(y, c.delta_x);
  ad::Var aux = aux_branch(x, v.w_down, v.w_up, mask, cfg.aux_order);
  ad::Var x_next = ad::add(x, fuse(gated, aux, v.alpha));
  return {x_next, gated, aux, std::move(c)};
}

inline Matrix cauvis_layer_forward(const Matrix& x, const LayerWeights& w, const LayerConfig& cfg) {
  ad::Tape t(false);
  return cauvis_layer_forward(t.constant(x), LayerVars::constants(t, w), w.aux.mask, cfg)
      .x_next.value();
}

}  // namespace cauvis::adapter
