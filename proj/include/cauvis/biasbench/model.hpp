#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cauvis/adapter/adapter.hpp"
#include "cauvis/autograd/checkpoint.hpp"
#include "cauvis/autograd/ops.hpp"
#include "cauvis/autograd/optim.hpp"
#include "cauvis/biasbench/dataset.hpp"
#include "cauvis/causal/oracle.hpp"

// Classifier used on the benchmark.
//
//   tokens  X = p·e + 1·b               one token per pixel, frozen embedding
//   layers  X ← CauvisLayer(X)          cauvis kind only
//   pool    z_c = mean_i X_ic²          per-channel energy
//   head    logits = z·W + c
//
// The baseline has the same embedding, pooling and head with the layers
// replaced by the identity.
namespace cauvis::biasbench {

enum class ModelKind { Baseline, Cauvis };

inline const char* kind_name(ModelKind k) { return k == ModelKind::Baseline ? "baseline" : "cauvis"; }

inline ModelKind parse_kind(const std::string& s) {
  if (s == "baseline") return ModelKind::Baseline;
  if (s == "cauvis") return ModelKind::Cauvis;
  throw ConfigError("model kind must be baseline|cauvis, got '" + s + "'");
}

struct ProbeConfig {
  std::size_t samples = 16;     // leading training samples used for history rows
  std::size_t directions = 4;   // random prompt directions for jacobian_norm
  double eps = 1e-4;
};

struct ExperimentConfig {
  ModelKind kind = ModelKind::Cauvis;
  std::size_t layers = 1;
  adapter::AdapterConfig adapter;
  ad::TrainConfig train;
  ProbeConfig probe;

  void validate() const {
    adapter.validate();
    train.validate();
    if (layers == 0) throw ConfigError("layers must be >= 1");
    if (probe.samples == 0 || probe.directions == 0) throw ConfigError("probe sizes must be >= 1");
    if (!(probe.eps > 0.0)) throw ConfigError("probe.eps must be > 0");
  }
};

// Desk-scale defaults for the benchmark: 8 prompts, fixed causal rank 1 and a
// larger learning rate. The library defaults (100 prompts, adaptive rank,
// lr 1e-4) follow the large-scale recipe.
inline ExperimentConfig bench_defaults() {
  ExperimentConfig c;
  c.adapter.prompt_len = 8;
  c.adapter.rank_k = 1;
  c.train.learning_rate = 1e-2;
  c.train.epochs = 15;
  c.train.batch_size = 16;
  c.train.lambda_tail = 0.05;
  c.train.lambda_inv = 0.1;
  c.train.lambda_spurious = 0.0;
  return c;
}

inline void to_json(nlohmann::json& j, const ProbeConfig& p) {
  j = nlohmann::json{{"samples", p.samples}, {"directions", p.directions}, {"eps", p.eps}};
}

inline void from_json(const nlohmann::json& j, ProbeConfig& p) {
  if (!j.is_object()) throw ConfigError("probe config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "samples") p.samples = val.get<std::size_t>();
      else if (key == "directions") p.directions = val.get<std::size_t>();
      else if (key == "eps") p.eps = val.get<double>();
      else throw ConfigError("unknown probe config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("probe config key '" + key + "': " + e.what());
    }
  }
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"kind", kind_name(c.kind)},
                     {"layers", c.layers},
                     {"adapter", c.adapter},
                     {"train", c.train},
                     {"probe", c.probe}};
}

// Overlays j onto c; unknown keys are rejected.
inline void merge_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "kind") c.kind = parse_kind(val.get<std::string>());
      else if (key == "layers") c.layers = val.get<std::size_t>();
      else if (key == "adapter") adapter::from_json(val, c.adapter);
      else if (key == "train") ad::from_json(val, c.train);
      else if (key == "probe") from_json(val, c.probe);
      else throw ConfigError("unknown experiment config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("experiment config key '" + key + "': " + e.what());
    }
  }
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) { merge_json(j, c); }

// ---------------------------------------------------------------------------

struct Model {
  ExperimentConfig cfg;
  ad::ParameterStore params;

  adapter::LayerIds layer_ids(std::size_t l) const { return {"L" + std::to_string(l) + "."}; }
  std::size_t active_layers() const { return cfg.kind == ModelKind::Cauvis ? cfg.layers : 0; }

  FrequencyMask highpass() const { return make_highpass(cfg.adapter.h, cfg.adapter.w, cfg.adapter.cutoff); }

  adapter::LayerWeights layer_weights(std::size_t l) const {
    const auto ids = layer_ids(l);
    adapter::LayerWeights w;
    w.prompts.tokens = params.at(ids.prompts()).value;
    w.proj = {params.at(ids.w_q()).value, params.at(ids.w_k()).value, params.at(ids.w_v()).value};
    w.causal = {params.at(ids.c_w1()).value, params.at(ids.c_b1()).value,
                params.at(ids.c_w2()).value, params.at(ids.c_b2()).value};
    w.aux = {params.at(ids.w_down()).value, params.at(ids.w_up()).value, highpass()};
    w.fusion = {params.at(ids.alpha()).value(0, 0)};
    return w;
  }

  // Projection weights train at projection_lr_scale × the base rate.
  std::map<std::string, double> lr_scale() const {
    std::map<std::string, double> out;
    for (std::size_t l = 0; l < active_layers(); ++l) {
      const auto ids = layer_ids(l);
      for (const auto& id : {ids.w_q(), ids.w_k(), ids.w_v()})
        out[id] = cfg.train.projection_lr_scale;
    }
    return out;
  }
};

inline Model init_model(const ExperimentConfig& cfg) {
  cfg.validate();
  Model m{cfg, {}};
  const std::size_t d = cfg.adapter.embed_dim;
  CounterRng embed_rng(cfg.train.seed, "model/embed");
  m.params.add("embed.e", random_normal(1, d, embed_rng, 1.0), false);
  m.params.add("embed.b", random_normal(1, d, embed_rng, 1.0), false);
  CounterRng head_rng(cfg.train.seed, "model/head");
  m.params.add("head.w", random_normal(d, 2, head_rng, 0.1));
  m.params.add("head.b", Matrix(1, 2));
  for (std::size_t l = 0; l < m.active_layers(); ++l) {
    CounterRng rng(cfg.train.seed, "model/layer" + std::to_string(l));
    adapter::LayerWeights::init(cfg.adapter, rng).store_into(m.params, m.layer_ids(l));
  }
  return m;
}

// Row-major flatten of an h×w image into an n×1 column.
inline Matrix flatten(const Matrix& img) { return Matrix(img.size(), 1, img.values()); }

inline Matrix embed(const Model& m, const Matrix& img) {
  return add(matmul(flatten(img), m.params.at("embed.e").value),
             matmul(Matrix(img.size(), 1, 1.0), m.params.at("embed.b").value));
}

struct ForwardTerms {
  ad::Var logits;
  ad::Var loss;          // cross-entropy plus every regularizer
  double tail_ratio = 0.0;  // mean over layers
  std::vector<std::vector<double>> spectra;  // singular values of each layer's map
};

inline ForwardTerms forward(ad::Tape& tape, Model& m, const Sample& s) {
  if (s.pixels.rows() != m.cfg.adapter.h || s.pixels.cols() != m.cfg.adapter.w) {
    throw ShapeError("model expects " + std::to_string(m.cfg.adapter.h) + "x" +
                     std::to_string(m.cfg.adapter.w) + " images, got " + s.pixels.shape_str());
  }
  const auto& tc = m.cfg.train;
  ad::Var x = tape.constant(embed(m, s.pixels));
  const FrequencyMask hp = m.highpass();
  const FrequencyMask lp = complement(hp);
  const auto lcfg = adapter::layer_config(m.cfg.adapter, tc.lambda_tail);

  std::vector<ad::Var> reg;
  std::vector<std::vector<double>> spectra;
  double tail = 0.0;
  for (std::size_t l = 0; l < m.active_layers(); ++l) {
    auto vars = adapter::LayerVars::bind(tape, m.params, m.layer_ids(l));
    auto out = adapter::cauvis_layer_forward(x, vars, hp, lcfg);
    tail += cap::tail_energy_ratio(out.cap.dec.sigma, out.cap.dec.k);
    spectra.push_back(out.cap.dec.sigma);
    if (tc.lambda_tail > 0.0) reg.push_back(out.cap.penalty);
    if (tc.lambda_spurious > 0.0 || tc.lambda_inv > 0.0) {
      ad::Var shifted = ad::add(x, out.gated);
      if (tc.lambda_spurious > 0.0)
        reg.push_back(ad::scale(ad::mean_abs(ad::spectral_filter(shifted, lp)), tc.lambda_spurious));
      if (tc.lambda_inv > 0.0) {
        ad::Var diff = ad::sub(ad::spectral_filter(shifted, hp), ad::spectral_filter(x, hp));
        reg.push_back(ad::scale(ad::smooth_rms(diff, causal::kJointLossEps), tc.lambda_inv));
      }
    }
    x = out.x_next;
  }
  ad::Var pooled = ad::col_mean(ad::square(x));
  ad::Var logits = ad::add_row(ad::matmul(pooled, tape.parameter(m.params.at("head.w"))),
                               tape.parameter(m.params.at("head.b")));
  ad::Var loss = ad::softmax_cross_entropy(logits, {s.label});
  for (const auto& r : reg) loss = ad::add(loss, r);
  const double layers = static_cast<double>(m.active_layers());
  return {logits, loss, layers > 0 ? tail / layers : 0.0, std::move(spectra)};
}

inline int predict(Model& m, const Sample& s) {
  ad::Tape t(false);
  const Matrix& lg = forward(t, m, s).logits.value();
  return lg(0, 1) > lg(0, 0) ? kTruck : kBus;
}

// ‖∂H(x + g(P))/∂P‖ for the first layer, averaged over probe samples.
inline double jacobian_norm(const Model& m, const std::vector<Sample>& probe) {
  if (m.active_layers() == 0) return 0.0;
  const adapter::LayerWeights w = m.layer_weights(0);
  const auto lcfg = adapter::layer_config(m.cfg.adapter, 0.0);
  const FrequencyMask hp = m.highpass();
  double acc = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const Matrix x = embed(m, probe[i].pixels);
    auto f = [&](const Matrix& prompts) {
      const cap::PromptBank bank{prompts};
      const auto c = cap::cap_forward(x, bank, w.proj, lcfg.cap);
      const Matrix g = hadamard(adapter::causal_branch(c.delta_x, w.causal), c.delta_x);
      return spectral_filter(add(x, g), hp);
    };
    acc += causal::invariance_check(f, w.prompts.tokens, m.cfg.probe.directions, m.cfg.probe.eps,
                                    m.cfg.train.seed + i);
  }
  return acc / static_cast<double>(probe.size());
}

struct HistoryRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double tail_energy_ratio = 0.0;
  double jacobian_norm = 0.0;
};

inline HistoryRow probe_row(Model& m, const std::vector<Sample>& probe, std::size_t epoch) {
  HistoryRow row{epoch, 0.0, 0.0, 0.0};
  for (const auto& s : probe) {
    ad::Tape t(false);
    const ForwardTerms ft = forward(t, m, s);
    row.loss += ft.loss.value()(0, 0);
    row.tail_energy_ratio += ft.tail_ratio;
  }
  const double n = static_cast<double>(probe.size());
  row.loss /= n;
  row.tail_energy_ratio /= n;
  row.jacobian_norm = jacobian_norm(m, probe);
  if (!std::isfinite(row.loss)) throw TrainingError("non-finite probe loss", epoch);
  return row;
}

struct TrainResult {
  Model model;
  std::vector<HistoryRow> history;  // epoch 0 is the initialization
  std::size_t steps = 0;
};

inline TrainResult train_model(const Dataset& data, const ExperimentConfig& cfg) {
  if (data.train.empty()) throw ConfigError("train_model: empty training split");
  if (data.spec.h != cfg.adapter.h || data.spec.w != cfg.adapter.w) {
    throw ConfigError("train_model: dataset grid " + std::to_string(data.spec.h) + "x" +
                      std::to_string(data.spec.w) + " does not match adapter grid " +
                      std::to_string(cfg.adapter.h) + "x" + std::to_string(cfg.adapter.w));
  }
  TrainResult res{init_model(cfg), {}, 0};
  Model& m = res.model;
  const auto& tc = cfg.train;
  const auto scales = m.lr_scale();
  const std::vector<Sample> probe(
      data.train.begin(), data.train.begin() + std::min(cfg.probe.samples, data.train.size()));

  res.history.push_back(probe_row(m, probe, 0));
  ad::AdamState adam;
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    CounterRng shuffle(tc.seed, "train/shuffle/" + std::to_string(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      m.params.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        ad::Tape tape;
        const ForwardTerms ft = forward(tape, m, data.train[order[b]]);
        if (!std::isfinite(ft.loss.value()(0, 0))) {
          throw TrainingError("non-finite training loss", epoch);
        }
        tape.backward(ad::scale(ft.loss, inv_b));
      }
      ad::adamw_step(m.params, adam, tc, ++res.steps, scales);
    }
    res.history.push_back(probe_row(m, probe, epoch));
  }
  return res;
}

// ---------------------------------------------------------------------------

struct MetricsRecord {
  std::string split;
  double accuracy = 0.0;
  std::map<std::string, double> per_class_accuracy;
  std::size_t count = 0;
};

inline MetricsRecord evaluate_split(Model& m, const std::vector<Sample>& samples,
                                    const std::string& split) {
  MetricsRecord r{split, 0.0, {{"bus", 0.0}, {"truck", 0.0}}, samples.size()};
  std::size_t hit = 0, n_cls[2] = {0, 0}, hit_cls[2] = {0, 0};
  for (const auto& s : samples) {
    const bool ok = predict(m, s) == s.label;
    hit += ok;
    n_cls[s.label] += 1;
    hit_cls[s.label] += ok;
  }
  if (!samples.empty()) r.accuracy = static_cast<double>(hit) / static_cast<double>(samples.size());
  if (n_cls[kBus]) r.per_class_accuracy["bus"] = static_cast<double>(hit_cls[kBus]) / n_cls[kBus];
  if (n_cls[kTruck])
    r.per_class_accuracy["truck"] = static_cast<double>(hit_cls[kTruck]) / n_cls[kTruck];
  return r;
}

struct EvalReport {
  MetricsRecord biased;
  MetricsRecord unbiased;
  double gap = 0.0;  // biased − unbiased accuracy
};

inline EvalReport evaluate(Model& m, const Dataset& data) {
  EvalReport r{evaluate_split(m, data.biased_test, "biased_test"),
               evaluate_split(m, data.unbiased_test, "unbiased_test"), 0.0};
  r.gap = r.biased.accuracy - r.unbiased.accuracy;
  return r;
}

inline nlohmann::json to_json(const MetricsRecord& r) {
  return {{"split", r.split}, {"accuracy", r.accuracy}, {"per_class_accuracy", r.per_class_accuracy},
          {"count", r.count}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"biased_test", to_json(r.biased)}, {"unbiased_test", to_json(r.unbiased)}, {"gap", r.gap}};
}

// ---------------------------------------------------------------------------

inline void save_model(const std::filesystem::path& dir, const Model& m, std::size_t step) {
  ad::save_checkpoint(dir, m.params, nlohmann::json(m.cfg), step);
}

inline Model load_model(const std::filesystem::path& dir) {
  ad::Checkpoint ck = ad::load_checkpoint(dir);
  Model m;
  merge_json(ck.config, m.cfg);
  m.cfg.validate();
  m.params = std::move(ck.params);
  return m;
}

// Attention spectra of every layer for one reference input.
inline std::vector<std::vector<double>> layer_spectra(Model& m, const Sample& s) {
  ad::Tape t(false);
  return forward(t, m, s).spectra;
}

inline void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
  os << "epoch,loss,tail_energy_ratio,jacobian_norm\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.epoch << ',' << r.loss << ',' << r.tail_energy_ratio << ',' << r.jacobian_norm << '\n';
}

}  // namespace cauvis::biasbench
