#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "cauvis/autograd/tape.hpp"

namespace cauvis::ad {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  double lambda_tail = 0.0;  // weight of the singular-value tail penalty
  double lambda_inv = 0.0;   // weight of the invariance term in the joint loss
  double lambda_spurious = 0.0;  // weight of the spurious L1 term in the joint loss
  // Multiplier on the learning rate of the cross-attention projection
  // weights; 0.1 reproduces the reduced rate used for projections at scale.
  double projection_lr_scale = 1.0;
  std::uint64_t seed = 0;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0,1)");
    if (!(lambda_tail >= 0.0)) throw ConfigError("lambda_tail must be >= 0");
    if (!(lambda_inv >= 0.0)) throw ConfigError("lambda_inv must be >= 0");
    if (!(lambda_spurious >= 0.0)) throw ConfigError("lambda_spurious must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(projection_lr_scale > 0.0)) throw ConfigError("projection_lr_scale must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"weight_decay", c.weight_decay},
                     {"lambda_tail", c.lambda_tail},
                     {"lambda_inv", c.lambda_inv},
                     {"lambda_spurious", c.lambda_spurious},
                     {"projection_lr_scale", c.projection_lr_scale},
                     {"seed", c.seed},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size}};
}

// Unknown keys are rejected; missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "learning_rate") c.learning_rate = val.get<double>();
      else if (key == "beta1") c.beta1 = val.get<double>();
      else if (key == "beta2") c.beta2 = val.get<double>();
      else if (key == "adam_eps") c.adam_eps = val.get<double>();
      else if (key == "weight_decay") c.weight_decay = val.get<double>();
      else if (key == "lambda_tail") c.lambda_tail = val.get<double>();
      else if (key == "lambda_inv") c.lambda_inv = val.get<double>();
      else if (key == "lambda_spurious") c.lambda_spurious = val.get<double>();
      else if (key == "projection_lr_scale") c.projection_lr_scale = val.get<double>();
      else if (key == "seed") c.seed = val.get<std::uint64_t>();
      else if (key == "epochs") c.epochs = val.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = val.get<std::size_t>();
      else throw ConfigError("unknown train config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train config key '" + key + "': " + e.what());
    }
  }
}

struct AdamMoments {
  Matrix m;
  Matrix v;
};

// First/second moment estimates keyed by parameter id.
using AdamState = std::map<std::string, AdamMoments>;

// Decoupled weight decay followed by the bias-corrected Adam step, applied to
// every trainable parameter in ascending id order. `lr_scale` maps an id to a
// learning-rate multiplier (1 when absent).
inline void adamw_step(ParameterStore& params, AdamState& state, const TrainConfig& cfg,
                       std::size_t step_index,
                       const std::map<std::string, double>& lr_scale = {}) {
  if (step_index < 1) throw ConfigError("adamw_step: step_index must be >= 1");
  const double t = static_cast<double>(step_index);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [id, p] : params) {
    if (!p.trainable) continue;
    auto& mom = state[id];
    if (mom.m.size() != p.value.size()) {
      mom.m = Matrix(p.value.rows(), p.value.cols());
      mom.v = Matrix(p.value.rows(), p.value.cols());
    }
    double lr = cfg.learning_rate;
    if (auto it = lr_scale.find(id); it != lr_scale.end()) lr *= it->second;
    auto x = p.value.data();
    auto g = p.grad.data();
    auto m = mom.m.data();
    auto v = mom.v.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      x[i] *= 1.0 - lr * cfg.weight_decay;
      x[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
    }
  }
}

}  // namespace cauvis::ad
