#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cauvis/errors.hpp"
#include "cauvis/numerics/random.hpp"

namespace cauvis::causal {

using Distribution = std::vector<double>;

// Discrete structural model with a finite confounder: P(z) and the outcome
// table P(y | x, z).
struct DiscreteSCM {
  std::size_t x_states = 0;
  std::size_t z_states = 0;
  std::size_t y_states = 0;
  Distribution p_z;
  // Row-major by (x, z): table[x * z_states + z] is a distribution over y.
  std::vector<Distribution> p_y_given_xz;
  // Optional P(x | z), rows indexed by z; enables the conditional weighting.
  std::optional<std::vector<Distribution>> p_x_given_z;

  const Distribution& outcome(std::size_t x, std::size_t z) const {
    return p_y_given_xz[x * z_states + z];
  }

  void validate() const;
};

inline void check_distribution(const Distribution& d, std::size_t expected, const std::string& what) {
  if (d.size() != expected) {
    throw ShapeError(what + ": expected " + std::to_string(expected) + " entries, got " +
                     std::to_string(d.size()));
  }
  double s = 0.0;
  for (double v : d) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(what + ": negative or non-finite probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": probabilities sum to " << s;
    throw ConfigError(os.str());
  }
}

inline void DiscreteSCM::validate() const {
  if (x_states == 0 || z_states == 0 || y_states == 0) throw ConfigError("SCM: empty state space");
  check_distribution(p_z, z_states, "P(z)");
  if (p_y_given_xz.size() != x_states * z_states) {
    throw ShapeError("SCM: outcome table needs |X|·|Z| rows");
  }
  for (std::size_t x = 0; x < x_states; ++x)
    for (std::size_t z = 0; z < z_states; ++z)
      check_distribution(outcome(x, z), y_states,
                         "P(y|x=" + std::to_string(x) + ",z=" + std::to_string(z) + ")");
  if (p_x_given_z) {
    if (p_x_given_z->size() != z_states) throw ShapeError("SCM: P(x|z) needs |Z| rows");
    for (std::size_t z = 0; z < z_states; ++z)
      check_distribution((*p_x_given_z)[z], x_states, "P(x|z=" + std::to_string(z) + ")");
  }
}

// Σ_z P(y|x,z)·P(z) by enumeration.
inline Distribution backdoor_adjust(const DiscreteSCM& scm, std::size_t x) {
  if (x >= scm.x_states) {
    throw LookupError("backdoor_adjust: x index " + std::to_string(x) + " not in [0, " +
                      std::to_string(scm.x_states) + ")");
  }
  Distribution out(scm.y_states, 0.0);
  for (std::size_t z = 0; z < scm.z_states; ++z) {
    const auto& py = scm.outcome(x, z);
    for (std::size_t y = 0; y < scm.y_states; ++y) out[y] += py[y] * scm.p_z[z];
  }
  return out;
}

// Observational P(z | x) ∝ P(x | z)·P(z); requires p_x_given_z.
inline Distribution posterior_z(const DiscreteSCM& scm, std::size_t x) {
  if (!scm.p_x_given_z) throw LookupError("posterior_z: SCM has no P(x|z) table");
  if (x >= scm.x_states) throw LookupError("posterior_z: x index out of range");
  Distribution w(scm.z_states);
  double total = 0.0;
  for (std::size_t z = 0; z < scm.z_states; ++z) {
    w[z] = (*scm.p_x_given_z)[z][x] * scm.p_z[z];
    total += w[z];
  }
  if (total <= 0.0) throw NumericError("posterior_z: P(x) is zero");
  for (double& v : w) v /= total;
  return w;
}

namespace detail {
inline Distribution random_simplex(std::size_t n, CounterRng& rng) {
  // Normalized exponentials: a uniform draw from the simplex.
  Distribution d(n);
  double s = 0.0;
  for (double& v : d) {
    double u = rng.uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    v = -std::log(u);
    s += v;
  }
  for (double& v : d) v /= s;
  // Push the rounding residue into the largest entry so the sum is 1 to the ulp.
  double acc = 0.0;
  std::size_t big = 0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += d[i];
    if (d[i] > d[big]) big = i;
  }
  d[big] += 1.0 - acc;
  return d;
}
}  // namespace detail

inline DiscreteSCM random_scm(std::size_t x_states, std::size_t z_states, std::size_t y_states,
                              CounterRng& rng, bool with_x_given_z = false) {
  DiscreteSCM scm;
  scm.x_states = x_states;
  scm.z_states = z_states;
  scm.y_states = y_states;
  scm.p_z = detail::random_simplex(z_states, rng);
  for (std::size_t i = 0; i < x_states * z_states; ++i)
    scm.p_y_given_xz.push_back(detail::random_simplex(y_states, rng));
  if (with_x_given_z) {
    std::vector<Distribution> t;
    for (std::size_t z = 0; z < z_states; ++z) t.push_back(detail::random_simplex(x_states, rng));
    scm.p_x_given_z = std::move(t);
  }
  return scm;
}

// JSON form: {"z_probs": [...], "table": {"x,z": [y-probs...]}, optional
// "x_given_z": [[...], ...]}. State counts are inferred from the keys.
inline DiscreteSCM scm_from_json(const nlohmann::json& j) {
  DiscreteSCM scm;
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "z_probs" && key != "table" && key != "x_given_z") {
        throw ConfigError("SCM: unknown key '" + key + "'");
      }
    }
    scm.p_z = j.at("z_probs").get<Distribution>();
    scm.z_states = scm.p_z.size();
    std::map<std::pair<std::size_t, std::size_t>, Distribution> cells;
    std::size_t max_x = 0;
    for (const auto& [key, val] : j.at("table").items()) {
      const auto comma = key.find(',');
      if (comma == std::string::npos) throw ConfigError("SCM: table key '" + key + "' is not \"x,z\"");
      const std::size_t x = std::stoul(key.substr(0, comma));
      const std::size_t z = std::stoul(key.substr(comma + 1));
      cells[{x, z}] = val.get<Distribution>();
      max_x = std::max(max_x, x);
    }
    if (cells.empty()) throw ConfigError("SCM: empty table");
    scm.x_states = max_x + 1;
    scm.y_states = cells.begin()->second.size();
    for (std::size_t x = 0; x < scm.x_states; ++x) {
      for (std::size_t z = 0; z < scm.z_states; ++z) {
        auto it = cells.find({x, z});
        if (it == cells.end()) {
          throw ConfigError("SCM: table misses cell \"" + std::to_string(x) + "," +
                            std::to_string(z) + "\"");
        }
        scm.p_y_given_xz.push_back(it->second);
      }
    }
    if (cells.size() != scm.x_states * scm.z_states) throw ConfigError("SCM: table has stray cells");
    if (j.contains("x_given_z")) scm.p_x_given_z = j.at("x_given_z").get<std::vector<Distribution>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("SCM: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ConfigError(std::string("SCM: bad table key: ") + e.what());
  }
  scm.validate();
  return scm;
}

inline nlohmann::json scm_to_json(const DiscreteSCM& scm) {
  nlohmann::json table = nlohmann::json::object();
  for (std::size_t x = 0; x < scm.x_states; ++x)
    for (std::size_t z = 0; z < scm.z_states; ++z)
      table[std::to_string(x) + "," + std::to_string(z)] = scm.outcome(x, z);
  nlohmann::json j{{"z_probs", scm.p_z}, {"table", table}};
  if (scm.p_x_given_z) j["x_given_z"] = *scm.p_x_given_z;
  return j;
}

}  // namespace cauvis::causal
