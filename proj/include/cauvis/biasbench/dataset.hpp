#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cauvis/errors.hpp"
#include "cauvis/numerics/cmat_io.hpp"
#include "cauvis/numerics/matrix.hpp"
#include "cauvis/numerics/random.hpp"

// Synthetic bus/truck images with a controllable color–category association.
//
// pixel = base + amp·pattern + white·(offset + blob) + noise, clipped to [0,1]
//
// Shape (the causal cue) is a period-2 pattern: horizontal or vertical stripes
// for a bus, a checkerboard for a truck. Color (the confounder) is a DC offset
// plus a wide Gaussian blob, so it lives entirely at low frequency.
namespace cauvis::biasbench {

enum Label : int { kBus = 0, kTruck = 1 };
enum ShapeTag : int { kHorizontalStripes = 0, kVerticalStripes = 1, kChecks = 2 };

inline constexpr int label_of_shape(int shape_tag) { return shape_tag == kChecks ? kTruck : kBus; }

struct BiasSpec {
  double p_bias = 0.9;
  std::size_t n_train = 600;
  std::size_t n_test = 1000;  // split evenly between the biased and unbiased test sets
  std::size_t h = 16;
  std::size_t w = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(p_bias >= 0.5 && p_bias <= 1.0)) {
      std::ostringstream os;
      os << "p_bias must lie in [0.5, 1], got " << p_bias;
      throw ConfigError(os.str());
    }
    if (n_train < 1) throw ConfigError("n_train must be >= 1");
    if (n_test < 2) throw ConfigError("n_test must be >= 2 (biased and unbiased halves)");
    if (h < 2 || w < 2) throw ConfigError("grid must be at least 2x2");
  }

  std::size_t n_unbiased() const { return n_test / 2; }
  std::size_t n_biased() const { return n_test - n_unbiased(); }
};

inline void to_json(nlohmann::json& j, const BiasSpec& s) {
  j = nlohmann::json{{"p_bias", s.p_bias}, {"n_train", s.n_train}, {"n_test", s.n_test},
                     {"h", s.h},           {"w", s.w},             {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, BiasSpec& s) {
  if (!j.is_object()) throw ConfigError("dataset spec must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "p_bias") s.p_bias = val.get<double>();
      else if (key == "n_train") s.n_train = val.get<std::size_t>();
      else if (key == "n_test") s.n_test = val.get<std::size_t>();
      else if (key == "h") s.h = val.get<std::size_t>();
      else if (key == "w") s.w = val.get<std::size_t>();
      else if (key == "seed") s.seed = val.get<std::uint64_t>();
      else throw ConfigError("unknown dataset key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("dataset key '" + key + "': " + e.what());
    }
  }
}

// Image synthesis constants.
struct Appearance {
  double base = 0.2;
  double amplitude = 0.12;
  double white_offset = 0.5;
  double blob_height = 0.1;
  double blob_sigma = 3.0;
  double noise_sd = 0.015;
};

struct Sample {
  Matrix pixels;  // h×w
  int label = kBus;
  bool white = false;
  int shape_tag = kHorizontalStripes;
};

enum class SplitKind { Train, BiasedTest, UnbiasedTest };

inline const char* split_name(SplitKind k) {
  switch (k) {
    case SplitKind::Train: return "train";
    case SplitKind::BiasedTest: return "biased_test";
    case SplitKind::UnbiasedTest: return "unbiased_test";
  }
  return "?";
}

struct Dataset {
  BiasSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> biased_test;
  std::vector<Sample> unbiased_test;

  const std::vector<Sample>& split(SplitKind k) const {
    switch (k) {
      case SplitKind::Train: return train;
      case SplitKind::BiasedTest: return biased_test;
      case SplitKind::UnbiasedTest: return unbiased_test;
    }
    return train;
  }
};

inline Matrix render(std::size_t h, std::size_t w, int shape_tag, bool white, CounterRng& rng,
                     const Appearance& look = {}) {
  const int phase = rng.bernoulli(0.5) ? 1 : 0;
  const double cy = rng.uniform(0.0, static_cast<double>(h));
  const double cx = rng.uniform(0.0, static_cast<double>(w));
  Matrix img(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      std::size_t parity = 0;
      switch (shape_tag) {
        case kHorizontalStripes: parity = i; break;
        case kVerticalStripes: parity = j; break;
        default: parity = i + j; break;
      }
      const double pattern = ((parity + phase) % 2 == 0) ? 1.0 : -1.0;
      double v = look.base + look.amplitude * pattern;
      if (white) {
        const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
        const double blob =
            look.blob_height * std::exp(-(dy * dy + dx * dx) / (2.0 * look.blob_sigma * look.blob_sigma));
        v += look.white_offset + blob;
      }
      v += rng.normal(0.0, look.noise_sd);
      img(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

inline std::vector<Sample> generate_split(const BiasSpec& spec, SplitKind kind, std::size_t n,
                                          double p) {
  CounterRng rng(spec.seed, std::string("biasbench/") + split_name(kind));
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.label = rng.bernoulli(0.5) ? kTruck : kBus;
    s.shape_tag = s.label == kTruck ? kChecks
                                    : (rng.bernoulli(0.5) ? kVerticalStripes : kHorizontalStripes);
    s.white = rng.bernoulli(s.label == kTruck ? p : 1.0 - p);
    s.pixels = render(spec.h, spec.w, s.shape_tag, s.white, rng);
    out.push_back(std::move(s));
  }
  return out;
}

inline Dataset gen_dataset(const BiasSpec& spec) {
  spec.validate();
  Dataset d{spec, {}, {}, {}};
  d.train = generate_split(spec, SplitKind::Train, spec.n_train, spec.p_bias);
  d.biased_test = generate_split(spec, SplitKind::BiasedTest, spec.n_biased(), spec.p_bias);
  d.unbiased_test = generate_split(spec, SplitKind::UnbiasedTest, spec.n_unbiased(), 0.5);
  return d;
}

// Reference classifiers that read the tags directly.
inline int color_only_predict(const Sample& s) { return s.white ? kTruck : kBus; }
inline int shape_only_predict(const Sample& s) { return label_of_shape(s.shape_tag); }

template <class Predict>
double tag_accuracy(const std::vector<Sample>& split, Predict predict) {
  if (split.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : split) hit += predict(s) == s.label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(split.size());
}

// ---------------------------------------------------------------------------
// On disk: spec.json, samples.cmat (train, biased, unbiased in order) and
// labels.csv with one row per sample.

inline void save_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());

  {
    std::ofstream os(dir / "spec.json", std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / "spec.json").string());
    os << nlohmann::json(d.spec).dump(2) << '\n';
  }
  std::vector<Matrix> all;
  std::ofstream csv(dir / "labels.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (dir / "labels.csv").string());
  csv << "index,split,label,color_tag,shape_tag\n";
  std::size_t idx = 0;
  for (SplitKind k : {SplitKind::Train, SplitKind::BiasedTest, SplitKind::UnbiasedTest}) {
    for (const auto& s : d.split(k)) {
      csv << idx++ << ',' << split_name(k) << ',' << s.label << ','
          << (s.white ? "white" : "non-white") << ',' << s.shape_tag << '\n';
      all.push_back(s.pixels);
    }
  }
  if (!csv) throw IoError("write failed for labels.csv");
  cmat::save_all(dir / "samples.cmat", all);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream js(dir / "spec.json");
  if (!js) throw IoError("no dataset spec.json in " + dir.string());
  Dataset d;
  try {
    d.spec = nlohmann::json::parse(js).get<BiasSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed spec.json: " + std::string(e.what()));
  }
  d.spec.validate();
  const std::vector<Matrix> pixels = cmat::load_all(dir / "samples.cmat");

  std::ifstream csv(dir / "labels.csv");
  if (!csv) throw IoError("no labels.csv in " + dir.string());
  std::string line;
  std::getline(csv, line);
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string index, split, label, color, shape;
    if (!std::getline(ss, index, ',') || !std::getline(ss, split, ',') ||
        !std::getline(ss, label, ',') || !std::getline(ss, color, ',') ||
        !std::getline(ss, shape, ',')) {
      throw IoError("labels.csv: malformed row " + std::to_string(row + 1));
    }
    if (row >= pixels.size()) throw IoError("labels.csv has more rows than samples.cmat");
    Sample s;
    s.pixels = pixels[row];
    try {
      s.label = std::stoi(label);
      s.shape_tag = std::stoi(shape);
    } catch (const std::logic_error&) {
      throw IoError("labels.csv: bad integer on row " + std::to_string(row + 1));
    }
    s.white = color == "white";
    if (split == "train") d.train.push_back(std::move(s));
    else if (split == "biased_test") d.biased_test.push_back(std::move(s));
    else if (split == "unbiased_test") d.unbiased_test.push_back(std::move(s));
    else throw IoError("labels.csv: unknown split '" + split + "'");
    ++row;
  }
  if (row != pixels.size()) throw IoError("labels.csv and samples.cmat disagree on sample count");
  return d;
}

// FNV-1a over a file's bytes.
inline std::uint64_t file_checksum(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (is) {
    is.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Combined checksum over the dataset files in a fixed order.
inline std::uint64_t dataset_checksum(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* f : {"spec.json", "samples.cmat", "labels.csv"}) {
    h ^= file_checksum(dir / f);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cauvis::biasbench
