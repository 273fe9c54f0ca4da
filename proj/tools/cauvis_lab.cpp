// cauvis_lab: data generation, training, evaluation, sweeps, spectra and
// causal-oracle checks from the command line.
//
// Exit codes: 0 ok, 2 IO, 3 config, 4 numeric/training.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cauvis/cauvis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cauvis;

namespace {

enum ExitCode : int { kOk = 0, kIo = 2, kConfig = 3, kNumeric = 4 };

// Top-level run-config keys; each section is validated by its own parser.
const std::vector<std::string> kTopKeys = {"seed", "out",    "data",   "model",
                                           "sweep", "oracle", "spectrum", "paths"};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kTopKeys.begin(), kTopKeys.end(), key) == kTopKeys.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return j;
}

void check_section(const json& j, const std::string& name, const std::vector<std::string>& keys) {
  if (!j.contains(name)) return;
  if (!j.at(name).is_object()) throw ConfigError("config section '" + name + "' must be an object");
  for (const auto& [key, _] : j.at(name).items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown key '" + name + "." + key + "'");
    }
  }
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream os(p, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
  if (!os) throw IoError("write failed for " + p.string());
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ConfigError("not a number: '" + tok + "'");
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

// Shared flags: --config, --seed, --out.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON run config");
    cmd->add_option("--seed", seed, "Seed for every random stream");
    cmd->add_option("--out", out, "Output directory");
  }

  // Loads the config file and applies the shared flag overrides.
  json resolve() const {
    json j = load_config(config);
    if (seed) j["seed"] = *seed;
    if (!out.empty()) j["out"] = out;
    return j;
  }
};

std::uint64_t require_seed(const json& j) {
  if (!j.contains("seed")) throw ConfigError("a seed is required (--seed or config 'seed')");
  try {
    return j.at("seed").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw ConfigError("seed must be a non-negative integer");
  }
}

fs::path require_out(const json& j) {
  if (!j.contains("out")) throw ConfigError("an output directory is required (--out or config 'out')");
  return fs::path(j.at("out").get<std::string>());
}

std::string require_path(const json& j, const std::string& key) {
  check_section(j, "paths", {"data", "checkpoint"});
  if (!j.contains("paths") || !j.at("paths").contains(key)) {
    throw ConfigError("missing --" + key + " (or config paths." + key + ")");
  }
  return j.at("paths").at(key).get<std::string>();
}

biasbench::BiasSpec data_spec(const json& j) {
  check_section(j, "data", {"p_bias", "n_train", "n_test", "h", "w"});
  biasbench::BiasSpec spec;
  if (j.contains("data")) from_json(j.at("data"), spec);
  return spec;
}

biasbench::ExperimentConfig model_config(const json& j) {
  biasbench::ExperimentConfig cfg = biasbench::bench_defaults();
  if (j.contains("model")) biasbench::merge_json(j.at("model"), cfg);
  return cfg;
}

std::size_t sweep_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CAUVIS_LAB_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap < 1) throw ConfigError("CAUVIS_LAB_THREADS must be >= 1");
      n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    } catch (const std::logic_error&) {
      throw ConfigError("CAUVIS_LAB_THREADS must be an integer");
    }
  }
  return n;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const json& j) {
  biasbench::BiasSpec spec = data_spec(j);
  spec.seed = require_seed(j);
  const fs::path out = require_out(j);
  spec.validate();
  const auto data = biasbench::gen_dataset(spec);
  biasbench::save_dataset(out, data);
  std::cout << "dataset " << out.string() << "\n"
            << "samples " << data.train.size() + data.biased_test.size() + data.unbiased_test.size()
            << "\nchecksum " << hex64(biasbench::dataset_checksum(out)) << "\n";
  return kOk;
}

int cmd_train(const json& j) {
  auto cfg = model_config(j);
  cfg.train.seed = require_seed(j);
  const fs::path out = require_out(j);
  const auto data = biasbench::load_dataset(require_path(j, "data"));
  cfg.adapter.h = data.spec.h;
  cfg.adapter.w = data.spec.w;
  cfg.validate();
  auto res = biasbench::train_model(data, cfg);
  biasbench::save_model(out / "checkpoint", res.model, res.steps);
  std::ostringstream hist;
  biasbench::write_history_csv(hist, res.history);
  write_text(out / "history.csv", hist.str());
  const auto& last = res.history.back();
  std::cout << "checkpoint " << (out / "checkpoint").string() << "\n"
            << "history " << (out / "history.csv").string() << "\n"
            << "epochs " << cfg.train.epochs << " steps " << res.steps << " final_loss "
            << last.loss << "\n";
  return kOk;
}

int cmd_eval(const json& j) {
  const fs::path out = require_out(j);
  auto model = biasbench::load_model(require_path(j, "checkpoint"));
  const auto data = biasbench::load_dataset(require_path(j, "data"));
  const auto rep = biasbench::evaluate(model, data);
  write_text(out / "metrics.json", biasbench::to_json(rep).dump(2) + "\n");
  std::cout << "acc_biased " << rep.biased.accuracy << " acc_unbiased " << rep.unbiased.accuracy
            << " gap " << rep.gap << "\n";
  return kOk;
}

int cmd_sweep(const json& j) {
  check_section(j, "sweep", {"p", "kinds", "seeds"});
  biasbench::SweepPlan plan;
  plan.data = data_spec(j);
  plan.model = model_config(j);
  plan.model.adapter.h = plan.data.h;
  plan.model.adapter.w = plan.data.w;
  const json sw = j.value("sweep", json::object());
  try {
    plan.p_list = sw.value("p", std::vector<double>{0.75, 0.8, 0.85, 0.9});
    for (const auto& k : sw.value("kinds", std::vector<std::string>{"baseline", "cauvis"}))
      plan.kinds.push_back(biasbench::parse_kind(k));
    if (sw.contains("seeds")) {
      plan.seeds = sw.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      const std::uint64_t base = require_seed(j);
      for (std::uint64_t s = 0; s < 5; ++s) plan.seeds.push_back(base + s);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep section: ") + e.what());
  }
  const fs::path out = require_out(j);
  plan.threads = sweep_threads();
  const auto rep = biasbench::bias_sweep(plan);
  std::ostringstream csv;
  biasbench::write_sweep_csv(csv, rep);
  write_text(out / "sweep.csv", csv.str());
  write_text(out / "summary.json", biasbench::sweep_summary_json(rep).dump(2) + "\n");
  std::cout << "rows " << rep.rows.size() << "\n";
  for (const auto& s : rep.summary)
    std::cout << "p=" << s.p_bias << " " << biasbench::kind_name(s.kind) << " median_gap "
              << s.median_gap << "\n";
  return kOk;
}

int cmd_spectrum(const json& j) {
  check_section(j, "spectrum", {"sample"});
  const fs::path out = require_out(j);
  const fs::path ck_dir = require_path(j, "checkpoint");
  auto model = biasbench::load_model(ck_dir);
  const auto data = biasbench::load_dataset(require_path(j, "data"));
  const std::size_t idx = j.value("spectrum", json::object()).value("sample", std::size_t{0});
  if (idx >= data.train.size()) throw ConfigError("spectrum.sample is out of range");
  const std::size_t step = ad::load_checkpoint(ck_dir).step;
  std::vector<cap::SpectrumRow> rows;
  const auto spectra = biasbench::layer_spectra(model, data.train[idx]);
  for (std::size_t l = 0; l < spectra.size(); ++l) {
    auto r = cap::spectrum_rows(l, step, spectra[l]);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  std::ostringstream csv;
  cap::write_spectrum_csv(csv, rows);
  write_text(out / "spectrum.csv", csv.str());
  std::cout << "layers " << spectra.size() << " rows " << rows.size() << "\n";
  return kOk;
}

int cmd_oracle(const json& j) {
  check_section(j, "oracle", {"random_scms", "max_states", "scm_files"});
  const json oc = j.value("oracle", json::object());
  const std::size_t n_random = oc.value("random_scms", std::size_t{0});
  const std::size_t max_states = oc.value("max_states", std::size_t{5});
  const auto files = oc.value("scm_files", std::vector<std::string>{});
  if (max_states < 1) throw ConfigError("oracle.max_states must be >= 1");
  if (n_random == 0 && files.empty()) throw ConfigError("oracle needs --random-scms or --scm");
  const fs::path out = require_out(j);

  std::vector<std::pair<std::string, causal::DiscreteSCM>> scms;
  for (const auto& f : files) {
    std::ifstream is(f);
    if (!is) throw IoError("cannot read SCM file " + f);
    json sj;
    try {
      is >> sj;
    } catch (const json::exception& e) {
      throw ConfigError("SCM file " + f + " is not valid JSON: " + e.what());
    }
    scms.emplace_back(f, causal::scm_from_json(sj));
  }
  if (n_random > 0) {
    CounterRng rng(require_seed(j), "oracle/scm");
    for (std::size_t i = 0; i < n_random; ++i) {
      const std::size_t nx = 1 + rng.below(max_states);
      const std::size_t nz = 1 + rng.below(max_states);
      const std::size_t ny = 1 + rng.below(max_states);
      scms.emplace_back("random-" + std::to_string(i), causal::random_scm(nx, nz, ny, rng, true));
    }
  }

  json cases = json::array();
  double worst = 0.0;
  bool all_ok = true;
  for (const auto& [name, scm] : scms) {
    json c{{"case", name}, {"x_states", scm.x_states}, {"z_states", scm.z_states},
           {"y_states", scm.y_states}};
    bool valid = true;
    try {
      scm.validate();
      for (std::size_t x = 0; x < scm.x_states; ++x)
        causal::check_distribution(causal::backdoor_adjust(scm, x), scm.y_states, "P(y|do(x))");
    } catch (const Error& e) {
      valid = false;
      c["error"] = e.what();
    }
    c["valid"] = valid;
    if (valid) {
      const auto rep = causal::attention_backdoor_equiv(scm);
      c["max_abs_diff"] = rep.max_abs_diff;
      worst = std::max(worst, rep.max_abs_diff);
      if (!(rep.max_abs_diff <= 1e-12)) all_ok = false;
      if (scm.p_x_given_z) {
        c["conditional_diff"] =
            causal::attention_backdoor_equiv(scm, causal::ConfounderWeighting::Conditional)
                .max_abs_diff;
      }
    } else {
      all_ok = false;
    }
    cases.push_back(std::move(c));
  }
  json report{{"max_abs_diff", worst}, {"tolerance", 1e-12}, {"passed", all_ok}, {"cases", cases}};
  write_text(out / "oracle.json", report.dump(2) + "\n");
  std::cout << "cases " << scms.size() << " max_abs_diff " << worst << " "
            << (all_ok ? "PASS" : "FAIL") << "\n";
  return all_ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cauvis desk lab: synthetic bias benchmark, training and causal oracle"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  json overrides = json::object();
  auto set = [&overrides](const std::string& section, const std::string& key) {
    return [&overrides, section, key](const auto& v) {
      if (section.empty()) overrides[key] = v;
      else overrides[section][key] = v;
    };
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a biased/unbiased synthetic dataset");
  common.attach(gen);
  gen->add_option_function<double>("--p-bias", set("data", "p_bias"), "Color-category association");
  gen->add_option_function<std::size_t>("--n-train", set("data", "n_train"), "Training samples");
  gen->add_option_function<std::size_t>("--n-test", set("data", "n_test"), "Test samples (both splits)");
  gen->add_option_function<std::size_t>("--height", set("data", "h"), "Grid height");
  gen->add_option_function<std::size_t>("--width", set("data", "w"), "Grid width");

  // train
  auto* train = app.add_subcommand("train", "Train a baseline or Cauvis model");
  common.attach(train);
  train->add_option_function<std::string>("--data", set("paths", "data"), "Dataset directory");
  std::string kind, prompt_init;
  std::optional<std::size_t> epochs, layers, batch;
  std::optional<double> lr, lambda_tail, lambda_inv, lambda_spurious;
  train->add_option("--kind", kind, "baseline | cauvis");
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_option("--layers", layers, "Cauvis layers");
  train->add_option("--batch-size", batch, "Mini-batch size");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--lambda-tail", lambda_tail, "Tail penalty weight");
  train->add_option("--lambda-inv", lambda_inv, "Invariance loss weight");
  train->add_option("--lambda-spurious", lambda_spurious, "Spurious L1 loss weight");
  train->add_option("--prompt-init", prompt_init, "zeros | random");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on both test splits");
  common.attach(eval);
  eval->add_option_function<std::string>("--checkpoint", set("paths", "checkpoint"), "Checkpoint directory");
  eval->add_option_function<std::string>("--data", set("paths", "data"), "Dataset directory");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Bias sweep over p values, model kinds and seeds");
  common.attach(sweep);
  std::string p_list, kinds, seeds;
  sweep->add_option("--p", p_list, "Comma-separated p_bias values");
  sweep->add_option("--kinds", kinds, "Comma-separated model kinds");
  sweep->add_option("--seeds", seeds, "Comma-separated seeds (default: seed..seed+4)");
  sweep->add_option_function<std::size_t>("--n-train", set("data", "n_train"), "Training samples per cell");
  sweep->add_option_function<std::size_t>("--n-test", set("data", "n_test"), "Test samples per cell");
  std::optional<std::size_t> sweep_epochs;
  sweep->add_option("--epochs", sweep_epochs, "Training epochs per cell");

  // spectrum
  auto* spectrum = app.add_subcommand("spectrum", "Dump attention singular-value spectra");
  common.attach(spectrum);
  spectrum->add_option_function<std::string>("--checkpoint", set("paths", "checkpoint"), "Checkpoint directory");
  spectrum->add_option_function<std::string>("--data", set("paths", "data"), "Dataset directory");
  spectrum->add_option_function<std::size_t>("--sample", set("spectrum", "sample"), "Training sample index");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Attention vs back-door equivalence on discrete SCMs");
  common.attach(oracle);
  oracle->add_option_function<std::size_t>("--random-scms", set("oracle", "random_scms"), "Random SCM count");
  oracle->add_option_function<std::size_t>("--max-states", set("oracle", "max_states"), "Max |X|, |Z|, |Y|");
  std::vector<std::string> scm_files;
  oracle->add_option("--scm", scm_files, "SCM JSON file(s)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    json j = common.resolve();
    auto merge = [&j](const json& patch) {
      for (const auto& [section, val] : patch.items()) {
        if (val.is_object()) {
          if (!j.contains(section)) j[section] = json::object();
          if (!j[section].is_object()) throw ConfigError("config section '" + section + "' must be an object");
          for (const auto& [k, v] : val.items()) j[section][k] = v;
        } else {
          j[section] = val;
        }
      }
    };
    merge(overrides);

    if (*train) {
      json m = json::object();
      if (!kind.empty()) m["kind"] = kind;
      if (layers) m["layers"] = *layers;
      if (!prompt_init.empty()) m["adapter"]["prompt_init"] = prompt_init;
      if (epochs) m["train"]["epochs"] = *epochs;
      if (batch) m["train"]["batch_size"] = *batch;
      if (lr) m["train"]["learning_rate"] = *lr;
      if (lambda_tail) m["train"]["lambda_tail"] = *lambda_tail;
      if (lambda_inv) m["train"]["lambda_inv"] = *lambda_inv;
      if (lambda_spurious) m["train"]["lambda_spurious"] = *lambda_spurious;
      if (!j.contains("model")) j["model"] = json::object();
      for (const auto& [k, v] : m.items()) {
        if (v.is_object() && j["model"].contains(k)) j["model"][k].update(v);
        else j["model"][k] = v;
      }
    }
    if (*sweep) {
      if (!p_list.empty()) j["sweep"]["p"] = parse_doubles(p_list);
      if (!kinds.empty()) j["sweep"]["kinds"] = split_list(kinds);
      if (!seeds.empty()) {
        std::vector<std::uint64_t> s;
        for (double v : parse_doubles(seeds)) {
          if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
            throw ConfigError("seeds must be non-negative integers");
          s.push_back(static_cast<std::uint64_t>(v));
        }
        j["sweep"]["seeds"] = s;
      }
      if (sweep_epochs) j["model"]["train"]["epochs"] = *sweep_epochs;
    }
    if (*oracle && !scm_files.empty()) j["oracle"]["scm_files"] = scm_files;

    if (*gen) return cmd_gen_data(j);
    if (*train) return cmd_train(j);
    if (*eval) return cmd_eval(j);
    if (*sweep) return cmd_sweep(j);
    if (*spectrum) return cmd_spectrum(j);
    if (*oracle) return cmd_oracle(j);
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
}
