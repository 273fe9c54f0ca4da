// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cauvis/cauvis.hpp"
#include "oracles.hpp"

using namespace cauvis;
namespace fs = std::filesystem;
namespace bb = cauvis::biasbench;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int failures = 0;

void run(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0 && secs >= budget_s) {
    o.pass = false;
    o.detail += "; over time budget " + fmt("%.0f s", budget_s);
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-26s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------

Outcome svd_contract() {
  std::mt19937_64 gen(101);
  std::uniform_int_distribution<std::size_t> dim(1, 32);
  double worst_rec = 0.0, worst_orth = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = dim(gen), n = dim(gen);
    Matrix a = oracle::random_matrix(m, n, gen);
    if (trial % 4 == 0 && std::min(m, n) > 1) {
      // rank-deficient: product of thin factors
      const std::size_t r = std::min(m, n) / 2;
      a = oracle::matmul(oracle::random_matrix(m, r, gen), oracle::random_matrix(r, n, gen));
    }
    const SvdResult s = svd(a, true);
    const double scale = oracle::fro(a);
    Matrix us(m, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < s.sigma.size(); ++j) us(i, j) = s.u(i, j) * s.sigma[j];
    const double rec = oracle::max_abs_diff(oracle::matmul(us, s.vt), a);
    const double rel = scale > 0.0 ? rec / scale : rec;
    worst_rec = std::max(worst_rec, rel);
    worst_orth = std::max({worst_orth, oracle::orthogonality_error(s.u),
                           oracle::orthogonality_error(oracle::transpose(s.vt))});
  }
  return {worst_rec <= 1e-8 && worst_orth <= 1e-8,
          "reconstruction/|A| " + fmt("%.2e", worst_rec) + ", orthogonality " + fmt("%.2e", worst_orth)};
}

Outcome dft_contract() {
  std::mt19937_64 gen(102);
  const std::vector<std::size_t> sizes{1, 2, 3, 4, 5, 7, 8, 12, 16, 17, 31, 32, 33, 48, 63, 64};
  double worst_oracle = 0.0, worst_trip = 0.0, worst_parseval = 0.0;
  for (std::size_t r : sizes)
    for (std::size_t c : sizes) {
      const Matrix x = oracle::random_matrix(r, c, gen);
      const ComplexMap f = dft2(x);
      const oracle::CMap ref = oracle::dft2(oracle::to_complex(x), r, c);
      double ex = 0.0, ef = 0.0, diff = 0.0, mag = 1.0;
      for (double v : x.values()) ex += v * v;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        diff = std::max(diff, std::abs(std::complex<double>(f.re[i], f.im[i]) - ref[i]));
        mag = std::max(mag, std::abs(ref[i]));
        ef += f.re[i] * f.re[i] + f.im[i] * f.im[i];
      }
      ef /= static_cast<double>(r * c);
      worst_oracle = std::max(worst_oracle, diff / mag);
      worst_trip = std::max(worst_trip, oracle::max_abs_diff(idft2(f), x));
      worst_parseval = std::max(worst_parseval, std::abs(ex - ef) / std::max(ex, 1e-300));
    }
  return {worst_oracle <= 1e-9 && worst_trip <= 1e-9 && worst_parseval <= 1e-9,
          "vs naive " + fmt("%.2e", worst_oracle) + ", round trip " + fmt("%.2e", worst_trip) + ", Parseval " +
              fmt("%.2e", worst_parseval)};
}

// ---------------------------------------------------------------------------

ad::Var weighted_sum(ad::Var v, std::mt19937_64& gen) {
  return ad::sum(ad::hadamard(v, v.tape().constant(oracle::random_matrix(v.rows(), v.cols(), gen))));
}

using Shapes = std::vector<std::pair<std::size_t, std::size_t>>;
using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

double grad_case(const Shapes& shapes, const Builder& build, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  ad::ParameterStore ps;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    ps.add("p" + std::to_string(i), oracle::random_matrix(shapes[i].first, shapes[i].second, gen));
  const std::uint64_t wseed = gen();
  return ad::finite_diff_check(
      [&](ad::Tape& t, ad::ParameterStore& s) {
        std::vector<ad::Var> vars;
        for (std::size_t i = 0; i < shapes.size(); ++i) vars.push_back(t.parameter(s.at("p" + std::to_string(i))));
        ad::Var out = build(t, vars);
        if (out.rows() == 1 && out.cols() == 1) return out;
        std::mt19937_64 wg(wseed);
        return weighted_sum(out, wg);
      },
      ps);
}

double composed_layer_case(adapter::AuxOrder order, cap::CapMode mode) {
  adapter::AdapterConfig cfg;
  cfg.embed_dim = 4;
  cfg.prompt_len = 3;
  cfg.rank_k = mode == cap::CapMode::Full ? 1 : 3;
  cfg.h = 4;
  cfg.w = 4;
  cfg.cutoff = 0.5;
  cfg.prompt_init = adapter::PromptInit::Random;
  cfg.aux_order = order;
  cfg.mode = mode;
  std::mt19937_64 gen(17);
  CounterRng rng(17, "layer");
  adapter::LayerWeights w = adapter::LayerWeights::init(cfg, rng);
  w.aux.w_up = oracle::random_matrix(w.aux.w_up.rows(), w.aux.w_up.cols(), gen);
  w.fusion.alpha = 0.3;
  const adapter::LayerIds ids{"L0."};
  ad::ParameterStore ps;
  w.store_into(ps, ids);
  ps.add("x", oracle::random_matrix(cfg.tokens(), cfg.embed_dim, gen));
  const Matrix weights = oracle::random_matrix(cfg.tokens(), cfg.embed_dim, gen);
  const auto lcfg = adapter::layer_config(cfg, 0.2);
  return ad::finite_diff_check(
      [&](ad::Tape& t, ad::ParameterStore& s) {
        const adapter::LayerOutput out = adapter::cauvis_layer_forward(
            t.parameter(s.at("x")), adapter::LayerVars::bind(t, s, ids), w.aux.mask, lcfg);
        return ad::add(ad::sum(ad::hadamard(out.x_next, t.constant(weights))), out.cap.penalty);
      },
      ps);
}

Outcome gradient_suite() {
  const FrequencyMask hp = make_highpass(4, 4, 0.4);
  std::mt19937_64 gen(103);
  const cap::SpectralDecomposition fixed = cap::decompose(oracle::random_matrix(6, 4, gen), 2);

  std::vector<std::pair<std::string, std::function<double()>>> cases{
      {"matmul", [] { return grad_case({{3, 4}, {4, 2}}, [](auto&, auto& v) { return ad::matmul(v[0], v[1]); }, 1); }},
      {"matmul_nt", [] { return grad_case({{3, 4}, {5, 4}}, [](auto&, auto& v) { return ad::matmul_nt(v[0], v[1]); }, 2); }},
      {"add", [] { return grad_case({{3, 2}, {3, 2}}, [](auto&, auto& v) { return ad::add(v[0], v[1]); }, 3); }},
      {"sub", [] { return grad_case({{3, 2}, {3, 2}}, [](auto&, auto& v) { return ad::sub(v[0], v[1]); }, 4); }},
      {"hadamard", [] { return grad_case({{3, 2}, {3, 2}}, [](auto&, auto& v) { return ad::hadamard(v[0], v[1]); }, 5); }},
      {"scale_by", [] { return grad_case({{1, 1}, {3, 3}}, [](auto&, auto& v) { return ad::scale_by(v[0], v[1]); }, 6); }},
      {"add_row", [] { return grad_case({{4, 3}, {1, 3}}, [](auto&, auto& v) { return ad::add_row(v[0], v[1]); }, 7); }},
      {"scale", [] { return grad_case({{3, 3}}, [](auto&, auto& v) { return ad::scale(v[0], -1.7); }, 8); }},
      {"sigmoid", [] { return grad_case({{3, 3}}, [](auto&, auto& v) { return ad::sigmoid(v[0]); }, 9); }},
      {"tanh", [] { return grad_case({{3, 3}}, [](auto&, auto& v) { return ad::tanh(v[0]); }, 10); }},
      {"square", [] { return grad_case({{3, 3}}, [](auto&, auto& v) { return ad::square(v[0]); }, 11); }},
      {"row_softmax", [] { return grad_case({{3, 5}}, [](auto&, auto& v) { return ad::row_softmax(v[0]); }, 12); }},
      {"sum", [] { return grad_case({{3, 3}}, [](auto&, auto& v) { return ad::sum(v[0]); }, 13); }},
      {"mean", [] { return grad_case({{3, 3}}, [](auto&, auto& v) { return ad::mean(v[0]); }, 14); }},
      {"col_mean", [] { return grad_case({{4, 3}}, [](auto&, auto& v) { return ad::col_mean(v[0]); }, 15); }},
      {"mean_abs", [] { return grad_case({{4, 3}}, [](auto&, auto& v) { return ad::mean_abs(v[0]); }, 16); }},
      {"smooth_rms", [] { return grad_case({{4, 3}}, [](auto&, auto& v) { return ad::smooth_rms(v[0]); }, 17); }},
      {"spectral_filter", [&hp] { return grad_case({{16, 3}}, [&hp](auto&, auto& v) { return ad::spectral_filter(v[0], hp); }, 18); }},
      {"cross_entropy", [] {
         return grad_case({{3, 3}}, [](auto&, auto& v) { return ad::softmax_cross_entropy(v[0], {0, 2, 1}); }, 19);
       }},
      {"tail_penalty", [] {
         return grad_case({{5, 3}}, [](auto&, auto& v) { return cap::tail_penalty_node(v[0], cap::decompose(v[0].value(), 1), 0.7); }, 20);
       }},
      {"project_causal", [&fixed] {
         return grad_case({{6, 4}}, [&fixed](auto&, auto& v) { return cap::project_causal(v[0], fixed); }, 21);
       }},
      {"cap_forward", [] {
         return grad_case({{6, 3}, {4, 3}, {3, 3}, {3, 3}, {3, 3}},
                          [](auto&, auto& v) {
                            cap::CapVars c = cap::cap_forward(v[0], v[1], ad::scale(v[2], 0.5), ad::scale(v[3], 0.5),
                                                              ad::scale(v[4], 0.5), cap::CapConfig{2, cap::CapMode::Full, 0.3});
                            return ad::add(ad::sum(ad::hadamard(c.delta_x, c.delta_x)), c.penalty);
                          },
                          22);
       }},
      {"causal_branch", [] {
         return grad_case({{5, 3}, {3, 3}, {1, 3}, {3, 3}, {1, 3}},
                          [](auto&, auto& v) { return adapter::causal_branch(v[0], v[1], v[2], v[3], v[4]); }, 23);
       }},
      {"aux_branch", [&hp] {
         return std::max(
             grad_case({{16, 3}, {3, 1}, {1, 3}},
                       [&hp](auto&, auto& v) { return adapter::aux_branch(v[0], v[1], v[2], hp, adapter::AuxOrder::Replace); }, 24),
             grad_case({{16, 3}, {3, 1}, {1, 3}},
                       [&hp](auto&, auto& v) { return adapter::aux_branch(v[0], v[1], v[2], hp, adapter::AuxOrder::Residual); }, 25));
       }},
      {"fuse", [] { return grad_case({{4, 3}, {4, 3}, {1, 1}}, [](auto&, auto& v) { return adapter::fuse(v[0], v[1], v[2]); }, 26); }},
      {"causal_loss", [] {
         return grad_case({{16, 2}, {16, 2}, {16, 2}},
                          [](auto&, auto& v) { return causal::causal_loss(v[0], v[1], v[2], 0.5); }, 27);
       }},
      {"layer(replace,full)", [] { return composed_layer_case(adapter::AuxOrder::Replace, cap::CapMode::Full); }},
      {"layer(residual,full)", [] { return composed_layer_case(adapter::AuxOrder::Residual, cap::CapMode::Full); }},
  };
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, fn] : cases) {
    const double e = fn();
    if (!(e <= worst)) {
      worst = e;
      worst_name = name;
    }
  }
  return {worst <= 1e-4, std::to_string(cases.size()) + " checks, max rel error " + fmt("%.2e", worst) + " (" +
                              worst_name + ")"};
}

// ---------------------------------------------------------------------------

Outcome backdoor_equivalence() {
  CounterRng rng(104, "acceptance/scm");
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t nx = 1 + rng.below(5), nz = 1 + rng.below(5), ny = 1 + rng.below(5);
    const causal::DiscreteSCM scm = causal::random_scm(nx, nz, ny, rng);
    worst = std::max(worst, causal::attention_backdoor_equiv(scm).max_abs_diff);
  }
  return {worst <= 1e-12, "1000 SCMs, max abs diff " + fmt("%.2e", worst)};
}

Outcome ideal_identity() {
  CounterRng rng(105, "acceptance/identity");
  double worst = 0.0, worst_slope = 0.0;
  const std::vector<double> eps{1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  for (int i = 0; i < 200; ++i) {
    const std::size_t nx = 1 + rng.below(5), nz = 1 + rng.below(5), ny = 1 + rng.below(5);
    const causal::DiscreteSCM scm = causal::random_scm(nx, nz, ny, rng);
    const std::size_t x = rng.below(nx);
    const auto c = causal::isomorphic_construction(scm, x);
    worst = std::max(worst, causal::ideal_identity_check(scm, x, c.u, c.sigma));
    const auto sweep = causal::identity_perturbation_sweep(scm, x, eps, rng);
    worst_slope = std::max(worst_slope, std::abs(sweep.fitted_slope / sweep.predicted_slope - 1.0));
  }
  return {worst <= 1e-12 && worst_slope <= 0.2,
          "construction error " + fmt("%.2e", worst) + ", worst slope deviation " + fmt("%.1e", worst_slope)};
}

Outcome split_exactness() {
  std::mt19937_64 gen(106);
  std::uniform_int_distribution<std::size_t> dim(1, 16);
  double worst_sum = 0.0, worst_energy = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix a = oracle::random_matrix(dim(gen), dim(gen), gen);
    const std::size_t t = std::min(a.rows(), a.cols());
    const SvdResult ref = svd_thin(a);
    for (std::size_t k = 0; k <= t; ++k) {
      const cap::SpectralSplit s = cap::spectral_split(a, k);
      worst_sum = std::max(worst_sum, oracle::max_abs_diff(add(s.a_c, s.a_perp), a));
      double tail = 0.0;
      for (std::size_t i = k; i < t; ++i) tail += ref.sigma[i] * ref.sigma[i];
      const double f = oracle::fro(s.a_perp);
      worst_energy = std::max(worst_energy, std::abs(f * f - tail) / std::max(1.0, oracle::fro(a) * oracle::fro(a)));
    }
  }
  return {worst_sum <= 1e-8 && worst_energy <= 1e-8,
          "max |A_c + A_perp - A| " + fmt("%.2e", worst_sum) + ", tail energy error " + fmt("%.2e", worst_energy)};
}

Outcome neutral_at_init() {
  std::mt19937_64 gen(107);
  bool exact = true;
  int checked = 0;
  for (double alpha : {-30.0, 0.0, 2.0})
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      adapter::AdapterConfig cfg;
      cfg.fusion_init = alpha;
      CounterRng rng(seed, "acceptance/layer");
      const auto w = adapter::LayerWeights::init(cfg, rng);
      const Matrix x = oracle::random_matrix(cfg.tokens(), cfg.embed_dim, gen);
      exact = exact && adapter::cauvis_layer_forward(x, w, adapter::layer_config(cfg, 0.1)) == x;
      ++checked;
    }

  bb::BiasSpec spec;
  spec.n_train = 4;
  spec.n_test = 40;
  spec.seed = 107;
  const bb::Dataset data = bb::gen_dataset(spec);
  for (const bb::ExperimentConfig& base_cfg : {bb::ExperimentConfig{}, bb::bench_defaults()}) {
    bb::ExperimentConfig cfg = base_cfg;
    cfg.layers = 2;
    cfg.train.seed = 107;
    bb::Model with = bb::init_model(cfg);
    cfg.kind = bb::ModelKind::Baseline;
    bb::Model without = bb::init_model(cfg);
    for (const auto& s : data.unbiased_test) {
      ad::Tape t1(false), t2(false);
      exact = exact && bb::forward(t1, with, s).logits.value() == bb::forward(t2, without, s).logits.value();
      ++checked;
    }
  }
  return {exact, std::to_string(checked) + " layer and model outputs compared bitwise"};
}

// ---------------------------------------------------------------------------

// Random prompt initialization gives the spectrum a tail to shrink; zero
// prompts start from a zero score matrix whose tail ratio is already 0.
std::vector<bb::TrainResult> trend_runs(std::vector<double>& seconds) {
  std::vector<bb::TrainResult> out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    bb::BiasSpec spec;
    spec.p_bias = 0.9;
    spec.n_train = 300;
    spec.n_test = 2;
    spec.seed = seed;
    bb::ExperimentConfig cfg = bb::bench_defaults();
    cfg.adapter.prompt_init = adapter::PromptInit::Random;
    cfg.train.epochs = 20;
    cfg.train.seed = seed;
    out.push_back(bb::train_model(bb::gen_dataset(spec), cfg));
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return out;
}

Outcome tail_trend(const std::vector<bb::TrainResult>& runs, const std::vector<double>& seconds) {
  int hits = 0;
  std::ostringstream os;
  for (const auto& r : runs) {
    const double r0 = r.history.front().tail_energy_ratio, r1 = r.history.back().tail_energy_ratio;
    if (r1 <= 0.5 * r0) ++hits;
    os << fmt("%.2e", r0) << "->" << fmt("%.2e", r1) << " ";
  }
  const double slowest = *std::max_element(seconds.begin(), seconds.end());
  return {hits >= 4 && slowest < 300.0,
          std::to_string(hits) + "/5 seeds halve the tail ratio (" + os.str() + "), slowest run " +
              fmt("%.0f s", slowest)};
}

Outcome invariance_trend(const std::vector<bb::TrainResult>& runs) {
  int hits = 0;
  std::ostringstream os;
  for (const auto& r : runs) {
    const double j0 = r.history.front().jacobian_norm, j1 = r.history.back().jacobian_norm;
    if (j1 < j0) ++hits;
    os << fmt("%.3g", j0) << "->" << fmt("%.3g", j1) << " ";
  }
  return {hits >= 4, std::to_string(hits) + "/5 seeds lower jacobian_norm (" + os.str() + ")"};
}

Outcome bias_sweep_direction() {
  bb::SweepPlan plan;
  plan.p_list = {0.75, 0.8, 0.85, 0.9};
  plan.kinds = {bb::ModelKind::Baseline, bb::ModelKind::Cauvis};
  plan.seeds = {1, 2, 3, 4, 5};
  plan.model = bb::bench_defaults();
  plan.threads = std::max(1u, std::thread::hardware_concurrency());
  const bb::SweepReport rep = bb::bias_sweep(plan);

  std::vector<double> base_median;
  for (const auto& s : rep.summary)
    if (s.kind == bb::ModelKind::Baseline) base_median.push_back(s.median_gap);
  bool monotone = base_median.size() == 4;
  for (std::size_t i = 1; i < base_median.size(); ++i) monotone = monotone && base_median[i] >= base_median[i - 1];

  std::map<std::uint64_t, double> base_gap, cauvis_gap;
  for (const auto& r : rep.rows)
    if (r.p_bias == 0.9) (r.kind == bb::ModelKind::Baseline ? base_gap : cauvis_gap)[r.seed] = r.gap;
  int wins = 0;
  for (const auto& [seed, g] : cauvis_gap)
    if (g < base_gap.at(seed)) ++wins;

  std::ostringstream os;
  os << "baseline median gaps";
  for (double g : base_median) os << " " << fmt("%.3f", g);
  os << (monotone ? " (monotone)" : " (not monotone)") << ", cauvis < baseline at 0.9 in " << wins << "/5 seeds";
  return {monotone && wins >= 4, os.str()};
}

Outcome spurious_insufficiency() {
  bool ok = true;
  std::ostringstream os;
  for (double p : {0.75, 0.8, 0.85, 0.9, 1.0})
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      bb::BiasSpec spec;
      spec.p_bias = p;
      spec.n_train = 1;
      spec.n_test = 4000;
      spec.seed = seed;
      const bb::Dataset d = bb::gen_dataset(spec);
      const double nb = static_cast<double>(d.biased_test.size()), nu = static_cast<double>(d.unbiased_test.size());
      const double expect = std::max(p, 1.0 - p);
      const double acc_b = bb::tag_accuracy(d.biased_test, bb::color_only_predict);
      const double acc_u = bb::tag_accuracy(d.unbiased_test, bb::color_only_predict);
      // at p = 1 the binomial sd is 0; accuracy must then be exactly 1
      const double sd_b = std::sqrt(expect * (1.0 - expect) / nb), sd_u = std::sqrt(0.25 / nu);
      ok = ok && std::abs(acc_b - expect) <= 3.0 * sd_b && std::abs(acc_u - 0.5) <= 3.0 * sd_u;
      if (seed == 1) os << "p=" << p << ": " << fmt("%.3f", acc_b) << "/" << fmt("%.3f", acc_u) << " ";
    }
  return {ok, "biased/unbiased color-only accuracy, seed 1: " + os.str()};
}

// ---------------------------------------------------------------------------

const fs::path kScratch = fs::temp_directory_path() / "cauvis_acceptance";

int lab(const std::string& args) {
  const std::string cmd = std::string(CAUVIS_LAB_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream is(e.path(), std::ios::binary);
      std::ostringstream os;
      os << is.rdbuf();
      out[fs::relative(e.path(), dir).string()] = os.str();
    }
  return out;
}

Outcome cli_determinism() {
  fs::remove_all(kScratch);
  fs::create_directories(kScratch);
  const std::string data = (kScratch / "data").string();
  if (lab("gen-data --p-bias 0.9 --seed 1 --n-train 48 --n-test 40 --out " + data) != 0)
    return {false, "gen-data failed"};
  const std::string ckpt = (kScratch / "train_ref" / "checkpoint").string();
  if (lab("train --data " + data + " --seed 2 --epochs 2 --prompt-init random --out " + (kScratch / "train_ref").string()) != 0)
    return {false, "train failed"};

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "gen-data --p-bias 0.9 --seed 1 --n-train 48 --n-test 40"},
      {"train", "train --data " + data + " --seed 2 --epochs 2 --prompt-init random"},
      {"eval", "eval --data " + data + " --checkpoint " + ckpt},
      {"spectrum", "spectrum --data " + data + " --checkpoint " + ckpt},
      {"oracle", "oracle --random-scms 50 --seed 3"},
      {"sweep", "sweep --p 0.8,0.9 --kinds baseline,cauvis --seeds 1,2 --n-train 16 --n-test 10 --epochs 1 --seed 1"},
  };
  std::vector<std::string> bad;
  std::size_t files = 0;
  for (const auto& [name, args] : commands) {
    const fs::path a = kScratch / (name + "_a"), b = kScratch / (name + "_b");
    const int ra = lab(args + " --out " + a.string()), rb = lab(args + " --out " + b.string());
    if (ra != 0 || rb != 0 || !fs::exists(a)) {
      bad.push_back(name + " (exit " + std::to_string(ra) + "/" + std::to_string(rb) + ")");
      continue;
    }
    const auto ta = tree(a), tb = tree(b);
    files += ta.size();
    if (ta.empty() || ta != tb) bad.push_back(name);
  }
  fs::remove_all(kScratch);
  std::string detail = std::to_string(commands.size()) + " commands, " + std::to_string(files) + " artifacts";
  for (const auto& b : bad) detail += "; differs: " + b;
  return {bad.empty(), detail};
}

}  // namespace

int main() {
  run("svd contract", 10.0, svd_contract);
  run("dft contract", 30.0, dft_contract);
  run("gradient suite", 60.0, gradient_suite);
  run("back-door equivalence", 10.0, backdoor_equivalence);
  run("ideal identity", 0.0, ideal_identity);
  run("spectral split exactness", 0.0, split_exactness);
  run("neutral at init", 0.0, neutral_at_init);
  run("spurious insufficiency", 0.0, spurious_insufficiency);
  run("cli determinism", 0.0, cli_determinism);

  std::vector<double> seconds;
  std::vector<bb::TrainResult> runs;
  run("tail-energy trend", 0.0, [&] {
    runs = trend_runs(seconds);
    return tail_trend(runs, seconds);
  });
  run("invariance trend", 0.0, [&] {
    if (runs.empty()) return Outcome{false, "no training runs"};
    return invariance_trend(runs);
  });
  run("bias sweep direction", 1800.0, bias_sweep_direction);

  std::printf("%s: %d failing\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
