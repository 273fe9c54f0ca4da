#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cauvis/biasbench/model.hpp"

namespace cauvis::biasbench {

struct SweepRow {
  double p_bias = 0.0;
  ModelKind kind = ModelKind::Baseline;
  std::uint64_t seed = 0;
  double acc_biased = 0.0;
  double acc_unbiased = 0.0;
  double gap = 0.0;
};

struct SweepSummary {
  double p_bias = 0.0;
  ModelKind kind = ModelKind::Baseline;
  double median_gap = 0.0;
  double median_acc_biased = 0.0;
  double median_acc_unbiased = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // sorted by (p_bias, kind, seed)
  std::vector<SweepSummary> summary;
};

struct SweepPlan {
  std::vector<double> p_list;
  std::vector<ModelKind> kinds;
  std::vector<std::uint64_t> seeds;
  BiasSpec data;              // p_bias and seed are overwritten per cell
  ExperimentConfig model;     // kind and train.seed are overwritten per cell
  std::size_t threads = 1;

  void validate() const {
    if (p_list.empty() || kinds.empty() || seeds.empty()) {
      throw ConfigError("sweep: p list, kinds and seeds must be non-empty");
    }
    for (double p : p_list) {
      if (!(p >= 0.5 && p <= 1.0)) throw ConfigError("sweep: p_bias values must lie in [0.5, 1]");
    }
    model.validate();
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One cell: data seeded by the cell seed, model seeded by the same seed, so a
// baseline and a cauvis cell with equal (p, seed) see identical data.
inline SweepRow run_cell(const SweepPlan& plan, double p, ModelKind kind, std::uint64_t seed) {
  BiasSpec spec = plan.data;
  spec.p_bias = p;
  spec.seed = seed;
  ExperimentConfig cfg = plan.model;
  cfg.kind = kind;
  cfg.train.seed = seed;
  const Dataset data = gen_dataset(spec);
  TrainResult res = train_model(data, cfg);
  const EvalReport ev = evaluate(res.model, data);
  return {p, kind, seed, ev.biased.accuracy, ev.unbiased.accuracy, ev.gap};
}

inline SweepReport summarize(std::vector<SweepRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.p_bias != b.p_bias) return a.p_bias < b.p_bias;
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.seed < b.seed;
  });
  SweepReport rep;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    std::vector<double> gap, ab, au;
    while (j < rows.size() && rows[j].p_bias == rows[i].p_bias && rows[j].kind == rows[i].kind) {
      gap.push_back(rows[j].gap);
      ab.push_back(rows[j].acc_biased);
      au.push_back(rows[j].acc_unbiased);
      ++j;
    }
    rep.summary.push_back({rows[i].p_bias, rows[i].kind, median(gap), median(ab), median(au)});
    i = j;
  }
  rep.rows = std::move(rows);
  return rep;
}

// Cells run on up to plan.threads workers; each cell is single-threaded and
// deterministic, and results are merged in sorted order.
inline SweepReport bias_sweep(const SweepPlan& plan) {
  plan.validate();
  struct Cell {
    double p;
    ModelKind kind;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double p : plan.p_list)
    for (ModelKind k : plan.kinds)
      for (std::uint64_t s : plan.seeds) cells.push_back({p, k, s});

  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        rows[i] = run_cell(plan, cells[i].p, cells[i].kind, cells[i].seed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = cells.size();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(plan.threads, 1, cells.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return summarize(std::move(rows));
}

inline void write_sweep_csv(std::ostream& os, const SweepReport& rep) {
  os << "p_bias,kind,seed,acc_biased,acc_unbiased,gap\n";
  os.precision(17);
  for (const auto& r : rep.rows)
    os << r.p_bias << ',' << kind_name(r.kind) << ',' << r.seed << ',' << r.acc_biased << ','
       << r.acc_unbiased << ',' << r.gap << '\n';
}

inline nlohmann::json sweep_summary_json(const SweepReport& rep) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& s : rep.summary) {
    cells.push_back({{"p_bias", s.p_bias},
                     {"kind", kind_name(s.kind)},
                     {"median_gap", s.median_gap},
                     {"median_acc_biased", s.median_acc_biased},
                     {"median_acc_unbiased", s.median_acc_unbiased}});
  }
  return {{"rows", rep.rows.size()}, {"summary", cells}};
}

}  // namespace cauvis::biasbench
