#pragma once

// The paired reproduction: the same seeded scenarios flown in normal and
// agility-enhanced mode, compared run by run, plus the predictor backend
// comparison on noisy labels.

#include "aeps/dataset.hpp"
#include "aeps/metrics.hpp"
#include "aeps/mission.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <thread>

namespace aeps {

/// Mission-level JSON summary: outcome, duration and the metric inputs.
inline nlohmann::json summary_json(const SimulationTrace& t, const AgilityReferences& ref = {}) {
  return {{"mode", to_string(t.mode)},
          {"outcome", to_string(t.outcome)},
          {"duration_s", num(t.duration())},
          {"steps", t.steps.size()},
          {"metrics", to_json(agility(t, ref))},
          {"plan_lambda", num(t.plan_lambda)},
          {"predicted_power_w", num(t.predicted_power)},
          {"precharge_s", num(t.precharge_duration)},
          {"precharge_energy_j", num(t.precharge_energy)},
          {"amendments", t.amendments},
          {"brownout_onsets", t.count("brownout")},
          {"requested_energy_j", num(t.requested_energy())},
          {"supplied_energy_j", num(t.supplied_energy())},
          {"shortfall_energy_j", num(t.shortfall_energy())},
          {"initial_stored_j", num(t.initial_stored)},
          {"final_stored_j", num(t.final_stored)}};
}

struct BenchmarkOptions {
  std::uint64_t seed = 0;
  std::size_t runs = 10;  // per scenario; run i flies scenario seed `seed + i`
  std::vector<Complexity> scenarios{Complexity::low_dynamic, Complexity::high_dynamic};
  MissionOptions mission;  // mode and model are set per run
  AgilityReferences references;

  // Predictor used by the enhanced runs. Trained here when absent.
  const PredictorModel* model = nullptr;
  std::size_t dataset_count = 1100;
  TrainConfig training;  // seed is overridden with `seed`

  // Backend comparison on a noise-injected held-out split.
  bool compare_backends = true;
  std::size_t ensemble_members = 10;
  double label_noise = 0.05;  // sigma as a fraction of the mean label
  double test_fraction = 0.2;

  // Also fly the enhanced mode with the ultracapacitor removed.
  bool uc_ablation = false;

  std::size_t workers = 0;  // 0: hardware concurrency

  void validate() const {
    if (runs == 0) throw ConfigError("benchmark needs at least one run per scenario");
    if (scenarios.empty()) throw ConfigError("benchmark needs at least one scenario");
    if (dataset_count == 0) throw ConfigError("dataset count must be positive");
    if (ensemble_members == 0) throw ConfigError("ensemble needs at least one member");
    if (!(label_noise >= 0.0)) throw ConfigError("label noise must be >= 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
    training.validate();
  }
};

struct BenchmarkRun {
  Complexity scenario = Complexity::low_dynamic;
  std::uint64_t seed = 0;
  Mode mode = Mode::normal;
  bool uc_ablated = false;
  SimulationTrace trace;
  RunSummary summary;

  std::string file_stem() const {
    return std::string(to_string(scenario)) + "_seed" + std::to_string(seed) + "_" + to_string(mode) +
           (uc_ablated ? "_no_uc" : "");
  }
};

struct BenchmarkResult {
  std::vector<BenchmarkRun> runs;  // scenario-major, seed, then mode
  BenchmarkReport report;
  std::optional<MaeReport> mae;
  std::optional<PredictorModel> trained;  // set when the benchmark trained its own model
  double trained_val_mae = 0.0;
  std::optional<ModeAggregate> ablation;  // enhanced without ultracapacitor
  std::optional<Improvement> ablation_safety;  // no-UC relative to full UC

  const BenchmarkRun* find(Complexity c, std::uint64_t seed, Mode m, bool ablated = false) const {
    for (const auto& r : runs) {
      if (r.scenario == c && r.seed == seed && r.mode == m && r.uc_ablated == ablated) return &r;
    }
    return nullptr;
  }

  nlohmann::json report_json(const BenchmarkOptions& opt) const {
    auto j = to_json(report);
    j["schema"] = 1;
    j["config"] = {{"seed", opt.seed},
                   {"runs_per_scenario", opt.runs},
                   {"demand", {{"k_curv", opt.mission.demand.k_curv}, {"k_dist_curv", opt.mission.demand.k_dist_curv}}},
                   {"baseline", {{"p0", opt.mission.baseline.p0}, {"p1", opt.mission.baseline.p1},
                                 {"p2", opt.mission.baseline.p2}}},
                   {"references", {{"power_w", opt.references.power}, {"complexity", opt.references.complexity},
                                   {"safety_m", opt.references.safety}}}};
    auto scen = nlohmann::json::array();
    for (auto c : opt.scenarios) scen.push_back(to_string(c));
    j["config"]["scenarios"] = scen;
    auto runs_j = nlohmann::json::array();
    for (const auto& r : runs) {
      auto s = summary_json(r.trace, opt.references);
      s["scenario"] = to_string(r.scenario);
      s["seed"] = r.seed;
      s["uc_ablated"] = r.uc_ablated;
      runs_j.push_back(std::move(s));
    }
    j["runs"] = runs_j;
    if (trained) j["predictor"] = {{"trained_here", true}, {"val_mae_w", num(trained_val_mae)}};
    if (mae) j["predictor_comparison"] = to_json(*mae);
    if (ablation) {
      j["uc_ablation"] = {{"enhanced_no_uc", to_json(*ablation)}, {"safety_change_pct", to_json(*ablation_safety)}};
    }
    return j;
  }
};

namespace detail {

inline std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs jobs on up to `workers` threads; results keep job order.
template <class R>
std::vector<R> run_parallel(const std::vector<std::function<R()>>& jobs, std::size_t workers) {
  std::vector<std::optional<R>> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out[i] = jobs[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, jobs.size()); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> res;
  res.reserve(out.size());
  for (auto& o : out) res.push_back(std::move(*o));
  return res;
}

}  // namespace detail

/// Trains the deterministic and ensemble backends on a noisy training split
/// and reports their errors on the noisy held-out split.
inline MaeReport compare_backends(const LabeledDataset& clean, std::size_t members, double label_noise,
                                  double test_fraction, TrainConfig cfg, std::uint64_t seed) {
  const LabeledDataset noisy = inject_noise(clean, label_noise * clean.mean_label(), seed ^ 0xA015EULL);
  auto [train_part, test_part] = split_dataset(noisy, 1.0 - test_fraction, seed ^ 0x7E57ULL);
  cfg.seed = seed;
  auto single = train(make_model(Backend::deterministic, 1, seed), train_part, cfg);
  auto ens = train(make_model(Backend::ensemble, members, seed), train_part, cfg);
  return mae_report({{"mlp", &single.model}, {"ensemble", &ens.model}}, test_part);
}

inline BenchmarkResult run_benchmark(const BenchmarkOptions& opt) {
  opt.validate();
  BenchmarkResult res;

  const PredictorModel* model = opt.model;
  std::optional<LabeledDataset> data;
  if (model == nullptr || opt.compare_backends) {
    DatasetOptions d;
    d.count = opt.dataset_count;
    d.seed = opt.seed;
    d.baseline = opt.mission.baseline;
    d.demand = opt.mission.demand;
    d.envelope = opt.mission.envelope;
    data = generate_dataset(d);
  }
  if (model == nullptr) {
    TrainConfig tc = opt.training;
    tc.seed = opt.seed;
    auto tr = train(make_model(Backend::deterministic, 1, opt.seed), *data, tc);
    res.trained = std::move(tr.model);
    res.trained_val_mae = tr.val_mae;
    model = &*res.trained;
  }

  struct Job {
    Complexity c;
    std::uint64_t seed;
    Mode mode;
    bool ablated;
  };
  std::vector<Job> plan;
  for (auto c : opt.scenarios) {
    for (std::size_t i = 0; i < opt.runs; ++i) {
      const std::uint64_t s = opt.seed + i;
      plan.push_back({c, s, Mode::normal, false});
      plan.push_back({c, s, Mode::agility_enhanced, false});
      if (opt.uc_ablation) plan.push_back({c, s, Mode::agility_enhanced, true});
    }
  }
  std::vector<std::function<BenchmarkRun()>> jobs;
  for (const auto& j : plan) {
    jobs.push_back([j, &opt, model] {
      MissionOptions mo = opt.mission;
      mo.mode = j.mode;
      mo.model = model;
      if (j.ablated) mo.plant.ultracap.energy_capacity = 0.0;
      BenchmarkRun r;
      r.scenario = j.c;
      r.seed = j.seed;
      r.mode = j.mode;
      r.uc_ablated = j.ablated;
      r.trace = run_mission(make_random_scenario(j.c, j.seed), mo);
      r.summary = summarize(r.trace, j.seed, to_string(j.c), opt.references);
      return r;
    });
  }
  res.runs = detail::run_parallel(jobs, detail::worker_count(opt.workers));

  std::vector<RunSummary> normal, enhanced, no_uc;
  for (const auto& r : res.runs) {
    if (r.uc_ablated) no_uc.push_back(r.summary);
    else if (r.mode == Mode::normal) normal.push_back(r.summary);
    else enhanced.push_back(r.summary);
  }
  res.report = compare(normal, enhanced);
  if (opt.uc_ablation) {
    const auto ab = compare(enhanced, no_uc);
    res.ablation = ab.enhanced;
    res.ablation_safety = ab.safety;
  }
  if (opt.compare_backends) {
    res.mae = compare_backends(*data, opt.ensemble_members, opt.label_noise, opt.test_fraction, opt.training,
                               opt.seed);
  }
  return res;
}

// --- figure data ----------------------------------------------------------------

inline void write_durations_csv(std::ostream& out, const BenchmarkResult& r) {
  csv::Writer w(out);
  w.header({"scenario", "seed", "mode", "uc_ablated", "outcome", "duration_s"});
  for (const auto& run : r.runs) {
    w.row(std::string(to_string(run.scenario)), std::to_string(run.seed), std::string(to_string(run.mode)),
          run.uc_ablated, std::string(to_string(run.trace.outcome)), run.trace.duration());
  }
}

/// Demand, prediction and source split over time for the first seed of each
/// scenario, both modes.
inline void write_power_csv(std::ostream& out, const BenchmarkResult& r) {
  csv::Writer w(out);
  w.header({"scenario", "seed", "mode", "t", "demand_w", "predicted_w", "supplied_w", "p_fc_batt_w", "p_uc_w",
            "p_charge_w", "soc_uc"});
  for (const auto& run : r.runs) {
    if (run.uc_ablated) continue;
    const bool first_seed = std::none_of(r.runs.begin(), r.runs.end(), [&](const BenchmarkRun& o) {
      return o.scenario == run.scenario && o.seed < run.seed;
    });
    if (!first_seed) continue;
    for (const auto& s : run.trace.steps) {
      w.row(std::string(to_string(run.scenario)), std::to_string(run.seed), std::string(to_string(run.mode)), s.t,
            s.demand, s.predicted, s.decision.supplied(), s.decision.p_fc_batt, s.decision.p_uc, s.decision.p_charge,
            s.soc_uc);
    }
  }
}

/// Writes traces/, report.json and the figure CSVs under `dir`.
inline void write_benchmark(const std::filesystem::path& dir, const BenchmarkResult& r, const BenchmarkOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "traces");
  auto open = [](const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw Error("cannot write " + p.string());
    return f;
  };
  for (const auto& run : r.runs) {
    auto f = open(dir / "traces" / (run.file_stem() + ".csv"));
    write_trace_csv(f, run.trace);
  }
  {
    auto f = open(dir / "report.json");
    f << r.report_json(opt).dump(2) << '\n';
  }
  {
    auto f = open(dir / "durations.csv");
    write_durations_csv(f, r);
  }
  {
    auto f = open(dir / "fig7_power.csv");
    write_power_csv(f, r);
  }
  if (r.mae) {
    auto f = open(dir / "fig5_mae.csv");
    write_mae_csv(f, *r.mae);
  }
  if (r.trained) {
    auto f = open(dir / "model.json");
    f << to_json(*r.trained).dump(2) << '\n';
  }
}

}  // namespace aeps
