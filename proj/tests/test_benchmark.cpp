#include "aeps/benchmark.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace aeps;
using Catch::Matchers::WithinRel;

namespace {

BenchmarkOptions small_options() {
  BenchmarkOptions o;
  o.seed = 11;
  o.runs = 2;
  o.dataset_count = 200;
  o.training.epochs = 40;
  o.ensemble_members = 2;
  o.uc_ablation = true;
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("a small benchmark is reproducible and independent of the worker count") {
  auto opt = small_options();
  opt.workers = 1;
  const auto a = run_benchmark(opt);
  opt.workers = 4;
  const auto b = run_benchmark(opt);
  CHECK(a.report_json(opt).dump() == b.report_json(opt).dump());

  // 2 scenarios x 2 seeds x (normal, enhanced, enhanced without UC).
  CHECK(a.runs.size() == 12);
  CHECK(a.report.safety.pairs == 4);
  REQUIRE(a.trained);
  REQUIRE(a.mae);
  REQUIRE(a.ablation);
  CHECK(a.ablation->runs == 4);
  for (std::uint64_t s : {11u, 12u}) {
    const auto* r = a.find(Complexity::high_dynamic, s, Mode::agility_enhanced, true);
    REQUIRE(r != nullptr);
    for (const auto& st : r->trace.steps) CHECK(st.decision.p_uc == 0.0);
    CHECK(a.find(Complexity::low_dynamic, s, Mode::normal) != nullptr);
  }
  CHECK(a.find(Complexity::low_dynamic, 13, Mode::normal) == nullptr);

  const auto j = a.report_json(opt);
  for (const char* key : {"schema", "config", "normal", "enhanced", "improvement", "runs", "paper_reference",
                          "per_scenario", "predictor", "predictor_comparison", "uc_ablation", "success_rate_delta"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["runs"].size() == 12);
}

TEST_CASE("benchmark output files") {
  auto opt = small_options();
  opt.runs = 1;
  opt.compare_backends = false;
  opt.uc_ablation = false;
  const auto r = run_benchmark(opt);
  const auto dir = std::filesystem::temp_directory_path() / "aeps_test_benchmark";
  std::filesystem::remove_all(dir);
  write_benchmark(dir, r, opt);
  std::size_t traces = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "traces")) traces += e.path().extension() == ".csv";
  CHECK(traces == r.runs.size());
  CHECK(std::filesystem::exists(dir / "traces" / "low_dynamic_seed11_normal.csv"));
  CHECK(std::filesystem::exists(dir / "traces" / "high_dynamic_seed11_agility_enhanced.csv"));
  for (const char* f : {"report.json", "durations.csv", "fig7_power.csv", "model.json"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK_FALSE(std::filesystem::exists(dir / "fig5_mae.csv"));
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report == nlohmann::json::parse(r.report_json(opt).dump()));
  const auto model = model_from_json(nlohmann::json::parse(slurp(dir / "model.json")));
  CHECK(model.members[0] == r.trained->members[0]);

  std::stringstream d(slurp(dir / "durations.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(d, line);
  CHECK(line == "scenario,seed,mode,uc_ablated,outcome,duration_s");
  while (std::getline(d, line)) ++rows;
  CHECK(rows == r.runs.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("a one-member ensemble matches the single network in the backend comparison") {
  DatasetOptions d;
  d.count = 300;
  d.seed = 5;
  const auto ds = generate_dataset(d);
  TrainConfig tc;
  tc.epochs = 30;
  const auto r = compare_backends(ds, 1, 0.05, 0.2, tc, 5);
  REQUIRE(r.backends.size() == 2);
  CHECK(r.backends[0].mae == r.backends[1].mae);
  CHECK(r.mae_ratio.at("ensemble").at("mlp") == 1.0);
  CHECK(r.labels.size() == 60);
}

TEST_CASE("benchmark option validation") {
  auto o = small_options();
  o.runs = 0;
  CHECK_THROWS_AS(run_benchmark(o), ConfigError);
  o = small_options();
  o.scenarios.clear();
  CHECK_THROWS_AS(run_benchmark(o), ConfigError);
  o = small_options();
  o.test_fraction = 1.0;
  CHECK_THROWS_AS(run_benchmark(o), ConfigError);
}

TEST_CASE("parallel jobs keep their order and propagate errors") {
  std::vector<std::function<int()>> jobs;
  for (int i = 0; i < 50; ++i) jobs.push_back([i] { return i * i; });
  const auto out = detail::run_parallel(jobs, 8);
  for (int i = 0; i < 50; ++i) CHECK(out[static_cast<std::size_t>(i)] == i * i);
  jobs[7] = []() -> int { throw DomainError("boom"); };
  CHECK_THROWS_AS(detail::run_parallel(jobs, 3), DomainError);
}
