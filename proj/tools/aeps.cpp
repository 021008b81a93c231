// aeps: dataset generation, training, single missions, the paired benchmark
// and predictor evaluation.
//
// Every command takes an optional JSON config (--config); flags override it.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "aeps/aeps.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { integer, number, text, flag };

struct Key {
  std::string name;
  Kind kind;
  std::string help;
};

// A command's keys, shared between the config file and the flag set.
struct Command {
  CLI::App* app = nullptr;
  std::vector<Key> keys;
  std::map<std::string, std::string> raw;  // flag values as typed
  std::map<std::string, bool> flags;
  std::string config_path;
};

void add_keys(Command& c, std::vector<Key> keys) {
  for (auto& k : keys) {
    const std::string opt = "--" + k.name;
    if (k.kind == Kind::flag) {
      c.app->add_flag(opt, c.flags[k.name], k.help);
    } else {
      c.app->add_option(opt, c.raw[k.name], k.help);
    }
    c.keys.push_back(std::move(k));
  }
}

std::string underscored(std::string s) {
  for (auto& ch : s) ch = ch == '-' ? '_' : ch;
  return s;
}

/// Config file merged with the flags given; unknown keys rejected.
json merged(const Command& c) {
  json cfg = json::object();
  if (!c.config_path.empty()) {
    std::ifstream f(c.config_path);
    if (!f) throw aeps::ConfigError("cannot read config " + c.config_path);
    try {
      f >> cfg;
    } catch (const json::exception& e) {
      throw aeps::ConfigError("malformed config " + c.config_path + ": " + e.what());
    }
    if (!cfg.is_object()) throw aeps::ConfigError("config must be a JSON object");
    if (cfg.contains("schema") && cfg.at("schema") != 1) throw aeps::ConfigError("unsupported config schema");
    cfg.erase("schema");
    json norm = json::object();
    for (const auto& [k, v] : cfg.items()) norm[underscored(k)] = v;
    cfg = norm;
    for (const auto& [k, _] : cfg.items()) {
      const bool known = std::any_of(c.keys.begin(), c.keys.end(), [&](const Key& key) {
        return underscored(key.name) == k;
      });
      if (!known) throw aeps::ConfigError("unknown config key '" + k + "' for " + c.app->get_name());
    }
  }
  for (const auto& k : c.keys) {
    const std::string name = underscored(k.name);
    if (c.app->count("--" + k.name) == 0) continue;
    const auto& s = k.kind == Kind::flag ? std::string() : c.raw.at(k.name);
    try {
      switch (k.kind) {
        case Kind::integer: {
          std::size_t pos = 0;
          const long long v = std::stoll(s, &pos);
          if (pos != s.size()) throw std::invalid_argument(s);
          cfg[name] = v;
          break;
        }
        case Kind::number: {
          std::size_t pos = 0;
          const double v = std::stod(s, &pos);
          if (pos != s.size()) throw std::invalid_argument(s);
          cfg[name] = v;
          break;
        }
        case Kind::text: cfg[name] = s; break;
        case Kind::flag: cfg[name] = c.flags.at(k.name); break;
      }
    } catch (const std::logic_error&) {
      throw aeps::ConfigError("--" + k.name + ": not a valid value: '" + s + "'");
    }
  }
  return cfg;
}

template <class T>
T get(const json& cfg, const std::string& key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw aeps::ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& cfg, const std::string& key, std::size_t fallback) {
  const auto v = get<long long>(cfg, key, static_cast<long long>(fallback));
  if (v < 0) throw aeps::ConfigError(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

/// Seed from the config or flags, then AEPS_SEED.
std::optional<std::uint64_t> seed_of(const json& cfg) {
  if (cfg.contains("seed")) {
    const auto v = get<long long>(cfg, "seed", 0);
    if (v < 0) throw aeps::ConfigError("seed must be non-negative");
    return static_cast<std::uint64_t>(v);
  }
  if (const char* env = std::getenv("AEPS_SEED")) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::logic_error&) {
      throw aeps::ConfigError("AEPS_SEED is not an unsigned integer");
    }
  }
  return std::nullopt;
}

std::uint64_t require_seed(const json& cfg, const std::string& cmd) {
  const auto s = seed_of(cfg);
  if (!s) throw aeps::ConfigError(cmd + " needs --seed (or AEPS_SEED)");
  return *s;
}

fs::path output_dir(const json& cfg) {
  fs::path dir = get<std::string>(cfg, "output", "out");
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw aeps::Error("cannot write " + p.string());
  return f;
}

bool paper_preset(const json& cfg) {
  const auto p = get<std::string>(cfg, "preset", "default");
  if (p != "paper" && p != "default") throw aeps::ConfigError("--preset must be paper|default");
  return p == "paper";
}

aeps::DemandParams demand_of(const json& cfg) {
  const auto name = get<std::string>(cfg, "demand_preset", paper_preset(cfg) ? "paper" : "scaled");
  return aeps::DemandParams::preset(name);
}

aeps::Mode mode_of(const json& cfg) {
  const auto m = get<std::string>(cfg, "mode", "normal");
  if (m == "normal") return aeps::Mode::normal;
  if (m == "agility_enhanced" || m == "enhanced") return aeps::Mode::agility_enhanced;
  throw aeps::ConfigError("--mode must be normal|agility_enhanced");
}

aeps::Complexity complexity_of(const std::string& c) {
  if (c == "low_dynamic" || c == "low") return aeps::Complexity::low_dynamic;
  if (c == "high_dynamic" || c == "high") return aeps::Complexity::high_dynamic;
  throw aeps::ConfigError("complexity must be low_dynamic|high_dynamic");
}

aeps::Backend backend_of(const json& cfg) {
  const auto b = get<std::string>(cfg, "backend", "deterministic");
  if (b == "deterministic" || b == "mlp") return aeps::Backend::deterministic;
  if (b == "ensemble") return aeps::Backend::ensemble;
  throw aeps::ConfigError("--backend must be deterministic|ensemble");
}

aeps::PredictorModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw aeps::ConfigError("cannot read model " + path);
  try {
    json j;
    f >> j;
    return aeps::model_from_json(j);
  } catch (const json::exception& e) {
    throw aeps::ConfigError("malformed model " + path + ": " + e.what());
  } catch (const aeps::ModelError& e) {
    throw aeps::ConfigError("invalid model " + path + ": " + e.what());
  }
}

aeps::LabeledDataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw aeps::ConfigError("cannot read dataset " + path);
  try {
    return aeps::read_dataset_csv(f);
  } catch (const aeps::Error& e) {
    throw aeps::ConfigError("invalid dataset " + path + ": " + e.what());
  }
}

aeps::TrainConfig train_config(const json& cfg, std::uint64_t seed) {
  aeps::TrainConfig tc;
  tc.learning_rate = get<double>(cfg, "alpha", tc.learning_rate);
  tc.batch_size = get_count(cfg, "batch_size", tc.batch_size);
  tc.epochs = get_count(cfg, "epochs", tc.epochs);
  tc.split = get<double>(cfg, "split", tc.split);
  tc.seed = seed;
  try {
    tc.validate();
  } catch (const aeps::DomainError& e) {
    throw aeps::ConfigError(e.what());
  }
  return tc;
}

aeps::MissionOptions mission_options(const json& cfg) {
  aeps::MissionOptions mo;
  mo.demand = demand_of(cfg);
  mo.plant.ultracap.energy_capacity = get<double>(cfg, "uc_capacity_j", mo.plant.ultracap.energy_capacity);
  mo.initial_soc_uc = get<double>(cfg, "initial_soc_uc", mo.initial_soc_uc);
  mo.timeout = get<double>(cfg, "timeout", mo.timeout);
  mo.full_replan = get<bool>(cfg, "full_replan", mo.full_replan);
  return mo;
}

void print_label_stats(const aeps::LabeledDataset& ds) {
  double lo = ds.labels.front(), hi = lo, sum = 0.0, sq = 0.0;
  for (double y : ds.labels) {
    lo = std::min(lo, y);
    hi = std::max(hi, y);
    sum += y;
  }
  const double mean = sum / static_cast<double>(ds.size());
  for (double y : ds.labels) sq += (y - mean) * (y - mean);
  std::cout << "rows " << ds.size() << "\n"
            << "label_w mean " << mean << " std " << std::sqrt(sq / static_cast<double>(ds.size())) << " min " << lo
            << " max " << hi << "\n";
}

// --- commands -------------------------------------------------------------------

aeps::LabeledDataset generate(const json& cfg, std::uint64_t seed) {
  aeps::DatasetOptions d;
  d.count = get_count(cfg, "count", 1100);
  if (d.count == 0) throw aeps::ConfigError("--count must be at least 1");
  d.seed = seed;
  d.demand = demand_of(cfg);
  aeps::DatasetStats stats;
  auto ds = aeps::generate_dataset(d, &stats);
  if (stats.failed > 0) std::cerr << "skipped " << stats.failed << " infeasible planning samples\n";
  return ds;
}

int cmd_generate(const json& cfg) {
  const auto seed = seed_of(cfg).value_or(0);
  const auto dir = output_dir(cfg);
  const auto ds = generate(cfg, seed);
  auto f = open_out(dir / "dataset.csv");
  aeps::write_dataset_csv(f, ds);
  print_label_stats(ds);
  std::cout << "wrote " << (dir / "dataset.csv").string() << "\n";
  return 0;
}

int cmd_train(const json& cfg) {
  const auto seed = seed_of(cfg).value_or(0);
  const auto dir = output_dir(cfg);
  const auto tc = train_config(cfg, seed);
  const auto ds = cfg.contains("dataset") ? load_dataset(get<std::string>(cfg, "dataset", "")) : generate(cfg, seed);
  const auto backend = backend_of(cfg);
  const auto members = get_count(cfg, "members", backend == aeps::Backend::ensemble ? 10 : 1);
  if (backend == aeps::Backend::deterministic && members != 1) {
    throw aeps::ConfigError("the deterministic backend has exactly one member");
  }
  if (members == 0) throw aeps::ConfigError("--members must be at least 1");
  if (tc.learning_rate == 0.0) std::cerr << "warning: alpha = 0, the model stays at its initialization\n";
  const auto res = aeps::train(aeps::make_model(backend, members, seed), ds, tc);
  {
    auto f = open_out(dir / "model.json");
    f << aeps::to_json(res.model).dump(2) << "\n";
  }
  {
    auto f = open_out(dir / "loss_curve.csv");
    aeps::write_loss_curve_csv(f, res.curve);
  }
  const double mean = ds.mean_label();
  std::cout << "train_rows " << res.train_rows << " val_rows " << res.val_rows << "\n"
            << "train_mae_w " << res.train_mae << "\n"
            << "val_mae_w " << res.val_mae << " (" << 100.0 * res.val_mae / mean << "% of mean label " << mean
            << ")\n"
            << "wrote " << (dir / "model.json").string() << "\n";
  return 0;
}

int cmd_simulate(const json& cfg) {
  const auto seed = require_seed(cfg, "simulate");
  const auto mode = mode_of(cfg);
  aeps::ScenarioConfig scenario;
  if (cfg.contains("scenario")) {
    const auto path = get<std::string>(cfg, "scenario", "");
    std::ifstream f(path);
    if (!f) throw aeps::ConfigError("cannot read scenario " + path);
    json j;
    try {
      f >> j;
      scenario = aeps::scenario_from_json(j);
    } catch (const json::exception& e) {
      throw aeps::ConfigError("malformed scenario " + path + ": " + e.what());
    } catch (const aeps::InvalidScenario& e) {
      throw aeps::ConfigError("invalid scenario " + path + ": " + e.what());
    }
    if (scenario.random_layout) scenario.seed = seed;
  } else {
    scenario = aeps::make_random_scenario(complexity_of(get<std::string>(cfg, "complexity", "low_dynamic")), seed);
  }
  auto mo = mission_options(cfg);
  mo.mode = mode;
  std::optional<aeps::PredictorModel> model;
  if (cfg.contains("model")) model = load_model(get<std::string>(cfg, "model", ""));
  if (mode == aeps::Mode::agility_enhanced && !model) {
    throw aeps::ConfigError("agility_enhanced mode needs a trained predictor: pass --model model.json "
                            "(produce one with `aeps train`)");
  }
  if (model) mo.model = &*model;
  try {
    mo.validate();
  } catch (const aeps::DomainError& e) {
    throw aeps::ConfigError(e.what());
  }
  const auto dir = output_dir(cfg);
  const auto trace = aeps::run_mission(scenario, mo);
  {
    auto f = open_out(dir / "trace.csv");
    aeps::write_trace_csv(f, trace);
  }
  {
    auto f = open_out(dir / "plant.csv");
    aeps::write_plant_csv(f, trace);
  }
  auto summary = aeps::summary_json(trace);
  summary["seed"] = seed;
  {
    auto f = open_out(dir / "summary.json");
    f << summary.dump(2) << "\n";
  }
  std::cout << "outcome " << aeps::to_string(trace.outcome) << " duration_s " << trace.duration() << " safety_m "
            << summary["metrics"]["safety_m"] << "\n";
  return 0;
}

int cmd_benchmark(const json& cfg) {
  aeps::BenchmarkOptions opt;
  opt.seed = require_seed(cfg, "benchmark");
  opt.runs = get_count(cfg, "runs", opt.runs);
  if (cfg.contains("scenarios")) {
    opt.scenarios.clear();
    const auto list = get<std::string>(cfg, "scenarios", "");
    std::size_t start = 0;
    while (start <= list.size()) {
      const auto comma = list.find(',', start);
      const auto item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!item.empty()) opt.scenarios.push_back(complexity_of(item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  opt.mission = mission_options(cfg);
  opt.dataset_count = get_count(cfg, "count", opt.dataset_count);
  opt.training = train_config(cfg, opt.seed);
  opt.compare_backends = !get<bool>(cfg, "no_backend_comparison", false);
  opt.ensemble_members = get_count(cfg, "members", opt.ensemble_members);
  opt.label_noise = get<double>(cfg, "noise", opt.label_noise);
  opt.uc_ablation = get<bool>(cfg, "uc_ablation", false);
  opt.workers = get_count(cfg, "workers", 0);
  std::optional<aeps::PredictorModel> model;
  if (cfg.contains("model")) model = load_model(get<std::string>(cfg, "model", ""));
  if (model) opt.model = &*model;
  try {
    opt.validate();
    opt.mission.validate();
  } catch (const aeps::DomainError& e) {
    throw aeps::ConfigError(e.what());
  }
  const auto dir = output_dir(cfg);
  const auto res = aeps::run_benchmark(opt);
  aeps::write_benchmark(dir, res, opt);
  const auto& r = res.report;
  std::cout << "runs " << res.runs.size() << "\n"
            << "success_rate normal " << r.normal.success_rate << " enhanced " << r.enhanced.success_rate << "\n"
            << "improvement_pct safety " << r.safety.pooled << " complexity " << r.complexity.pooled << " agility "
            << r.agility.pooled << " agility_normalized " << r.agility_normalized.pooled << " duration "
            << r.duration.pooled << "\n"
            << "wrote " << (dir / "report.json").string() << "\n";
  return 0;
}

int cmd_evaluate(const json& cfg) {
  const auto seed = seed_of(cfg).value_or(0);
  const auto dir = output_dir(cfg);
  const auto ds = cfg.contains("dataset") ? load_dataset(get<std::string>(cfg, "dataset", "")) : generate(cfg, seed);
  const double noise = get<double>(cfg, "noise", 0.05);
  if (!(noise >= 0.0)) throw aeps::ConfigError("--noise must be >= 0");
  const auto members = get_count(cfg, "members", 10);
  if (members == 0) throw aeps::ConfigError("--members must be at least 1");
  const auto tc = train_config(cfg, seed);
  const auto rep = aeps::compare_backends(ds, members, noise, 0.2, tc, seed);
  {
    auto f = open_out(dir / "mae_report.json");
    f << aeps::to_json(rep).dump(2) << "\n";
  }
  {
    auto f = open_out(dir / "fig5_mae.csv");
    aeps::write_mae_csv(f, rep);
  }
  for (const auto& b : rep.backends) {
    std::cout << b.name << " mae_w " << b.mae << " max_error_w " << b.max_error << " peak_window_error_w "
              << b.peak_window_error << "\n";
  }
  std::cout << "wrote " << (dir / "mae_report.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agility-enhanced power supply simulator and benchmark"};
  app.require_subcommand(1);

  const Key seed{"seed", Kind::integer, "RNG seed (falls back to AEPS_SEED)"};
  const Key output{"output", Kind::text, "output directory (default: out)"};
  const Key preset{"preset", Kind::text, "paper: published coefficients and defaults"};
  const Key demand{"demand-preset", Kind::text, "demand coefficients: paper | scaled"};
  const Key count{"count", Kind::integer, "planning samples in the dataset"};
  const Key dataset{"dataset", Kind::text, "labelled dataset CSV"};
  const Key alpha{"alpha", Kind::number, "learning rate"};
  const Key epochs{"epochs", Kind::integer, "training epochs"};
  const Key batch{"batch-size", Kind::integer, "rows per gradient step"};
  const Key split{"split", Kind::number, "training fraction"};
  const Key members{"members", Kind::integer, "ensemble members"};
  const Key model{"model", Kind::text, "trained model JSON"};
  const Key uc{"uc-capacity-j", Kind::number, "ultracapacitor capacity, J"};
  const Key soc{"initial-soc-uc", Kind::number, "ultracapacitor charge at start, 0..1"};
  const Key timeout{"timeout", Kind::number, "mission timeout, s"};
  const Key replan{"full-replan", Kind::flag, "replan the whole route after each amendment"};
  const Key noise{"noise", Kind::number, "label noise, fraction of the mean label"};

  std::map<std::string, Command> cmds;
  auto add = [&](const std::string& name, const std::string& desc, std::vector<Key> keys) {
    auto& c = cmds[name];
    c.app = app.add_subcommand(name, desc);
    c.app->add_option("--config", c.config_path, "JSON config; flags override it");
    add_keys(c, std::move(keys));
  };
  add("generate", "Generate a labelled planning dataset", {seed, output, preset, demand, count});
  add("train", "Train a power predictor",
      {seed, output, preset, demand, count, dataset, alpha, epochs, batch, split, members,
       {"backend", Kind::text, "deterministic | ensemble"}});
  add("simulate", "Fly one mission",
      {seed, output, preset, demand, model, uc, soc, timeout, replan,
       {"mode", Kind::text, "normal | agility_enhanced"},
       {"scenario", Kind::text, "scenario JSON"},
       {"complexity", Kind::text, "random layout when no scenario: low_dynamic | high_dynamic"}});
  add("benchmark", "Paired normal vs. enhanced benchmark",
      {seed, output, preset, demand, model, uc, soc, timeout, replan, count, alpha, epochs, batch, split, members,
       noise,
       {"runs", Kind::integer, "seeds per scenario"},
       {"scenarios", Kind::text, "comma list: low_dynamic,high_dynamic"},
       {"workers", Kind::integer, "parallel missions (0: all cores)"},
       {"uc-ablation", Kind::flag, "also fly enhanced missions without ultracapacitor"},
       {"no-backend-comparison", Kind::flag, "skip the predictor backend comparison"}});
  add("evaluate", "Compare predictor backends on noisy labels",
      {seed, output, preset, demand, count, dataset, alpha, epochs, batch, split, members, noise});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (auto& [name, c] : cmds) {
      if (!c.app->parsed()) continue;
      const json cfg = merged(c);
      if (name == "generate") return cmd_generate(cfg);
      if (name == "train") return cmd_train(cfg);
      if (name == "simulate") return cmd_simulate(cfg);
      if (name == "benchmark") return cmd_benchmark(cfg);
      if (name == "evaluate") return cmd_evaluate(cfg);
    }
  } catch (const aeps::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
