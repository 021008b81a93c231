#pragma once

// Evaluation quantities: safety, complexity, power term and the agility sum,
// paired normal-vs-enhanced comparisons, and predictor error reports.

#include "aeps/mission.hpp"
#include "aeps/predictor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace aeps {

inline void require_steps(const SimulationTrace& trace) {
  if (trace.steps.empty()) throw DomainError("metrics need a non-empty trace");
}

/// Minimum obstacle distance over the mission, m.
inline double safety(const SimulationTrace& trace) {
  require_steps(trace);
  double s = std::numeric_limits<double>::infinity();
  for (const auto& st : trace.steps) s = std::min(s, st.min_distance);
  return s;
}

/// Population variance of the flown curvature series, (1/m)^2.
inline double complexity(const SimulationTrace& trace) {
  require_steps(trace);
  const double n = static_cast<double>(trace.steps.size());
  double mean = 0.0;
  for (const auto& st : trace.steps) mean += st.curvature;
  mean /= n;
  double var = 0.0;
  for (const auto& st : trace.steps) var += (st.curvature - mean) * (st.curvature - mean);
  return var / n;
}

/// Peak supplied power, W.
inline double power_term(const SimulationTrace& trace) {
  require_steps(trace);
  double p = 0.0;
  for (const auto& st : trace.steps) p = std::max(p, st.decision.supplied());
  return p;
}

inline double mean_supplied_power(const SimulationTrace& trace) {
  require_steps(trace);
  double p = 0.0;
  for (const auto& st : trace.steps) p += st.decision.supplied();
  return p / static_cast<double>(trace.steps.size());
}

/// Scales for the dimensionless agility variant.
struct AgilityReferences {
  double power = 30.0;      // W
  double complexity = 1.0;  // (1/m)^2
  double safety = 3.0;      // m
};

struct AgilityReport {
  double power_term = 0.0;  // W, max
  double power_mean = 0.0;  // W
  double complexity = 0.0;
  double safety = 0.0;
  double agility = 0.0;             // power_term + complexity + safety, mixed units as defined
  double agility_normalized = 0.0;  // each term over its reference

  static AgilityReport from_terms(double p, double c, double s, double p_mean = 0.0,
                                  const AgilityReferences& ref = {}) {
    AgilityReport r;
    r.power_term = p;
    r.power_mean = p_mean;
    r.complexity = c;
    r.safety = s;
    r.agility = p + c + s;
    r.agility_normalized = p / ref.power + c / ref.complexity + s / ref.safety;
    return r;
  }
};

inline AgilityReport agility(const SimulationTrace& trace, const AgilityReferences& ref = {}) {
  return AgilityReport::from_terms(power_term(trace), complexity(trace), safety(trace), mean_supplied_power(trace),
                                   ref);
}

// --- paired comparison ---------------------------------------------------------

/// What the comparison needs from one mission.
struct RunSummary {
  std::uint64_t seed = 0;
  std::string scenario;
  Outcome outcome = Outcome::timeout;
  double duration = 0.0;
  AgilityReport metrics;

  bool succeeded() const { return outcome == Outcome::success; }
};

inline RunSummary summarize(const SimulationTrace& trace, std::uint64_t seed, std::string scenario,
                            const AgilityReferences& ref = {}) {
  return {seed, std::move(scenario), trace.outcome, trace.duration(), agility(trace, ref)};
}

struct SignTest {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t ties = 0;
  double p_value = 1.0;  // two-sided, exact binomial on the non-tied pairs
};

inline SignTest sign_test(const std::vector<double>& deltas) {
  SignTest t;
  for (double d : deltas) {
    if (d > 0.0) ++t.positive;
    else if (d < 0.0) ++t.negative;
    else ++t.ties;
  }
  const std::size_t n = t.positive + t.negative;
  if (n == 0) return t;
  const std::size_t k = std::min(t.positive, t.negative);
  // P(X <= k) for X ~ Bin(n, 1/2), via log-gamma for stability.
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  }
  t.p_value = std::min(1.0, 2.0 * tail);
  return t;
}

/// Relative change (enhanced - normal) / |normal| in percent; 0 when both are 0.
inline double percent_change(double normal, double enhanced) {
  if (normal == enhanced) return 0.0;
  if (normal == 0.0) return enhanced > 0.0 ? std::numeric_limits<double>::infinity()
                                           : -std::numeric_limits<double>::infinity();
  return 100.0 * (enhanced - normal) / std::abs(normal);
}

struct Improvement {
  double pooled = 0.0;          // % change of the mean over all matched runs
  double over_scenarios = 0.0;  // mean of the per-scenario pooled changes
  double mean_paired = 0.0;     // mean of per-pair changes (pairs with a zero baseline skipped)
  std::size_t pairs = 0;
  std::size_t skipped = 0;
  std::map<std::string, double> per_scenario;
  SignTest sign;
};

struct ModeAggregate {
  std::size_t runs = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double duration_mean = 0.0;  // s, successful runs
  double duration_median = 0.0;
  double duration_min = 0.0;
  double duration_max = 0.0;
  double safety = 0.0;  // means over all runs
  double complexity = 0.0;
  double power_max = 0.0;
  double power_mean = 0.0;
  double agility = 0.0;
  double agility_normalized = 0.0;
  std::map<std::string, std::size_t> outcomes;
};

struct BenchmarkReport {
  ModeAggregate normal;
  ModeAggregate enhanced;
  Improvement safety;
  Improvement complexity;
  Improvement agility;
  Improvement agility_normalized;
  Improvement duration;  // pairs where both missions succeeded
  double success_rate_delta = 0.0;
  std::map<std::string, std::pair<ModeAggregate, ModeAggregate>> per_scenario;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ModeAggregate aggregate(const std::vector<const RunSummary*>& runs) {
  ModeAggregate a;
  a.runs = runs.size();
  std::vector<double> durations;
  for (const auto* r : runs) {
    a.outcomes[to_string(r->outcome)] += 1;
    a.safety += r->metrics.safety;
    a.complexity += r->metrics.complexity;
    a.power_max += r->metrics.power_term;
    a.power_mean += r->metrics.power_mean;
    a.agility += r->metrics.agility;
    a.agility_normalized += r->metrics.agility_normalized;
    if (r->succeeded()) {
      ++a.successes;
      durations.push_back(r->duration);
    }
  }
  if (a.runs > 0) {
    const double n = static_cast<double>(a.runs);
    a.success_rate = static_cast<double>(a.successes) / n;
    a.safety /= n;
    a.complexity /= n;
    a.power_max /= n;
    a.power_mean /= n;
    a.agility /= n;
    a.agility_normalized /= n;
  }
  if (!durations.empty()) {
    double s = 0.0;
    for (double d : durations) s += d;
    a.duration_mean = s / static_cast<double>(durations.size());
    a.duration_median = median(durations);
    a.duration_min = *std::min_element(durations.begin(), durations.end());
    a.duration_max = *std::max_element(durations.begin(), durations.end());
  }
  return a;
}

using Pair = std::pair<const RunSummary*, const RunSummary*>;

template <class Get>
Improvement improvement(const std::vector<Pair>& pairs, Get get) {
  Improvement imp;
  std::map<std::string, std::pair<double, double>> sums;
  std::map<std::string, std::size_t> counts;
  double sn = 0.0, se = 0.0, paired = 0.0;
  std::vector<double> deltas;
  for (const auto& [n, e] : pairs) {
    const double vn = get(*n), ve = get(*e);
    sn += vn;
    se += ve;
    sums[n->scenario].first += vn;
    sums[n->scenario].second += ve;
    counts[n->scenario] += 1;
    deltas.push_back(ve - vn);
    ++imp.pairs;
    if (vn == 0.0 && ve != 0.0) {
      ++imp.skipped;
    } else {
      paired += percent_change(vn, ve);
    }
  }
  if (imp.pairs == 0) return imp;
  imp.pooled = percent_change(sn / imp.pairs, se / imp.pairs);
  const std::size_t used = imp.pairs - imp.skipped;
  imp.mean_paired = used > 0 ? paired / static_cast<double>(used) : 0.0;
  double over = 0.0;
  for (const auto& [name, s] : sums) {
    const double c = static_cast<double>(counts[name]);
    imp.per_scenario[name] = percent_change(s.first / c, s.second / c);
    over += imp.per_scenario[name];
  }
  imp.over_scenarios = over / static_cast<double>(sums.size());
  imp.sign = sign_test(deltas);
  return imp;
}

}  // namespace detail

/// Pairs runs by (scenario, seed) and reports enhanced relative to normal.
inline BenchmarkReport compare(const std::vector<RunSummary>& normal, const std::vector<RunSummary>& enhanced) {
  if (normal.empty()) throw DomainError("compare needs at least one pair");
  if (normal.size() != enhanced.size()) throw DomainError("compare: run lists differ in length");
  using Key = std::pair<std::string, std::uint64_t>;
  std::map<Key, const RunSummary*> by_key;
  for (const auto& r : enhanced) {
    if (!by_key.emplace(Key{r.scenario, r.seed}, &r).second) throw DomainError("compare: duplicate enhanced run");
  }
  std::vector<detail::Pair> pairs;
  std::vector<detail::Pair> completed;
  for (const auto& r : normal) {
    const auto it = by_key.find(Key{r.scenario, r.seed});
    if (it == by_key.end()) throw DomainError("compare: unmatched seed " + std::to_string(r.seed) + " in " + r.scenario);
    pairs.emplace_back(&r, it->second);
    if (r.succeeded() && it->second->succeeded()) completed.emplace_back(&r, it->second);
  }
  if (pairs.size() != by_key.size()) throw DomainError("compare: duplicate normal run");

  BenchmarkReport rep;
  std::vector<const RunSummary*> ns, es;
  std::map<std::string, std::pair<std::vector<const RunSummary*>, std::vector<const RunSummary*>>> scen;
  for (const auto& [n, e] : pairs) {
    ns.push_back(n);
    es.push_back(e);
    scen[n->scenario].first.push_back(n);
    scen[n->scenario].second.push_back(e);
  }
  rep.normal = detail::aggregate(ns);
  rep.enhanced = detail::aggregate(es);
  for (const auto& [name, lists] : scen) {
    rep.per_scenario[name] = {detail::aggregate(lists.first), detail::aggregate(lists.second)};
  }
  rep.safety = detail::improvement(pairs, [](const RunSummary& r) { return r.metrics.safety; });
  rep.complexity = detail::improvement(pairs, [](const RunSummary& r) { return r.metrics.complexity; });
  rep.agility = detail::improvement(pairs, [](const RunSummary& r) { return r.metrics.agility; });
  rep.agility_normalized =
      detail::improvement(pairs, [](const RunSummary& r) { return r.metrics.agility_normalized; });
  rep.duration = detail::improvement(completed, [](const RunSummary& r) { return r.duration; });
  rep.success_rate_delta = rep.enhanced.success_rate - rep.normal.success_rate;
  return rep;
}

// --- predictor error ----------------------------------------------------------

struct BackendError {
  std::string name;
  double mae = 0.0;
  double max_error = 0.0;
  double peak_window_error = 0.0;  // MAE over the highest-demand rows
  std::vector<double> predictions;
};

struct MaeReport {
  std::vector<BackendError> backends;
  std::vector<double> labels;
  double peak_fraction = 0.1;
  // ratios[a][b] = metric(a) / metric(b)
  std::map<std::string, std::map<std::string, double>> mae_ratio;
  std::map<std::string, std::map<std::string, double>> max_error_ratio;
  std::map<std::string, std::map<std::string, double>> peak_error_ratio;
};

/// Row indices of the top `fraction` labels (at least one), highest first.
inline std::vector<std::size_t> peak_rows(const std::vector<double>& labels, double fraction) {
  std::vector<std::size_t> idx(labels.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return labels[a] > labels[b]; });
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * labels.size())));
  idx.resize(std::min(k, idx.size()));
  return idx;
}

inline MaeReport mae_report(const std::vector<std::pair<std::string, const PredictorModel*>>& backends,
                            const LabeledDataset& test, double peak_fraction = 0.1) {
  if (test.empty()) throw DomainError("mae_report: empty test set");
  if (!(peak_fraction > 0.0 && peak_fraction <= 1.0)) throw DomainError("peak fraction must be in (0, 1]");
  MaeReport rep;
  rep.labels = test.labels;
  rep.peak_fraction = peak_fraction;
  const auto peak = peak_rows(test.labels, peak_fraction);
  for (const auto& [name, model] : backends) {
    BackendError b;
    b.name = name;
    for (const auto& p : model->predict(test.features)) b.predictions.push_back(p.mean);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const double e = std::abs(b.predictions[i] - test.labels[i]);
      b.mae += e;
      b.max_error = std::max(b.max_error, e);
    }
    b.mae /= static_cast<double>(test.size());
    for (std::size_t i : peak) b.peak_window_error += std::abs(b.predictions[i] - test.labels[i]);
    b.peak_window_error /= static_cast<double>(peak.size());
    rep.backends.push_back(std::move(b));
  }
  auto ratio = [](double a, double b) { return a == b ? 1.0 : a / b; };
  for (const auto& a : rep.backends) {
    for (const auto& b : rep.backends) {
      rep.mae_ratio[a.name][b.name] = ratio(a.mae, b.mae);
      rep.max_error_ratio[a.name][b.name] = ratio(a.max_error, b.max_error);
      rep.peak_error_ratio[a.name][b.name] = ratio(a.peak_window_error, b.peak_window_error);
    }
  }
  return rep;
}

/// Copy of `ds` with zero-mean Gaussian label noise of `sigma` W, clamped at 0.
inline LabeledDataset inject_noise(const LabeledDataset& ds, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw DomainError("noise sigma must be >= 0");
  LabeledDataset out = ds;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& y : out.labels) y = std::max(0.0, y + n(rng));
  return out;
}

// --- serialization ------------------------------------------------------------

/// Non-finite numbers become null so reports stay valid JSON.
inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const AgilityReport& r) {
  return {{"power_max_w", num(r.power_term)},     {"power_mean_w", num(r.power_mean)},
          {"complexity", num(r.complexity)},      {"safety_m", num(r.safety)},
          {"agility", num(r.agility)},            {"agility_normalized", num(r.agility_normalized)}};
}

inline nlohmann::json to_json(const SignTest& s) {
  return {{"positive", s.positive}, {"negative", s.negative}, {"ties", s.ties}, {"p_value", num(s.p_value)}};
}

inline nlohmann::json to_json(const Improvement& i) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [k, v] : i.per_scenario) per[k] = num(v);
  return {{"pooled_pct", num(i.pooled)},
          {"over_scenarios_pct", num(i.over_scenarios)},
          {"mean_paired_pct", num(i.mean_paired)},
          {"pairs", i.pairs},
          {"skipped_zero_baseline", i.skipped},
          {"per_scenario_pct", per},
          {"sign_test", to_json(i.sign)}};
}

inline nlohmann::json to_json(const ModeAggregate& a) {
  nlohmann::json outcomes = nlohmann::json::object();
  for (const auto& [k, v] : a.outcomes) outcomes[k] = v;
  return {{"runs", a.runs},
          {"successes", a.successes},
          {"success_rate", num(a.success_rate)},
          {"duration_mean_s", num(a.duration_mean)},
          {"duration_median_s", num(a.duration_median)},
          {"duration_min_s", num(a.duration_min)},
          {"duration_max_s", num(a.duration_max)},
          {"safety_m", num(a.safety)},
          {"complexity", num(a.complexity)},
          {"power_max_w", num(a.power_max)},
          {"power_mean_w", num(a.power_mean)},
          {"agility", num(a.agility)},
          {"agility_normalized", num(a.agility_normalized)},
          {"outcomes", outcomes}};
}

inline nlohmann::json to_json(const BenchmarkReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [k, v] : r.per_scenario) per[k] = {{"normal", to_json(v.first)}, {"enhanced", to_json(v.second)}};
  return {{"normal", to_json(r.normal)},
          {"enhanced", to_json(r.enhanced)},
          {"improvement",
           {{"safety", to_json(r.safety)},
            {"complexity", to_json(r.complexity)},
            {"agility", to_json(r.agility)},
            {"agility_normalized", to_json(r.agility_normalized)},
            {"duration", to_json(r.duration)}}},
          {"success_rate_delta", num(r.success_rate_delta)},
          {"per_scenario", per},
          // Published figures for orientation only; nothing is checked against them.
          {"paper_reference",
           {{"safety_pct", 58.16},
            {"complexity_pct", 84.86},
            {"agility_pct", 40.25},
            {"duration_pct", {-10.45, -9.05}},
            {"duration_median", {{"normal", 2.18}, {"enhanced", 1.97}}},
            {"mean_curvature_scenario1", {{"normal", 0.08}, {"enhanced", 1.53}}},
            {"safety_scenario1_m", {{"normal", 2.95}, {"enhanced", 3.18}}}}}};
}

inline nlohmann::json to_json(const MaeReport& r) {
  nlohmann::json backends = nlohmann::json::object();
  for (const auto& b : r.backends) {
    backends[b.name] = {{"mae_w", num(b.mae)},
                        {"max_error_w", num(b.max_error)},
                        {"peak_window_error_w", num(b.peak_window_error)}};
  }
  auto table = [](const std::map<std::string, std::map<std::string, double>>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [a, row] : m)
      for (const auto& [b, v] : row) j[a][b] = num(v);
    return j;
  };
  return {{"backends", backends},
          {"test_rows", r.labels.size()},
          {"peak_fraction", r.peak_fraction},
          {"mae_ratio", table(r.mae_ratio)},
          {"max_error_ratio", table(r.max_error_ratio)},
          {"peak_error_ratio", table(r.peak_error_ratio)},
          {"paper_reference", {{"max_error_ratio", 0.5834}, {"peak_error_ratio", 0.3125}}}};
}

/// Per-row predictions and absolute errors of every backend.
inline void write_mae_csv(std::ostream& out, const MaeReport& r) {
  csv::Writer w(out);
  std::vector<std::string> head{"row", "label_w"};
  for (const auto& b : r.backends) {
    head.push_back(b.name + "_pred_w");
    head.push_back(b.name + "_abs_err_w");
  }
  w.header(head);
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    std::vector<std::string> row{std::to_string(i), csv::fmt(r.labels[i])};
    for (const auto& b : r.backends) {
      row.push_back(csv::fmt(b.predictions[i]));
      row.push_back(csv::fmt(std::abs(b.predictions[i] - r.labels[i])));
    }
    w.cells(row);
  }
}

}  // namespace aeps
