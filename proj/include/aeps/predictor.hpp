#pragma once

// Learned mission-power predictor: datasets, deterministic and ensemble
// backends, training, MAE, JSON persistence.

#include "aeps/common.hpp"
#include "aeps/csv.hpp"
#include "aeps/mlp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace aeps {

struct FeatureVector {
  double velocity = 0.0;            // m/s, mean planned speed
  double length_D = 0.0;            // m
  double mean_abs_curvature = 0.0;  // 1/m

  std::array<double, 3> as_array() const { return {velocity, length_D, mean_abs_curvature}; }
  bool operator==(const FeatureVector&) const = default;
};

struct LabeledDataset {
  std::vector<FeatureVector> features;
  std::vector<double> labels;  // W

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  void push_back(const FeatureVector& x, double label) {
    features.push_back(x);
    labels.push_back(label);
  }

  LabeledDataset subset(const std::vector<std::size_t>& idx) const {
    LabeledDataset out;
    out.features.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (auto i : idx) out.push_back(features.at(i), labels.at(i));
    return out;
  }

  double mean_label() const {
    if (labels.empty()) return 0.0;
    return std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(labels.size());
  }

  void validate() const {
    if (features.size() != labels.size()) throw DomainError("dataset features/labels differ in length");
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& f = features[i];
      if (!(f.velocity >= 0.0 && f.length_D >= 0.0 && f.mean_abs_curvature >= 0.0)) {
        throw DomainError("dataset row " + std::to_string(i) + " has a negative feature");
      }
      if (!std::isfinite(labels[i]) || labels[i] < 0.0) {
        throw DomainError("dataset row " + std::to_string(i) + " has an invalid label");
      }
    }
  }
};

inline void write_dataset_csv(std::ostream& out, const LabeledDataset& ds) {
  csv::Writer w(out);
  w.header({"velocity", "length_d", "mean_abs_curv", "label_w"});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& f = ds.features[i];
    w.row(f.velocity, f.length_D, f.mean_abs_curvature, ds.labels[i]);
  }
}

inline LabeledDataset read_dataset_csv(std::istream& in) {
  auto rows = csv::read_numeric(in, {"velocity", "length_d", "mean_abs_curv", "label_w"});
  LabeledDataset ds;
  for (const auto& r : rows) ds.push_back({r[0], r[1], r[2]}, r[3]);
  ds.validate();
  return ds;
}

// --- model -------------------------------------------------------------------

enum class Backend { deterministic, ensemble };

struct Normalization {
  std::vector<double> mean;
  std::vector<double> scale;

  bool operator==(const Normalization&) const = default;
};

struct Prediction {
  double mean = 0.0;  // W
  double std = 0.0;   // W, spread across ensemble members
};

/// M(theta): one network (deterministic) or K independently initialised
/// networks whose mean and spread form the prediction (ensemble).
struct PredictorModel {
  Backend backend = Backend::deterministic;
  std::vector<int> layer_sizes{3, 32, 32, 1};
  std::vector<Mlp> members;
  Normalization input_norm{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  Normalization output_norm{{0.0}, {1.0}};
  std::uint64_t seed = 0;

  std::size_t member_count() const { return members.size(); }

  void validate() const {
    if (members.empty()) throw ModelError("model has no members");
    if (backend == Backend::deterministic && members.size() != 1) {
      throw ModelError("deterministic backend must have exactly one member");
    }
    for (const auto& m : members) {
      if (m.layer_sizes() != layer_sizes) throw ModelError("ensemble members must share the architecture");
    }
    if (layer_sizes.front() != 3 || layer_sizes.back() != 1) throw ModelError("model must map 3 features to 1 output");
    if (input_norm.mean.size() != 3 || input_norm.scale.size() != 3 || output_norm.mean.size() != 1 ||
        output_norm.scale.size() != 1) {
      throw ModelError("normalisation has the wrong dimension");
    }
    for (double s : input_norm.scale) {
      if (!(s > 0.0)) throw ModelError("normalisation scales must be positive");
    }
    if (!(output_norm.scale[0] > 0.0)) throw ModelError("normalisation scales must be positive");
  }

  /// Standardised feature columns.
  Eigen::MatrixXd encode(const std::vector<FeatureVector>& xs) const {
    Eigen::MatrixXd m(3, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const auto a = xs[j].as_array();
      for (int i = 0; i < 3; ++i) {
        m(i, static_cast<Eigen::Index>(j)) = (a[static_cast<std::size_t>(i)] - input_norm.mean[static_cast<std::size_t>(i)]) /
                                            input_norm.scale[static_cast<std::size_t>(i)];
      }
    }
    return m;
  }

  Eigen::MatrixXd encode_labels(const std::vector<double>& ys) const {
    Eigen::MatrixXd t(1, static_cast<Eigen::Index>(ys.size()));
    for (std::size_t j = 0; j < ys.size(); ++j) {
      t(0, static_cast<Eigen::Index>(j)) = (ys[j] - output_norm.mean[0]) / output_norm.scale[0];
    }
    return t;
  }

  double decode(double y) const { return output_norm.mean[0] + output_norm.scale[0] * y; }

  /// Batched prediction in watts.
  std::vector<Prediction> predict(const std::vector<FeatureVector>& xs) const {
    validate();
    const Eigen::MatrixXd enc = encode(xs);
    const auto k = static_cast<double>(members.size());
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(enc.cols());
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(enc.cols());
    for (const auto& m : members) {
      Eigen::RowVectorXd y = m.forward(enc).row(0).unaryExpr([this](double v) { return decode(v); });
      sum += y;
      sq += y.array().square().matrix();
    }
    std::vector<Prediction> out(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double mean = sum(jj) / k;
      out[j].mean = mean;
      out[j].std = members.size() > 1 ? std::sqrt(std::max(0.0, sq(jj) / k - mean * mean)) : 0.0;
    }
    return out;
  }

  Prediction forward(const FeatureVector& x) const { return predict({x}).front(); }
};

inline std::uint64_t member_seed(std::uint64_t seed, std::size_t member) {
  // splitmix64 step keeps member streams decorrelated; member 0 keeps `seed`.
  if (member == 0) return seed;
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(member);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline PredictorModel make_model(Backend backend, std::size_t members, std::uint64_t seed,
                                 std::vector<int> layer_sizes = {3, 32, 32, 1}) {
  if (members == 0) throw ModelError("member count must be at least 1");
  if (backend == Backend::deterministic && members != 1) {
    throw ModelError("deterministic backend has exactly one member");
  }
  PredictorModel m;
  m.backend = backend;
  m.layer_sizes = layer_sizes;
  m.seed = seed;
  for (std::size_t k = 0; k < members; ++k) m.members.push_back(Mlp::glorot(layer_sizes, member_seed(seed, k)));
  m.validate();
  return m;
}

// --- losses --------------------------------------------------------------------

/// 0.5 * ||P - P_hat|| (Euclidean norm, unsquared).
inline double loss(const std::vector<double>& p, const std::vector<double>& p_hat) {
  if (p.size() != p_hat.size()) throw DomainError("loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - p_hat[i]) * (p[i] - p_hat[i]);
  return 0.5 * std::sqrt(s);
}

inline double loss(double p, double p_hat) { return 0.5 * std::abs(p - p_hat); }

/// 0.5 * ||P - P_hat||^2, the differentiable objective actually minimised.
inline double squared_loss(const std::vector<double>& p, const std::vector<double>& p_hat) {
  if (p.size() != p_hat.size()) throw DomainError("squared_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - p_hat[i]) * (p[i] - p_hat[i]);
  return 0.5 * s;
}

inline double mae(const PredictorModel& model, const LabeledDataset& ds) {
  if (ds.empty()) throw DomainError("mae: empty dataset");
  const auto preds = model.predict(ds.features);
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) s += std::abs(preds[i].mean - ds.labels[i]);
  return s / static_cast<double>(ds.size());
}

// --- training ------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 1100;
  std::size_t epochs = 500;
  double split = 0.8;  // fraction used for training
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw DomainError("learning rate must be >= 0");
    if (batch_size == 0) throw DomainError("batch size must be positive");
    if (!(split > 0.0 && split < 1.0)) throw DomainError("split must be in (0, 1)");
  }
};

/// One pass over `x`/`t` (already encoded) in contiguous batches of
/// `batch_size`, applying theta <- theta - alpha * grad per batch.
/// Returns the summed squared loss seen during the pass.
inline double train_epoch(Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t, double alpha,
                          std::size_t batch_size) {
  if (!(alpha >= 0.0)) throw DomainError("learning rate must be >= 0");
  if (batch_size == 0) throw DomainError("batch size must be positive");
  double total = 0.0;
  const auto n = x.cols();
  for (Eigen::Index start = 0; start < n; start += static_cast<Eigen::Index>(batch_size)) {
    const auto len = std::min<Eigen::Index>(static_cast<Eigen::Index>(batch_size), n - start);
    const auto g = net.gradient(x.middleCols(start, len), t.middleCols(start, len));
    if (!g.finite()) throw TrainingDiverged("non-finite gradient; lower the learning rate");
    net.apply(g, alpha);
    total += g.loss;
  }
  return total;
}

struct EpochLoss {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // W^2, 0.5 * mean squared residual
  double val_loss = 0.0;    // W^2
};

struct TrainResult {
  PredictorModel model;
  std::vector<EpochLoss> curve;
  double train_mae = 0.0;
  double val_mae = 0.0;
  double val_loss_unsquared = 0.0;  // 0.5 * ||P - P_hat|| over the validation set
  std::size_t effective_batch = 0;
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
};

namespace detail {

inline Normalization fit_normalization(const std::vector<std::vector<double>>& cols) {
  Normalization n;
  for (const auto& c : cols) {
    const double mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
    double var = 0.0;
    for (double v : c) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c.size());
    const double sd = std::sqrt(var);
    n.mean.push_back(mean);
    n.scale.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return n;
}

inline double half_mean_sq(const PredictorModel& model, const LabeledDataset& ds) {
  const auto preds = model.predict(ds.features);
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) s += (preds[i].mean - ds.labels[i]) * (preds[i].mean - ds.labels[i]);
  return 0.5 * s / static_cast<double>(ds.size());
}

}  // namespace detail

/// Seeded shuffle split; `split` of the rows train, the rest validate.
inline std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double split,
                                                               std::uint64_t seed) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(split * static_cast<double>(ds.size())));
  if (n_train == 0 || n_train >= ds.size()) throw DomainError("split leaves an empty train or validation set");
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> va(idx.begin() + static_cast<long>(n_train), idx.end());
  return {ds.subset(tr), ds.subset(va)};
}

/// Trains every member from its current weights. Normalisation statistics
/// come from the training split and are frozen into the model. Ensemble
/// members (K > 1) each see a bootstrap resample of the training split.
inline TrainResult train(PredictorModel model, const LabeledDataset& dataset, const TrainConfig& config) {
  config.validate();
  dataset.validate();
  model.validate();
  auto [d_train, d_val] = split_dataset(dataset, config.split, config.seed);

  std::vector<std::vector<double>> cols(3);
  for (const auto& f : d_train.features) {
    const auto a = f.as_array();
    for (std::size_t i = 0; i < 3; ++i) cols[i].push_back(a[i]);
  }
  model.input_norm = detail::fit_normalization(cols);
  model.output_norm = detail::fit_normalization({d_train.labels});

  TrainResult result;
  result.train_rows = d_train.size();
  result.val_rows = d_val.size();
  result.effective_batch = std::min(config.batch_size, d_train.size());

  struct MemberData {
    Eigen::MatrixXd x, t;
    std::mt19937_64 rng;
  };
  std::vector<MemberData> data;
  const std::size_t k = model.member_count();
  for (std::size_t m = 0; m < k; ++m) {
    std::mt19937_64 rng(member_seed(config.seed ^ 0x5EEDULL, m));
    LabeledDataset rows = d_train;
    if (k > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, d_train.size() - 1);
      std::vector<std::size_t> boot(d_train.size());
      for (auto& b : boot) b = pick(rng);
      rows = d_train.subset(boot);
    }
    data.push_back({model.encode(rows.features), model.encode_labels(rows.labels), std::move(rng)});
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t m = 0; m < k; ++m) {
      auto& md = data[m];
      // Reshuffle columns each epoch so batches differ when batch < rows.
      if (result.effective_batch < static_cast<std::size_t>(md.x.cols())) {
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(md.x.cols());
        perm.setIdentity();
        std::shuffle(perm.indices().data(), perm.indices().data() + perm.indices().size(), md.rng);
        md.x = md.x * perm;
        md.t = md.t * perm;
      }
      train_epoch(model.members[m], md.x, md.t, config.learning_rate, result.effective_batch);
    }
    result.curve.push_back({epoch, detail::half_mean_sq(model, d_train), detail::half_mean_sq(model, d_val)});
  }

  result.train_mae = mae(model, d_train);
  result.val_mae = mae(model, d_val);
  std::vector<double> pv;
  for (const auto& p : model.predict(d_val.features)) pv.push_back(p.mean);
  result.val_loss_unsquared = loss(d_val.labels, pv);
  result.model = std::move(model);
  return result;
}

inline void write_loss_curve_csv(std::ostream& out, const std::vector<EpochLoss>& curve) {
  csv::Writer w(out);
  w.header({"epoch", "train_loss", "val_loss"});
  for (const auto& e : curve) w.row(e.epoch, e.train_loss, e.val_loss);
}

// --- persistence ---------------------------------------------------------------

inline nlohmann::json to_json(const PredictorModel& m) {
  m.validate();
  nlohmann::json j;
  j["schema"] = 1;
  j["backend"] = {{"kind", m.backend == Backend::deterministic ? "deterministic" : "ensemble"},
                  {"members", m.member_count()}};
  j["layer_sizes"] = m.layer_sizes;
  j["activation"] = "tanh";
  j["input_normalization"] = {{"mean", m.input_norm.mean}, {"scale", m.input_norm.scale}};
  j["output_normalization"] = {{"mean", m.output_norm.mean}, {"scale", m.output_norm.scale}};
  j["seed"] = m.seed;
  auto members = nlohmann::json::array();
  for (const auto& net : m.members) members.push_back({{"weights", net.flatten()}});
  j["members"] = std::move(members);
  return j;
}

inline PredictorModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<int>() != 1) throw ModelError("unsupported model schema");
    PredictorModel m;
    const auto kind = j.at("backend").at("kind").get<std::string>();
    if (kind == "deterministic") {
      m.backend = Backend::deterministic;
    } else if (kind == "ensemble") {
      m.backend = Backend::ensemble;
    } else {
      throw ModelError("unknown backend '" + kind + "'");
    }
    m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    m.input_norm = {j.at("input_normalization").at("mean").get<std::vector<double>>(),
                    j.at("input_normalization").at("scale").get<std::vector<double>>()};
    m.output_norm = {j.at("output_normalization").at("mean").get<std::vector<double>>(),
                     j.at("output_normalization").at("scale").get<std::vector<double>>()};
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& block : j.at("members")) {
      Mlp net(m.layer_sizes);
      net.unflatten(block.at("weights").get<std::vector<double>>());
      m.members.push_back(std::move(net));
    }
    if (j.at("backend").at("members").get<std::size_t>() != m.members.size()) {
      throw ModelError("member count does not match member blocks");
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace aeps
