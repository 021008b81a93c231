#pragma once

// Dense feed-forward network with tanh hidden layers and a linear output,
// trained by plain gradient descent on the summed squared residual.

#include "aeps/common.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace aeps {

class Mlp {
 public:
  Mlp() = default;

  /// Zero-initialised network with the given layer widths (input first).
  explicit Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw ModelError("network needs at least an input and an output layer");
    for (int s : sizes_) {
      if (s <= 0) throw ModelError("layer sizes must be positive");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weights_.push_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
      biases_.push_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
    }
  }

  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(std::vector<int> layer_sizes, std::uint64_t seed) {
    Mlp m(std::move(layer_sizes));
    std::mt19937_64 rng(seed);
    for (auto& w : m.weights_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
      }
    }
    return m;
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }

  Eigen::MatrixXd& weight(std::size_t l) { return weights_[l]; }
  const Eigen::MatrixXd& weight(std::size_t l) const { return weights_[l]; }
  Eigen::VectorXd& bias(std::size_t l) { return biases_[l]; }
  const Eigen::VectorXd& bias(std::size_t l) const { return biases_[l]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Layer by layer: weights (column-major) then biases.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.insert(out.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
      out.insert(out.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
    }
    return out;
  }

  void unflatten(const std::vector<double>& params) {
    if (params.size() != parameter_count()) throw ModelError("parameter vector has the wrong length");
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      std::copy_n(params.begin() + static_cast<long>(k), weights_[l].size(), weights_[l].data());
      k += static_cast<std::size_t>(weights_[l].size());
      std::copy_n(params.begin() + static_cast<long>(k), biases_[l].size(), biases_[l].data());
      k += static_cast<std::size_t>(biases_[l].size());
    }
  }

  /// Columns of `x` are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    if (x.rows() != input_size()) throw ModelError("input dimension mismatch");
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
      a = l + 1 < weights_.size() ? Eigen::MatrixXd(z.array().tanh()) : z;
    }
    return a;
  }

  struct Gradient {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    double loss = 0.0;  // 0.5 * sum of squared residuals

    bool finite() const {
      for (const auto& w : weights) {
        if (!w.allFinite()) return false;
      }
      for (const auto& b : biases) {
        if (!b.allFinite()) return false;
      }
      return std::isfinite(loss);
    }
  };

  /// Backpropagation of L = 0.5 * ||forward(x) - target||^2 summed over the batch.
  Gradient gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target) const {
    if (x.cols() != target.cols() || target.rows() != output_size()) {
      throw ModelError("target dimension mismatch");
    }
    const std::size_t L = weights_.size();
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(L + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < L; ++l) {
      Eigen::MatrixXd z = (weights_[l] * acts.back()).colwise() + biases_[l];
      acts.push_back(l + 1 < L ? Eigen::MatrixXd(z.array().tanh()) : z);
    }
    Gradient g;
    g.weights.resize(L);
    g.biases.resize(L);
    Eigen::MatrixXd delta = acts.back() - target;
    g.loss = 0.5 * delta.squaredNorm();
    for (std::size_t l = L; l-- > 0;) {
      g.weights[l] = delta * acts[l].transpose();
      g.biases[l] = delta.rowwise().sum();
      if (l > 0) {
        delta = (weights_[l].transpose() * delta).array() * (1.0 - acts[l].array().square());
      }
    }
    return g;
  }

  /// theta <- theta - alpha * grad
  void apply(const Gradient& g, double alpha) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      weights_[l] -= alpha * g.weights[l];
      biases_[l] -= alpha * g.biases[l];
    }
  }

  bool operator==(const Mlp& o) const {
    if (sizes_ != o.sizes_) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (weights_[l] != o.weights_[l] || biases_[l] != o.biases_[l]) return false;
    }
    return true;
  }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

}  // namespace aeps
