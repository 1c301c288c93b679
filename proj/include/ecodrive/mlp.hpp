#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecodrive/dataset.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/features.hpp"
#include "ecodrive/random.hpp"

namespace ecodrive {

template <typename Scalar>
struct MlpGradients {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  std::vector<Matrix> dw;
  std::vector<Vector> db;
};

/// Fully connected network: rectifier hidden layers, identity output,
/// inverted dropout on hidden activations while training. Batches are
/// column-major: one column per sample.
template <typename Scalar>
class BasicMlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicMlp() = default;
  explicit BasicMlp(std::vector<int> sizes, double dropout = 0.3) : sizes_(std::move(sizes)), dropout_(dropout) {
    if (sizes_.size() < 2) throw DomainError("network needs at least an input and an output layer");
    for (int n : sizes_) {
      if (n <= 0) throw DomainError("layer sizes must be positive");
    }
    if (!(dropout_ >= 0.0 && dropout_ < 1.0)) throw DomainError("dropout rate must lie in [0, 1)");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weights_.push_back(Matrix::Zero(sizes_[l + 1], sizes_[l]));
      biases_.push_back(Vector::Zero(sizes_[l + 1]));
    }
  }

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void initialize(Rng& rng) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix& w = weights_[l];
      const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(uniform(rng, -a, a));
      }
      biases_[l].setZero();
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t num_layers() const { return weights_.size(); }
  double dropout_rate() const { return dropout_; }
  Matrix& weight(std::size_t l) { return weights_[l]; }
  const Matrix& weight(std::size_t l) const { return weights_[l]; }
  Vector& bias(std::size_t l) { return biases_[l]; }
  const Vector& bias(std::size_t l) const { return biases_[l]; }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  const std::optional<Scalers>& scalers() const { return scalers_; }
  void set_scalers(const Scalers& s) { scalers_ = s; }

  /// Inference: no dropout mask, no scaling.
  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = (weights_[l] * a).colwise() + biases_[l];
      if (l + 1 < weights_.size()) {
        a = z.cwiseMax(Scalar(0));
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  /// Activations and dropout masks of one training-mode pass.
  struct Cache {
    std::vector<Matrix> activations;  // input plus every hidden layer, post-mask
    std::vector<Matrix> masks;        // empty matrices when dropout is off
  };

  /// Training-mode forward pass; `rng == nullptr` disables dropout.
  Matrix forward_train(const Matrix& x, Rng* rng, Cache& cache) const {
    check_input(x);
    cache.activations.assign(1, x);
    cache.masks.clear();
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - dropout_));
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = (weights_[l] * cache.activations.back()).colwise() + biases_[l];
      if (l + 1 == weights_.size()) return z;
      Matrix a = z.cwiseMax(Scalar(0));
      Matrix mask;
      if (rng != nullptr && dropout_ > 0.0) {
        mask.resize(a.rows(), a.cols());
        for (Eigen::Index j = 0; j < mask.cols(); ++j) {
          for (Eigen::Index i = 0; i < mask.rows(); ++i) {
            mask(i, j) = uniform01(*rng) < dropout_ ? Scalar(0) : keep_scale;
          }
        }
        a = a.cwiseProduct(mask);
      }
      cache.activations.push_back(std::move(a));
      cache.masks.push_back(std::move(mask));
    }
    return {};
  }

  /// Gradients of the batch mean squared error, reusing the masks of the
  /// paired forward pass. Returns the loss.
  Scalar backward(const Cache& cache, const Matrix& output, const Matrix& target, MlpGradients<Scalar>& g) const {
    const auto batch = static_cast<Scalar>(output.cols());
    const Matrix err = output - target;
    const Scalar loss = err.squaredNorm() / batch;
    Matrix delta = err * (Scalar(2) / batch);
    g.dw.resize(weights_.size());
    g.db.resize(weights_.size());
    for (std::size_t l = weights_.size(); l-- > 0;) {
      const Matrix& a = cache.activations[l];
      g.dw[l].noalias() = delta * a.transpose();
      g.db[l] = delta.rowwise().sum();
      if (l == 0) break;
      Matrix prev = weights_[l].transpose() * delta;
      const Matrix& mask = cache.masks[l - 1];
      if (mask.size() > 0) {
        prev = (a.array() > Scalar(0)).select(prev.array() * mask.array(), Scalar(0)).matrix();
      } else {
        prev = (a.array() > Scalar(0)).select(prev.array(), Scalar(0)).matrix();
      }
      delta = std::move(prev);
    }
    return loss;
  }

  template <typename Other>
  BasicMlp<Other> cast() const {
    BasicMlp<Other> out(sizes_, dropout_);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.weight(l) = weights_[l].template cast<Other>();
      out.bias(l) = biases_[l].template cast<Other>();
    }
    if (scalers_) out.set_scalers(*scalers_);
    return out;
  }

  bool operator==(const BasicMlp& o) const {
    if (sizes_ != o.sizes_ || dropout_ != o.dropout_ || scalers_ != o.scalers_) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (weights_[l] != o.weights_[l] || biases_[l] != o.biases_[l]) return false;
    }
    return true;
  }

 private:
  void check_input(const Matrix& x) const {
    if (x.rows() != sizes_.front()) throw DomainError("input width does not match the first layer");
  }

  std::vector<int> sizes_;
  double dropout_ = 0.0;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  std::optional<Scalers> scalers_;
};

using Mlp = BasicMlp<float>;

inline std::vector<int> default_layer_sizes() { return {static_cast<int>(kNumFeatures), 500, 500, 1}; }

/// Bias-corrected ADAM with first/second moments per parameter tensor.
template <typename Scalar>
struct AdamState {
  using Matrix = typename BasicMlp<Scalar>::Matrix;
  using Vector = typename BasicMlp<Scalar>::Vector;
  std::vector<Matrix> mw, vw;
  std::vector<Vector> mb, vb;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(const BasicMlp<Scalar>& net) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      mw.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
      vw.push_back(mw.back());
      mb.push_back(Vector::Zero(net.bias(l).size()));
      vb.push_back(mb.back());
    }
  }
};

namespace detail {
template <typename P, typename G, typename M>
void adam_update(P& param, const G& grad, M& m, M& v, const AdamState<typename P::Scalar>& st, double c1,
                 double c2) {
  using S = typename P::Scalar;
  const S b1 = static_cast<S>(st.beta1);
  const S b2 = static_cast<S>(st.beta2);
  m = b1 * m + (S(1) - b1) * grad;
  v = b2 * v + (S(1) - b2) * grad.cwiseProduct(grad);
  const S lr = static_cast<S>(st.lr);
  const S eps = static_cast<S>(st.eps);
  const S sc1 = static_cast<S>(c1);
  const S sc2 = static_cast<S>(c2);
  param.array() -= lr * (m.array() / sc1) / ((v.array() / sc2).sqrt() + eps);
}
}  // namespace detail

template <typename Scalar>
void adam_step(BasicMlp<Scalar>& net, const MlpGradients<Scalar>& g, AdamState<Scalar>& st) {
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    detail::adam_update(net.weight(l), g.dw[l], st.mw[l], st.vw[l], st, c1, c2);
    detail::adam_update(net.bias(l), g.db[l], st.mb[l], st.vb[l], st, c1, c2);
  }
}

struct TrainConfig {
  std::size_t epoch_sample = 100000;
  std::size_t batch = 500;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  /// Improvement over the best test loss needed to reset patience.
  double min_delta = 0.0;
  std::uint64_t seed = 1;
  /// Stop once the dropout-free MSE over the whole training set falls to
  /// this value; 0 disables the check.
  double target_train_mse = 0.0;
  /// Evaluate the test loss on at most this many rows (deterministic
  /// prefix of a seeded shuffle); 0 uses all.
  std::size_t max_test_rows = 0;
  /// ADAM step size of the first epoch; each later epoch multiplies it by
  /// lr_decay. 1 keeps the step size constant.
  double learning_rate = 1e-3;
  double lr_decay = 1.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // running mean of batch losses (dropout on)
  double test_loss = 0.0;   // full test pass, dropout off
};

struct TrainResult {
  std::vector<EpochLog> history;
  /// Test loss of the untrained network.
  double initial_test_loss = 0.0;
  std::size_t best_epoch = 0;
  double best_test_loss = 0.0;
  /// Dropout-free MSE over the training set for the returned snapshot.
  double final_train_mse = 0.0;
  bool early_stopped = false;
  bool reached_target = false;
};

/// Mean squared error of the network over normalized rows, dropout off.
double evaluate_mse(const Mlp& net, const Dataset& data, std::size_t max_rows = 0);

/// Mini-batch training with early stopping on the test loss; `net` is left
/// at the best-test-loss snapshot. Both datasets must be normalized with
/// the same scalers, which are attached to the network.
TrainResult train(Mlp& net, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg);

/// Denormalized cost-to-go, clamped below at 0.
double predict_cost(const Mlp& net, const FeatureVector& f);
/// Batched variant over raw feature arrays.
void predict_costs(const Mlp& net, std::span<const FeatureArray> features, std::span<double> out);

inline constexpr std::uint32_t kModelVersion = 1;

void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(const std::string& path);

/// Expected file size for a network of these layer sizes.
std::size_t model_file_bytes(const std::vector<int>& sizes);

std::string to_csv(const std::vector<EpochLog>& history);

}  // namespace ecodrive
