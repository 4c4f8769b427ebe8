#pragma once

// Fully-connected ReLU networks with hand-written reverse mode, a diagonal
// Gaussian policy with a state-independent log-std, a two-output critic and
// an Adam optimizer over flattened parameter vectors.
//
// Batches are column-major: one sample per column.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "areapo/errors.hpp"

namespace areapo::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {
inline std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// ReLU on hidden layers, identity on the output layer.
template <typename Scalar = double>
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix<Scalar>> inputs;  // input to each layer
    std::vector<Matrix<Scalar>> pre;     // pre-activation of each layer
    std::uint64_t generation = 0;
  };

  struct Gradients {
    std::vector<Matrix<Scalar>> weights;
    std::vector<Vector<Scalar>> biases;
  };

  Mlp() = default;

  /// Zero-initialized network with layer sizes {in, h1, ..., out}.
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)), generation_(detail::next_generation()) {
    if (sizes_.size() < 2) throw InvalidInput("Mlp needs at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw InvalidInput("Mlp layer sizes must be positive");
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
      weights_.push_back(Matrix<Scalar>::Zero(sizes_[i + 1], sizes_[i]));
      biases_.push_back(Vector<Scalar>::Zero(sizes_[i + 1]));
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int n_layers() const { return static_cast<int>(weights_.size()); }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }

  const Matrix<Scalar>& weight(int i) const { return weights_.at(i); }
  const Vector<Scalar>& bias(int i) const { return biases_.at(i); }
  Matrix<Scalar>& weight(int i) {
    touch();
    return weights_.at(i);
  }
  Vector<Scalar>& bias(int i) {
    touch();
    return biases_.at(i);
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (int i = 0; i < n_layers(); ++i) n += weights_[i].size() + biases_[i].size();
    return n;
  }

  /// Layer by layer: weights (column-major) then bias.
  Vector<Scalar> flatten() const {
    Vector<Scalar> out(parameter_count());
    Eigen::Index k = 0;
    for (int i = 0; i < n_layers(); ++i) {
      out.segment(k, weights_[i].size()) = weights_[i].reshaped();
      k += weights_[i].size();
      out.segment(k, biases_[i].size()) = biases_[i];
      k += biases_[i].size();
    }
    return out;
  }

  void assign(const Eigen::Ref<const Vector<Scalar>>& flat) {
    if (flat.size() != parameter_count()) throw InvalidInput("Mlp::assign: parameter count mismatch");
    touch();
    Eigen::Index k = 0;
    for (int i = 0; i < n_layers(); ++i) {
      weights_[i].reshaped() = flat.segment(k, weights_[i].size());
      k += weights_[i].size();
      biases_[i] = flat.segment(k, biases_[i].size());
      k += biases_[i].size();
    }
  }

  static Vector<Scalar> flatten(const Gradients& g) {
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < g.weights.size(); ++i) n += g.weights[i].size() + g.biases[i].size();
    Vector<Scalar> out(n);
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
      out.segment(k, g.weights[i].size()) = g.weights[i].reshaped();
      k += g.weights[i].size();
      out.segment(k, g.biases[i].size()) = g.biases[i];
      k += g.biases[i].size();
    }
    return out;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache* cache = nullptr) const {
    if (x.rows() != input_size())
      throw InvalidInput("Mlp::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(input_size()));
    if (cache) {
      cache->inputs.resize(n_layers());
      cache->pre.resize(n_layers());
      cache->generation = generation_;
    }
    Matrix<Scalar> a = x;
    for (int i = 0; i < n_layers(); ++i) {
      Matrix<Scalar> z(weights_[i].rows(), a.cols());
      z.noalias() = weights_[i] * a;
      z.colwise() += biases_[i];
      if (cache) cache->inputs[i] = std::move(a);
      if (i + 1 < n_layers()) {
        a = z.cwiseMax(Scalar(0));
        if (cache) cache->pre[i] = std::move(z);
      } else {
        if (cache) cache->pre[i] = z;
        a = std::move(z);
      }
    }
    return a;
  }

  /// Reverse pass for d(loss)/d(output) = `dy`. Writes d(loss)/d(input) to `dx` when given.
  Gradients backward(const Cache& cache, const Matrix<Scalar>& dy, Matrix<Scalar>* dx = nullptr) const {
    if (cache.generation != generation_ || static_cast<int>(cache.pre.size()) != n_layers())
      throw InvalidInput("Mlp::backward: cache does not belong to the current parameters");
    if (dy.rows() != output_size() || dy.cols() != cache.pre.back().cols())
      throw InvalidInput("Mlp::backward: output gradient shape mismatch");
    Gradients g;
    g.weights.resize(n_layers());
    g.biases.resize(n_layers());
    Matrix<Scalar> dz = dy;
    for (int i = n_layers() - 1; i >= 0; --i) {
      g.weights[i].noalias() = dz * cache.inputs[i].transpose();
      g.biases[i] = dz.rowwise().sum();
      if (i == 0 && !dx) break;
      Matrix<Scalar> da(weights_[i].cols(), dz.cols());
      da.noalias() = weights_[i].transpose() * dz;
      if (i == 0) {
        *dx = std::move(da);
      } else {
        dz = (cache.pre[i - 1].array() > Scalar(0)).select(da, Scalar(0));
      }
    }
    return g;
  }

  /// Orthogonal weights scaled by `hidden_gain` / `output_gain`, zero biases.
  void init_orthogonal(std::mt19937_64& rng, Scalar hidden_gain, Scalar output_gain) {
    touch();
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n_layers(); ++i) {
      const Eigen::Index rows = weights_[i].rows(), cols = weights_[i].cols();
      const Eigen::Index big = std::max(rows, cols), small = std::min(rows, cols);
      Eigen::MatrixXd a(big, small);
      for (Eigen::Index c = 0; c < small; ++c)
        for (Eigen::Index r = 0; r < big; ++r) a(r, c) = gauss(rng);
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
      const Eigen::MatrixXd r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
      for (Eigen::Index c = 0; c < small; ++c)
        if (r(c, c) < 0) q.col(c) = -q.col(c);
      const Scalar gain = (i + 1 < n_layers()) ? hidden_gain : output_gain;
      if (rows >= cols)
        weights_[i] = (q * gain).template cast<Scalar>();
      else
        weights_[i] = (q.transpose() * gain).template cast<Scalar>();
      biases_[i].setZero();
    }
  }

 private:
  void touch() { generation_ = detail::next_generation(); }

  std::vector<int> sizes_;
  std::vector<Matrix<Scalar>> weights_;  // weights_[i]: sizes_[i+1] x sizes_[i]
  std::vector<Vector<Scalar>> biases_;
  std::uint64_t generation_ = 0;
};

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // ln(sqrt(2 pi))

/// log N(u; mean, exp(log_std)^2)
inline double gaussian_log_density(double u, double mean, double log_std) {
  const double z = (u - mean) * std::exp(-log_std);
  return -0.5 * z * z - log_std - kLogSqrt2Pi;
}

/// Entropy of N(., exp(log_std)^2): 0.5 ln(2 pi e) + log_std.
inline double gaussian_entropy(double log_std) { return 0.5 + kLogSqrt2Pi + log_std; }

/// How a Gaussian draw u becomes an action in [-1, 1].
/// Clamp: clamp(u), density of u.  Tanh: tanh(u), density of tanh(u) (bounded entropy).
enum class Squash { Clamp, Tanh };

/// -log(1 - tanh(u)^2), overflow-free.
inline double tanh_log_jacobian(double u) {
  const double x = std::abs(u);
  return 2.0 * (x + std::log1p(std::exp(-2.0 * x))) - std::log(4.0);
}

struct GaussianPolicy {
  Mlp<double> mean_net;
  double log_std = -1.0;
  Squash squash = Squash::Clamp;

  /// obs_dim -> hidden... -> 1, orthogonal init (sqrt 2 hidden, 0.01 output).
  static GaussianPolicy create(int obs_dim, const std::vector<int>& hidden, double log_std_init,
                               std::mt19937_64& rng, Squash squash = Squash::Clamp);

  double squash_action(double u) const { return squash == Squash::Tanh ? std::tanh(u) : std::clamp(u, -1.0, 1.0); }

  Eigen::Index parameter_count() const { return mean_net.parameter_count() + 1; }
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::Ref<const Eigen::VectorXd>& flat);
};

struct PolicySample {
  double action = 0.0;      // in [-1, 1]
  double pre_squash = 0.0;  // Gaussian draw
  double log_prob = 0.0;    // log-density of the action under the policy
};

PolicySample policy_sample(const GaussianPolicy& policy, const Eigen::VectorXd& obs, std::mt19937_64& rng);
/// One sample per column of `obs`, drawn in column order.
std::vector<PolicySample> policy_sample_batch(const GaussianPolicy& policy, const Eigen::MatrixXd& obs,
                                              std::mt19937_64& rng);
double policy_mean(const GaussianPolicy& policy, const Eigen::VectorXd& obs);
/// Deterministic action: squashed mean.
double policy_action(const GaussianPolicy& policy, const Eigen::VectorXd& obs);
double log_prob(const GaussianPolicy& policy, const Eigen::VectorXd& obs, double pre_squash);

/// Log-densities of a batch plus gradients of sum_i w_i log_prob_i.
struct LogProbBatch {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd log_prob;
  Mlp<double>::Cache cache;
};
LogProbBatch log_prob_batch(const GaussianPolicy& policy, const Eigen::MatrixXd& obs,
                            const Eigen::RowVectorXd& pre_squash);
/// Flattened gradient (mean-net parameters, then log_std) of sum_i weights(i) * log_prob_i.
Eigen::VectorXd log_prob_gradient(const GaussianPolicy& policy, const LogProbBatch& batch,
                                  const Eigen::RowVectorXd& pre_squash, const Eigen::RowVectorXd& weights);

/// Output row 0: reward-bias value, row 1: entropy-bias value.
struct Critic {
  Mlp<double> net;

  /// obs_dim -> hidden... -> 2, orthogonal init (sqrt 2 hidden, 1.0 output).
  static Critic create(int obs_dim, const std::vector<int>& hidden, std::mt19937_64& rng);

  Eigen::MatrixXd values(const Eigen::MatrixXd& obs) const { return net.forward(obs); }
  Eigen::Index parameter_count() const { return net.parameter_count(); }
};

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;

  static OptimizerState zeros(Eigen::Index n, AdamConfig config = {});
};

struct OptimizerReport {
  double grad_norm = 0.0;   // before clipping
  double clip_scale = 1.0;  // factor applied to the gradient
};

/// Global-norm clipping to `max_grad_norm` followed by a bias-corrected Adam step.
/// Throws NumericalError (parameters and state untouched) on non-finite gradients.
OptimizerReport optimizer_step(OptimizerState& opt, Eigen::VectorXd& params, const Eigen::VectorXd& gradients,
                               double max_grad_norm = 10.0);

}  // namespace areapo::nn
