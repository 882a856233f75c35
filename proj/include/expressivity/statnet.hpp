#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "expressivity/errors.hpp"
#include "expressivity/rng.hpp"

namespace expressivity {

template <typename Scalar>
using MatrixOf = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorOf = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorOf = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
inline Scalar elu(Scalar x) {
#ifdef EXPRESSIVITY_FAULT_FLIP_ELU
  // Canary build: corrupts the activation so the gradient check must fail.
  return -(x > Scalar(0) ? x : std::expm1(x));
#else
  return x > Scalar(0) ? x : std::expm1(x);
#endif
}

template <typename Scalar>
inline Scalar elu_derivative(Scalar x) {
  return x > Scalar(0) ? Scalar(1) : std::exp(x);
}

/// Xavier (Glorot) normal: i.i.d. N(0, 2 / (fan_in + fan_out)).
template <typename Scalar = double>
MatrixOf<Scalar> xavier_init(Eigen::Index fan_in, Eigen::Index fan_out, CounterRng& rng) {
  if (fan_in < 1 || fan_out < 1) {
    throw Error(ErrorCode::InvalidArgument, "xavier_init needs positive fan_in and fan_out");
  }
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  MatrixOf<Scalar> w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i) {
    for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = static_cast<Scalar>(rng.normal(0.0, stddev));
  }
  return w;
}

struct NetworkShape {
  Eigen::Index input_dim = 1;
  Eigen::Index hidden1 = 512;
  Eigen::Index hidden2 = 128;

  bool operator==(const NetworkShape&) const = default;
};

/// Parameter set of the input -> hidden1 -> hidden2 -> 1 network. The same
/// layout carries gradients and Adam moments.
template <typename Scalar>
struct NetworkTensors {
  MatrixOf<Scalar> w1;     // input_dim x hidden1
  RowVectorOf<Scalar> b1;  // hidden1
  MatrixOf<Scalar> w2;     // hidden1 x hidden2
  RowVectorOf<Scalar> b2;  // hidden2
  VectorOf<Scalar> w3;     // hidden2
  Scalar b3 = 0;

  static NetworkTensors zeros(const NetworkShape& s) {
    NetworkTensors t;
    t.w1 = MatrixOf<Scalar>::Zero(s.input_dim, s.hidden1);
    t.b1 = RowVectorOf<Scalar>::Zero(s.hidden1);
    t.w2 = MatrixOf<Scalar>::Zero(s.hidden1, s.hidden2);
    t.b2 = RowVectorOf<Scalar>::Zero(s.hidden2);
    t.w3 = VectorOf<Scalar>::Zero(s.hidden2);
    t.b3 = 0;
    return t;
  }

  Eigen::Index parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1;
  }

  /// Visits every scalar parameter as a flat sequence (w1, b1, w2, b2, w3, b3).
  template <typename Fn>
  void for_each_scalar(Fn&& fn) {
    for (Eigen::Index i = 0; i < w1.size(); ++i) fn(w1.data()[i]);
    for (Eigen::Index i = 0; i < b1.size(); ++i) fn(b1.data()[i]);
    for (Eigen::Index i = 0; i < w2.size(); ++i) fn(w2.data()[i]);
    for (Eigen::Index i = 0; i < b2.size(); ++i) fn(b2.data()[i]);
    for (Eigen::Index i = 0; i < w3.size(); ++i) fn(w3.data()[i]);
    fn(b3);
  }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() &&
           w3.allFinite() && std::isfinite(b3);
  }

  bool operator==(const NetworkTensors& o) const {
    return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2 && w3 == o.w3 && b3 == o.b3;
  }
};

struct TrainerConfig {
  double learning_rate = 1e-3;
  Eigen::Index batch_size = 100;
  long max_iterations = 20000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t rng_seed = 0;
  Eigen::Index hidden1 = 512;
  Eigen::Index hidden2 = 128;

  void validate(Eigen::Index n) const {
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
    if (batch_size < 2 || batch_size > n) {
      throw Error(ErrorCode::BatchTooLarge, "batch_size " + std::to_string(batch_size) +
                                                " outside [2, n=" + std::to_string(n) + "]");
    }
    if (max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
    if (hidden1 < 1 || hidden2 < 1) throw Error(ErrorCode::InvalidArgument, "hidden widths must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
        !(adam_epsilon > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "Adam hyperparameters out of range");
    }
  }
};

/// Activations of one batched forward pass, consumed by backward().
template <typename Scalar>
struct ForwardCache {
  MatrixOf<Scalar> input;   // B x input_dim
  MatrixOf<Scalar> z1, h1, slope1;  // B x hidden1
  MatrixOf<Scalar> z2, h2, slope2;  // B x hidden2
  VectorOf<Scalar> output;  // B
  std::uint64_t version = ~std::uint64_t{0};
};

/// Statistics network T(x): two ELU hidden layers and a scalar linear output.
/// Weights are Xavier-normal, biases zero. Single-writer: one training loop
/// owns an instance; distinct instances are independent.
template <typename Scalar = double>
class StatisticsNetwork {
 public:
  using Tensors = NetworkTensors<Scalar>;
  using Cache = ForwardCache<Scalar>;

  explicit StatisticsNetwork(const NetworkShape& shape)
      : shape_(shape), params_(Tensors::zeros(shape)), first_moment_(Tensors::zeros(shape)),
        second_moment_(Tensors::zeros(shape)) {
    if (shape.input_dim < 1 || shape.hidden1 < 1 || shape.hidden2 < 1) {
      throw Error(ErrorCode::InvalidArgument, "network dimensions must be >= 1");
    }
  }

  StatisticsNetwork(const NetworkShape& shape, CounterRng& rng) : StatisticsNetwork(shape) {
    params_.w1 = xavier_init<Scalar>(shape.input_dim, shape.hidden1, rng);
    params_.w2 = xavier_init<Scalar>(shape.hidden1, shape.hidden2, rng);
    params_.w3 = xavier_init<Scalar>(shape.hidden2, 1, rng).col(0);
  }

  const NetworkShape& shape() const noexcept { return shape_; }
  const Tensors& parameters() const noexcept { return params_; }
  std::uint64_t version() const noexcept { return version_; }
  long step_count() const noexcept { return step_; }
  const Tensors& first_moment() const noexcept { return first_moment_; }
  const Tensors& second_moment() const noexcept { return second_moment_; }

  /// Direct parameter access; invalidates outstanding forward caches.
  Tensors& mutable_parameters() noexcept {
    ++version_;
    return params_;
  }

  /// Batched forward over the rows of `input` (B x input_dim).
  template <typename Derived>
  void forward(const Eigen::MatrixBase<Derived>& input, Cache& cache) const {
    if (input.cols() != shape_.input_dim) {
      throw Error(ErrorCode::DimensionMismatch, "network expects input dim " +
                                                    std::to_string(shape_.input_dim) + ", got " +
                                                    std::to_string(input.cols()));
    }
    cache.input = input;
    cache.z1.noalias() = cache.input * params_.w1;
    cache.z1.rowwise() += params_.b1;
    apply_elu(cache.z1, cache.h1, cache.slope1);
    cache.z2.noalias() = cache.h1 * params_.w2;
    cache.z2.rowwise() += params_.b2;
    apply_elu(cache.z2, cache.h2, cache.slope2);
    cache.output.noalias() = cache.h2 * params_.w3;
    cache.output.array() += params_.b3;
    cache.version = version_;
  }

  /// Single-sample convenience wrapper.
  Scalar operator()(std::span<const Scalar> x) const {
    Cache cache;
    forward(Eigen::Map<const RowVectorOf<Scalar>>(x.data(), static_cast<Eigen::Index>(x.size())),
            cache);
    return cache.output[0];
  }

  /// Gradient of sum_i upstream[i] * T(x_i) with respect to every parameter.
  Tensors backward(const Cache& cache, const VectorOf<Scalar>& upstream) const {
    if (cache.version != version_) {
      throw Error(ErrorCode::StaleCache, "forward cache predates the current parameters");
    }
    if (upstream.size() != cache.output.size()) {
      throw Error(ErrorCode::DimensionMismatch, "upstream gradient has " +
                                                    std::to_string(upstream.size()) +
                                                    " entries for a batch of " +
                                                    std::to_string(cache.output.size()));
    }
    Tensors g;
    g.w3.noalias() = cache.h2.transpose() * upstream;
    g.b3 = upstream.sum();

    MatrixOf<Scalar> dz2 = upstream * params_.w3.transpose();
    dz2.array() *= cache.slope2.array();
    g.w2.noalias() = cache.h1.transpose() * dz2;
    g.b2 = dz2.colwise().sum();

    MatrixOf<Scalar> dz1;
    dz1.noalias() = dz2 * params_.w2.transpose();
    dz1.array() *= cache.slope1.array();
    g.w1.noalias() = cache.input.transpose() * dz1;
    g.b1 = dz1.colwise().sum();
    return g;
  }

  /// One Adam update (bias-corrected) that descends along `gradient`.
  void adam_step(const Tensors& gradient, const TrainerConfig& config) {
    if (!gradient.all_finite()) {
      throw Error(ErrorCode::NonFiniteGradient, "gradient contains NaN or Inf");
    }
    ++step_;
    const auto b1 = static_cast<Scalar>(config.adam_beta1);
    const auto b2 = static_cast<Scalar>(config.adam_beta2);
    const Scalar correction1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(step_));
    const Scalar correction2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(step_));
    const auto lr = static_cast<Scalar>(config.learning_rate);
    const auto eps = static_cast<Scalar>(config.adam_epsilon);

    auto update = [&](auto& p, const auto& grad, auto& m, auto& v) {
      m = b1 * m + (Scalar(1) - b1) * grad;
      v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
      p.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
    };
    update(params_.w1, gradient.w1, first_moment_.w1, second_moment_.w1);
    update(params_.b1, gradient.b1, first_moment_.b1, second_moment_.b1);
    update(params_.w2, gradient.w2, first_moment_.w2, second_moment_.w2);
    update(params_.b2, gradient.b2, first_moment_.b2, second_moment_.b2);
    update(params_.w3, gradient.w3, first_moment_.w3, second_moment_.w3);

    Scalar& m3 = first_moment_.b3;
    Scalar& v3 = second_moment_.b3;
    m3 = b1 * m3 + (Scalar(1) - b1) * gradient.b3;
    v3 = b2 * v3 + (Scalar(1) - b2) * gradient.b3 * gradient.b3;
    params_.b3 -= lr * (m3 / correction1) / (std::sqrt(v3 / correction2) + eps);
    ++version_;
  }

 private:
  // ELU as max(z, 0) + exp(min(z, 0)) - 1, which vectorizes; the slope
  // exp(min(z, 0)) is kept for backward.
  static void apply_elu(const MatrixOf<Scalar>& z, MatrixOf<Scalar>& h, MatrixOf<Scalar>& slope) {
    slope = z.array().min(Scalar(0)).exp();
#ifdef EXPRESSIVITY_FAULT_FLIP_ELU
    h = -(z.array().max(Scalar(0)) + slope.array() - Scalar(1));
#else
    h = z.array().max(Scalar(0)) + slope.array() - Scalar(1);
#endif
  }

  NetworkShape shape_;
  Tensors params_;
  Tensors first_moment_;
  Tensors second_moment_;
  long step_ = 0;
  std::uint64_t version_ = 0;
};

}  // namespace expressivity
