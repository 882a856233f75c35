#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "expressivity/data_model.hpp"
#include "expressivity/errors.hpp"
#include "expressivity/numeric.hpp"
#include "expressivity/rng.hpp"
#include "expressivity/statnet.hpp"

namespace expressivity {

/// Joint and marginal mini-batch for the Donsker-Varadhan bound. Row i of the
/// joint block is (f_r, a_r) for r = rows[i]; row i of the marginal block is
/// (f_r, a_s) with s = rows[permutation[i]].
struct DVBatch {
  Matrix inputs;  // 2b x (m+1): joint rows first, then marginal rows
  std::vector<std::size_t> rows;
  std::vector<std::size_t> permutation;

  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(rows.size()); }
  auto joint() const { return inputs.topRows(size()); }
  auto marginal() const { return inputs.bottomRows(size()); }
};

namespace detail {

inline void fill_dv_batch(const Matrix& features, const Vector& attribute,
                          std::span<const std::size_t> rows,
                          std::span<const std::size_t> permutation, Matrix& inputs) {
  const auto b = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index m = features.cols();
  inputs.resize(2 * b, m + 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
    const auto s = static_cast<Eigen::Index>(rows[permutation[static_cast<std::size_t>(i)]]);
    inputs.row(i).head(m) = features.row(r);
    inputs(i, m) = attribute[r];
    inputs.row(b + i).head(m) = features.row(r);
    inputs(b + i, m) = attribute[s];
  }
}

}  // namespace detail

/// Draws b distinct rows uniformly and a uniformly random permutation of the
/// batch's attribute entries for the marginal half. `forced_permutation`
/// replaces the random permutation (test hook).
inline DVBatch sample_dv_batch(const AugmentedDataset& dataset, Eigen::Index b, CounterRng& rng,
                               std::optional<std::vector<std::size_t>> forced_permutation = {}) {
  if (b < 1 || b > dataset.n()) {
    throw Error(ErrorCode::BatchTooLarge, "batch of " + std::to_string(b) + " from " +
                                              std::to_string(dataset.n()) + " samples");
  }
  DVBatch batch;
  std::vector<std::size_t> scratch;
  rng.sample_without_replacement(static_cast<std::size_t>(dataset.n()),
                                 static_cast<std::size_t>(b), scratch, batch.rows);
  if (forced_permutation) {
    if (forced_permutation->size() != static_cast<std::size_t>(b)) {
      throw Error(ErrorCode::LengthMismatch, "forced permutation length differs from batch size");
    }
    batch.permutation = std::move(*forced_permutation);
  } else {
    batch.permutation = rng.permutation(static_cast<std::size_t>(b));
  }
  detail::fill_dv_batch(dataset.features().data(), dataset.attribute().values(), batch.rows,
                        batch.permutation, batch.inputs);
  return batch;
}

/// V = mean(T_joint) - log(mean(exp(T_marginal))), with scores passed
/// through soft_clamp first. `stabilized` selects the max-shifted
/// log-sum-exp for the second term.
inline double dv_value(std::span<const double> joint_scores,
                       std::span<const double> marginal_scores, bool stabilized = true) {
  if (joint_scores.empty() || marginal_scores.empty()) {
    throw Error(ErrorCode::InvalidArgument, "DV bound needs nonempty joint and marginal scores");
  }
  double joint_sum = 0.0;
  for (const double t : joint_scores) joint_sum += soft_clamp(t);
  std::vector<double> clamped(marginal_scores.size());
  for (std::size_t i = 0; i < clamped.size(); ++i) clamped[i] = soft_clamp(marginal_scores[i]);
  double log_term = 0.0;
  if (stabilized) {
    log_term = log_mean_exp(std::span<const double>(clamped));
  } else {
    double s = 0.0;
    for (const double t : clamped) s += std::exp(t);
    log_term = std::log(s / static_cast<double>(clamped.size()));
  }
  return joint_sum / static_cast<double>(joint_scores.size()) - log_term;
}

template <typename Scalar>
double dv_bound(const StatisticsNetwork<Scalar>& net, const DVBatch& batch, bool stabilized = true) {
  ForwardCache<Scalar> cache;
  net.forward(batch.inputs.cast<Scalar>(), cache);
  const VectorOf<double> scores = cache.output.template cast<double>();
  const auto b = static_cast<std::size_t>(batch.size());
  std::span<const double> all(scores.data(), 2 * b);
  return dv_value(all.first(b), all.subspan(b), stabilized);
}

/// "Until convergence": every `window` iterations the bias-corrected EMA of
/// the training bound is compared to its value one window earlier; training
/// stops when the gain is below rel_tol * max(|previous|, scale_floor).
struct ConvergenceRule {
  bool enabled = true;
  long window = 500;
  double rel_tol = 1e-3;
  double ema_decay = 0.99;
  double scale_floor = 0.1;
  int patience = 2;  // consecutive failing checks required to stop
  // With a holdout, the returned network is the one from the window check
  // with the highest smoothed held-out bound.
  bool restore_best = true;
};

inline Eigen::Index holdout_size(Eigen::Index n, double fraction) {
  return static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * fraction));
}

enum class Precision { float32, float64 };

struct EstimatorConfig {
  TrainerConfig trainer;
  Precision precision = Precision::float32;
  int repetitions = 5;
  int eval_batches = 100;
  double holdout_fraction = 0.2;
  ConvergenceRule convergence;
  bool stabilize_logsumexp = true;
  bool ema_gradient_correction = false;
  double ema_correction_rate = 0.01;
  // Per-dimension z-score of the features before estimation. MI is
  // unchanged by it; it helps the network on raw-unit synthetic inputs.
  bool standardize_features = false;
  std::uint64_t master_seed = 0;
  int threads = 1;

  void validate(Eigen::Index n) const {
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "holdout_fraction must be in [0, 1)");
    }
    const Eigen::Index held = holdout_size(n, holdout_fraction);
    if (held > 0 && held < trainer.batch_size) {
      throw Error(ErrorCode::BatchTooLarge, "held-out pool of " + std::to_string(held) +
                                                " rows is smaller than batch_size " +
                                                std::to_string(trainer.batch_size));
    }
    trainer.validate(n - held);
    if (repetitions < 1) throw Error(ErrorCode::InvalidArgument, "repetitions M must be >= 1");
    if (eval_batches < 1) throw Error(ErrorCode::InvalidArgument, "eval_batches K must be >= 1");
    if (convergence.enabled && convergence.window < 1) {
      throw Error(ErrorCode::InvalidArgument, "convergence window must be >= 1");
    }
    if (!(convergence.ema_decay >= 0.0 && convergence.ema_decay < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "convergence ema_decay must be in [0, 1)");
    }
  }

  /// Canonical text of every hyperparameter that shapes an estimate; seeds
  /// and thread counts are excluded.
  std::string canonical() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "lr=%.17g;b=%ld;iters=%ld;beta1=%.17g;beta2=%.17g;eps=%.17g;h1=%ld;h2=%ld;"
                  "M=%d;K=%d;conv=%d;window=%ld;rel_tol=%.17g;ema=%.17g;floor=%.17g;patience=%d;best=%d;lse=%d;"
                  "emagrad=%d;emarate=%.17g;fp=%d;holdout=%.17g;zf=%d",
                  trainer.learning_rate, static_cast<long>(trainer.batch_size),
                  trainer.max_iterations, trainer.adam_beta1, trainer.adam_beta2,
                  trainer.adam_epsilon, static_cast<long>(trainer.hidden1),
                  static_cast<long>(trainer.hidden2), repetitions, eval_batches,
                  convergence.enabled ? 1 : 0, convergence.window, convergence.rel_tol,
                  convergence.ema_decay, convergence.scale_floor, convergence.patience,
                  convergence.restore_best ? 1 : 0,
                  stabilize_logsumexp ? 1 : 0,
                  ema_gradient_correction ? 1 : 0, ema_correction_rate,
                  precision == Precision::float32 ? 32 : 64, holdout_fraction,
                  standardize_features ? 1 : 0);
    return buf;
  }

  std::string fingerprint() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
  }
};

/// Rows of one estimator run, split into a training pool and a held-out pool
/// (absent when the held-out fraction is zero).
struct DataSplit {
  AugmentedDataset train;
  std::optional<AugmentedDataset> holdout;

  const AugmentedDataset& evaluation() const { return holdout ? *holdout : train; }
};

/// Random split: the first floor(n * fraction) rows of a seeded permutation
/// are held out. Pairing is preserved on both sides.
inline DataSplit split_dataset(const AugmentedDataset& dataset, double holdout_fraction,
                               std::uint64_t seed) {
  const Eigen::Index held = holdout_size(dataset.n(), holdout_fraction);
  if (held == 0) return DataSplit{dataset, std::nullopt};
  CounterRng rng(seed);
  const std::vector<std::size_t> order = rng.permutation(static_cast<std::size_t>(dataset.n()));
  const AugmentedDataset shuffled = dataset.permuted(order);
  const Eigen::Index kept = dataset.n() - held;
  auto slice = [&](Eigen::Index start, Eigen::Index count) {
    return AugmentedDataset(
        FeatureMatrix(shuffled.features().data().middleRows(start, count), dataset.features().source_tag()),
        AttributeVector(shuffled.attribute().values().segment(start, count), dataset.attribute().spec()));
  };
  return DataSplit{slice(held, kept), slice(0, held)};
}

template <typename Scalar = float>
struct TrainingOutcome {
  StatisticsNetwork<Scalar> network;
  DataSplit split;
  std::vector<double> bound_trace;     // V per training batch
  std::vector<double> heldout_trace;   // V per held-out monitor batch (empty without holdout)
  std::vector<double> smoothed_trace;  // bias-corrected EMA of the monitored series
  long iterations = 0;
  long best_iteration = 0;  // iteration whose parameters were kept
  bool converged = false;
};

namespace detail {

/// Upstream gradient of the training loss L = -V with respect to each score
/// of the stacked batch. With `ema_denominator` set, the marginal weights use
/// it in place of the batch mean of exp(T).
inline double dv_loss_gradient(const VectorOf<double>& scores, Eigen::Index b, bool stabilized,
                               std::optional<double> ema_denominator, VectorOf<double>& upstream) {
  upstream.resize(2 * b);
  std::span<const double> all(scores.data(), static_cast<std::size_t>(2 * b));
  const double value = dv_value(all.first(static_cast<std::size_t>(b)),
                                all.subspan(static_cast<std::size_t>(b)), stabilized);
  const double inv_b = 1.0 / static_cast<double>(b);
  for (Eigen::Index i = 0; i < b; ++i) upstream[i] = -inv_b * soft_clamp_derivative(scores[i]);

  std::vector<double> clamped(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i) clamped[static_cast<std::size_t>(i)] = soft_clamp(scores[b + i]);
  if (ema_denominator) {
    for (Eigen::Index i = 0; i < b; ++i) {
      upstream[b + i] = inv_b * std::exp(clamped[static_cast<std::size_t>(i)]) / *ema_denominator *
                        soft_clamp_derivative(scores[b + i]);
    }
  } else {
    const double lse = log_sum_exp(std::span<const double>(clamped));
    for (Eigen::Index i = 0; i < b; ++i) {
      upstream[b + i] =
          std::exp(clamped[static_cast<std::size_t>(i)] - lse) * soft_clamp_derivative(scores[b + i]);
    }
  }
  return value;
}

template <typename Scalar>
double mean_exp(const VectorOf<Scalar>& scores, Eigen::Index b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) s += std::exp(soft_clamp(static_cast<double>(scores[b + i])));
  return s / static_cast<double>(b);
}

}  // namespace detail

/// Maximizes the DV bound (minimizes L = -V) with Adam on fresh mini-batches
/// drawn from the training pool. The convergence rule watches the held-out
/// bound when a holdout exists, otherwise the training bound. The network runs
/// in `Scalar`; bound values and score gradients are double.
template <typename Scalar = float>
TrainingOutcome<Scalar> train_estimator(const AugmentedDataset& dataset,
                                        const EstimatorConfig& config, std::uint64_t rng_seed) {
  config.validate(dataset.n());
  const TrainerConfig& tc = config.trainer;
  const Eigen::Index b = tc.batch_size;

  CounterRng init_rng(derive_seed(rng_seed, 0));
  CounterRng sample_rng(derive_seed(rng_seed, 1));
  CounterRng monitor_rng(derive_seed(rng_seed, 3));
  TrainingOutcome<Scalar> out{
      StatisticsNetwork<Scalar>(NetworkShape{dataset.m() + 1, tc.hidden1, tc.hidden2}, init_rng),
      split_dataset(dataset, config.holdout_fraction, derive_seed(rng_seed, 4)),
      {},
      {},
      {}};
  const AugmentedDataset& train = out.split.train;
  const AugmentedDataset* holdout = out.split.holdout ? &*out.split.holdout : nullptr;

  std::vector<std::size_t> scratch, monitor_scratch;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> permutation(static_cast<std::size_t>(b));
  Matrix inputs;
  ForwardCache<Scalar> cache;
  VectorOf<double> scores;
  VectorOf<double> upstream;

  auto draw = [&](const AugmentedDataset& data, CounterRng& rng, std::vector<std::size_t>& pool) {
    rng.sample_without_replacement(static_cast<std::size_t>(data.n()), static_cast<std::size_t>(b),
                                   pool, rows);
    for (std::size_t i = 0; i < permutation.size(); ++i) permutation[i] = i;
    rng.shuffle(std::span<std::size_t>(permutation));
    detail::fill_dv_batch(data.features().data(), data.attribute().values(), rows, permutation,
                          inputs);
  };

  const ConvergenceRule& rule = config.convergence;
  double ema = 0.0;
  double decay_power = 1.0;
  double ema_at_last_check = 0.0;
  int stalled_checks = 0;
  std::optional<double> denominator_ema;
  const bool keep_best = holdout != nullptr && rule.restore_best;
  std::optional<typename StatisticsNetwork<Scalar>::Tensors> best_parameters;
  double best_smoothed = -std::numeric_limits<double>::infinity();

  for (long it = 1; it <= tc.max_iterations; ++it) {
    double monitored = 0.0;
    if (holdout) {
      draw(*holdout, monitor_rng, monitor_scratch);
      out.network.forward(inputs.cast<Scalar>(), cache);
      scores = cache.output.template cast<double>();
      std::span<const double> all(scores.data(), static_cast<std::size_t>(2 * b));
      monitored = dv_value(all.first(static_cast<std::size_t>(b)),
                           all.subspan(static_cast<std::size_t>(b)), config.stabilize_logsumexp);
      out.heldout_trace.push_back(monitored);
    }

    draw(train, sample_rng, scratch);
    out.network.forward(inputs.cast<Scalar>(), cache);
    scores = cache.output.template cast<double>();
    std::optional<double> denominator;
    if (config.ema_gradient_correction) {
      const double batch_mean = detail::mean_exp(scores, b);
      denominator_ema = denominator_ema
                            ? (1.0 - config.ema_correction_rate) * *denominator_ema +
                                  config.ema_correction_rate * batch_mean
                            : batch_mean;
      denominator = denominator_ema;
    }
    const double value =
        detail::dv_loss_gradient(scores, b, config.stabilize_logsumexp, denominator, upstream);
    if (!std::isfinite(value) || !std::isfinite(monitored)) {
      throw Error(ErrorCode::Diverged, "DV bound became non-finite at iteration " + std::to_string(it));
    }
    out.network.adam_step(out.network.backward(cache, upstream.cast<Scalar>()), tc);
    if (!out.network.parameters().all_finite()) {
      throw Error(ErrorCode::Diverged, "parameters became non-finite at iteration " + std::to_string(it));
    }
    out.bound_trace.push_back(value);
    out.iterations = it;

    ema = rule.ema_decay * ema + (1.0 - rule.ema_decay) * (holdout ? monitored : value);
    decay_power *= rule.ema_decay;
    const double smoothed = ema / (1.0 - decay_power);
    out.smoothed_trace.push_back(smoothed);

    if (keep_best && it % rule.window == 0 && smoothed > best_smoothed) {
      best_smoothed = smoothed;
      best_parameters = out.network.parameters();
      out.best_iteration = it;
    }
    if (rule.enabled && it % rule.window == 0) {
      if (it >= 2 * rule.window) {
        const double gain = smoothed - ema_at_last_check;
        if (gain < rule.rel_tol * std::max(std::abs(ema_at_last_check), rule.scale_floor)) {
          if (++stalled_checks >= rule.patience) {
            out.converged = true;
            break;
          }
        } else {
          stalled_checks = 0;
        }
      }
      ema_at_last_check = smoothed;
    }
  }
  if (best_parameters && out.best_iteration != out.iterations) {
    out.network.mutable_parameters() = std::move(*best_parameters);
  }
  return out;
}

/// Mean DV bound of a frozen network over `batches` fresh evaluation batches.
template <typename Scalar>
double evaluate_bound(const StatisticsNetwork<Scalar>& net, const AugmentedDataset& dataset,
                      Eigen::Index batch_size, int batches, CounterRng& rng,
                      bool stabilized = true) {
  std::vector<std::size_t> scratch;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> permutation(static_cast<std::size_t>(batch_size));
  Matrix inputs;
  ForwardCache<Scalar> cache;
  VectorOf<double> scores;
  double total = 0.0;
  for (int k = 0; k < batches; ++k) {
    rng.sample_without_replacement(static_cast<std::size_t>(dataset.n()),
                                   static_cast<std::size_t>(batch_size), scratch, rows);
    for (std::size_t i = 0; i < permutation.size(); ++i) permutation[i] = i;
    rng.shuffle(std::span<std::size_t>(permutation));
    detail::fill_dv_batch(dataset.features().data(), dataset.attribute().values(), rows,
                          permutation, inputs);
    net.forward(inputs.cast<Scalar>(), cache);
    scores = cache.output.template cast<double>();
    std::span<const double> all(scores.data(), static_cast<std::size_t>(2 * batch_size));
    total += dv_value(all.first(static_cast<std::size_t>(batch_size)),
                      all.subspan(static_cast<std::size_t>(batch_size)), stabilized);
  }
  return total / static_cast<double>(batches);
}

/// Score of one estimator run: train from `run_seed`, then evaluate.
template <typename Scalar>
double run_once_as(const AugmentedDataset& dataset, const EstimatorConfig& config,
                   std::uint64_t run_seed) {
  const TrainingOutcome<Scalar> trained = train_estimator<Scalar>(dataset, config, run_seed);
  CounterRng eval_rng(derive_seed(run_seed, 2));
  return evaluate_bound(trained.network, trained.split.evaluation(), config.trainer.batch_size,
                        config.eval_batches, eval_rng, config.stabilize_logsumexp);
}

inline double run_once(const AugmentedDataset& dataset, const EstimatorConfig& config,
                       std::uint64_t run_seed) {
  return config.precision == Precision::float64 ? run_once_as<double>(dataset, config, run_seed)
                                                : run_once_as<float>(dataset, config, run_seed);
}

/// M independent runs (fresh network per run, seed derive_seed(master, run)),
/// averaged. Runs may execute on `config.threads` workers; results are
/// merged by run index so the output does not depend on scheduling.
inline ExpressivityResult estimate_expressivity(const AugmentedDataset& input,
                                                const EstimatorConfig& config, CellTags tags = {}) {
  config.validate(input.n());
  std::optional<AugmentedDataset> scaled;
  if (config.standardize_features) scaled.emplace(input.features().standardized_columns(), input.attribute());
  const AugmentedDataset& dataset = scaled ? *scaled : input;
  const auto runs = static_cast<std::size_t>(config.repetitions);
  std::vector<double> scores(runs);
  const auto workers =
      static_cast<std::size_t>(std::clamp<int>(config.threads, 1, config.repetitions));
  if (workers == 1) {
    for (std::size_t r = 0; r < runs; ++r) scores[r] = run_once(dataset, config, derive_seed(config.master_seed, r));
  } else {
    std::vector<std::exception_ptr> failures(runs);
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t r = w; r < runs; r += workers) {
          try {
            scores[r] = run_once(dataset, config, derive_seed(config.master_seed, r));
          } catch (...) {
            failures[r] = std::current_exception();
          }
        }
      });
    }
    pool.clear();
    for (const auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }
  if (tags.attribute.empty()) tags.attribute = dataset.attribute().spec().name;
  return ExpressivityResult::from_runs(std::move(scores), config.fingerprint(), std::move(tags));
}

}  // namespace expressivity
