#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "expressivity/data_model.hpp"
#include "expressivity/ingest.hpp"
#include "expressivity/mine.hpp"
#include "expressivity/oracles.hpp"
#include "expressivity/rng.hpp"
#include "expressivity/statnet.hpp"
#include "expressivity/synthgen.hpp"

namespace expressivity {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct ValidateOptions {
  bool quick = false;
  std::uint64_t seed = 20240601;
};

/// Fraction of parameters whose analytic gradient of sum_i T(x_i) agrees with
/// central differences (step h) to relative error <= tol.
inline double gradient_agreement(std::uint64_t seed, double h = 1e-5, double tol = 1e-4) {
  CounterRng rng(seed);
  StatisticsNetwork<double> net(NetworkShape{5, 8, 4}, rng);
  // Nonzero biases so every ELU branch is exercised.
  net.mutable_parameters().for_each_scalar([&](double& p) {
    if (p == 0.0) p = 0.3 * rng.normal();
  });
  MatrixOf<double> x(6, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  ForwardCache<double> cache;
  net.forward(x, cache);
  const auto grad = net.backward(cache, VectorOf<double>::Ones(x.rows()));

  std::vector<double> analytic;
  auto g = grad;
  g.for_each_scalar([&](double& v) { analytic.push_back(v); });

  auto total = [&](const StatisticsNetwork<double>& n) {
    ForwardCache<double> c;
    n.forward(x, c);
    return c.output.sum();
  };
  std::vector<double*> slots;
  net.mutable_parameters().for_each_scalar([&](double& p) { slots.push_back(&p); });
  std::size_t good = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double saved = *slots[k];
    *slots[k] = saved + h;
    net.mutable_parameters();
    const double up = total(net);
    *slots[k] = saved - h;
    net.mutable_parameters();
    const double down = total(net);
    *slots[k] = saved;
    net.mutable_parameters();
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
    if (std::abs(numeric - analytic[k]) / scale <= tol) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(slots.size());
}

/// The built-in check suite behind `expressivity validate`. The quick
/// variant shrinks sample counts and network widths.
inline std::vector<CheckResult> run_validation(const ValidateOptions& options) {
  std::vector<CheckResult> results;
  auto check = [&](std::string name, const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r{std::move(name), false, "", 0.0};
    try {
      std::tie(r.passed, r.detail) = body();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("threw: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(std::move(r));
  };
  auto fmt = [](const char* f, auto... v) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, v...);
    return std::string(buf);
  };

  check("elu", [&] {
    const double v = elu(-1.0);
    const bool ok = elu(0.0) == 0.0 && elu(1.0) == 1.0 && std::abs(v - (std::exp(-1.0) - 1.0)) < 1e-12;
    return std::pair{ok, fmt("elu(-1) = %.5f", v)};
  });

  check("dv-hand-values", [&] {
    const double a = dv_value(std::vector{1.0, 1.0}, std::vector{0.0, 0.0});
    const double b = dv_value(std::vector{0.0, 0.0}, std::vector{0.0, 2.0});
    const double expect_b = -std::log((1.0 + std::exp(2.0)) / 2.0);
    return std::pair{std::abs(a - 1.0) < 1e-12 && std::abs(b - expect_b) < 1e-12, fmt("%.5f, %.5f", a, b)};
  });

  check("oracles", [&] {
    Eigen::MatrixXd c(2, 2);
    c << 3, 1, 1, 3;
    const double plugin = discrete_mi_plugin(DiscreteJoint(c));
    const double bsc = discrete_mi_plugin(gen_discrete_channel(2, 0.1, 10, options.seed).population);
    const double hb = -(0.1 * std::log(0.1) + 0.9 * std::log(0.9));
    const bool ok = std::abs(gaussian_mi_analytic(0.5) + 0.5 * std::log(0.75)) < 1e-12 &&
                    std::abs(plugin - (0.75 * std::log(1.5) + 0.25 * std::log(0.5))) < 1e-12 &&
                    std::abs(bsc - (std::log(2.0) - hb)) < 1e-12;
    return std::pair{ok, fmt("plugin %.5f, bsc %.5f", plugin, bsc)};
  });

  check("gradient", [&] {
    const int seeds = options.quick ? 3 : 10;
    double worst = 1.0;
    for (int s = 0; s < seeds; ++s) worst = std::min(worst, gradient_agreement(derive_seed(options.seed, 100 + s)));
    return std::pair{worst >= 0.99, fmt("worst agreement %.4f over %d seeds", worst, seeds)};
  });

  check("shift-invariance", [&] {
    CounterRng rng(options.seed);
    const auto data = gen_gaussian_pair(0.5, 200, options.seed);
    const DVBatch batch = sample_dv_batch(data, 100, rng);
    StatisticsNetwork<double> net(NetworkShape{2, 16, 8}, rng);
    const double base = dv_bound(net, batch);
    double worst = 0.0;
    for (const double c : {-5.0, 3.0}) {
      StatisticsNetwork<double> shifted = net;
      shifted.mutable_parameters().b3 += c;
      worst = std::max(worst, std::abs(dv_bound(shifted, batch) - base));
    }
    return std::pair{worst < 1e-9, fmt("max change %.3g", worst)};
  });

  check("adam-first-step", [&] {
    StatisticsNetwork<double> net(NetworkShape{1, 1, 1});
    auto grad = NetworkTensors<double>::zeros(net.shape());
    grad.b3 = 1.0;
    TrainerConfig cfg;
    net.adam_step(grad, cfg);
    const double moved = net.parameters().b3;
    return std::pair{std::abs(moved + cfg.learning_rate) < 1e-9, fmt("b3 moved by %.3g", moved)};
  });

  check("ingest-round-trip", [&] {
    const auto dir = fs::temp_directory_path() / ("expressivity-validate-" + std::to_string(options.seed));
    fs::create_directories(dir);
    CounterRng rng(options.seed);
    Matrix f(7, 3);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = static_cast<float>(rng.normal());
    write_embeddings(dir / "x.emb", FeatureMatrix(f, "check"));
    const bool ok = read_embeddings(dir / "x.emb").data() == f;
    fs::remove_all(dir);
    return std::pair{ok, std::string(ok ? "bit-identical" : "mismatch")};
  });

  EstimatorConfig est;
  est.master_seed = options.seed;
  if (options.quick) {
    est.trainer.hidden1 = 64;
    est.trainer.hidden2 = 32;
    est.repetitions = 2;
  }
  const Eigen::Index n = options.quick ? 4000 : 10000;

  check("gaussian-recovery", [&] {
    const double rho = 0.8;
    const double truth = gaussian_mi_analytic(rho);
    const auto r = estimate_expressivity(gen_gaussian_pair(rho, n, derive_seed(options.seed, 1)), est);
    const double tol = options.quick ? 0.1 : 0.08;
    return std::pair{std::abs(r.mean - truth) <= tol, fmt("rho 0.8: %.4f vs %.4f", r.mean, truth)};
  });

  check("independence-null", [&] {
    const Eigen::Index m = options.quick ? 4 : 32;
    const auto r = estimate_expressivity(gen_independent(n, m, derive_seed(options.seed, 2)), est);
    return std::pair{std::abs(r.mean) <= 0.05, fmt("m=%ld: %.4f", static_cast<long>(m), r.mean)};
  });

  check("discrete-channel", [&] {
    const auto sample = gen_discrete_channel(8, 0.0, n, derive_seed(options.seed, 3));
    const auto r = estimate_expressivity(sample.dataset, est);
    return std::pair{r.mean >= 1.8 && r.mean <= 2.2, fmt("k=8: %.4f vs %.4f", r.mean, std::log(8.0))};
  });

  return results;
}

}  // namespace expressivity
