#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>

namespace expressivity {

// log(sum_i exp(x_i)), shifted by the max so the sum never overflows.
template <typename T>
T log_sum_exp(std::span<const T> x) {
  if (x.empty()) return -INFINITY;
  const T peak = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(peak)) return peak;
  T sum = 0;
  for (const T v : x) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

// log((1/n) sum_i exp(x_i))
template <typename T>
T log_mean_exp(std::span<const T> x) {
  return log_sum_exp(x) - std::log(static_cast<T>(x.size()));
}

/// Critic-score limiter applied before exponentiation. Identity on
/// [-kClampKnee, kClampKnee]; beyond the knee it saturates smoothly (C1)
/// towards +/-kClampLimit.
inline constexpr double kClampKnee = 40.0;
inline constexpr double kClampLimit = 50.0;

template <typename T>
T soft_clamp(T x) {
  const T a = std::abs(x);
  if (a <= kClampKnee) return x;
  const T width = kClampLimit - kClampKnee;
  return std::copysign(kClampKnee + width * std::tanh((a - kClampKnee) / width), x);
}

template <typename T>
T soft_clamp_derivative(T x) {
  const T a = std::abs(x);
  if (a <= kClampKnee) return 1;
  const T width = kClampLimit - kClampKnee;
  const T t = std::tanh((a - kClampKnee) / width);
  return 1 - t * t;
}

inline double mean_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double stddev_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mu = mean_of(x);
  double ss = 0.0;
  for (const double v : x) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace expressivity
