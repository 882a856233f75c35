#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "expressivity/errors.hpp"

namespace expressivity {

/// Nonnegative co-occurrence weights over (x, a) cells. Integer counts are the
/// usual case; population joints are stored as probabilities.
class DiscreteJoint {
 public:
  explicit DiscreteJoint(Eigen::MatrixXd counts) : counts_(std::move(counts)) {
    if (counts_.size() == 0 || (counts_.array() < 0.0).any() || !counts_.allFinite()) {
      throw Error(ErrorCode::InvalidArgument, "joint counts must be finite and nonnegative");
    }
    if (!(counts_.sum() > 0.0)) throw Error(ErrorCode::EmptyJoint, "joint has zero total count");
  }

  const Eigen::MatrixXd& counts() const noexcept { return counts_; }
  Eigen::Index kx() const noexcept { return counts_.rows(); }
  Eigen::Index ka() const noexcept { return counts_.cols(); }
  double total() const { return counts_.sum(); }
  Eigen::MatrixXd probabilities() const { return counts_ / total(); }

 private:
  Eigen::MatrixXd counts_;
};

/// MI of a standard bivariate Gaussian with correlation rho: -1/2 ln(1 - rho^2).
inline double gaussian_mi_analytic(double rho) {
  if (!(std::abs(rho) < 1.0)) {
    throw Error(ErrorCode::DegenerateCorrelation, "|rho| must be < 1, got " + std::to_string(rho));
  }
  return -0.5 * std::log1p(-rho * rho);
}

/// Plug-in MI in nats, sum p(x,a) ln[p(x,a) / (p(x) p(a))] with 0 ln 0 = 0.
inline double discrete_mi_plugin(const DiscreteJoint& joint) {
  const Eigen::MatrixXd p = joint.probabilities();
  const Eigen::VectorXd px = p.rowwise().sum();
  const Eigen::RowVectorXd pa = p.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double pij = p(i, j);
      if (pij > 0.0) mi += pij * std::log(pij / (px[i] * pa[j]));
    }
  }
  // Rounding can leave a tiny negative value for independent tables.
  return std::max(mi, 0.0);
}

namespace detail {

inline Eigen::VectorXi equal_width_bins(std::span<const double> v, int bins) {
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double width = (*hi_it - lo) / bins;
  Eigen::VectorXi idx(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    int b = width > 0.0 ? static_cast<int>((v[i] - lo) / width) : 0;
    idx[static_cast<Eigen::Index>(i)] = std::clamp(b, 0, bins - 1);
  }
  return idx;
}

}  // namespace detail

/// Coarse 1-D sanity oracle: equal-width bins over each vector's observed
/// range, then plug-in MI of the resulting contingency table.
inline double binned_mi(std::span<const double> f, std::span<const double> a, int bins) {
  if (f.size() != a.size()) {
    throw Error(ErrorCode::LengthMismatch, "binned_mi inputs have lengths " +
                                               std::to_string(f.size()) + " and " +
                                               std::to_string(a.size()));
  }
  if (bins < 2) throw Error(ErrorCode::InvalidArgument, "binned_mi needs bins >= 2");
  if (f.empty()) throw Error(ErrorCode::EmptyJoint, "binned_mi on empty input");
  const Eigen::VectorXi bf = detail::equal_width_bins(f, bins);
  const Eigen::VectorXi ba = detail::equal_width_bins(a, bins);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(bins, bins);
  for (Eigen::Index i = 0; i < bf.size(); ++i) counts(bf[i], ba[i]) += 1.0;
  return discrete_mi_plugin(DiscreteJoint(std::move(counts)));
}

/// MI between a ~ N(0,1) and f = signal * a + sigma * noise: 1/2 ln(1 + s^2/sigma^2).
inline double gaussian_channel_mi(double signal, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be > 0");
  return 0.5 * std::log1p(signal * signal / (sigma * sigma));
}

/// MI between a uniform discrete input on `levels` (z-scored level positions)
/// and y = signal * x + sigma * noise. Computed as h(Y) - h(Y|X) with h(Y)
/// integrated by composite Simpson over the Gaussian mixture density.
inline double discrete_gaussian_channel_mi(int levels, double signal, double sigma) {
  if (levels < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 levels");
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be > 0");
  const double center = (levels - 1) / 2.0;
  const double scale = std::sqrt((static_cast<double>(levels) * levels - 1.0) / 12.0);
  std::vector<double> means(static_cast<std::size_t>(levels));
  for (int k = 0; k < levels; ++k) means[static_cast<std::size_t>(k)] = signal * (k - center) / scale;

  const double inv_norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  auto density = [&](double y) {
    double s = 0.0;
    for (const double mu : means) {
      const double z = (y - mu) / sigma;
      s += std::exp(-0.5 * z * z);
    }
    return s * inv_norm / levels;
  };
  const double lo = means.front() - 12.0 * sigma;
  const double hi = means.back() + 12.0 * sigma;
  const int steps = 20000;
  const double h = (hi - lo) / steps;
  double integral = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double y = lo + i * h;
    const double p = density(y);
    const double term = p > 0.0 ? -p * std::log(p) : 0.0;
    const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    integral += w * term;
  }
  const double entropy_y = integral * h / 3.0;
  const double entropy_noise = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * sigma * sigma);
  return entropy_y - entropy_noise;
}

}  // namespace expressivity
