#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "expressivity/data_model.hpp"
#include "expressivity/errors.hpp"
#include "expressivity/oracles.hpp"
#include "expressivity/rng.hpp"

namespace expressivity {

/// (f, a) standard bivariate normal with correlation rho, m = 1.
/// a = rho * f + sqrt(1 - rho^2) * z. The attribute is left unstandardized.
inline AugmentedDataset gen_gaussian_pair(double rho, Eigen::Index n, std::uint64_t seed) {
  if (!(std::abs(rho) < 1.0)) {
    throw Error(ErrorCode::DegenerateCorrelation, "|rho| must be < 1, got " + std::to_string(rho));
  }
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "gaussian pair needs n >= 2");
  CounterRng rng(seed);
  Matrix f(n, 1);
  Vector a(n);
  const double residual = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = rng.normal();
    const double z = rng.normal();
    f(i, 0) = x;
    a[i] = rho * x + residual * z;
  }
  AttributeSpec spec{"a", AttributeKind::continuous, std::nullopt, Standardization::none};
  return AugmentedDataset(FeatureMatrix(std::move(f), "gaussian"), AttributeVector(std::move(a), spec));
}

/// m independent standard-normal feature columns and an independent
/// standard-normal attribute (MI = 0).
inline AugmentedDataset gen_independent(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix f(n, m);
  Vector a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) f(i, j) = rng.normal();
    a[i] = rng.normal();
  }
  AttributeSpec spec{"a", AttributeKind::continuous, std::nullopt, Standardization::none};
  return AugmentedDataset(FeatureMatrix(std::move(f), "independent"), AttributeVector(std::move(a), spec));
}

struct DiscreteChannelSample {
  AugmentedDataset dataset;
  DiscreteJoint population;  // exact joint over (feature symbol, attribute symbol)
  Eigen::MatrixXd empirical;  // observed counts
};

/// Symmetric k-ary channel. The attribute is uniform over k symbols; the
/// feature repeats it with probability 1 - flip_prob and otherwise takes one
/// of the other k - 1 symbols uniformly. Both columns carry the z-scored
/// symbol position.
inline DiscreteChannelSample gen_discrete_channel(int k, double flip_prob, Eigen::Index n,
                                                  std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "channel needs k >= 2");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "flip_prob must be in [0, 1]");
  }
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "channel needs n >= 2");
  const double center = (k - 1) / 2.0;
  const double scale = std::sqrt((static_cast<double>(k) * k - 1.0) / 12.0);

  CounterRng rng(seed);
  Matrix f(n, 1);
  Vector a(n);
  Eigen::MatrixXd empirical = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto sa = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    int sf = sa;
    if (rng.uniform() < flip_prob) {
      const auto other = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k - 1)));
      sf = other < sa ? other : other + 1;
    }
    f(i, 0) = (sf - center) / scale;
    a[i] = (sa - center) / scale;
    empirical(sf, sa) += 1.0;
  }

  Eigen::MatrixXd population(k, k);
  for (int x = 0; x < k; ++x) {
    for (int y = 0; y < k; ++y) {
      population(x, y) = x == y ? (1.0 - flip_prob) / k : flip_prob / (static_cast<double>(k) * (k - 1));
    }
  }
  AttributeSpec spec{"symbol", AttributeKind::continuous, std::nullopt, Standardization::none};
  return DiscreteChannelSample{
      AugmentedDataset(FeatureMatrix(std::move(f), "channel"), AttributeVector(std::move(a), spec)),
      DiscreteJoint(std::move(population)), std::move(empirical)};
}

struct PlantedAttribute {
  std::string name;
  double signal = 0.0;
  AttributeKind kind = AttributeKind::continuous;
  int identities = 16;  // levels when kind is categorical_identity
};

struct PlantedInfoConfig {
  Eigen::Index n = 5000;
  Eigen::Index m = 32;
  std::vector<PlantedAttribute> attributes;
  double sigma = 1.0;
  std::uint64_t rng_seed = 0;
};

struct PlantedEmbeddings {
  FeatureMatrix features;
  std::vector<AttributeVector> attributes;
  /// Raw per-sample labels for each attribute, in the form an annotation
  /// table would carry them (identity labels are "idNN").
  std::vector<std::vector<std::string>> labels;
  Matrix directions;  // m x count, orthonormal columns
  std::vector<double> true_mi;  // population MI per attribute (nats)
};

/// features = sum_j s_j * latent_j * u_j + sigma * noise with orthonormal u_j.
///
/// Latents by kind: continuous ~ N(0, 1); binary = +/-1 equiprobable;
/// categorical identity = z-scored first-appearance code of a uniform identity
/// label, so the standardized identity attribute is (up to sample moments)
/// the planted latent itself.
inline PlantedEmbeddings gen_planted_embeddings(const PlantedInfoConfig& config) {
  const auto count = static_cast<Eigen::Index>(config.attributes.size());
  if (count > config.m) {
    throw Error(ErrorCode::TooManyAttributes, std::to_string(count) + " attributes for m=" +
                                                  std::to_string(config.m));
  }
  if (config.n < 2 || config.m < 1) throw Error(ErrorCode::InvalidArgument, "planted data needs n >= 2, m >= 1");
  if (!(config.sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be >= 0");
  for (const auto& attr : config.attributes) {
    if (!(attr.signal >= 0.0)) throw Error(ErrorCode::InvalidArgument, "signal strengths must be >= 0");
    if (attr.kind == AttributeKind::categorical_identity && attr.identities < 2) {
      throw Error(ErrorCode::InvalidArgument, "identity attribute needs >= 2 identities");
    }
  }
  CounterRng rng(config.rng_seed);

  Matrix directions(config.m, std::max<Eigen::Index>(count, 1));
  if (count > 0) {
    Eigen::MatrixXd gauss(config.m, count);
    for (Eigen::Index i = 0; i < config.m; ++i) {
      for (Eigen::Index j = 0; j < count; ++j) gauss(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    directions = qr.householderQ() * Eigen::MatrixXd::Identity(config.m, count);
  } else {
    directions.resize(config.m, 0);
  }

  Matrix latents(config.n, count);
  std::vector<std::vector<std::string>> labels(static_cast<std::size_t>(count));
  for (Eigen::Index j = 0; j < count; ++j) {
    const PlantedAttribute& attr = config.attributes[static_cast<std::size_t>(j)];
    auto& column_labels = labels[static_cast<std::size_t>(j)];
    column_labels.reserve(static_cast<std::size_t>(config.n));
    if (attr.kind == AttributeKind::categorical_identity) {
      std::vector<int> code_of(static_cast<std::size_t>(attr.identities), -1);
      int next_code = 0;
      const int levels = attr.identities;
      const double center = (levels - 1) / 2.0;
      const double scale = std::sqrt((static_cast<double>(levels) * levels - 1.0) / 12.0);
      for (Eigen::Index i = 0; i < config.n; ++i) {
        const auto id = static_cast<std::size_t>(rng.uniform_index(static_cast<std::uint64_t>(levels)));
        if (code_of[id] < 0) code_of[id] = next_code++;
        latents(i, j) = (code_of[id] - center) / scale;
        char buf[32];
        std::snprintf(buf, sizeof buf, "id%02zu", id);
        column_labels.emplace_back(buf);
      }
    } else {
      for (Eigen::Index i = 0; i < config.n; ++i) {
        double v = 0.0;
        if (attr.kind == AttributeKind::binary) {
          v = rng.uniform() < 0.5 ? -1.0 : 1.0;
          column_labels.emplace_back(v > 0 ? "1" : "0");
        } else {
          v = rng.normal();
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.17g", v);
          column_labels.emplace_back(buf);
        }
        latents(i, j) = v;
      }
    }
  }

  Matrix features(config.n, config.m);
  for (Eigen::Index i = 0; i < config.n; ++i) {
    for (Eigen::Index d = 0; d < config.m; ++d) features(i, d) = config.sigma * rng.normal();
  }
  for (Eigen::Index j = 0; j < count; ++j) {
    const double s = config.attributes[static_cast<std::size_t>(j)].signal;
    features.noalias() += s * latents.col(j) * directions.col(j).transpose();
  }

  PlantedEmbeddings out{FeatureMatrix(std::move(features), "planted"), {}, std::move(labels),
                        std::move(directions), {}};
  for (Eigen::Index j = 0; j < count; ++j) {
    const PlantedAttribute& attr = config.attributes[static_cast<std::size_t>(j)];
    AttributeSpec spec{attr.name, attr.kind, std::nullopt, Standardization::z_score};
    out.attributes.push_back(standardize_labels(out.labels[static_cast<std::size_t>(j)], spec));
    double mi = std::numeric_limits<double>::infinity();
    if (config.sigma > 0.0) {
      switch (attr.kind) {
        case AttributeKind::continuous: mi = gaussian_channel_mi(attr.signal, config.sigma); break;
        case AttributeKind::binary: mi = discrete_gaussian_channel_mi(2, attr.signal, config.sigma); break;
        case AttributeKind::categorical_identity:
          mi = discrete_gaussian_channel_mi(attr.identities, attr.signal, config.sigma);
          break;
      }
    } else if (attr.signal == 0.0) {
      mi = 0.0;
    } else if (attr.kind == AttributeKind::binary) {
      mi = std::log(2.0);
    } else if (attr.kind == AttributeKind::categorical_identity) {
      mi = std::log(static_cast<double>(attr.identities));
    }
    out.true_mi.push_back(mi);
  }
  return out;
}

}  // namespace expressivity
