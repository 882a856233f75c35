#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "expressivity/errors.hpp"
#include "expressivity/numeric.hpp"

namespace expressivity {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// n x m embedding matrix for one (layer, epoch, modality) cell.
/// Rows are samples; row order is the pairing key with attribute vectors.
class FeatureMatrix {
 public:
  FeatureMatrix(Matrix data, std::string source_tag = {})
      : data_(std::move(data)), source_tag_(std::move(source_tag)) {
    if (data_.rows() < 2 || data_.cols() < 1) {
      throw Error(ErrorCode::InvalidArgument,
                  "feature matrix needs n >= 2 and m >= 1, got " + std::to_string(data_.rows()) +
                      "x" + std::to_string(data_.cols()));
    }
    for (Eigen::Index i = 0; i < data_.rows(); ++i) {
      for (Eigen::Index j = 0; j < data_.cols(); ++j) {
        if (!std::isfinite(data_(i, j))) {
          throw Error(ErrorCode::NonFiniteValue, "feature row " + std::to_string(i) +
                                                     ", column " + std::to_string(j));
        }
      }
    }
  }

  Eigen::Index rows() const noexcept { return data_.rows(); }
  Eigen::Index cols() const noexcept { return data_.cols(); }
  const Matrix& data() const noexcept { return data_; }
  const std::string& source_tag() const noexcept { return source_tag_; }

  /// Copy with every column z-scored. Constant columns are centered only.
  FeatureMatrix standardized_columns() const {
    Matrix out = data_;
    const double n = static_cast<double>(out.rows());
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double mu = out.col(j).mean();
      out.col(j).array() -= mu;
      const double sd = std::sqrt(out.col(j).squaredNorm() / n);
      if (sd > 0.0) out.col(j) /= sd;
    }
    return FeatureMatrix(std::move(out), source_tag_);
  }

 private:
  Matrix data_;
  std::string source_tag_;
};

enum class AttributeKind { continuous, binary, categorical_identity };
enum class Standardization { z_score, none };

inline std::string_view to_string(AttributeKind k) {
  switch (k) {
    case AttributeKind::continuous: return "continuous";
    case AttributeKind::binary: return "binary";
    case AttributeKind::categorical_identity: return "categorical-identity";
  }
  return "continuous";
}

inline AttributeKind parse_attribute_kind(std::string_view s) {
  if (s == "continuous") return AttributeKind::continuous;
  if (s == "binary") return AttributeKind::binary;
  if (s == "categorical-identity" || s == "categorical_identity" || s == "identity") {
    return AttributeKind::categorical_identity;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown attribute kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Standardization s) {
  return s == Standardization::z_score ? "z-score" : "none";
}

inline Standardization parse_standardization(std::string_view s) {
  if (s == "z-score" || s == "zscore" || s == "z_score") return Standardization::z_score;
  if (s == "none") return Standardization::none;
  throw Error(ErrorCode::InvalidArgument, "unknown standardization '" + std::string(s) + "'");
}

struct AttributeSpec {
  std::string name;
  AttributeKind kind = AttributeKind::continuous;
  std::optional<std::string> units;
  Standardization standardization = Standardization::z_score;
};

class AttributeVector {
 public:
  AttributeVector(Vector values, AttributeSpec spec)
      : values_(std::move(values)), spec_(std::move(spec)) {
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw Error(ErrorCode::NonFiniteValue,
                    "attribute '" + spec_.name + "' row " + std::to_string(i));
      }
    }
  }

  Eigen::Index size() const noexcept { return values_.size(); }
  const Vector& values() const noexcept { return values_; }
  const AttributeSpec& spec() const noexcept { return spec_; }

 private:
  Vector values_;
  AttributeSpec spec_;
};

namespace detail {

inline void z_score_in_place(Vector& v, const std::string& name) {
  const double n = static_cast<double>(v.size());
  const double mu = v.mean();
  v.array() -= mu;
  const double var = v.squaredNorm() / n;
  if (!(var > 1e-24 * std::max(1.0, mu * mu))) {
    throw Error(ErrorCode::ZeroVarianceAttribute,
                "attribute '" + name + "' is constant; z-score undefined");
  }
  v /= std::sqrt(var);
  // Second pass removes the rounding residue of the first centering.
  v.array() -= v.mean();
}

inline Vector first_appearance_codes(std::span<const double> values) {
  Vector codes(static_cast<Eigen::Index>(values.size()));
  std::map<double, double> index;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto [it, inserted] = index.try_emplace(values[i], static_cast<double>(index.size()));
    codes[static_cast<Eigen::Index>(i)] = it->second;
  }
  return codes;
}

}  // namespace detail

/// Applies the kind-specific encoding, then z-scores when the spec asks for it.
/// Binary: the smaller raw value maps to 0, the larger to 1.
/// Categorical identity: first-appearance index of each distinct value.
/// Z-score uses the population variance, so the result has mean 0 and
/// variance 1 under the 1/n convention.
inline AttributeVector standardize(std::span<const double> values, const AttributeSpec& spec) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFiniteValue,
                  "attribute '" + spec.name + "' row " + std::to_string(i));
    }
  }
  Vector out;
  switch (spec.kind) {
    case AttributeKind::continuous:
      out = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
      break;
    case AttributeKind::binary: {
      std::vector<double> distinct(values.begin(), values.end());
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      if (distinct.size() != 2) {
        throw Error(ErrorCode::NonBinaryValues,
                    "binary attribute '" + spec.name + "' has " +
                        std::to_string(distinct.size()) + " distinct values");
      }
      out.resize(static_cast<Eigen::Index>(values.size()));
      for (std::size_t i = 0; i < values.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = values[i] == distinct[1] ? 1.0 : 0.0;
      }
      break;
    }
    case AttributeKind::categorical_identity:
      out = detail::first_appearance_codes(values);
      break;
  }
  if (spec.standardization == Standardization::z_score) detail::z_score_in_place(out, spec.name);
  return AttributeVector(std::move(out), spec);
}

/// Label form of `standardize` for categorical identities (and binary labels
/// such as "M"/"F"). Numeric kinds parse each label as a real.
inline AttributeVector standardize_labels(std::span<const std::string> labels,
                                          const AttributeSpec& spec) {
  if (spec.kind == AttributeKind::continuous) {
    std::vector<double> parsed;
    parsed.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      try {
        std::size_t used = 0;
        parsed.push_back(std::stod(labels[i], &used));
        if (used != labels[i].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw Error(ErrorCode::UnparsableValue, "attribute '" + spec.name + "' row " +
                                                    std::to_string(i) + ": '" + labels[i] + "'");
      }
    }
    return standardize(parsed, spec);
  }
  // Label codes: first appearance for identities, sorted order for binary.
  std::vector<double> codes(labels.size());
  if (spec.kind == AttributeKind::binary) {
    std::vector<std::string> distinct(labels.begin(), labels.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      codes[i] = static_cast<double>(
          std::lower_bound(distinct.begin(), distinct.end(), labels[i]) - distinct.begin());
    }
  } else {
    std::unordered_map<std::string, double> index;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, inserted] = index.try_emplace(labels[i], static_cast<double>(index.size()));
      codes[i] = it->second;
    }
  }
  return standardize(codes, spec);
}

/// Body-mass index in kg/m^2.
inline double derive_bmi(double weight_kg, double height_m) {
  if (!(weight_kg > 0.0) || !(height_m > 0.0)) {
    throw Error(ErrorCode::NonPositiveInput, "BMI needs positive weight and height, got weight=" +
                                                 std::to_string(weight_kg) +
                                                 " height=" + std::to_string(height_m));
  }
  return weight_kg / (height_m * height_m);
}

/// Logical pairing X = [F | A]: row i of the features and entry i of the
/// attribute describe the same sample. Any permutation must be applied to both.
class AugmentedDataset {
 public:
  AugmentedDataset(FeatureMatrix features, AttributeVector attribute)
      : features_(std::move(features)), attribute_(std::move(attribute)) {
    if (features_.rows() != attribute_.size()) {
      throw Error(ErrorCode::LengthMismatch,
                  "features have " + std::to_string(features_.rows()) + " rows, attribute '" +
                      attribute_.spec().name + "' has " + std::to_string(attribute_.size()));
    }
  }

  Eigen::Index n() const noexcept { return features_.rows(); }
  Eigen::Index m() const noexcept { return features_.cols(); }
  const FeatureMatrix& features() const noexcept { return features_; }
  const AttributeVector& attribute() const noexcept { return attribute_; }

  /// Materialized n x (m+1) matrix [F | A].
  Matrix joined() const {
    Matrix x(n(), m() + 1);
    x.leftCols(m()) = features_.data();
    x.col(m()) = attribute_.values();
    return x;
  }

  /// Rows reordered by `order` (new row i is old row order[i]) in both halves.
  AugmentedDataset permuted(std::span<const std::size_t> order) const {
    Matrix f(n(), m());
    Vector a(n());
    for (Eigen::Index i = 0; i < n(); ++i) {
      const auto src = static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]);
      f.row(i) = features_.data().row(src);
      a[i] = attribute_.values()[src];
    }
    return AugmentedDataset(FeatureMatrix(std::move(f), features_.source_tag()),
                            AttributeVector(std::move(a), attribute_.spec()));
  }

 private:
  FeatureMatrix features_;
  AttributeVector attribute_;
};

inline AugmentedDataset augment(FeatureMatrix features, AttributeVector attribute) {
  return AugmentedDataset(std::move(features), std::move(attribute));
}

struct CellTags {
  std::string layer;
  std::string epoch;
  std::string modality;
  std::string attribute;

  auto operator<=>(const CellTags&) const = default;
};

/// Averaged MI estimate (nats) over M independent estimator runs.
struct ExpressivityResult {
  double mean = 0.0;
  std::vector<double> per_run;
  double std_dev = 0.0;
  std::string config_fingerprint;
  CellTags cell_tags;

  static ExpressivityResult from_runs(std::vector<double> runs, std::string fingerprint,
                                      CellTags tags = {}) {
    if (runs.empty()) throw Error(ErrorCode::InvalidArgument, "expressivity needs M >= 1 runs");
    ExpressivityResult r;
    r.mean = mean_of(runs);
    r.std_dev = stddev_of(runs);
    r.per_run = std::move(runs);
    r.config_fingerprint = std::move(fingerprint);
    r.cell_tags = std::move(tags);
    return r;
  }

  bool operator==(const ExpressivityResult&) const = default;
};

}  // namespace expressivity
