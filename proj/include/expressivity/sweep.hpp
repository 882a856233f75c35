#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "expressivity/data_model.hpp"
#include "expressivity/errors.hpp"
#include "expressivity/ingest.hpp"
#include "expressivity/mine.hpp"
#include "expressivity/rng.hpp"

namespace expressivity {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Orders strings so that digit runs compare by value: "layer2" < "layer10".
inline int natural_compare(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  while (i < a.size() && j < b.size()) {
    if (is_digit(a[i]) && is_digit(b[j])) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && is_digit(a[ie])) ++ie;
      while (je < b.size() && is_digit(b[je])) ++je;
      std::string_view da = a.substr(i, ie - i), db = b.substr(j, je - j);
      while (da.size() > 1 && da.front() == '0') da.remove_prefix(1);
      while (db.size() > 1 && db.front() == '0') db.remove_prefix(1);
      if (da.size() != db.size()) return da.size() < db.size() ? -1 : 1;
      if (const int c = da.compare(db); c != 0) return c < 0 ? -1 : 1;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j] ? -1 : 1;
      ++i;
      ++j;
    }
  }
  if (i < a.size()) return 1;
  if (j < b.size()) return -1;
  return a.compare(b) < 0 ? -1 : (a.compare(b) > 0 ? 1 : 0);
}

inline bool natural_less(const CellTags& x, const CellTags& y) {
  if (const int c = natural_compare(x.layer, y.layer); c != 0) return c < 0;
  if (const int c = natural_compare(x.epoch, y.epoch); c != 0) return c < 0;
  if (const int c = natural_compare(x.modality, y.modality); c != 0) return c < 0;
  return natural_compare(x.attribute, y.attribute) < 0;
}

/// Seed of one sweep row. Depends only on the sweep seed and the row's tags,
/// so adding cells never changes the numbers of existing ones.
inline std::uint64_t row_seed(std::uint64_t sweep_seed, const CellTags& tags) {
  const std::string key = tags.layer + '\x1f' + tags.epoch + '\x1f' + tags.modality + '\x1f' + tags.attribute;
  return derive_seed(sweep_seed, fnv1a64(key));
}

struct SweepRow {
  CellTags tags;
  bool reference = false;  // identity row, the scale other rows are read against
  std::optional<ExpressivityResult> result;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  std::string fingerprint;
  std::string failure_code;  // empty when the row succeeded
  std::string failure_reason;

  bool ok() const noexcept { return result.has_value(); }
  std::string status() const {
    if (!ok()) return "failed:" + failure_code;
    return reference ? "reference" : "ok";
  }
};

struct SweepResult {
  std::vector<SweepRow> rows;  // natural (layer, epoch, modality, attribute) order
  std::string started;
  std::string finished;
  std::string tool_version{kToolVersion};
  std::uint64_t seed = 0;
  std::string fingerprint;

  std::size_t failed_count() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.ok(); }));
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

struct SweepTask {
  std::size_t cell = 0;
  CellTags tags;
  AttributeSpec spec;
  bool reference = false;
};

struct Failure {
  std::string code;
  std::string reason;
};

template <typename T>
using Loaded = std::variant<T, Failure>;

inline Failure failure_from_current_exception() {
  try {
    throw;
  } catch (const Error& e) {
    return {std::string(to_string(e.code())), e.what()};
  } catch (const std::exception& e) {
    return {"Internal", e.what()};
  }
}

}  // namespace detail

/// Runs every (cell, attribute) estimation of the manifest on `parallelism`
/// workers. A failing row is recorded with its reason and the sweep goes on;
/// only an inconsistent manifest (duplicate rows) aborts.
inline SweepResult run_sweep(const SweepManifest& manifest, int parallelism = 1) {
  SweepResult out;
  out.started = utc_timestamp();
  out.seed = manifest.seed.value_or(0);
  out.fingerprint = manifest.estimator.fingerprint();

  std::vector<detail::SweepTask> tasks;
  for (std::size_t c = 0; c < manifest.cells.size(); ++c) {
    const ManifestCell& cell = manifest.cells[c];
    for (const auto& name : cell.attribute_names) {
      tasks.push_back({c, {cell.layer_tag, cell.epoch_tag, cell.modality_tag, name}, manifest.spec_for(name), false});
    }
    if (manifest.identity_column) {
      AttributeSpec spec = manifest.spec_for(*manifest.identity_column);
      spec.kind = AttributeKind::categorical_identity;
      tasks.push_back({c, {cell.layer_tag, cell.epoch_tag, cell.modality_tag, *manifest.identity_column}, spec, true});
    }
  }
  std::stable_sort(tasks.begin(), tasks.end(),
                   [](const detail::SweepTask& x, const detail::SweepTask& y) { return natural_less(x.tags, y.tags); });
  for (std::size_t i = 1; i < tasks.size(); ++i) {
    if (tasks[i - 1].tags == tasks[i].tags) {
      const CellTags& t = tasks[i].tags;
      throw Error(ErrorCode::SchemaError, "cells: duplicate row (layer=" + t.layer + ", epoch=" + t.epoch +
                                              ", modality=" + t.modality + ", attribute=" + t.attribute + ")");
    }
  }

  // Each file is read once, up front, so workers share immutable data.
  std::map<fs::path, detail::Loaded<std::shared_ptr<const FeatureMatrix>>> features;
  std::map<fs::path, detail::Loaded<std::shared_ptr<const AttributeTable>>> tables;
  for (const ManifestCell& cell : manifest.cells) {
    if (cell.missing) continue;
    if (!features.contains(cell.features_path)) {
      try {
        features.emplace(cell.features_path, std::make_shared<const FeatureMatrix>(read_embeddings(cell.features_path)));
      } catch (...) {
        features.emplace(cell.features_path, detail::failure_from_current_exception());
      }
    }
    if (!tables.contains(cell.attributes_path)) {
      try {
        tables.emplace(cell.attributes_path,
                       std::make_shared<const AttributeTable>(read_attribute_table(cell.attributes_path)));
      } catch (...) {
        tables.emplace(cell.attributes_path, detail::failure_from_current_exception());
      }
    }
  }

  out.rows.resize(tasks.size());
  auto run_task = [&](std::size_t k) {
    const detail::SweepTask& task = tasks[k];
    const ManifestCell& cell = manifest.cells[task.cell];
    SweepRow& row = out.rows[k];
    row.tags = task.tags;
    row.reference = task.reference;
    EstimatorConfig config = manifest.estimator;
    config.master_seed = row_seed(out.seed, task.tags);
    config.threads = 1;
    row.fingerprint = config.fingerprint();
    auto fail = [&](const detail::Failure& f) {
      row.failure_code = f.code;
      row.failure_reason = f.reason;
    };
    if (cell.missing) {
      fail({std::string(to_string(ErrorCode::IoError)), *cell.missing});
      return;
    }
    const auto& f = features.at(cell.features_path);
    const auto& t = tables.at(cell.attributes_path);
    if (const auto* e = std::get_if<detail::Failure>(&f)) return fail(*e);
    if (const auto* e = std::get_if<detail::Failure>(&t)) return fail(*e);
    const auto& matrix = *std::get<std::shared_ptr<const FeatureMatrix>>(f);
    row.n = matrix.rows();
    row.m = matrix.cols();
    try {
      AttributeVector attribute = read_attribute(*std::get<std::shared_ptr<const AttributeTable>>(t), task.spec);
      const AugmentedDataset dataset = pair_rows(matrix, std::move(attribute));
      row.result = estimate_expressivity(dataset, config, task.tags);
    } catch (...) {
      fail(detail::failure_from_current_exception());
    }
  };

  const auto workers = static_cast<std::size_t>(std::clamp<int>(parallelism, 1, std::max<int>(1, static_cast<int>(tasks.size()))));
  if (workers == 1) {
    for (std::size_t k = 0; k < tasks.size(); ++k) run_task(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < tasks.size(); k = next++) run_task(k);
      });
    }
  }
  out.finished = utc_timestamp();
  return out;
}

struct RankedAttribute {
  std::string name;
  double mean = 0.0;
  double std_dev = 0.0;
  bool tied_with_next = false;  // |mean - next mean| <= max of the two std devs
};

/// Descending by mean (name breaks exact ties so the order is input-order free).
inline std::vector<RankedAttribute> rank_attributes(const std::vector<ExpressivityResult>& results) {
  if (results.size() < 2) {
    throw Error(ErrorCode::InsufficientAttributes,
                "ranking needs >= 2 attributes, got " + std::to_string(results.size()));
  }
  std::vector<RankedAttribute> ranked;
  ranked.reserve(results.size());
  for (const auto& r : results) ranked.push_back({r.cell_tags.attribute, r.mean, r.std_dev, false});
  std::sort(ranked.begin(), ranked.end(), [](const RankedAttribute& a, const RankedAttribute& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.name < b.name;
  });
  for (std::size_t i = 0; i + 1 < ranked.size(); ++i) {
    ranked[i].tied_with_next =
        std::abs(ranked[i].mean - ranked[i + 1].mean) <= std::max(ranked[i].std_dev, ranked[i + 1].std_dev);
  }
  return ranked;
}

/// "bmi > pitch ≈ gender > yaw"
inline std::string format_ranking(const std::vector<RankedAttribute>& ranked) {
  std::string s;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    s += ranked[i].name;
    if (i + 1 < ranked.size()) s += ranked[i].tied_with_next ? " ≈ " : " > ";
  }
  return s;
}

/// Expressivity of identity itself, each label mapped to its own scalar.
inline ExpressivityResult identity_reference(const FeatureMatrix& features,
                                             std::span<const std::string> identity_labels,
                                             const EstimatorConfig& config, CellTags tags = {}) {
  const std::set<std::string_view> distinct(identity_labels.begin(), identity_labels.end());
  if (distinct.size() < 2) {
    throw Error(ErrorCode::SingleIdentity, "identity reference needs >= 2 identities, got " +
                                               std::to_string(distinct.size()));
  }
  AttributeSpec spec{tags.attribute.empty() ? "identity" : tags.attribute, AttributeKind::categorical_identity,
                     std::nullopt, Standardization::z_score};
  return estimate_expressivity(AugmentedDataset(features, standardize_labels(identity_labels, spec)), config,
                               std::move(tags));
}

}  // namespace expressivity
