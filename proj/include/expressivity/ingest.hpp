#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "expressivity/data_model.hpp"
#include "expressivity/errors.hpp"
#include "expressivity/mine.hpp"

namespace expressivity {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Embedding dumps
//
//   <name>.emb       16-byte magic, then n*m little-endian float32, row-major
//   <name>.emb.meta  JSON: {"n", "m", "dtype": "float32", "layout": "row-major",
//                    "source_tag"}
// ---------------------------------------------------------------------------

inline constexpr char kEmbeddingMagic[17] = "EXPRESSIVITY-EMB";
inline constexpr std::size_t kEmbeddingMagicSize = 16;

inline fs::path meta_path_for(const fs::path& emb) { return fs::path(emb.string() + ".meta"); }

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
  }
  return v;
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
inline void write_atomically(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

struct EmbeddingHeader {
  std::int64_t n = 0;
  std::int64_t m = 0;
  std::string dtype = "float32";
  std::string layout = "row-major";
  std::string source_tag;
};

inline EmbeddingHeader read_embedding_header(const fs::path& emb) {
  const fs::path meta = meta_path_for(emb);
  if (!fs::exists(meta)) throw Error(ErrorCode::MalformedHeader, "missing sidecar " + meta.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(meta));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, meta.string() + ": " + e.what());
  }
  EmbeddingHeader h;
  try {
    h.n = j.at("n").get<std::int64_t>();
    h.m = j.at("m").get<std::int64_t>();
    h.dtype = j.value("dtype", "float32");
    h.layout = j.value("layout", "row-major");
    h.source_tag = j.value("source_tag", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, meta.string() + ": " + e.what());
  }
  if (h.n < 1 || h.m < 1) throw Error(ErrorCode::MalformedHeader, meta.string() + ": n and m must be positive");
  if (h.dtype != "float32") throw Error(ErrorCode::MalformedHeader, meta.string() + ": unsupported dtype " + h.dtype);
  if (h.layout != "row-major") throw Error(ErrorCode::MalformedHeader, meta.string() + ": unsupported layout " + h.layout);
  return h;
}

/// Writes the dump and its sidecar. Values are narrowed to float32.
inline void write_embeddings(const fs::path& emb, const FeatureMatrix& features) {
  const Matrix& data = features.data();
  std::string bytes(kEmbeddingMagic, kEmbeddingMagicSize);
  bytes.reserve(kEmbeddingMagicSize + static_cast<std::size_t>(data.size()) * 4);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const auto word = detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(data(i, j))));
      char raw[4];
      std::memcpy(raw, &word, 4);
      bytes.append(raw, 4);
    }
  }
  nlohmann::json meta = {{"n", data.rows()},
                         {"m", data.cols()},
                         {"dtype", "float32"},
                         {"layout", "row-major"},
                         {"source_tag", features.source_tag()}};
  detail::write_atomically(emb, bytes);
  detail::write_atomically(meta_path_for(emb), meta.dump(2) + "\n");
}

inline FeatureMatrix read_embeddings(const fs::path& emb) {
  const EmbeddingHeader h = read_embedding_header(emb);
  const std::string bytes = detail::read_file(emb);
  if (bytes.size() < kEmbeddingMagicSize || std::memcmp(bytes.data(), kEmbeddingMagic, kEmbeddingMagicSize) != 0) {
    throw Error(ErrorCode::MalformedHeader, emb.string() + ": bad magic");
  }
  const std::size_t payload = bytes.size() - kEmbeddingMagicSize;
  const auto expected = static_cast<std::size_t>(h.n) * static_cast<std::size_t>(h.m) * 4;
  if (payload != expected) {
    throw Error(ErrorCode::PayloadSizeMismatch, emb.string() + ": header says " + std::to_string(h.n) + "x" +
                                                    std::to_string(h.m) + " (" + std::to_string(expected) +
                                                    " bytes), payload has " + std::to_string(payload));
  }
  Matrix data(h.n, h.m);
  const char* p = bytes.data() + kEmbeddingMagicSize;
  for (Eigen::Index i = 0; i < h.n; ++i) {
    for (Eigen::Index j = 0; j < h.m; ++j) {
      std::uint32_t word = 0;
      std::memcpy(&word, p, 4);
      p += 4;
      const float v = std::bit_cast<float>(detail::to_little_endian(word));
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteValue, emb.string() + ": row " + std::to_string(i) + ", column " +
                                                   std::to_string(j));
      }
      data(i, j) = v;
    }
  }
  return FeatureMatrix(std::move(data), h.source_tag);
}

// ---------------------------------------------------------------------------
// Attribute tables: comma-delimited UTF-8 text, header row, one row per sample
// in dump order. Missing cells are rejected.
// ---------------------------------------------------------------------------

struct AttributeTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t row_count() const noexcept { return rows.size(); }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] == name) return c;
    }
    return std::nullopt;
  }

  std::vector<std::string> column(std::string_view name) const {
    const auto c = find(name);
    if (!c) throw Error(ErrorCode::MissingColumn, "no column '" + std::string(name) + "'");
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row[*c]);
    return out;
  }

  /// Column parsed as reals; errors carry the 1-based data row and column.
  std::vector<double> numeric_column(std::string_view name) const;

  bool operator==(const AttributeTable&) const = default;
};

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_real(std::string_view text) {
  double v = 0.0;
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

inline std::vector<double> AttributeTable::numeric_column(std::string_view name) const {
  const auto c = find(name);
  if (!c) throw Error(ErrorCode::MissingColumn, "no column '" + std::string(name) + "'");
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto v = parse_real(rows[r][*c]);
    if (!v || !std::isfinite(*v)) {
      throw Error(ErrorCode::UnparsableValue, "row " + std::to_string(r + 1) + ", column '" +
                                                  std::string(name) + "': '" + rows[r][*c] + "'");
    }
    out.push_back(*v);
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw Error(ErrorCode::UnparsableValue, "line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(field));
  return fields;
}

inline std::string quote_csv_field(const std::string& f) {
  if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
  std::string out = "\"";
  for (const char c : f) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline AttributeTable parse_attribute_table(const std::string& text, const std::string& origin = "<memory>") {
  AttributeTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    const std::size_t record_line = line_no;
    // An odd quote count means a quoted field continues on the next line.
    std::string next;
    while (std::count(line.begin(), line.end(), '"') % 2 == 1 && std::getline(in, next)) {
      ++line_no;
      if (!next.empty() && next.back() == '\r') next.pop_back();
      line += '\n';
      line += next;
    }
    auto fields = detail::split_csv_line(line, record_line);
    if (!have_header) {
      table.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size()) {
      throw Error(ErrorCode::UnparsableValue, origin + " line " + std::to_string(line_no) + ": " +
                                                  std::to_string(fields.size()) + " fields, header has " +
                                                  std::to_string(table.columns.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (fields[c].empty()) {
        throw Error(ErrorCode::UnparsableValue, origin + " line " + std::to_string(line_no) +
                                                    ", column '" + table.columns[c] + "': missing value");
      }
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw Error(ErrorCode::MissingColumn, origin + ": header row required");
  return table;
}

inline AttributeTable read_attribute_table(const fs::path& path) {
  return parse_attribute_table(detail::read_file(path), path.string());
}

inline void write_attribute_table(const fs::path& path, const AttributeTable& table) {
  std::string text;
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c) text.push_back(',');
      text += detail::quote_csv_field(fields[c]);
    }
    text.push_back('\n');
  };
  emit(table.columns);
  for (const auto& row : table.rows) emit(row);
  detail::write_atomically(path, text);
}

inline constexpr std::string_view kHeightColumn = "height_m";
inline constexpr std::string_view kWeightColumn = "weight_kg";

inline bool is_bmi_name(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower == "bmi";
}

/// True when the table can supply `name`, directly or as derived BMI.
inline bool table_provides(const AttributeTable& table, std::string_view name) {
  if (table.find(name)) return true;
  return is_bmi_name(name) && table.find(kHeightColumn) && table.find(kWeightColumn);
}

/// One typed, standardized attribute column. A BMI request with no BMI column
/// is derived row by row from height_m and weight_kg.
inline AttributeVector read_attribute(const AttributeTable& table, const AttributeSpec& spec) {
  if (!table.find(spec.name) && is_bmi_name(spec.name) && table.find(kHeightColumn) &&
      table.find(kWeightColumn)) {
    const auto heights = table.numeric_column(kHeightColumn);
    const auto weights = table.numeric_column(kWeightColumn);
    std::vector<double> bmi(heights.size());
    for (std::size_t r = 0; r < bmi.size(); ++r) {
      try {
        bmi[r] = derive_bmi(weights[r], heights[r]);
      } catch (const Error& e) {
        throw Error(e.code(), "row " + std::to_string(r + 1) + ": " + e.what());
      }
    }
    return standardize(bmi, spec);
  }
  const auto labels = table.column(spec.name);
  if (spec.kind == AttributeKind::continuous) return standardize(table.numeric_column(spec.name), spec);
  return standardize_labels(labels, spec);
}

inline std::map<std::string, AttributeVector> read_attributes(const fs::path& path,
                                                              std::span<const AttributeSpec> specs) {
  const AttributeTable table = read_attribute_table(path);
  std::map<std::string, AttributeVector> out;
  for (const auto& spec : specs) out.emplace(spec.name, read_attribute(table, spec));
  return out;
}

/// Pairs a dump with an attribute column, reporting both row counts on mismatch.
inline AugmentedDataset pair_rows(FeatureMatrix features, AttributeVector attribute) {
  if (features.rows() != attribute.size()) {
    throw Error(ErrorCode::RowCountMismatch, "features have " + std::to_string(features.rows()) +
                                                 " rows but attribute '" + attribute.spec().name + "' has " +
                                                 std::to_string(attribute.size()));
  }
  return augment(std::move(features), std::move(attribute));
}

// ---------------------------------------------------------------------------
// Sweep manifests (JSON)
// ---------------------------------------------------------------------------

struct ManifestCell {
  fs::path features_path;
  fs::path attributes_path;
  std::vector<std::string> attribute_names;
  std::string layer_tag;
  std::string epoch_tag;
  std::string modality_tag;
  /// Set when the manifest was loaded with deferred path checks and a
  /// referenced file is absent; the sweep records it as a row failure.
  std::optional<std::string> missing;
};

/// How load_manifest treats referenced files that do not exist.
enum class PathPolicy { require, defer };

struct SweepManifest {
  std::vector<ManifestCell> cells;
  EstimatorConfig estimator;
  std::map<std::string, AttributeSpec> attribute_specs;
  std::optional<std::string> identity_column;
  std::optional<std::uint64_t> seed;

  /// Spec for `name`: the declared one, else continuous with z-score.
  AttributeSpec spec_for(const std::string& name) const {
    if (auto it = attribute_specs.find(name); it != attribute_specs.end()) return it->second;
    return AttributeSpec{name, AttributeKind::continuous, std::nullopt, Standardization::z_score};
  }
};

namespace detail {

[[noreturn]] inline void schema_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::SchemaError, field + ": " + what);
}

inline void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> known,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      schema_error(where.empty() ? key : where + "." + key, "unknown field");
    }
  }
}

template <typename T>
T field_as(const nlohmann::json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    schema_error(where.empty() ? key : where + "." + key, e.what());
  }
}

inline std::string tag_string(const nlohmann::json& cell, const char* key, const std::string& where) {
  if (!cell.contains(key)) return "";
  const auto& v = cell.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  schema_error(where + "." + key, "expected string or integer");
}

}  // namespace detail

/// Applies the estimator overrides of a manifest or CLI JSON object.
inline void apply_estimator_overrides(const nlohmann::json& e, EstimatorConfig& cfg,
                                      const std::string& where = "estimator") {
  using detail::field_as;
  detail::reject_unknown_keys(e,
                              {"runs", "eval_batches", "learning_rate", "batch_size", "max_iterations",
                               "hidden", "window", "rel_tol", "ema_decay", "scale_floor", "convergence",
                               "precision", "holdout_fraction", "ema_gradient_correction",
                               "stabilize_logsumexp", "standardize_features", "adam_beta1", "adam_beta2", "adam_epsilon"},
                              where);
  if (e.contains("runs")) cfg.repetitions = field_as<int>(e, "runs", where);
  if (e.contains("eval_batches")) cfg.eval_batches = field_as<int>(e, "eval_batches", where);
  if (e.contains("learning_rate")) cfg.trainer.learning_rate = field_as<double>(e, "learning_rate", where);
  if (e.contains("batch_size")) cfg.trainer.batch_size = field_as<long>(e, "batch_size", where);
  if (e.contains("max_iterations")) cfg.trainer.max_iterations = field_as<long>(e, "max_iterations", where);
  if (e.contains("adam_beta1")) cfg.trainer.adam_beta1 = field_as<double>(e, "adam_beta1", where);
  if (e.contains("adam_beta2")) cfg.trainer.adam_beta2 = field_as<double>(e, "adam_beta2", where);
  if (e.contains("adam_epsilon")) cfg.trainer.adam_epsilon = field_as<double>(e, "adam_epsilon", where);
  if (e.contains("hidden")) {
    const auto hidden = field_as<std::vector<long>>(e, "hidden", where);
    if (hidden.size() != 2) detail::schema_error(where + ".hidden", "expected two widths");
    cfg.trainer.hidden1 = hidden[0];
    cfg.trainer.hidden2 = hidden[1];
  }
  if (e.contains("window")) cfg.convergence.window = field_as<long>(e, "window", where);
  if (e.contains("rel_tol")) cfg.convergence.rel_tol = field_as<double>(e, "rel_tol", where);
  if (e.contains("ema_decay")) cfg.convergence.ema_decay = field_as<double>(e, "ema_decay", where);
  if (e.contains("scale_floor")) cfg.convergence.scale_floor = field_as<double>(e, "scale_floor", where);
  if (e.contains("convergence")) cfg.convergence.enabled = field_as<bool>(e, "convergence", where);
  if (e.contains("holdout_fraction")) cfg.holdout_fraction = field_as<double>(e, "holdout_fraction", where);
  if (e.contains("ema_gradient_correction")) {
    cfg.ema_gradient_correction = field_as<bool>(e, "ema_gradient_correction", where);
  }
  if (e.contains("stabilize_logsumexp")) {
    cfg.stabilize_logsumexp = field_as<bool>(e, "stabilize_logsumexp", where);
  }
  if (e.contains("standardize_features")) {
    cfg.standardize_features = field_as<bool>(e, "standardize_features", where);
  }
  if (e.contains("precision")) {
    const auto p = field_as<std::string>(e, "precision", where);
    if (p == "float32") {
      cfg.precision = Precision::float32;
    } else if (p == "float64") {
      cfg.precision = Precision::float64;
    } else {
      detail::schema_error(where + ".precision", "expected float32 or float64");
    }
  }
  if (cfg.repetitions < 1) detail::schema_error(where + ".runs", "must be >= 1");
  if (cfg.eval_batches < 1) detail::schema_error(where + ".eval_batches", "must be >= 1");
}

/// Parses and validates a manifest. Relative paths resolve against the
/// manifest's directory; every referenced file must exist and every
/// attribute name must be a column (or derivable BMI) of its table.
inline SweepManifest parse_manifest(const std::string& text, const fs::path& base_dir,
                                    PathPolicy policy = PathPolicy::require) {
  using detail::field_as;
  using detail::schema_error;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    schema_error("<root>", e.what());
  }
  if (!j.is_object()) schema_error("<root>", "expected an object");
  detail::reject_unknown_keys(j, {"seed", "estimator", "attributes", "identity", "cells"}, "");

  SweepManifest manifest;
  if (j.contains("seed")) manifest.seed = field_as<std::uint64_t>(j, "seed", "");
  if (j.contains("estimator")) apply_estimator_overrides(j.at("estimator"), manifest.estimator);
  if (j.contains("attributes")) {
    for (const auto& [name, spec_json] : j.at("attributes").items()) {
      const std::string where = "attributes." + name;
      detail::reject_unknown_keys(spec_json, {"kind", "standardization", "units"}, where);
      AttributeSpec spec{name, AttributeKind::continuous, std::nullopt, Standardization::z_score};
      try {
        if (spec_json.contains("kind")) spec.kind = parse_attribute_kind(field_as<std::string>(spec_json, "kind", where));
        if (spec_json.contains("standardization")) {
          spec.standardization = parse_standardization(field_as<std::string>(spec_json, "standardization", where));
        }
      } catch (const Error& e) {
        schema_error(where, e.what());
      }
      if (spec_json.contains("units")) spec.units = field_as<std::string>(spec_json, "units", where);
      manifest.attribute_specs.emplace(name, std::move(spec));
    }
  }
  if (j.contains("identity")) manifest.identity_column = field_as<std::string>(j, "identity", "");

  if (!j.contains("cells") || !j.at("cells").is_array() || j.at("cells").empty()) {
    schema_error("cells", "expected a nonempty array");
  }
  std::map<fs::path, AttributeTable> header_cache;
  const auto& cells = j.at("cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string where = "cells[" + std::to_string(i) + "]";
    const auto& c = cells[i];
    if (!c.is_object()) schema_error(where, "expected an object");
    detail::reject_unknown_keys(c, {"features", "attributes", "attribute_names", "layer", "epoch", "modality"}, where);
    ManifestCell cell;
    auto resolve = [&](const char* key) {
      fs::path p = field_as<std::string>(c, key, where);
      if (p.is_relative()) p = base_dir / p;
      p = p.lexically_normal();
      if (!fs::exists(p)) {
        if (policy == PathPolicy::require) schema_error(where + "." + key, "file not found: " + p.string());
        if (!cell.missing) cell.missing = where + "." + key + ": file not found: " + p.string();
      }
      return p;
    };
    cell.features_path = resolve("features");
    cell.attributes_path = resolve("attributes");
    cell.attribute_names = field_as<std::vector<std::string>>(c, "attribute_names", where);
    if (cell.attribute_names.empty()) schema_error(where + ".attribute_names", "expected at least one name");
    cell.layer_tag = detail::tag_string(c, "layer", where);
    cell.epoch_tag = detail::tag_string(c, "epoch", where);
    cell.modality_tag = detail::tag_string(c, "modality", where);

    if (cell.missing) {
      manifest.cells.push_back(std::move(cell));
      continue;
    }
    // Header check only; values are parsed per row at sweep time.
    auto it = header_cache.find(cell.attributes_path);
    if (it == header_cache.end()) {
      std::ifstream in(cell.attributes_path);
      std::string header;
      std::getline(in, header);
      if (!header.empty() && header.back() == '\r') header.pop_back();
      if (header.rfind("\xEF\xBB\xBF", 0) == 0) header.erase(0, 3);
      AttributeTable t;
      try {
        t.columns = detail::split_csv_line(header, 1);
      } catch (const Error& e) {
        schema_error(where + ".attributes", e.what());
      }
      it = header_cache.emplace(cell.attributes_path, std::move(t)).first;
    }
    for (std::size_t k = 0; k < cell.attribute_names.size(); ++k) {
      if (!table_provides(it->second, cell.attribute_names[k])) {
        schema_error(where + ".attribute_names[" + std::to_string(k) + "]",
                     "column '" + cell.attribute_names[k] + "' not in " + cell.attributes_path.string());
      }
    }
    if (manifest.identity_column && !table_provides(it->second, *manifest.identity_column)) {
      schema_error("identity", "column '" + *manifest.identity_column + "' not in " +
                                   cell.attributes_path.string());
    }
    manifest.cells.push_back(std::move(cell));
  }
  return manifest;
}

inline SweepManifest load_manifest(const fs::path& path, PathPolicy policy = PathPolicy::require) {
  if (!fs::exists(path)) throw Error(ErrorCode::SchemaError, "manifest not found: " + path.string());
  return parse_manifest(detail::read_file(path), path.parent_path(), policy);
}

}  // namespace expressivity
