// expressivity: estimate, sweep, synthesize, check.
//
// Exit codes: 0 success, 1 partial failure (sweep rows or validation checks),
// 2 usage or contract error, 3 internal error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "expressivity/expressivity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace expressivity;

namespace {

enum Exit { kOk = 0, kPartial = 1, kUsage = 2, kInternal = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::optional<fs::path> out;
  std::string log_level = "info";
};

/// Estimator flags shared by `estimate`; unset flags keep library defaults.
struct EstimatorFlags {
  std::optional<int> runs;
  std::optional<int> eval_batches;
  std::optional<double> learning_rate;
  std::optional<long> batch_size;
  std::optional<long> max_iterations;
  std::vector<long> hidden;
  std::optional<std::string> precision;
  std::optional<double> holdout_fraction;
  bool fixed_iterations = false;
  bool ema_correction = false;
  bool standardize_features = false;

  void attach(CLI::App* app) {
    app->add_option("--runs", runs, "independent estimator runs M (default 5)")->check(CLI::PositiveNumber);
    app->add_option("--eval-batches", eval_batches, "frozen-network evaluation batches K")->check(CLI::PositiveNumber);
    app->add_option("--learning-rate", learning_rate, "Adam learning rate");
    app->add_option("--batch-size", batch_size, "mini-batch size b");
    app->add_option("--max-iterations", max_iterations, "iteration cap");
    app->add_option("--hidden", hidden, "two hidden widths, e.g. --hidden 512 128")->expected(2);
    app->add_option("--precision", precision, "training precision")->check(CLI::IsMember({"float32", "float64"}));
    app->add_option("--holdout-fraction", holdout_fraction, "fraction of rows held out for monitoring and scoring");
    app->add_flag("--fixed-iterations", fixed_iterations, "disable early stopping; always run --max-iterations");
    app->add_flag("--ema-correction", ema_correction, "use the moving-average denominator gradient correction");
    app->add_flag("--standardize-features", standardize_features, "z-score each feature dimension before estimation");
  }

  json overrides() const {
    json e = json::object();
    if (runs) e["runs"] = *runs;
    if (eval_batches) e["eval_batches"] = *eval_batches;
    if (learning_rate) e["learning_rate"] = *learning_rate;
    if (batch_size) e["batch_size"] = *batch_size;
    if (max_iterations) e["max_iterations"] = *max_iterations;
    if (!hidden.empty()) e["hidden"] = hidden;
    if (precision) e["precision"] = *precision;
    if (holdout_fraction) e["holdout_fraction"] = *holdout_fraction;
    if (fixed_iterations) e["convergence"] = false;
    if (ema_correction) e["ema_gradient_correction"] = true;
    if (standardize_features) e["standardize_features"] = true;
    return e;
  }
};

std::uint64_t resolve_seed(const Globals& g) {
  if (g.seed) return *g.seed;
  std::random_device rd;
  const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  spdlog::warn("no --seed given; using seed {} (pass --seed {} to reproduce)", seed, seed);
  return seed;
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << "\n";
}

json result_json(const ExpressivityResult& r) {
  return {{"attribute", r.cell_tags.attribute},
          {"mean_nats", r.mean},
          {"std_nats", r.std_dev},
          {"per_run", r.per_run},
          {"fingerprint", r.config_fingerprint}};
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateArgs {
  fs::path features;
  fs::path attributes;
  std::vector<std::string> names;
  std::vector<std::string> kinds;  // name=kind
  std::string standardization = "z-score";
  EstimatorFlags flags;
};

int cmd_estimate(const Globals& g, const EstimateArgs& a) {
  EstimatorConfig config;
  apply_estimator_overrides(a.flags.overrides(), config, "flags");
  config.threads = g.threads;
  const std::uint64_t seed = resolve_seed(g);

  std::map<std::string, AttributeKind> kind_of;
  for (const auto& kv : a.kinds) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--kind expects name=kind, got '" + kv + "'");
    kind_of[kv.substr(0, eq)] = parse_attribute_kind(kv.substr(eq + 1));
  }

  const FeatureMatrix features = read_embeddings(a.features);
  const AttributeTable table = read_attribute_table(a.attributes);
  spdlog::info("features {}x{} from {}", features.rows(), features.cols(), a.features.string());

  json out{{"seed", seed}, {"n", features.rows()}, {"m", features.cols()}, {"units", "nats"},
           {"fingerprint", config.fingerprint()}, {"results", json::array()}};
  for (const auto& name : a.names) {
    AttributeSpec spec{name, AttributeKind::continuous, std::nullopt, parse_standardization(a.standardization)};
    if (auto it = kind_of.find(name); it != kind_of.end()) spec.kind = it->second;
    if (!table_provides(table, name)) {
      throw Error(ErrorCode::MissingColumn, "attribute '" + name + "' not in " + a.attributes.string());
    }
    const AugmentedDataset dataset = pair_rows(features, read_attribute(table, spec));
    const CellTags tags{"", "", "", name};
    config.master_seed = row_seed(seed, tags);
    spdlog::info("estimating '{}' ({} runs)", name, config.repetitions);
    const ExpressivityResult r = estimate_expressivity(dataset, config, tags);
    spdlog::info("'{}': {:.4f} +/- {:.4f} nats", name, r.mean, r.std_dev);
    out["results"].push_back(result_json(r));
  }
  if (g.out) write_json_file(*g.out / "estimate.json", out);
  print_json(out);
  return kOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

int cmd_sweep(const Globals& g, const fs::path& manifest_path, std::optional<int> parallelism) {
  SweepManifest manifest = load_manifest(manifest_path, PathPolicy::defer);
  if (g.seed) {
    manifest.seed = *g.seed;
  } else if (!manifest.seed) {
    manifest.seed = resolve_seed(g);
  }
  const int workers = parallelism.value_or(g.threads);
  const fs::path out_dir = g.out.value_or("expressivity-out");
  spdlog::info("sweep: {} cells, {} workers, seed {}", manifest.cells.size(), workers, *manifest.seed);
  const SweepResult result = run_sweep(manifest, workers);
  for (const auto& row : result.rows) {
    if (!row.ok()) {
      spdlog::error("row {}/{}/{}/{} failed: {}", row.tags.layer, row.tags.epoch, row.tags.modality,
                    row.tags.attribute, row.failure_reason);
    }
  }
  emit_report(result, out_dir);
  const std::size_t failed = result.failed_count();
  json summary = sweep_json(result, false);
  summary.erase("rows");
  summary["rows"] = result.rows.size();
  summary["ok_rows"] = result.rows.size() - failed;
  summary["failed_rows"] = failed;
  summary["out"] = out_dir.string();
  print_json(summary);
  return failed == 0 ? kOk : kPartial;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthCommon {
  std::string name;
  long n = 10000;
};

fs::path out_dir_of(const Globals& g) { return g.out.value_or("."); }

void write_pair(const fs::path& dir, const std::string& name, const FeatureMatrix& features, AttributeTable table) {
  fs::create_directories(dir);
  write_embeddings(dir / (name + ".emb"), features);
  write_attribute_table(dir / (name + ".csv"), table);
}

AttributeTable single_column(const std::string& column, const Vector& values) {
  AttributeTable t;
  t.columns = {column};
  for (Eigen::Index i = 0; i < values.size(); ++i) t.rows.push_back({format_real(values[i])});
  return t;
}

int finish_synth(const Globals& g, const std::string& name, json truth) {
  const fs::path dir = out_dir_of(g);
  write_json_file(dir / (name + ".truth.json"), truth);
  truth["files"] = {(dir / (name + ".emb")).string(), (dir / (name + ".csv")).string(),
                    (dir / (name + ".truth.json")).string()};
  print_json(truth);
  return kOk;
}

int synth_gaussian(const Globals& g, const SynthCommon& c, double rho) {
  const auto data = gen_gaussian_pair(rho, c.n, resolve_seed(g));
  write_pair(out_dir_of(g), c.name, data.features(), single_column("a", data.attribute().values()));
  return finish_synth(g, c.name,
                      {{"generator", "gaussian"}, {"rho", rho}, {"n", c.n}, {"mi_nats", gaussian_mi_analytic(rho)}});
}

int synth_independent(const Globals& g, const SynthCommon& c, long m) {
  const auto data = gen_independent(c.n, m, resolve_seed(g));
  write_pair(out_dir_of(g), c.name, data.features(), single_column("a", data.attribute().values()));
  return finish_synth(g, c.name, {{"generator", "independent"}, {"n", c.n}, {"m", m}, {"mi_nats", 0.0}});
}

int synth_channel(const Globals& g, const SynthCommon& c, int k, double flip) {
  const auto sample = gen_discrete_channel(k, flip, c.n, resolve_seed(g));
  write_pair(out_dir_of(g), c.name, sample.dataset.features(),
             single_column("symbol", sample.dataset.attribute().values()));
  return finish_synth(g, c.name,
                      {{"generator", "channel"},
                       {"k", k},
                       {"flip", flip},
                       {"n", c.n},
                       {"population_mi_nats", discrete_mi_plugin(sample.population)},
                       {"empirical_mi_nats", discrete_mi_plugin(DiscreteJoint(sample.empirical))}});
}

struct PlantedArgs {
  std::vector<double> signals;
  std::vector<std::string> names;
  std::vector<std::string> kinds;
  std::optional<double> identity_signal;
  int identities = 16;
  long m = 32;
  double sigma = 1.0;
};

int synth_planted(const Globals& g, const SynthCommon& c, const PlantedArgs& p) {
  PlantedInfoConfig config;
  config.n = c.n;
  config.m = p.m;
  config.sigma = p.sigma;
  config.rng_seed = resolve_seed(g);
  if (p.identity_signal) {
    config.attributes.push_back({"identity", *p.identity_signal, AttributeKind::categorical_identity, p.identities});
  }
  for (std::size_t j = 0; j < p.signals.size(); ++j) {
    PlantedAttribute attr;
    attr.name = j < p.names.size() ? p.names[j] : "attr" + std::to_string(j + 1);
    attr.signal = p.signals[j];
    if (j < p.kinds.size()) attr.kind = parse_attribute_kind(p.kinds[j]);
    attr.identities = p.identities;
    config.attributes.push_back(attr);
  }
  const PlantedEmbeddings planted = gen_planted_embeddings(config);
  AttributeTable table;
  json truth{{"generator", "planted"}, {"n", c.n}, {"m", p.m}, {"sigma", p.sigma}, {"attributes", json::array()}};
  for (std::size_t j = 0; j < config.attributes.size(); ++j) {
    table.columns.push_back(config.attributes[j].name);
    truth["attributes"].push_back({{"name", config.attributes[j].name},
                                   {"kind", std::string(to_string(config.attributes[j].kind))},
                                   {"signal", config.attributes[j].signal},
                                   {"mi_nats", planted.true_mi[j]}});
  }
  for (Eigen::Index i = 0; i < c.n; ++i) {
    std::vector<std::string> row;
    for (const auto& labels : planted.labels) row.push_back(labels[static_cast<std::size_t>(i)]);
    table.rows.push_back(std::move(row));
  }
  write_pair(out_dir_of(g), c.name, planted.features, std::move(table));
  return finish_synth(g, c.name, truth);
}

/// Pseudo-layer grid: the same planted attributes with signal growing with
/// depth, one dump and one table per layer, plus a ready-to-run manifest
/// with one cell per (layer, attribute).
int synth_layers(const Globals& g, const SynthCommon& c, const std::vector<std::string>& layers, long m) {
  struct Planted {
    const char* name;
    double signal;
    AttributeKind kind;
    double center;
    double scale;
  };
  const Planted attrs[] = {{"bmi", 0.9, AttributeKind::continuous, 24.0, 4.0},
                           {"pitch", 0.6, AttributeKind::continuous, 0.0, 12.0},
                           {"gender", 0.45, AttributeKind::binary, 0.0, 1.0},
                           {"yaw", 0.3, AttributeKind::continuous, 0.0, 35.0}};
  const std::uint64_t seed = resolve_seed(g);
  const fs::path dir = out_dir_of(g);
  fs::create_directories(dir);

  json manifest{{"seed", seed},
                {"estimator", {{"runs", 3}, {"hidden", {64, 32}}, {"max_iterations", 4000}}},
                {"attributes",
                 {{"bmi", {{"kind", "continuous"}, {"units", "kg/m^2"}}},
                  {"pitch", {{"kind", "continuous"}, {"units", "degrees"}}},
                  {"gender", {{"kind", "binary"}}},
                  {"yaw", {{"kind", "continuous"}, {"units", "degrees"}}}}},
                {"cells", json::array()}};
  json truth{{"generator", "layers"}, {"n", c.n}, {"m", m}, {"layers", json::array()}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const double depth = layers.size() > 1 ? static_cast<double>(l) / static_cast<double>(layers.size() - 1) : 1.0;
    PlantedInfoConfig config;
    config.n = c.n;
    config.m = m;
    config.rng_seed = derive_seed(seed, l);
    config.attributes.push_back({"subject", 1.2, AttributeKind::categorical_identity, 16});
    for (const auto& a : attrs) config.attributes.push_back({a.name, a.signal * (0.35 + 0.65 * depth), a.kind, 16});
    const PlantedEmbeddings planted = gen_planted_embeddings(config);

    AttributeTable table;
    table.columns = {"subject", "bmi", "pitch", "gender", "yaw"};
    for (Eigen::Index i = 0; i < c.n; ++i) {
      const auto row = static_cast<std::size_t>(i);
      std::vector<std::string> fields{planted.labels[0][row]};
      for (std::size_t j = 0; j < std::size(attrs); ++j) {
        const std::string& raw = planted.labels[j + 1][row];
        if (attrs[j].kind == AttributeKind::binary) {
          fields.push_back(raw == "1" ? "M" : "F");
        } else {
          fields.push_back(format_real(attrs[j].center + attrs[j].scale * std::stod(raw)));
        }
      }
      table.rows.push_back(std::move(fields));
    }
    const std::string stem = c.name + "_layer" + layers[l];
    write_pair(dir, stem, FeatureMatrix(planted.features.data(), "layer" + layers[l]), std::move(table));

    json layer_truth{{"layer", layers[l]}};
    for (std::size_t j = 0; j < config.attributes.size(); ++j) {
      layer_truth[config.attributes[j].name] = planted.true_mi[j];
    }
    truth["layers"].push_back(layer_truth);
    for (const auto& a : attrs) {
      manifest["cells"].push_back({{"features", stem + ".emb"},
                                   {"attributes", stem + ".csv"},
                                   {"attribute_names", {a.name}},
                                   {"layer", layers[l]}});
    }
  }
  write_json_file(dir / (c.name + "_manifest.json"), manifest);
  write_json_file(dir / (c.name + ".truth.json"), truth);
  print_json({{"manifest", (dir / (c.name + "_manifest.json")).string()},
              {"cells", manifest["cells"].size()},
              {"truth", truth}});
  return kOk;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

Eigen::MatrixXd parse_counts(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream rs(text);
  std::string row;
  while (std::getline(rs, row, ';')) {
    std::vector<double> values;
    std::stringstream cs(row);
    std::string cell;
    while (std::getline(cs, cell, ',')) {
      const auto v = parse_real(cell);
      if (!v) throw Error(ErrorCode::UnparsableValue, "--counts: cannot parse '" + cell + "'");
      values.push_back(*v);
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw Error(ErrorCode::InvalidArgument, "--counts: rows have different lengths");
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "--counts is empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

struct BinnedArgs {
  fs::path features;
  fs::path attributes;
  std::string attribute;
  int bins = 16;
  long column = 0;
};

int oracle_binned(const BinnedArgs& b) {
  const FeatureMatrix f = read_embeddings(b.features);
  const AttributeTable table = read_attribute_table(b.attributes);
  if (b.column < 0 || b.column >= f.cols()) {
    throw Error(ErrorCode::InvalidArgument, "--column " + std::to_string(b.column) + " out of range for m=" +
                                                std::to_string(f.cols()));
  }
  const std::vector<double> a = table.numeric_column(b.attribute);
  if (static_cast<Eigen::Index>(a.size()) != f.rows()) {
    throw Error(ErrorCode::RowCountMismatch, "features have " + std::to_string(f.rows()) + " rows, attributes have " +
                                                 std::to_string(a.size()));
  }
  std::vector<double> x(a.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = f.data()(static_cast<Eigen::Index>(i), b.column);
  print_json({{"oracle", "binned"}, {"bins", b.bins}, {"mi_nats", binned_mi(x, a, b.bins)}});
  return kOk;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int cmd_validate(const Globals& g, bool quick) {
  ValidateOptions options;
  options.quick = quick;
  if (g.seed) options.seed = *g.seed;
  spdlog::info("running {} validation suite", quick ? "quick" : "full");
  const auto results = run_validation(options);
  std::size_t failed = 0;
  double total = 0.0;
  std::printf("%-20s %-6s %9s  %s\n", "check", "result", "seconds", "detail");
  for (const auto& r : results) {
    std::printf("%-20s %-6s %9.2f  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds, r.detail.c_str());
    failed += r.passed ? 0 : 1;
    total += r.seconds;
  }
  std::printf("%zu/%zu checks passed in %.1f s\n", results.size() - failed, results.size(), total);
  if (failed) spdlog::error("{} validation check(s) FAILED", failed);
  return failed == 0 ? kOk : kPartial;
}

int run(int argc, char** argv) {
  CLI::App app{"Mutual-information expressivity of embeddings with respect to attributes"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--seed", g.seed, "master seed; all randomness derives from it");
  app.add_option("--threads", g.threads, "worker threads (EXPRESSIVITY_THREADS overrides)")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output directory");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "estimate expressivity of attributes for one embedding dump");
  estimate->add_option("--features", est.features, ".emb dump")->required();
  estimate->add_option("--attributes", est.attributes, "attribute table (.csv)")->required();
  estimate->add_option("--attribute", est.names, "attribute column(s) to estimate")->required();
  estimate->add_option("--kind", est.kinds, "attribute kind as name=kind (continuous, binary, categorical-identity)");
  estimate->add_option("--standardization", est.standardization, "z-score or none")
      ->check(CLI::IsMember({"z-score", "z_score", "none"}));
  est.flags.attach(estimate);

  fs::path manifest_path;
  std::optional<int> parallelism;
  auto* sweep = app.add_subcommand("sweep", "run a manifest grid and write sweep.csv, sweep.json and plots");
  sweep->add_option("--manifest", manifest_path, "sweep manifest (JSON)")->required();
  sweep->add_option("--parallelism", parallelism, "sweep workers (defaults to --threads)")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "write synthetic .emb/.csv pairs with known MI");
  synth->require_subcommand(1);
  auto add_common = [](CLI::App* sub, SynthCommon& c) {
    sub->add_option("--name", c.name, "output file stem");
    sub->add_option("--n", c.n, "samples")->check(CLI::Range(2L, 100000000L));
  };
  SynthCommon gauss_c{"gaussian", 10000}, indep_c{"independent", 10000}, channel_c{"channel", 10000},
      planted_c{"planted", 5000}, layers_c{"demo", 2000};
  double rho = 0.5;
  auto* s_gauss = synth->add_subcommand("gaussian", "bivariate Gaussian pair, m = 1");
  s_gauss->add_option("--rho", rho, "correlation")->required();
  add_common(s_gauss, gauss_c);
  long indep_m = 1;
  auto* s_indep = synth->add_subcommand("independent", "features independent of the attribute");
  s_indep->add_option("--m", indep_m, "feature dimension")->check(CLI::PositiveNumber);
  add_common(s_indep, indep_c);
  int k = 8;
  double flip = 0.0;
  auto* s_channel = synth->add_subcommand("channel", "symmetric k-ary channel");
  s_channel->add_option("--k", k, "alphabet size")->check(CLI::Range(2, 1 << 20));
  s_channel->add_option("--flip", flip, "flip probability")->check(CLI::Range(0.0, 1.0));
  add_common(s_channel, channel_c);
  PlantedArgs planted;
  auto* s_planted = synth->add_subcommand("planted", "attributes planted along orthogonal feature directions");
  s_planted->add_option("--signals", planted.signals, "signal strength per attribute")->delimiter(',')->required();
  s_planted->add_option("--names", planted.names, "attribute names")->delimiter(',');
  s_planted->add_option("--kinds", planted.kinds, "attribute kinds")->delimiter(',');
  s_planted->add_option("--identity-signal", planted.identity_signal, "also plant a categorical identity");
  s_planted->add_option("--identities", planted.identities, "identity count")->check(CLI::Range(2, 1 << 20));
  s_planted->add_option("--m", planted.m, "feature dimension")->check(CLI::PositiveNumber);
  s_planted->add_option("--sigma", planted.sigma, "noise level");
  add_common(s_planted, planted_c);
  std::vector<std::string> layers{"2", "4", "6", "9", "12"};
  long layers_m = 32;
  auto* s_layers = synth->add_subcommand("layers", "pseudo-layer grid plus a sweep manifest");
  s_layers->add_option("--layers", layers, "layer tags")->delimiter(',');
  s_layers->add_option("--m", layers_m, "feature dimension")->check(CLI::PositiveNumber);
  add_common(s_layers, layers_c);

  auto* oracle = app.add_subcommand("oracle", "analytic and plug-in MI references");
  oracle->require_subcommand(1);
  double o_rho = 0.0;
  auto* o_gauss = oracle->add_subcommand("gaussian", "-1/2 ln(1 - rho^2)");
  o_gauss->add_option("--rho", o_rho, "correlation")->required();
  std::string counts;
  auto* o_discrete = oracle->add_subcommand("discrete", "plug-in MI of a count table");
  o_discrete->add_option("--counts", counts, "rows separated by ';', cells by ',', e.g. \"3,1;1,3\"")->required();
  BinnedArgs binned;
  auto* o_binned = oracle->add_subcommand("binned", "equal-width binned MI of one feature column and an attribute");
  o_binned->add_option("--features", binned.features, ".emb dump")->required();
  o_binned->add_option("--attributes", binned.attributes, "attribute table")->required();
  o_binned->add_option("--attribute", binned.attribute, "attribute column")->required();
  o_binned->add_option("--bins", binned.bins, "bins per axis")->check(CLI::Range(2, 1 << 16));
  o_binned->add_option("--column", binned.column, "feature column");

  bool quick = false;
  auto* validate = app.add_subcommand("validate", "run the built-in oracle checks");
  validate->add_flag("--quick", quick, "reduced sizes (under a minute)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  auto logger = spdlog::stderr_color_mt("expressivity");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  if (const char* env = std::getenv("EXPRESSIVITY_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t < 1) throw std::invalid_argument(env);
      g.threads = t;
    } catch (const std::exception&) {
      spdlog::error("EXPRESSIVITY_THREADS must be a positive integer, got '{}'", env);
      return kUsage;
    }
  }

  if (estimate->parsed()) return cmd_estimate(g, est);
  if (sweep->parsed()) return cmd_sweep(g, manifest_path, parallelism);
  if (s_gauss->parsed()) return synth_gaussian(g, gauss_c, rho);
  if (s_indep->parsed()) return synth_independent(g, indep_c, indep_m);
  if (s_channel->parsed()) return synth_channel(g, channel_c, k, flip);
  if (s_planted->parsed()) return synth_planted(g, planted_c, planted);
  if (s_layers->parsed()) return synth_layers(g, layers_c, layers, layers_m);
  if (o_gauss->parsed()) {
    print_json({{"oracle", "gaussian"}, {"rho", o_rho}, {"mi_nats", gaussian_mi_analytic(o_rho)}});
    return kOk;
  }
  if (o_discrete->parsed()) {
    print_json({{"oracle", "discrete"}, {"mi_nats", discrete_mi_plugin(DiscreteJoint(parse_counts(counts)))}});
    return kOk;
  }
  if (o_binned->parsed()) return oracle_binned(binned);
  if (validate->parsed()) return cmd_validate(g, quick);
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    const bool internal = e.code() == ErrorCode::Diverged || e.code() == ErrorCode::NonFiniteGradient;
    spdlog::error("{}", e.what());
    return internal ? kInternal : kUsage;
  } catch (const std::exception& e) {
    spdlog::critical("internal error: {}", e.what());
    return kInternal;
  }
}
