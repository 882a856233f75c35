// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Tolerances are fixed below.
#include <sys/wait.h>

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "expressivity/expressivity.hpp"

using namespace expressivity;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGaussianTol = 0.08;
constexpr double kRuntimeBudgetSeconds = 180.0;
constexpr double kNullTol = 0.05;
constexpr double kCopyLow = 1.8, kCopyHigh = 2.2;
constexpr double kBscTol = 0.05;
constexpr double kPluginTol = 1e-12;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradAgreeFraction = 0.99;
constexpr double kLowerBoundSlack = 0.1;
constexpr int kMonotoneTrials = 20;
constexpr int kRankingTrials = 20;
constexpr int kRankingRequired = 19;
constexpr int kRoundTripCases = 100;
constexpr double kShiftTol = 1e-9;

// Reduced statistics network for the repeated-trial criteria (6 and 7).
constexpr Eigen::Index kTrialHidden1 = 64, kTrialHidden2 = 32;

struct Case {
  std::string label;
  double estimate;
  double truth;
};

struct Outcome {
  int id;
  std::string line;
  bool pass;
};

std::vector<Case> suite;  // every synthetic case with known MI, for criterion 5
std::vector<Outcome> outcomes;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  char buf[2048];
  std::snprintf(buf, sizeof buf, "[%s] %2d %-20s %s", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  outcomes.push_back({id, buf, pass});
  std::fprintf(stderr, "%s\n", buf);  // progress while the run continues
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Independent truth values, written from the definitions.
double gaussian_truth(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

double bsc_truth(double p) { return std::log(2.0) + p * std::log(p) + (1.0 - p) * std::log(1.0 - p); }

// I(L; s*L + noise) for L uniform on `levels` z-scored points, by trapezoid
// integration of -p ln p minus the noise entropy.
double mixture_channel_truth(int levels, double s) {
  const double center = (levels - 1) / 2.0;
  const double scale = std::sqrt((levels * levels - 1.0) / 12.0);
  auto density = [&](double y) {
    double acc = 0.0;
    for (int k = 0; k < levels; ++k) {
      const double z = y - s * (k - center) / scale;
      acc += std::exp(-0.5 * z * z);
    }
    return acc / (levels * std::sqrt(2.0 * std::numbers::pi));
  };
  const double lo = -s * 2.0 - 12.0, hi = s * 2.0 + 12.0, h = 1e-3;
  double hy = 0.0;
  for (double y = lo; y <= hi; y += h) {
    const double p = density(y);
    if (p > 0.0) hy -= p * std::log(p) * h;
  }
  return hy - 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
}

EstimatorConfig full_config(std::uint64_t seed) {
  EstimatorConfig c;
  c.master_seed = seed;
  return c;
}

EstimatorConfig trial_config(std::uint64_t seed, int runs) {
  EstimatorConfig c = full_config(seed);
  c.trainer.hidden1 = kTrialHidden1;
  c.trainer.hidden2 = kTrialHidden2;
  c.repetitions = runs;
  return c;
}

struct Shell {
  int exit_code;
  std::string out;
};

Shell shell(const std::string& cmd) {
  Shell r{-1, {}};
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines_with(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += line.find(needle) != std::string::npos;
  return n;
}

std::size_t data_rows(const std::string& csv) {
  return static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
}

void criterion_gaussian() {
  bool pass = true;
  std::string detail;
  int k = 0;
  for (double rho : {0.2, 0.5, 0.8, 0.9}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = estimate_expressivity(gen_gaussian_pair(rho, 10000, 100 + k), full_config(200 + k));
    const double secs = seconds_since(t0);
    const double truth = gaussian_truth(rho);
    suite.push_back({fmt("gaussian rho=%.2f", rho), r.mean, truth});
    pass = pass && std::abs(r.mean - truth) <= kGaussianTol && secs <= kRuntimeBudgetSeconds;
    detail += fmt("rho=%.1f: %.4f vs %.4f (%.0fs)  ", rho, r.mean, truth, secs);
    ++k;
  }
  report(1, "gaussian-recovery", pass, detail);
}

void criterion_null() {
  bool pass = true;
  std::string detail;
  for (Eigen::Index m : {1, 32}) {
    const auto r = estimate_expressivity(gen_independent(10000, m, 300 + static_cast<std::uint64_t>(m)), full_config(310));
    suite.push_back({fmt("independent m=%ld", static_cast<long>(m)), r.mean, 0.0});
    pass = pass && std::abs(r.mean) <= kNullTol;
    detail += fmt("m=%ld: %+.4f  ", static_cast<long>(m), r.mean);
  }
  report(2, "independence-null", pass, detail);
}

void criterion_channel() {
  const auto copy = gen_discrete_channel(8, 0.0, 10000, 400);
  const auto copy_est = estimate_expressivity(copy.dataset, full_config(401));
  const double copy_truth = std::log(8.0);
  suite.push_back({"channel k=8 flip=0", copy_est.mean, copy_truth});

  const auto bsc = gen_discrete_channel(2, 0.1, 10000, 402);
  const auto bsc_est = estimate_expressivity(bsc.dataset, full_config(403));
  const double truth = bsc_truth(0.1);
  suite.push_back({"channel k=2 flip=0.1", bsc_est.mean, truth});
  const double plugin_gap = std::abs(discrete_mi_plugin(bsc.population) - truth);
  const double copy_gap = std::abs(discrete_mi_plugin(copy.population) - copy_truth);

  const bool pass = copy_est.mean >= kCopyLow && copy_est.mean <= kCopyHigh &&
                    std::abs(bsc_est.mean - truth) <= kBscTol && plugin_gap <= kPluginTol && copy_gap <= kPluginTol;
  report(3, "discrete-channel", pass,
         fmt("k=8: %.4f in [%.1f, %.1f]; bsc: %.4f vs %.5f; plug-in gap %.1e", copy_est.mean, kCopyLow, kCopyHigh,
             bsc_est.mean, truth, std::max(plugin_gap, copy_gap)));
}

void criterion_gradient() {
  double worst = 1.0;
  for (std::uint64_t s = 0; s < 10; ++s) worst = std::min(worst, gradient_agreement(derive_seed(500, s), 1e-5, kGradRelTol));
  report(4, "gradient-check", worst >= kGradAgreeFraction,
         fmt("worst agreeing fraction over 10 seeds: %.4f (need %.2f)", worst, kGradAgreeFraction));
}

void criterion_monotone() {
  int ok = 0;
  const double rhos[] = {0.2, 0.5, 0.8, 0.95};
  for (int t = 0; t < kMonotoneTrials; ++t) {
    std::vector<double> est;
    for (int j = 0; j < 4; ++j) {
      const auto seed = static_cast<std::uint64_t>(t * 10 + j);
      const auto r = estimate_expressivity(gen_gaussian_pair(rhos[j], 5000, derive_seed(600, seed)),
                                           trial_config(derive_seed(601, seed), 1));
      est.push_back(r.mean);
      suite.push_back({fmt("monotone trial %d rho=%.2f", t, rhos[j]), r.mean, gaussian_truth(rhos[j])});
    }
    ok += est[0] < est[1] && est[1] < est[2] && est[2] < est[3];
  }
  report(6, "monotonicity", ok == kMonotoneTrials, fmt("%d/%d trials strictly increasing", ok, kMonotoneTrials));
}

void criterion_ranking() {
  int ok = 0;
  bool identity_first = true;
  for (int t = 0; t < kRankingTrials; ++t) {
    PlantedInfoConfig pc;
    pc.n = 5000;
    pc.m = 32;
    pc.sigma = 1.0;
    pc.rng_seed = derive_seed(700, static_cast<std::uint64_t>(t));
    pc.attributes = {{"identity", 1.2, AttributeKind::categorical_identity, 16},
                     {"attr1", 0.9}, {"attr2", 0.6}, {"attr3", 0.3}, {"attr4", 0.15}};
    const auto planted = gen_planted_embeddings(pc);
    std::vector<double> est;
    for (std::size_t j = 0; j < planted.attributes.size(); ++j) {
      const auto seed = derive_seed(701, static_cast<std::uint64_t>(t * 10) + j);
      const auto r = estimate_expressivity(AugmentedDataset(planted.features, planted.attributes[j]), trial_config(seed, 5));
      est.push_back(r.mean);
      const double truth = j == 0 ? mixture_channel_truth(16, 1.2) : 0.5 * std::log1p(pc.attributes[j].signal * pc.attributes[j].signal);
      suite.push_back({fmt("planted trial %d %s", t, pc.attributes[j].name.c_str()), r.mean, truth});
    }
    bool ordered = true;
    for (std::size_t j = 1; j < est.size(); ++j) ordered = ordered && est[j - 1] > est[j];
    ok += ordered;
    if (ordered) identity_first = identity_first && std::max_element(est.begin(), est.end()) == est.begin();
  }
  report(7, "ranking", ok >= kRankingRequired && identity_first,
         fmt("%d/%d trials in planted order (need %d); identity first in every passing trial: %s", ok,
             kRankingTrials, kRankingRequired, identity_first ? "yes" : "no"));
}

void criterion_lower_bound() {
  const Case* worst = nullptr;
  bool pass = true;
  for (const auto& c : suite) {
    if (c.estimate > c.truth + kLowerBoundSlack) pass = false;
    if (!worst || c.estimate - c.truth > worst->estimate - worst->truth) worst = &c;
  }
  report(5, "lower-bound", pass && worst,
         worst ? fmt("%zu cases; largest excess %+.4f (%s)", suite.size(), worst->estimate - worst->truth, worst->label.c_str())
               : std::string("no cases"));
}

void criterion_contract(const fs::path& work) {
  const auto data = gen_gaussian_pair(0.7, 4000, 800);
  const EstimatorConfig c = trial_config(801, 5);
  const auto a = estimate_expressivity(data, c);
  const auto b = estimate_expressivity(data, c);
  double sum = 0.0;
  for (double v : a.per_run) sum += v;
  const bool mean_exact = a.per_run.size() == 5 && a.mean == sum / 5.0;
  const bool repeatable = a == b;

  const fs::path demo = work / "contract";
  fs::copy(EXPRESSIVITY_DEMO_DIR, demo, fs::copy_options::recursive);
  const std::string base = "'" EXPRESSIVITY_BIN "' --seed 9 --log-level warn ";
  const auto p1 = shell(base + "--out '" + (demo / "p1").string() + "' sweep --manifest '" +
                        (demo / "demo_manifest.json").string() + "' --parallelism 1 >/dev/null");
  const auto p8 = shell(base + "--out '" + (demo / "p8").string() + "' sweep --manifest '" +
                        (demo / "demo_manifest.json").string() + "' --parallelism 8 >/dev/null");
  const std::string csv1 = slurp(demo / "p1" / "sweep.csv");
  const bool same_csv = p1.exit_code == 0 && p8.exit_code == 0 && !csv1.empty() && csv1 == slurp(demo / "p8" / "sweep.csv");
  report(8, "estimator-contract", mean_exact && repeatable && same_csv,
         fmt("mean == mean(per_run): %s; same seed bit-identical: %s; sweep.csv parallelism 1 vs 8 identical: %s",
             mean_exact ? "yes" : "no", repeatable ? "yes" : "no", same_csv ? "yes" : "no"));
}

void criterion_sweep(const fs::path& work) {
  const fs::path demo = work / "sweep";
  fs::copy(EXPRESSIVITY_DEMO_DIR, demo, fs::copy_options::recursive);
  const std::string base = "'" EXPRESSIVITY_BIN "' --seed 9 --log-level warn ";
  const std::string manifest = (demo / "demo_manifest.json").string();
  const auto clean = shell(base + "--out '" + (demo / "clean").string() + "' sweep --manifest '" + manifest + "' >/dev/null");
  const std::size_t clean_rows = data_rows(slurp(demo / "clean" / "sweep.csv"));

  // Corrupt one bmi value in the layer-6 attribute table.
  const fs::path table = demo / "demo_layer6.csv";
  std::string text = slurp(table);
  const std::size_t row = text.find('\n') + 1;
  const std::size_t field = text.find(',', row) + 1;
  text.replace(field, text.find(',', field) - field, "corrupt");
  std::ofstream(table, std::ios::binary) << text;

  const auto broken = shell(base + "--out '" + (demo / "broken").string() + "' sweep --manifest '" + manifest + "' >/dev/null");
  const std::string csv = slurp(demo / "broken" / "sweep.csv");
  const std::size_t ok_rows = count_lines_with(csv, ",ok");
  const std::size_t failed_rows = count_lines_with(csv, ",failed:");
  const bool pass = clean.exit_code == 0 && clean_rows == 20 && broken.exit_code == 1 && ok_rows == 19 && failed_rows == 1;
  report(9, "sweep-robustness", pass,
         fmt("clean: %zu rows (exit %d); corrupted: %zu ok + %zu failed (exit %d)", clean_rows, clean.exit_code, ok_rows,
             failed_rows, broken.exit_code));
}

void criterion_round_trip(const fs::path& work) {
  CounterRng rng(900);
  const fs::path dir = work / "round-trip";
  fs::create_directories(dir);
  int ok = 0;
  const std::string alphabet = "az09,.\"- \n";
  for (int t = 0; t < kRoundTripCases; ++t) {
    Matrix m(2 + static_cast<Eigen::Index>(rng.uniform_index(50)), 1 + static_cast<Eigen::Index>(rng.uniform_index(12)));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<float>(std::ldexp(rng.normal(), static_cast<int>(rng.uniform_index(120)) - 60));
    }
    write_embeddings(dir / "x.emb", FeatureMatrix(m, "case" + std::to_string(t)));
    const auto back = read_embeddings(dir / "x.emb");

    AttributeTable table;
    const auto cols = 1 + rng.uniform_index(5);
    for (std::uint64_t c = 0; c < cols; ++c) table.columns.push_back("col" + std::to_string(c));
    for (auto r = 1 + rng.uniform_index(20); r > 0; --r) {
      std::vector<std::string> cells;
      for (std::uint64_t c = 0; c < cols; ++c) {
        std::string cell = std::to_string(rng.normal());
        for (auto k = rng.uniform_index(5); k > 0; --k) cell.push_back(alphabet[rng.uniform_index(alphabet.size())]);
        cells.push_back(cell);
      }
      table.rows.push_back(cells);
    }
    write_attribute_table(dir / "x.csv", table);
    const auto table_back = read_attribute_table(dir / "x.csv");
    ok += back.data() == m && back.source_tag() == "case" + std::to_string(t) && table_back.columns == table.columns &&
          table_back.rows == table.rows;
  }
  report(10, "ingest-round-trip", ok == kRoundTripCases, fmt("%d/%d randomized cases bit-identical", ok, kRoundTripCases));
}

void criterion_shift() {
  CounterRng rng(1000);
  const auto data = gen_gaussian_pair(0.8, 2000, 1001);
  StatisticsNetwork<double> net(NetworkShape{2}, rng);
  const DVBatch batch = sample_dv_batch(data, 100, rng);
  const double base = dv_bound(net, batch);
  double worst = 0.0;
  for (double c : {-5.0, 0.0, 3.0}) {
    net.mutable_parameters().b3 += c;
    worst = std::max(worst, std::abs(dv_bound(net, batch) - base));
    net.mutable_parameters().b3 -= c;
  }
  report(11, "dv-shift-invariance", worst < kShiftTol, fmt("max |change| %.2e (limit %.0e)", worst, kShiftTol));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path work = fs::temp_directory_path() / ("expressivity-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(work);

  criterion_gaussian();
  criterion_null();
  criterion_channel();
  criterion_gradient();
  criterion_monotone();
  criterion_ranking();
  criterion_lower_bound();
  criterion_contract(work);
  criterion_sweep(work);
  criterion_round_trip(work);
  criterion_shift();

  fs::remove_all(work);
  std::sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  int failures = 0;
  for (const auto& o : outcomes) {
    std::printf("%s\n", o.line.c_str());
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria failed; total %.0fs\n", failures, outcomes.size(), seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
