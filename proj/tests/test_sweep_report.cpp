#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>
#include <vector>

#include "expressivity/report.hpp"
#include "expressivity/sweep.hpp"
#include "expressivity/synthgen.hpp"

using namespace expressivity;
namespace fs = std::filesystem;

namespace {

ExpressivityResult result(const std::string& name, double mean, double sd) {
  ExpressivityResult r = ExpressivityResult::from_runs({mean}, "fp", CellTags{"", "", "", name});
  r.std_dev = sd;
  return r;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

// Hand-built result: `layers` x `attrs`, M runs each, no estimation involved.
SweepResult fake_sweep(const std::vector<std::string>& layers, const std::vector<std::string>& attrs, int runs) {
  SweepResult s;
  s.started = "2024-01-01T00:00:00Z";
  s.finished = "2024-01-01T00:01:00Z";
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t a = 0; a < attrs.size(); ++a) {
      SweepRow row;
      row.tags = {layers[l], "", "", attrs[a]};
      std::vector<double> per_run;
      for (int k = 0; k < runs; ++k) per_run.push_back(0.1 * static_cast<double>(l + 1) / static_cast<double>(a + 1) + 0.01 * k);
      row.result = ExpressivityResult::from_runs(per_run, "fp", row.tags);
      row.n = 500;
      row.m = 8;
      row.fingerprint = "fp";
      s.rows.push_back(row);
    }
  }
  return s;
}

class SweepTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("expressivity-sweep-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Writes one planted layer file pair per entry in `layers`, plus a manifest
  // with one cell per layer listing all of `attrs`. Tiny network for speed.
  fs::path grid(const std::vector<std::string>& layers, const std::vector<std::string>& attrs) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      PlantedInfoConfig c;
      c.n = 400;
      c.m = 6;
      c.rng_seed = 100 + l;
      for (std::size_t a = 0; a < attrs.size(); ++a) c.attributes.push_back({attrs[a], 0.8 / static_cast<double>(a + 1)});
      const auto p = gen_planted_embeddings(c);
      const std::string stem = "layer" + layers[l];
      write_embeddings(dir_ / (stem + ".emb"), p.features);
      AttributeTable t;
      t.columns = attrs;
      for (Eigen::Index i = 0; i < c.n; ++i) {
        std::vector<std::string> row;
        for (std::size_t a = 0; a < attrs.size(); ++a) row.push_back(p.labels[a][static_cast<std::size_t>(i)]);
        t.rows.push_back(row);
      }
      write_attribute_table(dir_ / (stem + ".csv"), t);
      cells.push_back({{"features", stem + ".emb"}, {"attributes", stem + ".csv"}, {"attribute_names", attrs}, {"layer", layers[l]}});
    }
    const nlohmann::json m = {
        {"seed", 5},
        {"estimator", {{"runs", 2}, {"hidden", {8, 4}}, {"batch_size", 40}, {"max_iterations", 60}, {"eval_batches", 3}}},
        {"cells", cells}};
    std::ofstream(dir_ / "manifest.json") << m.dump(2);
    return dir_ / "manifest.json";
  }

  fs::path dir_;
};

}  // namespace

TEST(RankAttributes, PaperStyleOrdering) {
  const auto ranked = rank_attributes({result("gender", 0.45, 0.01), result("BMI", 1.2, 0.01),
                                       result("yaw", 0.4, 0.01), result("pitch", 0.7, 0.01)});
  std::vector<std::string> names;
  for (const auto& r : ranked) names.push_back(r.name);
  EXPECT_EQ(names, (std::vector<std::string>{"BMI", "pitch", "gender", "yaw"}));
  EXPECT_EQ(format_ranking(ranked), "BMI > pitch > gender > yaw");
}

TEST(RankAttributes, TieFlagged) {
  const auto ranked = rank_attributes({result("a", 1.0, 0.1), result("b", 1.0, 0.1)});
  EXPECT_TRUE(ranked[0].tied_with_next);
  EXPECT_FALSE(ranked[1].tied_with_next);
  EXPECT_EQ(format_ranking(ranked), "a ≈ b");
  // The threshold is the larger of the two spreads.
  EXPECT_TRUE(rank_attributes({result("a", 1.0, 0.0), result("b", 0.75, 0.25)})[0].tied_with_next);
  EXPECT_FALSE(rank_attributes({result("a", 1.0, 0.1), result("b", 0.7, 0.2)})[0].tied_with_next);
}

TEST(RankAttributes, SingleAttributeRejected) {
  try {
    rank_attributes({result("a", 1.0, 0.0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientAttributes);
  }
}

TEST(RankAttributes, IndependentOfInputOrder) {
  CounterRng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ExpressivityResult> rs;
    const int k = 2 + static_cast<int>(rng.uniform_index(6));
    for (int i = 0; i < k; ++i) {
      // Coarse means so exact ties occur.
      rs.push_back(result("a" + std::to_string(i), 0.25 * static_cast<double>(rng.uniform_index(4)), 0.1 * rng.uniform()));
    }
    const std::string reference = format_ranking(rank_attributes(rs));
    rng.shuffle(std::span<ExpressivityResult>(rs));
    EXPECT_EQ(format_ranking(rank_attributes(rs)), reference);
  }
}

TEST(NaturalOrder, NumericAwareTags) {
  std::vector<std::string> tags{"12", "2", "9", "layer10", "layer9", "4"};
  std::sort(tags.begin(), tags.end(), [](const std::string& a, const std::string& b) { return natural_compare(a, b) < 0; });
  EXPECT_EQ(tags, (std::vector<std::string>{"2", "4", "9", "12", "layer9", "layer10"}));
}

TEST(RowSeed, DependsOnlyOnOwnTags) {
  const CellTags a{"2", "", "", "bmi"}, b{"4", "", "", "bmi"};
  EXPECT_EQ(row_seed(7, a), row_seed(7, a));
  EXPECT_NE(row_seed(7, a), row_seed(7, b));
  EXPECT_NE(row_seed(7, a), row_seed(8, a));
}

TEST(Report, CsvHasHeaderAndOneLinePerRow) {
  const auto s = fake_sweep({"2", "4", "6", "9", "12"}, {"bmi", "pitch", "gender", "yaw"}, 5);
  const std::string csv = sweep_csv(s);
  EXPECT_EQ(count(csv, "\n"), 21u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,epoch,modality,attribute,mean_nats,std_nats,runs,n,m,fingerprint,status");
  EXPECT_EQ(count(csv, ",ok\n"), 20u);
}

TEST(Report, JsonCarriesPerRunValues) {
  const auto s = fake_sweep({"2", "4"}, {"bmi", "yaw"}, 5);
  const auto j = sweep_json(s);
  ASSERT_EQ(j.at("rows").size(), 4u);
  for (const auto& row : j.at("rows")) EXPECT_EQ(row.at("per_run").size(), 5u);
  EXPECT_TRUE(j.contains("started"));
  EXPECT_FALSE(sweep_json(s, false).contains("started"));
}

TEST(Report, FailedRowsMarkedInCsvAndJson) {
  auto s = fake_sweep({"2"}, {"bmi", "yaw"}, 1);
  s.rows[1].result.reset();
  s.rows[1].failure_code = "UnparsableValue";
  s.rows[1].failure_reason = "line 3";
  EXPECT_EQ(count(sweep_csv(s), "failed:UnparsableValue"), 1u);
  const auto j = sweep_json(s);
  EXPECT_EQ(j.at("rows")[1].at("error").at("code"), "UnparsableValue");
}

TEST(Report, SvgHasOneLineAndBandPerAttribute) {
  const auto s = fake_sweep({"2", "4", "6", "9", "12"}, {"bmi", "pitch", "gender", "yaw"}, 5);
  const auto plots = sweep_plots(s);
  ASSERT_EQ(plots.size(), 1u);
  EXPECT_EQ(plots[0].filename.substr(0, 6), "layer_");
  EXPECT_EQ(count(plots[0].svg, "<polyline class=\"mean\""), 4u);
  EXPECT_EQ(count(plots[0].svg, "<polygon class=\"band\""), 4u);
  EXPECT_EQ(plots[0].svg.find("href"), std::string::npos);  // self-contained
}

TEST(Report, EmitWritesFilesAndReportsIoErrors) {
  const auto s = fake_sweep({"2", "4"}, {"bmi", "yaw"}, 2);
  const fs::path out = fs::temp_directory_path() / "expressivity-emit";
  fs::remove_all(out);
  const auto written = emit_report(s, out);
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
  EXPECT_TRUE(fs::exists(out / "sweep.json"));
  EXPECT_EQ(written.size(), 3u);
  fs::remove_all(out);

  const fs::path blocker = fs::temp_directory_path() / "expressivity-emit-file";
  std::ofstream(blocker) << "x";
  try {
    emit_report(s, blocker / "sub");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
  fs::remove(blocker);
}

TEST_F(SweepTest, OneCellTwoAttributesGivesTwoRows) {
  const auto r = run_sweep(load_manifest(grid({"2"}, {"bmi", "yaw"})));
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.failed_count(), 0u);
  EXPECT_EQ(r.rows[0].tags.attribute, "bmi");
  EXPECT_EQ(r.rows[0].result->per_run.size(), 2u);
  EXPECT_EQ(r.rows[0].n, 400);
}

TEST_F(SweepTest, GridCardinalityOrderAndDeterminism) {
  const auto manifest = load_manifest(grid({"12", "2", "9", "4", "6"}, {"bmi", "gender", "pitch", "yaw"}));
  const auto a = run_sweep(manifest, 1);
  const auto b = run_sweep(manifest, 3);
  ASSERT_EQ(a.rows.size(), 20u);
  std::vector<std::string> seen;
  for (const auto& row : a.rows) {
    if (seen.empty() || seen.back() != row.tags.layer) seen.push_back(row.tags.layer);
  }
  EXPECT_EQ(seen, (std::vector<std::string>{"2", "4", "6", "9", "12"}));
  EXPECT_EQ(sweep_json(a, false), sweep_json(b, false));
  EXPECT_EQ(sweep_csv(a), sweep_csv(b));
}

TEST_F(SweepTest, RowResultsUnaffectedByAddingCells) {
  const auto small = run_sweep(load_manifest(grid({"2"}, {"bmi", "yaw"})));
  const auto large = run_sweep(load_manifest(grid({"2", "4"}, {"bmi", "yaw"})));
  EXPECT_EQ(small.rows[0].result->per_run, large.rows[0].result->per_run);
  EXPECT_EQ(small.rows[1].result->per_run, large.rows[1].result->per_run);
}

TEST_F(SweepTest, PerRowFailuresDoNotAbortTheSweep) {
  const auto path = grid({"2", "4"}, {"bmi", "yaw"});
  // Corrupt one value in layer 4's table.
  std::string text = detail::read_file(dir_ / "layer4.csv");
  text.replace(text.find('\n') + 1, 1, "x");
  std::ofstream(dir_ / "layer4.csv") << text;
  const auto r = run_sweep(load_manifest(path));
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.failed_count(), 1u);
  const auto bad = std::find_if(r.rows.begin(), r.rows.end(), [](const SweepRow& row) { return !row.ok(); });
  EXPECT_EQ(bad->tags.layer, "4");
  EXPECT_EQ(bad->failure_code, "UnparsableValue");
  EXPECT_EQ(bad->status(), "failed:UnparsableValue");

  fs::remove(dir_ / "layer2.emb");
  const auto deferred = run_sweep(load_manifest(path, PathPolicy::defer));
  EXPECT_EQ(deferred.failed_count(), 3u);
  EXPECT_EQ(deferred.rows[0].failure_code, "IoError");
}

TEST_F(SweepTest, DuplicateRowsRejected) {
  const auto path = grid({"2"}, {"bmi"});
  auto m = load_manifest(path);
  m.cells.push_back(m.cells[0]);
  try {
    run_sweep(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
  }
}

TEST(IdentityReference, SingleIdentityRejected) {
  const std::vector<std::string> labels(300, "id00");
  try {
    identity_reference(FeatureMatrix(Matrix::Zero(300, 2)), labels, EstimatorConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleIdentity);
  }
}

TEST(IdentityReference, DeterministicEncodingOfSixteenIdentities) {
  CounterRng rng(61);
  const Eigen::Index n = 5000;
  // One-hot code: each identity owns a feature dimension.
  Matrix f = Matrix::Zero(n, 16);
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto id = rng.uniform_index(16);
    f(i, static_cast<Eigen::Index>(id)) = 1.0;
    labels.push_back("id" + std::to_string(id));
  }
  EstimatorConfig c;
  c.repetitions = 1;
  c.master_seed = 3;
  const auto r = identity_reference(FeatureMatrix(f), labels, c);
  EXPECT_GE(r.mean, 2.3);
  EXPECT_LE(r.mean, std::log(16.0) + 0.1);
  EXPECT_EQ(r.cell_tags.attribute, "identity");
}

TEST(IdentityReference, IndependentIdentityNearZero) {
  CounterRng rng(62);
  const Eigen::Index n = 3000;
  Matrix f(n, 4);
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d < 4; ++d) f(i, d) = rng.normal();
    labels.push_back("id" + std::to_string(rng.uniform_index(16)));
  }
  EstimatorConfig c;
  c.repetitions = 1;
  c.master_seed = 4;
  EXPECT_LE(std::abs(identity_reference(FeatureMatrix(f), labels, c).mean), 0.05);
}
