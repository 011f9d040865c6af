#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "soh/dataset_io.hpp"
#include "soh/errors.hpp"
#include "soh/standardize.hpp"
#include "soh/stats.hpp"
#include "soh/types.hpp"

using namespace soh;

namespace {

FeatureTable small_table(Eigen::MatrixXd values, std::optional<Eigen::VectorXd> labels = {}) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < values.cols(); ++j) names.push_back("f" + std::to_string(j));
  return make_feature_table(names, std::move(values), std::move(labels));
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& content, const char* name = "soh_test.csv") {
    path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("standardize_fit uses the sample (n-1) std convention") {
  // Hand oracle: column {1,2,3}: mean 2, sample std sqrt((1+0+1)/2) = 1,
  // so the standardized column is exactly {-1, 0, 1}.
  Eigen::MatrixXd v(3, 1);
  v << 1, 2, 3;
  const FeatureTable t = standardize_fit(small_table(v));
  CHECK(t.values(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(t.values(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.values(2, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.standardization.has_value());
}

TEST_CASE("standardize_fit is idempotent on standardized data") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Eigen::MatrixXd v(40, 2);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = g(rng);
  const FeatureTable once = standardize_fit(small_table(v));
  const FeatureTable twice = standardize_fit(once);
  CHECK((once.values - twice.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("standardized columns have zero mean and unit std on the fitting set") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  Eigen::MatrixXd v(100, 3);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = 3.0 + 7.5 * g(rng);
  Eigen::VectorXd labels(100);
  for (Eigen::Index i = 0; i < 100; ++i) labels[i] = 0.9 + 0.05 * g(rng);
  const FeatureTable t = standardize_fit(small_table(v, labels));
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    const double mean = t.values.col(j).mean();
    const double sd = std::sqrt((t.values.col(j).array() - mean).square().sum() / 99.0);
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(sd - 1.0) <= 1e-9);
  }
  // Labels are standardized identically and tracked.
  CHECK(std::abs(t.labels.mean()) <= 1e-9);
  CHECK(t.standardization->has_label_params);
}

TEST_CASE("standardize rejects constant columns by name") {
  Eigen::MatrixXd v(5, 2);
  v.col(0).setLinSpaced(5, 0, 4);
  v.col(1).setConstant(3.0);
  try {
    standardize_fit(small_table(v));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("f1") != std::string::npos);
  }
}

TEST_CASE("apply then invert is the identity") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Eigen::MatrixXd v(30, 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = 10.0 * g(rng) - 3.0;
  const FeatureTable raw = small_table(v);
  const FeatureTable fitted = standardize_fit(raw);
  const FeatureTable back = standardize_invert(fitted, *fitted.standardization);
  CHECK((back.values - raw.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("train-set parameters leave a test set off-center") {
  Eigen::MatrixXd tr(10, 1), te(10, 1);
  tr.col(0).setLinSpaced(10, 0, 9);
  te.col(0).setLinSpaced(10, 5, 14);
  const FeatureTable fitted = standardize_fit(small_table(tr));
  const FeatureTable applied = standardize_apply(small_table(te), *fitted.standardization);
  CHECK(std::abs(applied.values.col(0).mean()) > 0.5);
}

TEST_CASE("sigma de-standardization scales without a mean shift") {
  // Affine oracle: x = m + s*z, so a spread dz maps to s*dz regardless of m.
  Standardization p;
  p.feature_names = {"f0"};
  p.mean.resize(1);
  p.std.resize(1);
  p.mean[0] = 0.0;
  p.std[0] = 1.0;
  p.label_mean = 0.88;
  p.label_std = 0.04;
  p.has_label_params = true;

  Eigen::MatrixXd v(2, 1);
  v << 0.0, 0.0;
  Eigen::VectorXd mean_std(2), hi_std(2);
  mean_std << 0.0, 1.0;
  hi_std << 1.0, 2.0;  // +1 standardized sigma above each mean
  FeatureTable mean_t = small_table(v, mean_std);
  FeatureTable hi_t = small_table(v, hi_std);
  const auto mean_phys = standardize_invert(mean_t, p).labels;
  const auto hi_phys = standardize_invert(hi_t, p).labels;
  for (int i = 0; i < 2; ++i)
    CHECK(hi_phys[i] - mean_phys[i] == doctest::Approx(0.04).epsilon(1e-12));
}

TEST_CASE("mismatched parameter columns are rejected") {
  Eigen::MatrixXd v(3, 1);
  v << 1, 2, 3;
  const FeatureTable fitted = standardize_fit(small_table(v));
  Standardization p = *fitted.standardization;
  p.feature_names = {"other"};
  CHECK_THROWS_AS(standardize_apply(small_table(v), p), ValidationError);
}

TEST_CASE("split is deterministic and exhaustive") {
  Eigen::MatrixXd v(10, 1);
  v.col(0).setLinSpaced(10, 0, 9);
  Eigen::VectorXd labels = v.col(0);
  const FeatureTable t = small_table(v, labels);
  SplitSpec spec;
  spec.train_fraction = 0.8;
  spec.seed = 7;
  auto [tr1, te1] = split(t, spec);
  auto [tr2, te2] = split(t, spec);
  CHECK(tr1.rows() == 8);
  CHECK(te1.rows() == 2);
  CHECK(tr1.values == tr2.values);
  CHECK(te1.values == te2.values);
  // Disjoint and exhaustive by construction of the index sets.
  std::vector<double> all;
  for (Eigen::Index i = 0; i < tr1.rows(); ++i) all.push_back(tr1.values(i, 0));
  for (Eigen::Index i = 0; i < te1.rows(); ++i) all.push_back(te1.values(i, 0));
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("fixed-count split reproduces the training/testing sizes") {
  const Eigen::Index n = 81216;
  SplitSpec spec;
  spec.mode = SplitMode::fixed_count;
  spec.train_count = 4060;
  spec.seed = 1;
  auto [train_idx, test_idx] = split_indices(n, spec);
  CHECK(train_idx.size() == 4060);
  CHECK(test_idx.size() == 77156);
}

TEST_CASE("degenerate split fractions are rejected") {
  Eigen::MatrixXd v(10, 1);
  v.col(0).setLinSpaced(10, 0, 9);
  const FeatureTable t = small_table(v);
  SplitSpec spec;
  spec.train_fraction = 1.0;
  CHECK_THROWS_AS(split(t, spec), ValidationError);
  spec.train_fraction = 0.0;
  CHECK_THROWS_AS(split(t, spec), ValidationError);
}

TEST_CASE("ks statistic of identical samples is zero") {
  Eigen::VectorXd a(5);
  a << 1, 2, 3, 4, 5;
  const KsResult r = ks_two_sample(a, a);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("ks detects a location shift") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd a(500), b(500);
  for (int i = 0; i < 500; ++i) {
    a[i] = u(rng);
    b[i] = 0.5 + u(rng);
  }
  const KsResult r = ks_two_sample(a, b);
  CHECK(r.statistic >= 0.4);
  CHECK(r.p_value < 1e-6);

  // Direct ECDF oracle at a dense set of query points.
  double oracle = 0.0;
  for (double x = -0.5; x <= 2.0; x += 1e-3) {
    const double fa = (a.array() <= x).count() / 500.0;
    const double fb = (b.array() <= x).count() / 500.0;
    oracle = std::max(oracle, std::abs(fa - fb));
  }
  CHECK(r.statistic == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("ks p-value calibration under the null") {
  // Same-distribution draws should rarely produce small p-values.
  int ok = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::normal_distribution<double> g;
    Eigen::VectorXd a(1000), b(1000);
    for (int i = 0; i < 1000; ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
    }
    if (ks_two_sample(a, b).p_value > 0.01) ++ok;
  }
  CHECK(ok >= 95);
}

TEST_CASE("ks rejects empty input and stays within [0,1]") {
  Eigen::VectorXd a(3), empty(0);
  a << 1, 2, 3;
  CHECK_THROWS_AS(ks_two_sample(a, empty), ValidationError);
  Eigen::VectorXd b(3);
  b << 100, 200, 300;
  const KsResult r = ks_two_sample(a, b);
  CHECK(r.statistic <= 1.0);
  CHECK(r.statistic >= 0.0);
}

TEST_CASE("load_dataset parses a well-formed two-profile file") {
  std::string csv = "source_id,cycle,capacity_ah,voltage_v,temperature_c,c_rate,soh\n";
  for (int i = 0; i < 10; ++i)
    csv += "A,1," + std::to_string(i * 0.5) + "," + std::to_string(3.0 + 0.05 * i) + ",25,0.5,0.98\n";
  for (int i = 0; i < 10; ++i)
    csv += "B,4," + std::to_string(i * 0.4) + "," + std::to_string(3.0 + 0.04 * i) + ",25,0.5,0.91\n";
  TempFile f(csv);
  const auto profiles = load_dataset(f.path);
  REQUIRE(profiles.size() == 2);
  CHECK(profiles[0].source_id == "A");
  CHECK(profiles[0].size() == 10);
  CHECK(profiles[0].soh_label == doctest::Approx(0.98));
  CHECK(profiles[1].cycle == 4);
  for (const auto& p : profiles) validate_profile(p);
}

TEST_CASE("a voltage-decreasing row is dropped and the profile kept") {
  std::string csv = "source_id,cycle,capacity_ah,voltage_v,temperature_c,c_rate\n";
  for (int i = 0; i < 6; ++i)
    csv += "A,0," + std::to_string(i * 0.5) + "," + std::to_string(3.0 + 0.05 * i) + ",25,0.5\n";
  csv += "A,0,3.0,3.10,25,0.5\n";  // voltage goes backwards here
  for (int i = 6; i < 10; ++i)
    csv += "A,0," + std::to_string(i * 0.5) + "," + std::to_string(3.0 + 0.05 * i) + ",25,0.5\n";
  TempFile f(csv);
  LoadReport report;
  const auto profiles = load_dataset(f.path, {}, &report);
  REQUIRE(profiles.size() == 1);
  CHECK(profiles[0].size() == 10);  // the bad row is gone
  REQUIRE(report.notes.size() == 1);
  CHECK(report.notes[0].dropped_rows == 1);
}

TEST_CASE("duplicate voltages collapse to the mean capacity") {
  std::string csv = "source_id,cycle,capacity_ah,voltage_v,temperature_c,c_rate\n";
  csv += "A,0,0.0,3.00,25,0.5\n";
  csv += "A,0,1.0,3.05,25,0.5\n";
  csv += "A,0,2.0,3.05,25,0.5\n";  // duplicate voltage; mean capacity 1.5
  for (int i = 2; i < 10; ++i)
    csv += "A,0," + std::to_string(i * 1.0) + "," + std::to_string(3.0 + 0.05 * i) + ",25,0.5\n";
  TempFile f(csv);
  const auto profiles = load_dataset(f.path);
  REQUIRE(profiles.size() == 1);
  CHECK(profiles[0].capacity_ah[1] == doctest::Approx(1.5));
}

TEST_CASE("empty file and missing columns raise schema errors") {
  TempFile empty("", "soh_empty.csv");
  CHECK_THROWS_AS(load_dataset(empty.path), ValidationError);
  TempFile missing("source_id,cycle,capacity_ah\nA,0,1\n", "soh_missing.csv");
  CHECK_THROWS_AS(load_dataset(missing.path), ValidationError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv"), IoError);
}

TEST_CASE("too-short profiles are rejected with the source id reported") {
  std::string csv = "source_id,cycle,capacity_ah,voltage_v,temperature_c,c_rate\n";
  for (int i = 0; i < 4; ++i)
    csv += "SHORT,0," + std::to_string(i * 0.5) + "," + std::to_string(3.0 + 0.05 * i) + ",25,0.5\n";
  for (int i = 0; i < 10; ++i)
    csv += "OK,0," + std::to_string(i * 0.5) + "," + std::to_string(3.0 + 0.05 * i) + ",25,0.5\n";
  TempFile f(csv);
  LoadReport report;
  const auto profiles = load_dataset(f.path, {}, &report);
  CHECK(profiles.size() == 1);
  REQUIRE(report.profiles_rejected == 1);
  CHECK(report.notes[0].source_id == "SHORT");
  CHECK(report.notes[0].rejected);
}

TEST_CASE("feature table round-trips through CSV with mask") {
  Eigen::MatrixXd v(3, 2);
  v << 1.5, -2.25, 0.125, 4.0, 9.75, 0.0625;
  Eigen::VectorXd labels(3);
  labels << 0.9, 0.95, 1.0;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(3, 2);
  mask.setConstant(true);
  mask(1, 0) = false;
  FeatureTable t = make_feature_table({"a", "b"}, v, labels, {{"m0", 0}, {"m0", 1}, {"m1", 0}}, mask);

  const auto dir = std::filesystem::temp_directory_path();
  const std::string fp = (dir / "soh_feat.csv").string();
  const std::string mp = (dir / "soh_mask.csv").string();
  save_feature_table(fp, t);
  save_feature_mask(mp, t);
  const FeatureTable back = load_feature_table(fp, mp);
  std::remove(fp.c_str());
  std::remove(mp.c_str());

  CHECK(back.feature_names == t.feature_names);
  CHECK((back.values - t.values).cwiseAbs().maxCoeff() == 0.0);  // exact round-trip
  CHECK(back.labels == t.labels);
  CHECK(back.mask(1, 0) == false);
  CHECK(back.mask(0, 0) == true);
  CHECK(back.row_ids[2].source_id == "m1");
}

TEST_CASE("drop_constant_columns removes flat features") {
  Eigen::MatrixXd v(4, 3);
  v.col(0).setLinSpaced(4, 0, 3);
  v.col(1).setConstant(25.0);
  v.col(2).setLinSpaced(4, 5, 8);
  auto [reduced, dropped] = drop_constant_columns(small_table(v));
  CHECK(reduced.feature_names == std::vector<std::string>{"f0", "f2"});
  CHECK(dropped == std::vector<std::string>{"f1"});
}

TEST_CASE("profile invariants are enforced") {
  QVProfile p;
  p.source_id = "X";
  p.capacity_ah.resize(8);
  p.voltage_v.resize(8);
  for (int i = 0; i < 8; ++i) {
    p.capacity_ah[i] = i;
    p.voltage_v[i] = 3.0 + 0.1 * i;
  }
  CHECK_NOTHROW(validate_profile(p));
  p.soh_label = 1.3;  // outside (0, 1.2]
  CHECK_THROWS_AS(validate_profile(p), ValidationError);
  p.soh_label = 0.9;
  p.voltage_v[4] = p.voltage_v[3];  // not strictly increasing
  CHECK_THROWS_AS(validate_profile(p), ValidationError);
}
