#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "soh/errors.hpp"
#include "soh/synthgen.hpp"
#include "soh/types.hpp"

using namespace soh;

namespace {

CellSpec single_peak_cell(double capacity = 10.0, double center = 3.6, double width = 0.05) {
  CellSpec c;
  c.capacity_ah = capacity;
  c.peak_centers_v = {center};
  c.peak_widths_v = {width};
  c.peak_weights = {1.0};
  c.resistance_ohm = 0.0;
  return c;
}

}  // namespace

TEST_CASE("sigmoid midpoint carries half the capacity") {
  const CellCurve curve = synth_cell_curve(single_peak_cell());
  CHECK(curve.qc(3.6) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("cell curve saturates at the capacity") {
  const CellCurve curve = synth_cell_curve(single_peak_cell());
  CHECK(std::abs(curve.qc(3.6 + 50 * 0.05) - 10.0) <= 1e-9);
  CHECK(curve.qc(3.6 - 50 * 0.05) <= 1e-9);
}

TEST_CASE("two-peak cell has IC maxima at the centers") {
  CellSpec c;
  c.capacity_ah = 10.0;
  c.peak_centers_v = {3.5, 3.9};
  c.peak_widths_v = {0.05, 0.05};
  c.peak_weights = {0.5, 0.5};
  const CellCurve curve = synth_cell_curve(c);

  // Dense-grid argmax oracle on the analytic derivative.
  const int n = 65536;
  double best1 = 0, best1_v = 0, best2 = 0, best2_v = 0;
  for (int i = 0; i < n; ++i) {
    const double v = 3.2 + (4.2 - 3.2) * i / (n - 1.0);
    const double ic = curve.ic(v);
    if (v < 3.7 && ic > best1) {
      best1 = ic;
      best1_v = v;
    }
    if (v >= 3.7 && ic > best2) {
      best2 = ic;
      best2_v = v;
    }
  }
  CHECK(std::abs(best1_v - 3.5) <= 1e-3);
  CHECK(std::abs(best2_v - 3.9) <= 1e-3);
}

TEST_CASE("cell spec validation") {
  CellSpec c = single_peak_cell();
  c.peak_weights = {0.7};  // does not sum to 1
  CHECK_THROWS_AS(synth_cell_curve(c), ValidationError);
  c = single_peak_cell();
  c.capacity_ah = -1;
  CHECK_THROWS_AS(synth_cell_curve(c), ValidationError);
  c = single_peak_cell();
  c.peak_widths_v = {0.0};
  CHECK_THROWS_AS(synth_cell_curve(c), ValidationError);
}

TEST_CASE("single cell with zero noise reproduces the cell curve exactly") {
  const CellSpec cell = single_peak_cell();
  const QVProfile p = synth_module_profile({cell}, 5.0, 0.0, 1, {64, 3.2, 4.0});
  const CellCurve curve = synth_cell_curve(cell);
  const double q0 = curve.qc(3.2);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    CHECK(p.capacity_ah[i] == doctest::Approx(curve.qc(p.voltage_v[i]) - q0).epsilon(1e-9));
}

TEST_CASE("three identical cells superpose") {
  const CellSpec cell = single_peak_cell();
  const QVProfile p = synth_module_profile({cell, cell, cell}, 15.0, 0.0, 1, {64, 3.2, 4.0});
  const CellCurve curve = synth_cell_curve(cell);
  const double q0 = 3.0 * curve.qc(3.2);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    CHECK(p.capacity_ah[i] ==
          doctest::Approx(3.0 * curve.qc(p.voltage_v[i]) - q0).epsilon(1e-9));
}

TEST_CASE("module capacity is the analytic sum of cell saturations") {
  const double c0 = 10.0;
  std::vector<CellSpec> cells;
  for (double s : {1.00, 0.95, 0.90}) {
    CellSpec c = single_peak_cell(c0 * s);
    cells.push_back(c);
  }
  const double q_sat = module_qc(cells, 0.0, 3.6 + 60 * 0.05);
  CHECK(std::abs(q_sat - 2.85 * c0) <= 1e-9);
}

TEST_CASE("generated profiles satisfy the profile invariants") {
  AgingSpec aging;
  aging.n_modules = 2;
  aging.n_checkpoints = 4;
  aging.samples_per_profile = 64;
  const SynthDataset ds = synth_dataset(aging, CellSpec{});
  REQUIRE(ds.profiles.size() == 8);
  for (const auto& p : ds.profiles) CHECK_NOTHROW(validate_profile(p));
}

TEST_CASE("zero variation gives identical cells at every checkpoint") {
  AgingSpec aging;
  aging.n_modules = 2;
  aging.n_checkpoints = 5;
  aging.variation_cv = 0.0;
  aging.samples_per_profile = 64;
  const SynthDataset ds = synth_dataset(aging, CellSpec{});
  for (std::size_t i = 0; i < ds.truth.size(); i += 3) {
    CHECK(ds.truth[i].capacity_ah == ds.truth[i + 1].capacity_ah);
    CHECK(ds.truth[i].capacity_ah == ds.truth[i + 2].capacity_ah);
  }
}

TEST_CASE("final labels land near soh_end") {
  AgingSpec aging;
  aging.n_modules = 12;
  aging.n_checkpoints = 10;
  aging.soh_end = 0.86;
  aging.samples_per_profile = 64;
  const SynthDataset ds = synth_dataset(aging, CellSpec{});
  for (const auto& p : ds.profiles) {
    if (p.cycle == 9) {
      CHECK(*p.soh_label >= 0.84);
      CHECK(*p.soh_label <= 0.88);
    }
    if (p.cycle == 0) CHECK(*p.soh_label == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("labels equal the capacity-sum ratio") {
  AgingSpec aging;
  aging.n_modules = 3;
  aging.n_checkpoints = 6;
  aging.samples_per_profile = 64;
  CellSpec base;
  const SynthDataset ds = synth_dataset(aging, base);
  const double fresh = base.capacity_ah * aging.cells_per_module;
  for (const auto& p : ds.profiles) {
    double sum = 0;
    int module = std::stoi(p.source_id.substr(1));
    for (const auto& t : ds.truth)
      if (t.module == module && t.checkpoint == p.cycle) sum += t.capacity_ah;
    CHECK(std::abs(*p.soh_label - sum / fresh) <= 1e-9);
  }
}

TEST_CASE("same seed reproduces the dataset exactly") {
  AgingSpec aging;
  aging.n_modules = 2;
  aging.n_checkpoints = 3;
  aging.samples_per_profile = 64;
  const SynthDataset a = synth_dataset(aging, CellSpec{});
  const SynthDataset b = synth_dataset(aging, CellSpec{});
  REQUIRE(a.profiles.size() == b.profiles.size());
  for (std::size_t i = 0; i < a.profiles.size(); ++i) {
    CHECK(a.profiles[i].voltage_v == b.profiles[i].voltage_v);
    CHECK(a.profiles[i].capacity_ah == b.profiles[i].capacity_ah);
  }
  for (std::size_t i = 0; i < a.truth.size(); ++i)
    CHECK(a.truth[i].capacity_ah == b.truth[i].capacity_ah);
}

TEST_CASE("equal module SOH can hide different per-cell splits") {
  // One module with three evenly faded cells, one with a spread of fades
  // summing to the same module capacity. The aligned module keeps a taller
  // IC peak; the spread module's peak flattens.
  CellSpec base;
  base.capacity_ah = 70.0;
  base.peak_centers_v = {3.65};
  base.peak_widths_v = {0.03};
  base.peak_weights = {1.0};
  base.resistance_ohm = 0.0;
  const double shift_per_fade = 0.4;

  auto faded = [&](double fade) {
    CellSpec c = base;
    c.capacity_ah = base.capacity_ah * (1.0 - fade);
    c.peak_centers_v[0] += shift_per_fade * fade;
    return c;
  };
  const std::vector<CellSpec> even{faded(0.05), faded(0.05), faded(0.05)};
  const std::vector<CellSpec> spread{faded(0.0), faded(0.05), faded(0.10)};

  double cap_even = 0, cap_spread = 0;
  for (const auto& c : even) cap_even += c.capacity_ah;
  for (const auto& c : spread) cap_spread += c.capacity_ah;
  REQUIRE(cap_even == doctest::Approx(cap_spread).epsilon(1e-12));  // same module SOH

  auto max_ic = [](const std::vector<CellSpec>& cells) {
    double best = 0;
    for (int i = 0; i < 20000; ++i) {
      const double v = 3.5 + (3.9 - 3.5) * i / 19999.0;
      best = std::max(best, module_ic(cells, 0.0, v));
    }
    return best;
  };
  const double ic_even = max_ic(even);
  const double ic_spread = max_ic(spread);
  CHECK(std::abs(ic_even - ic_spread) / ic_even > 0.05);
}

TEST_CASE("ground truth file format") {
  AgingSpec aging;
  aging.n_modules = 1;
  aging.n_checkpoints = 2;
  aging.samples_per_profile = 64;
  const SynthDataset ds = synth_dataset(aging, CellSpec{});
  const auto path = (std::filesystem::temp_directory_path() / "soh_truth.csv").string();
  save_ground_truth(path, ds);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "module_id,checkpoint,cell_index,cell_capacity_ah");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 6);  // 1 module x 2 checkpoints x 3 cells
  std::remove(path.c_str());
}

TEST_CASE("aging spec validation") {
  AgingSpec a;
  a.soh_end = 1.0;
  CHECK_THROWS_AS(validate_aging_spec(a), ValidationError);
  a = AgingSpec{};
  a.n_checkpoints = 1;
  CHECK_THROWS_AS(validate_aging_spec(a), ValidationError);
  a = AgingSpec{};
  a.variation_cv = -0.1;
  CHECK_THROWS_AS(validate_aging_spec(a), ValidationError);
}
