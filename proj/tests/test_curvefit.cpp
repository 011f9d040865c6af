#include <doctest.h>

#include <cmath>
#include <random>

#include "soh/curvefit.hpp"
#include "soh/errors.hpp"
#include "test_helpers.hpp"

using namespace soh;
using soh::testing::sigmoid;
using soh::testing::sigmoid_profile;

TEST_CASE("noiseless sigmoid profile is fitted to 1e-3 of capacity") {
  const double capacity = 10.0, center = 3.6, width = 0.05;
  const QVProfile p = sigmoid_profile(capacity, center, width, 3.2, 4.0, 64);
  const IcDvCurve curve = fit_qv(p);
  CHECK_FALSE(curve.residual_warning);

  const double q0 = capacity * sigmoid((3.2 - center) / width);
  double max_err = 0;
  for (int i = 0; i < 2000; ++i) {
    const double v = 3.2 + (4.0 - 3.2) * i / 1999.0;
    const double truth = capacity * sigmoid((v - center) / width) - q0;
    max_err = std::max(max_err, std::abs(qc_at(curve, v) - truth));
  }
  CHECK(max_err <= 1e-3 * capacity);
}

TEST_CASE("linear profile gives a constant IC everywhere") {
  const double a = 25.0, b = -70.0;
  QVProfile p;
  p.source_id = "linear";
  p.capacity_ah.resize(64);
  p.voltage_v.resize(64);
  for (int i = 0; i < 64; ++i) {
    const double v = 3.0 + i / 63.0;
    p.voltage_v[i] = v;
    p.capacity_ah[i] = a * v + b;
  }
  const IcDvCurve curve = fit_qv(p);
  for (int i = 0; i < 512; ++i) {
    const double v = 3.0 + i / 511.0;
    CHECK(std::abs(ic_at(curve, v) - a) / a <= 1e-6);
  }
}

TEST_CASE("1 mV voltage noise moves the IC peak by less than 5 mV") {
  const double capacity = 10.0, center = 3.6, width = 0.05;
  QVProfile clean = sigmoid_profile(capacity, center, width, 3.2, 4.0, 200);
  QVProfile noisy = clean;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1e-3);
  for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.voltage_v[i] += g(rng);
  // Repair any monotonicity break from the noise.
  for (Eigen::Index i = 1; i < noisy.size(); ++i)
    if (noisy.voltage_v[i] <= noisy.voltage_v[i - 1])
      noisy.voltage_v[i] = noisy.voltage_v[i - 1] + 1e-6;

  auto peak_of = [](const IcDvCurve& c) {
    double best_v = 0, best = -1;
    for (int i = 0; i < 20000; ++i) {
      const double v = c.v_min + (c.v_max - c.v_min) * i / 19999.0;
      const double ic = ic_at(c, v);
      if (ic > best) {
        best = ic;
        best_v = v;
      }
    }
    return best_v;
  };
  const double clean_peak = peak_of(fit_qv(clean));
  const double noisy_peak = peak_of(fit_qv(noisy));
  CHECK(std::abs(clean_peak - center) <= 1e-3);
  CHECK(std::abs(noisy_peak - clean_peak) <= 5e-3);
}

TEST_CASE("analytic IC matches central finite differences") {
  const QVProfile p = sigmoid_profile(10.0, 3.6, 0.05, 3.2, 4.0, 100);
  const IcDvCurve curve = fit_qv(p);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(curve.v_min + 0.01, curve.v_max - 0.01);
  const double h = 1e-5;
  for (int t = 0; t < 100; ++t) {
    const double v = u(rng);
    const double fd = (qc_at(curve, v + h) - qc_at(curve, v - h)) / (2 * h);
    const double ic = ic_at(curve, v);
    CHECK(std::abs(ic - fd) <= 1e-4 * std::max(std::abs(fd), 1e-12));
  }
}

TEST_CASE("reciprocal identity IC * DV = 1 at matched points") {
  const QVProfile p = sigmoid_profile(10.0, 3.6, 0.05, 3.2, 4.0, 100);
  const IcDvCurve curve = fit_qv(p);
  for (int i = 1; i < 50; ++i) {
    const double v = curve.v_min + (curve.v_max - curve.v_min) * i / 50.0;
    const double ic = ic_at(curve, v);
    if (std::abs(ic) <= 1e-6) continue;
    const double dv = dv_at(curve, qc_at(curve, v));
    CHECK(std::abs(ic * dv - 1.0) <= 1e-9);
  }
}

TEST_CASE("eval grids enforce the fitted range") {
  const QVProfile p = sigmoid_profile(10.0, 3.6, 0.05, 3.2, 4.0, 64);
  const IcDvCurve curve = fit_qv(p);
  CHECK_THROWS_AS(ic_at(curve, 3.0), ValidationError);
  CHECK_THROWS_AS(qc_at(curve, 4.5), ValidationError);
  CHECK_THROWS_AS(dv_at(curve, curve.q_max + 1.0), ValidationError);
  Eigen::VectorXd bad(1);
  bad << 2.9;
  CHECK_THROWS_AS(eval_ic(curve, bad), ValidationError);
}

TEST_CASE("fit is deterministic") {
  const QVProfile p = sigmoid_profile(10.0, 3.6, 0.05, 3.2, 4.0, 100);
  const IcDvCurve a = fit_qv(p);
  const IcDvCurve b = fit_qv(p);
  CHECK(a.basis_weights == b.basis_weights);
  CHECK(a.bandwidth == b.bandwidth);
}

TEST_CASE("ill-conditioned normal system raises a fit error") {
  // A huge bandwidth makes every kernel column almost identical; with a
  // vanishing ridge the normal system condition blows past 1e12.
  const QVProfile p = sigmoid_profile(10.0, 3.6, 0.05, 3.2, 4.0, 64);
  FitOptions opts;
  opts.bandwidth = 100.0;
  opts.ridge = 1e-18;
  try {
    fit_qv(p, opts);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("ridge") != std::string::npos);
  }
}

TEST_CASE("centers are subsampled for long profiles") {
  const QVProfile p = sigmoid_profile(10.0, 3.6, 0.05, 3.2, 4.0, 500);
  const IcDvCurve curve = fit_qv(p);
  CHECK(curve.basis_centers.size() <= 128);
  // Accuracy should survive the subsampling.
  const double q0 = 10.0 * sigmoid((3.2 - 3.6) / 0.05);
  double max_err = 0;
  for (int i = 0; i < 1000; ++i) {
    const double v = 3.2 + (4.0 - 3.2) * i / 999.0;
    const double truth = 10.0 * sigmoid((v - 3.6) / 0.05) - q0;
    max_err = std::max(max_err, std::abs(qc_at(curve, v) - truth));
  }
  CHECK(max_err <= 1e-3 * 10.0);
}

TEST_CASE("q_range endpoints match the fitted curve") {
  const QVProfile p = sigmoid_profile(10.0, 3.6, 0.05, 3.2, 4.0, 64);
  const IcDvCurve curve = fit_qv(p);
  CHECK(curve.q_min == qc_at(curve, curve.v_min));
  CHECK(curve.q_max == qc_at(curve, curve.v_max));
  CHECK(curve.q_max > curve.q_min);
  CHECK_FALSE(curve.monotone_warning);
}
