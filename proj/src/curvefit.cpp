#include "soh/curvefit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "soh/errors.hpp"

namespace soh {

namespace {

constexpr int kMonotoneGrid = 512;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2) return v[mid];
  const double hi = v[mid];
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1, v.end());
  return 0.5 * (v[mid - 1] + hi);
}

Eigen::VectorXd pick_centers(const Eigen::VectorXd& v, int max_centers) {
  const auto n = v.size();
  if (n <= max_centers) return v;
  // Targets uniform in voltage, snapped to the nearest data sample, deduped.
  std::vector<double> centers;
  centers.reserve(static_cast<std::size_t>(max_centers));
  const double lo = v[0], hi = v[n - 1];
  Eigen::Index cursor = 0;
  for (int k = 0; k < max_centers; ++k) {
    const double target = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(max_centers - 1);
    while (cursor + 1 < n && std::abs(v[cursor + 1] - target) <= std::abs(v[cursor] - target)) ++cursor;
    if (centers.empty() || v[cursor] != centers.back()) centers.push_back(v[cursor]);
  }
  return Eigen::Map<Eigen::VectorXd>(centers.data(), static_cast<Eigen::Index>(centers.size()));
}

// Median absolute second difference scaled to an i.i.d. noise estimate.
// The median ignores the localized curvature of a smooth noiseless trend.
double second_diff_noise(const Eigen::VectorXd& x) {
  const auto n = x.size();
  if (n < 3) return 0.0;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n - 2));
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    d.push_back(std::abs(x[i + 1] - 2.0 * x[i] + x[i - 1]));
  return median(std::move(d)) / 0.6745 / std::sqrt(6.0);
}

void check_v_range(const IcDvCurve& c, double v) {
  const double tol = 1e-9 * (c.v_max - c.v_min);
  if (v < c.v_min - tol || v > c.v_max + tol)
    throw ValidationError("voltage " + std::to_string(v) + " outside fitted range [" +
                          std::to_string(c.v_min) + ", " + std::to_string(c.v_max) + "]");
}

}  // namespace

namespace {

// Average long profiles onto uniform voltage bins. Both the voltage noise
// and the capacity noise shrink with the per-bin count, which is what makes
// dense sampling pay off in the derivative estimate.
std::pair<Eigen::VectorXd, Eigen::VectorXd> bin_profile(const Eigen::VectorXd& v,
                                                        const Eigen::VectorXd& q, int n_bins) {
  const double lo = v[0], hi = v[v.size() - 1];
  std::vector<double> vsum(static_cast<std::size_t>(n_bins), 0.0), qsum(vsum);
  std::vector<int> count(static_cast<std::size_t>(n_bins), 0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    int b = static_cast<int>((v[i] - lo) / (hi - lo) * n_bins);
    b = std::clamp(b, 0, n_bins - 1);
    vsum[static_cast<std::size_t>(b)] += v[i];
    qsum[static_cast<std::size_t>(b)] += q[i];
    ++count[static_cast<std::size_t>(b)];
  }
  std::vector<double> vb, qb;
  for (int b = 0; b < n_bins; ++b) {
    if (count[static_cast<std::size_t>(b)] == 0) continue;
    const double vm = vsum[static_cast<std::size_t>(b)] / count[static_cast<std::size_t>(b)];
    if (!vb.empty() && vm <= vb.back()) continue;
    vb.push_back(vm);
    qb.push_back(qsum[static_cast<std::size_t>(b)] / count[static_cast<std::size_t>(b)]);
  }
  return {Eigen::Map<Eigen::VectorXd>(vb.data(), static_cast<Eigen::Index>(vb.size())),
          Eigen::Map<Eigen::VectorXd>(qb.data(), static_cast<Eigen::Index>(qb.size()))};
}

}  // namespace

IcDvCurve fit_qv(const QVProfile& profile, const FitOptions& opts) {
  validate_profile(profile);
  Eigen::VectorXd v = profile.voltage_v;
  Eigen::VectorXd q = profile.capacity_ah;
  if (v.size() > 2 * opts.max_centers) std::tie(v, q) = bin_profile(v, q, 2 * opts.max_centers);
  const auto n = v.size();

  IcDvCurve c;

  // Data-driven noise scale, needed before the bandwidth is chosen.
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 1; i < n; ++i) slopes.push_back((q[i] - q[i - 1]) / (v[i] - v[i - 1]));
  const double ic_med = median(slopes);
  const double sigma_q = second_diff_rms(q);
  const double sigma_v = second_diff_rms(v);
  c.noise_estimate = std::hypot(sigma_q, ic_med * sigma_v);

  if (opts.bandwidth > 0) {
    c.bandwidth = opts.bandwidth;
  } else {
    std::vector<double> gaps;
    gaps.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 1; i < n; ++i) gaps.push_back(v[i] - v[i - 1]);
    const double spacing = median(std::move(gaps));
    c.bandwidth = 2.0 * spacing;
    if (!(c.bandwidth > 0)) throw NumericError("fit_qv: degenerate voltage spacing");
    // Voltage noise of sigma_v smoothed over a width-h kernel leaves a
    // relative derivative error of about sigma_v sqrt(spacing) / h^1.5;
    // the floor keeps that near 1%. Noiseless data keeps the 2x rule.
    const double sigma_v_eff = std::hypot(sigma_v, ic_med > 0 ? sigma_q / ic_med : 0.0);
    if (sigma_v_eff > 0)
      c.bandwidth = std::max(
          c.bandwidth, std::pow(sigma_v_eff * std::sqrt(spacing) / opts.noise_target, 2.0 / 3.0));
  }
  c.ridge = opts.ridge > 0 ? opts.ridge : 1e-6 * static_cast<double>(n);
  c.v_mid = 0.5 * (v[0] + v[n - 1]);

  // Centers denser than the bandwidth add conditioning cost without
  // resolution, so the subsampling target tracks h/3.
  const double span = v[n - 1] - v[0];
  const int wanted = static_cast<int>(std::ceil(span / (c.bandwidth / 3.0))) + 1;
  c.basis_centers = pick_centers(v, std::min(opts.max_centers, std::max(wanted, 8)));
  const auto m = c.basis_centers.size();

  // Design: [1, v - v_mid, kernel block]; ridge on the kernel weights only.
  const auto p = m + 2;
  Eigen::MatrixXd D(n, p);
  D.col(0).setOnes();
  D.col(1) = v.array() - c.v_mid;
  const double inv2h2 = 0.5 / (c.bandwidth * c.bandwidth);
  for (Eigen::Index j = 0; j < m; ++j)
    D.col(j + 2) = (-(v.array() - c.basis_centers[j]).square() * inv2h2).exp();

  // Column equilibration keeps the normal system well scaled. The ridge is
  // defined in the unscaled convention (Phi^T Phi + lambda I on the kernel
  // block), so it enters the scaled diagonal as lambda / scale^2.
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double norm = D.col(j).norm();
    scale[j] = norm > 0 ? norm : 1.0;
    D.col(j) /= scale[j];
  }

  Eigen::MatrixXd G = D.transpose() * D;
  for (Eigen::Index j = 2; j < p; ++j) G(j, j) += c.ridge / (scale[j] * scale[j]);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  const double emax = eig.eigenvalues().maxCoeff();
  const double emin = eig.eigenvalues().minCoeff();
  c.condition = (emin > 0) ? emax / emin : std::numeric_limits<double>::infinity();
  if (!(c.condition < 1e12))
    throw NumericError("fit_qv: normal system condition " + std::to_string(c.condition) +
                       " exceeds 1e12; increase ridge");

  const Eigen::VectorXd rhs = D.transpose() * q;
  Eigen::VectorXd x = eig.eigenvectors() *
                      (eig.eigenvalues().array().inverse() *
                       (eig.eigenvectors().transpose() * rhs).array())
                          .matrix();
  x = x.array() / scale.array();

  c.affine_intercept = x[0];
  c.affine_slope = x[1];
  c.basis_weights = x.tail(m);
  c.v_min = v[0];
  c.v_max = v[n - 1];

  double ss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = qc_at(c, v[i]) - q[i];
    ss += r * r;
  }
  c.residual_rms = std::sqrt(ss / static_cast<double>(n));
  const double q_span = std::max(q[n - 1] - q[0], 1e-300);
  c.residual_warning = c.residual_rms > 3.0 * std::max(c.noise_estimate, 1e-12 * q_span);

  c.q_min = qc_at(c, c.v_min);
  c.q_max = qc_at(c, c.v_max);
  double prev = c.q_min;
  for (int k = 1; k < kMonotoneGrid; ++k) {
    const double vk = c.v_min + (c.v_max - c.v_min) * k / (kMonotoneGrid - 1.0);
    const double qk = qc_at(c, vk);
    if (qk < prev - 1e-9 * q_span) {
      c.monotone_warning = true;
      break;
    }
    prev = qk;
  }
  return c;
}

double qc_at(const IcDvCurve& c, double v) {
  check_v_range(c, v);
  const double inv2h2 = 0.5 / (c.bandwidth * c.bandwidth);
  double s = c.affine_intercept + c.affine_slope * (v - c.v_mid);
  for (Eigen::Index j = 0; j < c.basis_centers.size(); ++j) {
    const double d = v - c.basis_centers[j];
    s += c.basis_weights[j] * std::exp(-d * d * inv2h2);
  }
  return s;
}

double ic_at(const IcDvCurve& c, double v) {
  check_v_range(c, v);
  const double invh2 = 1.0 / (c.bandwidth * c.bandwidth);
  double s = c.affine_slope;
  for (Eigen::Index j = 0; j < c.basis_centers.size(); ++j) {
    const double d = v - c.basis_centers[j];
    s += c.basis_weights[j] * (-d * invh2) * std::exp(-0.5 * d * d * invh2);
  }
  return s;
}

double voltage_at_capacity(const IcDvCurve& c, double q) {
  const double tol = 1e-9 * std::max(std::abs(c.q_min), std::abs(c.q_max));
  if (q < c.q_min - tol || q > c.q_max + tol)
    throw ValidationError("capacity " + std::to_string(q) + " outside fitted range [" +
                          std::to_string(c.q_min) + ", " + std::to_string(c.q_max) + "]");
  double a = c.v_min, b = c.v_max;
  for (int it = 0; it < 100 && b - a > 1e-15 * (c.v_max - c.v_min); ++it) {
    const double mid = 0.5 * (a + b);
    if (qc_at(c, mid) < q)
      a = mid;
    else
      b = mid;
  }
  return 0.5 * (a + b);
}

double dv_at(const IcDvCurve& c, double q) {
  const double v = voltage_at_capacity(c, q);
  const double ic = ic_at(c, v);
  if (std::abs(ic) < 1e-9)
    throw NumericError("dv_at: |IC| below 1e-9 at q=" + std::to_string(q) +
                       " (derivative singularity)");
  return 1.0 / ic;
}

Eigen::VectorXd eval_ic(const IcDvCurve& curve, const Eigen::VectorXd& v_grid) {
  Eigen::VectorXd out(v_grid.size());
  for (Eigen::Index i = 0; i < v_grid.size(); ++i) out[i] = ic_at(curve, v_grid[i]);
  return out;
}

Eigen::VectorXd eval_dv(const IcDvCurve& curve, const Eigen::VectorXd& q_grid) {
  Eigen::VectorXd out(q_grid.size());
  for (Eigen::Index i = 0; i < q_grid.size(); ++i) out[i] = dv_at(curve, q_grid[i]);
  return out;
}

}  // namespace soh
