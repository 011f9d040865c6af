#pragma once

#include <Eigen/Core>

#include "soh/types.hpp"

namespace soh {

/// Smooth fitted Q(V) model: Gaussian radial basis expansion plus an
/// unpenalized affine part, so linear profiles are reproduced exactly and
/// IC = dQc/dV is available in closed form. DV is 1/IC through monotone
/// inversion of the fitted Qc, which keeps IC * DV = 1 by construction.
struct IcDvCurve {
  Eigen::VectorXd basis_centers;  // subsampled data voltages
  Eigen::VectorXd basis_weights;
  double affine_intercept = 0.0;  // about v_mid
  double affine_slope = 0.0;
  double v_mid = 0.0;
  double bandwidth = 0.0;
  double ridge = 0.0;
  double v_min = 0.0, v_max = 0.0;
  double q_min = 0.0, q_max = 0.0;

  // Fit diagnostics.
  double residual_rms = 0.0;
  double noise_estimate = 0.0;
  double condition = 0.0;
  bool monotone_warning = false;
  bool residual_warning = false;
};

struct FitOptions {
  double bandwidth = 0.0;  // <= 0: 2x median spacing with a noise-aware floor
  double ridge = 0.0;      // <= 0: 1e-6 * N
  int max_centers = 128;
  double noise_target = 0.005;  // relative derivative error the floor aims at
};

/// Ridge-regularized least squares of Qc on V. Throws NumericError when the
/// normal system's condition estimate exceeds 1e12 (the message suggests a
/// larger ridge). A non-monotone fitted Qc sets monotone_warning instead of
/// failing, so downstream extraction can proceed.
IcDvCurve fit_qv(const QVProfile& profile, const FitOptions& opts = {});

/// Fitted charged capacity at a voltage inside [v_min, v_max].
double qc_at(const IcDvCurve& curve, double v);
/// Analytic dQc/dV at a voltage inside [v_min, v_max].
double ic_at(const IcDvCurve& curve, double v);
/// 1/IC at the voltage where the fitted Qc equals q (bisection inversion).
/// Throws NumericError when |IC| < 1e-9 there.
double dv_at(const IcDvCurve& curve, double q);
/// The inversion behind dv_at, exposed for feature extraction.
double voltage_at_capacity(const IcDvCurve& curve, double q);

Eigen::VectorXd eval_ic(const IcDvCurve& curve, const Eigen::VectorXd& v_grid);
Eigen::VectorXd eval_dv(const IcDvCurve& curve, const Eigen::VectorXd& q_grid);

}  // namespace soh
