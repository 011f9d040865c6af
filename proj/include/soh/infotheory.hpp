#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>

namespace soh {

/// Digamma function, absolute error <= 1e-10 for x >= 1.
/// Throws ValidationError for x <= 0.
double digamma(double x);

/// Sample triple for CMI estimation: N rows each of F, G, H (columns are
/// coordinates, dim >= 1). Inputs are expected standardized.
struct Sample3 {
  Eigen::MatrixXd f;
  Eigen::MatrixXd g;
  Eigen::MatrixXd h;
};

struct MiEstimate {
  double raw = 0.0;  // nats, clamped at 0
  std::optional<double> normalized;
  int k = 0;
  Eigen::Index n = 0;
  int flagged_points = 0;  // zero-count guard activations
};

/// kNN conditional mutual information estimate of I(F;G|H) in nats.
/// For every point the k-th neighbor distance in the joint space under the
/// l-inf norm defines a window; digamma-weighted counts of the points inside
/// that window in the (F,H), (G,H) and H marginal spaces are averaged and
/// clamped at zero. Duplicate values are broken by seeded uniform jitter of
/// magnitude 1e-10 times the column scale; the jitter stream is derived from
/// the column content so estimates are symmetric under argument swap.
/// Requires k >= 1 and N > 2k.
MiEstimate knn_cmi(const Sample3& sample, int k, std::uint64_t seed = 0);

/// MI via the same estimator with H set to seeded unit white Gaussian noise.
MiEstimate knn_mi(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g, int k, std::uint64_t seed);

/// Finite self-information proxy: the pair estimator applied to
/// (F, F + jitter). Diverges with N for continuous F, as intended; used only
/// as a normalization scale.
MiEstimate self_information(const Eigen::MatrixXd& f, int k, std::uint64_t seed);

/// Raw estimate divided by min(I(F;F), I(G;G)). CMI normalization uses the
/// unconditional self-informations. Throws NumericError when the smaller
/// self-information is below 1e-6.
MiEstimate normalized_mi(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g, int k,
                         std::uint64_t seed);
MiEstimate normalized_cmi(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g,
                          const Eigen::MatrixXd& h, int k, std::uint64_t seed);

}  // namespace soh
