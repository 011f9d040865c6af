#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace soh {

struct RvrConfig {
  double rho = 0.0;        // kernel width; <= 0 selects the median heuristic
  double rho_scale = 1.0;  // multiplier applied to the heuristic value
  int n_iter_max = 3000;
  double alpha_threshold = 1e9;  // prune basis functions at alpha >= this
  double tolerance = 1e-3;       // stop when ||alpha - alpha_old||_inf <= tol
  double epsilon = 1e-8;         // floor on gamma in the alpha update
  bool include_offset = true;
  bool standardize = true;  // standardize inputs and labels before training
};

double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime, double rho);

/// N x (N+1) design matrix with a leading all-ones column when the offset is
/// enabled (N x N otherwise); entry (i, j+1) is K(x_i, x_j).
Eigen::MatrixXd build_design(const Eigen::MatrixXd& inputs, double rho, bool include_offset);

/// Posterior of the weights: Sigma = (beta Phi^T Phi + diag(alpha))^-1 via
/// Cholesky, mu = beta Sigma Phi^T y. Throws NumericError when the
/// factorization fails, reporting the alpha spectrum.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> posterior_update(const Eigen::MatrixXd& phi,
                                                             const Eigen::VectorXd& y,
                                                             const Eigen::VectorXd& alpha,
                                                             double beta);

/// Type-II ML fixed-point update: alpha_i = max(gamma_i, eps) / mu_i^2 with
/// gamma_i = 1 - alpha_old_i Sigma_ii, and beta^-1 = ||y - Phi mu||^2 /
/// (N - sum gamma). Throws NumericError when the noise becomes degenerate
/// (zero residual or non-positive denominator). beta_old is unused by the
/// update laws and accepted for signature completeness.
std::pair<Eigen::VectorXd, double> hyper_update(const Eigen::MatrixXd& sigma,
                                                const Eigen::VectorXd& mu,
                                                const Eigen::VectorXd& alpha_old, double beta_old,
                                                const Eigen::MatrixXd& phi,
                                                const Eigen::VectorXd& y, double epsilon);

/// 1/(2 d median^2) over the pairwise Euclidean distances of the rows.
double median_heuristic_rho(const Eigen::MatrixXd& inputs);

struct TrainDiagnostics {
  int iterations = 0;
  double initial_alpha = 0.0;
  double identity_residual = 0.0;  // ||Sigma (beta Phi^T Phi + A) - I||_max at convergence
  std::vector<double> log_evidence;  // per iteration, for the alpha/beta entering it
  std::vector<int> basis_count;      // surviving basis functions after each prune
};

struct RvrModel {
  Eigen::MatrixXd relevance_vectors;  // N_rv x d, standardized coordinates
  Eigen::VectorXd posterior_mean;     // pruned; offset weight first when used
  Eigen::MatrixXd posterior_cov;      // pruned, symmetric positive definite
  Eigen::VectorXd alpha;              // pruned
  double beta = 0.0;
  bool offset_used = false;
  double rho = 0.0;
  Eigen::VectorXd x_mean, x_std;
  double y_mean = 0.0, y_std = 1.0;
  bool converged = false;
  std::vector<std::string> feature_names;
  TrainDiagnostics diagnostics;  // not serialized

  Eigen::Index n_relevance_vectors() const { return relevance_vectors.rows(); }
};

/// Trains the model per the ARD fixed point: alpha_i start at 1/(N+1)^2,
/// beta^-1 at (0.1 std(y))^2, basis functions are pruned at alpha >= the
/// threshold, and iteration stops on the alpha tolerance (after the first
/// pass) or at n_iter_max, in which case the model carries converged=false.
/// Inputs/labels are standardized internally unless config.standardize is
/// off. Throws NumericError if every basis function is pruned.
RvrModel train(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& labels,
               const RvrConfig& config, std::vector<std::string> feature_names = {});

struct SohEstimate {
  double mean = 0.0;
  double sigma = 0.0;
  double lo = 0.0;  // mean - 3 sigma
  double hi = 0.0;  // mean + 3 sigma
};

/// Predictive distribution at x (physical units in, physical units out):
/// t = mu^T phi(x), sigma^2 = beta^-1 + phi(x)^T Sigma phi(x), both
/// de-standardized; the interval is (t - 3 sigma, t + 3 sigma).
SohEstimate predict(const RvrModel& model, const Eigen::VectorXd& x);

struct EvalMetrics {
  double rmse = 0.0;
  double avg_three_sigma = 0.0;
  double coverage_997 = 0.0;  // fraction of labels inside the 3-sigma interval
  Eigen::Index n = 0;
};

EvalMetrics evaluate(const RvrModel& model, const Eigen::MatrixXd& inputs,
                     const Eigen::VectorXd& labels);

/// Log marginal likelihood log p(y | alpha, beta) of a (possibly pruned)
/// system; the type-II objective.
double log_evidence(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& alpha, double beta);

/// Versioned key-value model file (JSON text, full round-trip precision).
void save_model(const std::string& path, const RvrModel& model);
RvrModel load_model(const std::string& path);

}  // namespace soh
