#include "soh/rvr.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "soh/errors.hpp"

namespace soh {

double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime, double rho) {
  if (x.size() != x_prime.size()) throw ValidationError("rbf_kernel: dimension mismatch");
  return std::exp(-rho * (x - x_prime).squaredNorm());
}

Eigen::MatrixXd build_design(const Eigen::MatrixXd& inputs, double rho, bool include_offset) {
  const auto n = inputs.rows();
  if (n < 2) throw ValidationError("build_design: need at least 2 inputs");
  const Eigen::Index off = include_offset ? 1 : 0;
  Eigen::MatrixXd phi(n, n + off);
  if (include_offset) phi.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      phi(i, j + off) = std::exp(-rho * (inputs.row(i) - inputs.row(j)).squaredNorm());
  return phi;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_system(const Eigen::MatrixXd& phi, const Eigen::VectorXd& alpha,
                                          double beta) {
  Eigen::MatrixXd h = beta * (phi.transpose() * phi);
  h.diagonal() += alpha;
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success)
    throw NumericError("posterior_update: Cholesky factorization failed (alpha in [" +
                       std::to_string(alpha.minCoeff()) + ", " + std::to_string(alpha.maxCoeff()) +
                       "], beta=" + std::to_string(beta) + ")");
  return llt;
}

}  // namespace

std::pair<Eigen::MatrixXd, Eigen::VectorXd> posterior_update(const Eigen::MatrixXd& phi,
                                                             const Eigen::VectorXd& y,
                                                             const Eigen::VectorXd& alpha,
                                                             double beta) {
  if (alpha.minCoeff() <= 0) throw ValidationError("posterior_update: alpha must be positive");
  if (!(beta > 0)) throw ValidationError("posterior_update: beta must be positive");
  auto llt = factor_system(phi, alpha, beta);
  const Eigen::MatrixXd sigma =
      llt.solve(Eigen::MatrixXd::Identity(phi.cols(), phi.cols()));
  const Eigen::VectorXd mu = beta * (sigma * (phi.transpose() * y));
  return {sigma, mu};
}

std::pair<Eigen::VectorXd, double> hyper_update(const Eigen::MatrixXd& sigma,
                                                const Eigen::VectorXd& mu,
                                                const Eigen::VectorXd& alpha_old, double /*beta_old*/,
                                                const Eigen::MatrixXd& phi,
                                                const Eigen::VectorXd& y, double epsilon) {
  const auto p = mu.size();
  if (sigma.rows() != p || sigma.cols() != p || alpha_old.size() != p || phi.cols() != p)
    throw ValidationError("hyper_update: incoherent shapes");

  Eigen::VectorXd alpha(p);
  double gamma_sum = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double gamma = 1.0 - alpha_old[i] * sigma(i, i);
    gamma_sum += gamma;
    alpha[i] = std::max(gamma, epsilon) / (mu[i] * mu[i]);
  }

  const double n = static_cast<double>(y.size());
  const double denom = n - gamma_sum;
  if (denom <= 0)
    throw NumericError("hyper_update: degenerate noise (N - sum gamma = " + std::to_string(denom) +
                       ")");
  const double residual = (y - phi * mu).squaredNorm();
  if (residual <= 0)
    throw NumericError("hyper_update: degenerate noise (zero residual)");
  return {alpha, denom / residual};
}

double median_heuristic_rho(const Eigen::MatrixXd& inputs) {
  const auto n = inputs.rows();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      dists.push_back((inputs.row(i) - inputs.row(j)).norm());
  if (dists.empty()) return 1.0;
  const auto mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  const double med = dists[mid];
  if (!(med > 0)) return 1.0;
  return 1.0 / (2.0 * static_cast<double>(inputs.cols()) * med * med);
}

double log_evidence(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& alpha, double beta) {
  // log N(y | 0, beta^-1 I + Phi A^-1 Phi^T) through the Woodbury identities:
  // log|C| = -N log beta - sum log alpha + log|beta Phi^T Phi + A|,
  // y^T C^-1 y = beta (y^T y - y^T Phi mu).
  const double n = static_cast<double>(y.size());
  auto llt = factor_system(phi, alpha, beta);
  const double logdet_h = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Eigen::VectorXd mu = beta * llt.solve(phi.transpose() * y);
  const double logdet_c = -n * std::log(beta) - alpha.array().log().sum() + logdet_h;
  const double quad = beta * (y.squaredNorm() - y.dot(phi * mu));
  return -0.5 * (n * std::log(2.0 * M_PI) + logdet_c + quad);
}

namespace {

double sample_std(const Eigen::VectorXd& x) {
  const double m = x.mean();
  return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

template <typename M>
M take_rows(const M& m, const std::vector<Eigen::Index>& idx) {
  M out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

// phi(x) over the pruned basis, in stored order (offset first when used).
Eigen::VectorXd design_row(const RvrModel& m, const Eigen::VectorXd& x_std) {
  const Eigen::Index off = m.offset_used ? 1 : 0;
  Eigen::VectorXd row(m.n_relevance_vectors() + off);
  if (m.offset_used) row[0] = 1.0;
  for (Eigen::Index j = 0; j < m.n_relevance_vectors(); ++j)
    row[j + off] = std::exp(-m.rho * (x_std.transpose() - m.relevance_vectors.row(j)).squaredNorm());
  return row;
}

}  // namespace

RvrModel train(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& labels,
               const RvrConfig& config, std::vector<std::string> feature_names) {
  const auto n = inputs.rows();
  if (n < 4) throw ValidationError("rvr train: need at least 4 samples");
  if (labels.size() != n) throw ValidationError("rvr train: label length mismatch");
  if (!inputs.allFinite() || !labels.allFinite())
    throw ValidationError("rvr train: non-finite inputs");

  RvrModel model;
  model.feature_names = std::move(feature_names);

  Eigen::MatrixXd xs = inputs;
  Eigen::VectorXd ys = labels;
  if (config.standardize) {
    model.x_mean.resize(inputs.cols());
    model.x_std.resize(inputs.cols());
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
      model.x_mean[j] = inputs.col(j).mean();
      model.x_std[j] = sample_std(inputs.col(j));
      if (!(model.x_std[j] > 0))
        throw ValidationError("rvr train: constant input column " + std::to_string(j));
      xs.col(j) = (inputs.col(j).array() - model.x_mean[j]) / model.x_std[j];
    }
    model.y_mean = labels.mean();
    model.y_std = sample_std(labels);
    if (!(model.y_std > 0)) throw ValidationError("rvr train: constant labels");
    ys = (labels.array() - model.y_mean) / model.y_std;
  } else {
    model.x_mean = Eigen::VectorXd::Zero(inputs.cols());
    model.x_std = Eigen::VectorXd::Ones(inputs.cols());
    model.y_mean = 0.0;
    model.y_std = 1.0;
  }

  model.rho = config.rho > 0 ? config.rho : config.rho_scale * median_heuristic_rho(xs);

  Eigen::MatrixXd phi = build_design(xs, model.rho, config.include_offset);
  // Basis identity per column: -1 is the offset placeholder, otherwise the
  // index of the training input behind the kernel column.
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(phi.cols()));
  for (std::size_t j = 0; j < basis.size(); ++j)
    basis[j] = config.include_offset ? static_cast<Eigen::Index>(j) - 1 : static_cast<Eigen::Index>(j);

  const double alpha_init = 1.0 / ((static_cast<double>(n) + 1.0) * (static_cast<double>(n) + 1.0));
  model.diagnostics.initial_alpha = alpha_init;
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(phi.cols(), alpha_init);
  Eigen::VectorXd alpha_old = alpha;
  double beta = 1.0 / std::pow(0.1 * sample_std(ys), 2);

  bool converged = false;
  int iterations = 0;
  for (int it = 1; it <= config.n_iter_max; ++it) {
    iterations = it;
    model.diagnostics.log_evidence.push_back(log_evidence(phi, ys, alpha, beta));

    auto [sigma, mu] = posterior_update(phi, ys, alpha, beta);
    auto [alpha_new, beta_new] = hyper_update(sigma, mu, alpha, beta, phi, ys, config.epsilon);
    beta = beta_new;

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < alpha_new.size(); ++i)
      if (alpha_new[i] < config.alpha_threshold) keep.push_back(i);
    if (keep.empty()) throw NumericError("rvr train: every basis function was pruned");

    if (static_cast<Eigen::Index>(keep.size()) != alpha_new.size()) {
      alpha_new = take(alpha_new, keep);
      alpha = take(alpha, keep);
      phi = take_rows(Eigen::MatrixXd(phi.transpose()), keep).transpose();
      std::vector<Eigen::Index> basis_new;
      basis_new.reserve(keep.size());
      for (auto i : keep) basis_new.push_back(basis[static_cast<std::size_t>(i)]);
      basis = std::move(basis_new);
    }
    model.diagnostics.basis_count.push_back(static_cast<int>(basis.size()));

    const double step = (alpha_new - alpha).cwiseAbs().maxCoeff();
    alpha = alpha_new;
    if (step <= config.tolerance && it > 1) {
      converged = true;
      break;
    }
  }

  // Final posterior on the pruned system, so the stored Sigma/mu match the
  // stored alpha/beta exactly.
  auto [sigma, mu] = posterior_update(phi, ys, alpha, beta);
  Eigen::MatrixXd h = beta * (phi.transpose() * phi);
  h.diagonal() += alpha;
  model.diagnostics.identity_residual =
      (sigma * h - Eigen::MatrixXd::Identity(h.rows(), h.cols())).cwiseAbs().maxCoeff();

  model.offset_used = !basis.empty() && basis.front() == -1;
  const Eigen::Index n_rv = static_cast<Eigen::Index>(basis.size()) - (model.offset_used ? 1 : 0);
  model.relevance_vectors.resize(n_rv, xs.cols());
  for (Eigen::Index j = 0; j < n_rv; ++j)
    model.relevance_vectors.row(j) = xs.row(basis[static_cast<std::size_t>(j + (model.offset_used ? 1 : 0))]);
  model.posterior_mean = mu;
  model.posterior_cov = sigma;
  model.alpha = alpha;
  model.beta = beta;
  model.converged = converged;
  model.diagnostics.iterations = iterations;
  return model;
}

SohEstimate predict(const RvrModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.relevance_vectors.cols())
    throw ValidationError("rvr predict: input dimension mismatch (" + std::to_string(x.size()) +
                          " vs " + std::to_string(model.relevance_vectors.cols()) + ")");
  const Eigen::VectorXd xs = (x - model.x_mean).cwiseQuotient(model.x_std);
  const Eigen::VectorXd row = design_row(model, xs);
  const double t_std = model.posterior_mean.dot(row);
  const double var_std = 1.0 / model.beta + row.dot(model.posterior_cov * row);

  SohEstimate est;
  est.mean = model.y_mean + model.y_std * t_std;
  est.sigma = model.y_std * std::sqrt(var_std);
  est.lo = est.mean - 3.0 * est.sigma;
  est.hi = est.mean + 3.0 * est.sigma;
  return est;
}

EvalMetrics evaluate(const RvrModel& model, const Eigen::MatrixXd& inputs,
                     const Eigen::VectorXd& labels) {
  if (inputs.rows() != labels.size()) throw ValidationError("rvr evaluate: shape mismatch");
  EvalMetrics m;
  m.n = inputs.rows();
  double ss = 0.0, sigma_sum = 0.0;
  Eigen::Index covered = 0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const SohEstimate e = predict(model, inputs.row(i).transpose());
    const double err = e.mean - labels[i];
    ss += err * err;
    sigma_sum += 3.0 * e.sigma;
    if (labels[i] >= e.lo && labels[i] <= e.hi) ++covered;
  }
  m.rmse = std::sqrt(ss / static_cast<double>(m.n));
  m.avg_three_sigma = sigma_sum / static_cast<double>(m.n);
  m.coverage_997 = static_cast<double>(covered) / static_cast<double>(m.n);
  return m;
}

namespace {

nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vector_from(const nlohmann::json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& a, Eigen::Index cols_hint = 0) {
  const auto rows = static_cast<Eigen::Index>(a.size());
  if (rows == 0) return Eigen::MatrixXd(0, cols_hint);
  const auto cols = static_cast<Eigen::Index>(a[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  return m;
}

}  // namespace

void save_model(const std::string& path, const RvrModel& model) {
  nlohmann::json j;
  j["version"] = 1;
  j["rho"] = model.rho;
  j["beta"] = model.beta;
  j["offset_used"] = model.offset_used;
  j["alpha"] = to_json(model.alpha);
  j["mu"] = to_json(model.posterior_mean);
  j["sigma"] = to_json(model.posterior_cov);
  j["rv"] = to_json(model.relevance_vectors);
  j["x_mean"] = to_json(model.x_mean);
  j["x_std"] = to_json(model.x_std);
  j["y_mean"] = model.y_mean;
  j["y_std"] = model.y_std;
  j["converged"] = model.converged;
  j["feature_names"] = model.feature_names;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

RvrModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse model file " + path + ": " + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw ValidationError("model file " + path + ": unsupported version");

  RvrModel m;
  m.rho = j.at("rho").get<double>();
  m.beta = j.at("beta").get<double>();
  m.offset_used = j.at("offset_used").get<bool>();
  m.alpha = vector_from(j.at("alpha"));
  m.posterior_mean = vector_from(j.at("mu"));
  m.posterior_cov = matrix_from(j.at("sigma"));
  m.relevance_vectors = matrix_from(j.at("rv"));
  m.x_mean = vector_from(j.at("x_mean"));
  m.x_std = vector_from(j.at("x_std"));
  m.y_mean = j.at("y_mean").get<double>();
  m.y_std = j.at("y_std").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();

  const Eigen::Index p = m.n_relevance_vectors() + (m.offset_used ? 1 : 0);
  if (m.posterior_mean.size() != p || m.alpha.size() != p || m.posterior_cov.rows() != p ||
      m.posterior_cov.cols() != p)
    throw ValidationError("model file " + path + ": incoherent dimensions");
  Eigen::LLT<Eigen::MatrixXd> llt(m.posterior_cov);
  if (llt.info() != Eigen::Success)
    throw ValidationError("model file " + path + ": posterior covariance not positive definite");
  return m;
}

}  // namespace soh
