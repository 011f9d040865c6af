#include "soh/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "soh/errors.hpp"

namespace soh {

double digamma(double x) {
  if (!(x > 0)) throw ValidationError("digamma: argument must be positive");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return result;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(const double* data, Eigen::Index n) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (Eigen::Index i = 0; i < n * static_cast<Eigen::Index>(sizeof(double)); ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

double sample_std(const Eigen::VectorXd& x) {
  if (x.size() < 2) return 0.0;
  const double m = x.mean();
  return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

// Tie-breaking jitter. Seeding from the column content keeps the estimator
// symmetric under argument swap: the stream travels with the data.
Eigen::MatrixXd jittered(const Eigen::MatrixXd& m, std::uint64_t seed) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double mag = 1e-10 * sample_std(m.col(j));
    if (mag <= 0) continue;
    std::mt19937_64 rng(splitmix64(fnv1a64(m.col(j).data(), m.rows()) ^ seed));
    std::uniform_real_distribution<double> u(-mag, mag);
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) += u(rng);
  }
  return out;
}

double linf(const Eigen::MatrixXd& m, Eigen::Index i, Eigen::Index j) {
  if (m.cols() == 1) return std::abs(m(i, 0) - m(j, 0));
  return (m.row(i) - m.row(j)).cwiseAbs().maxCoeff();
}

void check_block(const Eigen::MatrixXd& m, Eigen::Index n, const char* name) {
  if (m.rows() != n) throw ValidationError(std::string("knn estimator: ") + name + " length mismatch");
  if (m.cols() < 1) throw ValidationError(std::string("knn estimator: ") + name + " needs dim >= 1");
  if (!m.allFinite()) throw ValidationError(std::string("knn estimator: ") + name + " has non-finite entries");
}

}  // namespace

MiEstimate knn_cmi(const Sample3& sample, int k, std::uint64_t seed) {
  const Eigen::Index n = sample.f.rows();
  check_block(sample.f, n, "F");
  check_block(sample.g, n, "G");
  check_block(sample.h, n, "H");
  if (k < 1) throw ValidationError("knn estimator: k must be >= 1");
  if (n <= 2 * k) throw ValidationError("knn estimator: need N > 2k (N=" + std::to_string(n) +
                                        ", k=" + std::to_string(k) + ")");

  const Eigen::MatrixXd F = jittered(sample.f, seed);
  const Eigen::MatrixXd G = jittered(sample.g, seed);
  const Eigen::MatrixXd H = jittered(sample.h, seed);

  std::vector<double> df(static_cast<std::size_t>(n)), dg(df), dh(df), dj(df), scratch(df);
  int flagged = 0;
  // Accumulated in index order; the (k~ + h) - (fh + gh) grouping keeps the
  // sum bitwise symmetric in F and G.
  double xi_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      df[static_cast<std::size_t>(j)] = linf(F, i, j);
      dg[static_cast<std::size_t>(j)] = linf(G, i, j);
      dh[static_cast<std::size_t>(j)] = linf(H, i, j);
      dj[static_cast<std::size_t>(j)] = std::max({df[static_cast<std::size_t>(j)],
                                                  dg[static_cast<std::size_t>(j)],
                                                  dh[static_cast<std::size_t>(j)]});
    }
    dj[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
    scratch = dj;
    std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
    const double radius = scratch[static_cast<std::size_t>(k - 1)];

    Eigen::Index k_joint = 0, n_fh = 0, n_gh = 0, n_h = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto sj = static_cast<std::size_t>(j);
      if (dj[sj] <= radius) ++k_joint;
      if (std::max(df[sj], dh[sj]) <= radius) ++n_fh;
      if (std::max(dg[sj], dh[sj]) <= radius) ++n_gh;
      if (dh[sj] <= radius) ++n_h;
    }
    auto guard = [&flagged](Eigen::Index c) {
      if (c >= 1) return static_cast<double>(c);
      ++flagged;
      return 1.0;
    };
    xi_sum += (digamma(guard(k_joint)) + digamma(guard(n_h))) -
              (digamma(guard(n_fh)) + digamma(guard(n_gh)));
  }

  MiEstimate est;
  est.raw = std::max(xi_sum / static_cast<double>(n), 0.0);
  est.k = k;
  est.n = n;
  est.flagged_points = flagged;
  return est;
}

MiEstimate knn_mi(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g, int k, std::uint64_t seed) {
  Sample3 s;
  s.f = f;
  s.g = g;
  std::mt19937_64 rng(splitmix64(seed ^ 0x6E6F697365ULL));  // "noise"
  std::normal_distribution<double> gauss(0.0, 1.0);
  s.h.resize(f.rows(), 1);
  for (Eigen::Index i = 0; i < f.rows(); ++i) s.h(i, 0) = gauss(rng);
  return knn_cmi(s, k, seed);
}

MiEstimate self_information(const Eigen::MatrixXd& f, int k, std::uint64_t seed) {
  Eigen::MatrixXd twin = f;
  std::mt19937_64 rng(splitmix64(seed ^ 0x73656C66ULL));  // "self"
  for (Eigen::Index j = 0; j < twin.cols(); ++j) {
    const double mag = 1e-10 * sample_std(twin.col(j));
    std::uniform_real_distribution<double> u(-std::max(mag, 1e-300), std::max(mag, 1e-300));
    for (Eigen::Index i = 0; i < twin.rows(); ++i) twin(i, j) += u(rng);
  }
  return knn_mi(f, twin, k, seed);
}

namespace {

MiEstimate normalize(MiEstimate est, const Eigen::MatrixXd& f, const Eigen::MatrixXd& g, int k,
                     std::uint64_t seed) {
  const double self_f = self_information(f, k, seed).raw;
  const double self_g = self_information(g, k, seed).raw;
  const double denom = std::min(self_f, self_g);
  if (denom <= 1e-6)
    throw NumericError(std::string("normalized MI/CMI: self-information of the ") +
                       (self_f <= self_g ? "first" : "second") +
                       " variable is degenerate (<= 1e-6)");
  est.normalized = est.raw / denom;
  return est;
}

}  // namespace

MiEstimate normalized_mi(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g, int k,
                         std::uint64_t seed) {
  return normalize(knn_mi(f, g, k, seed), f, g, k, seed);
}

MiEstimate normalized_cmi(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g,
                          const Eigen::MatrixXd& h, int k, std::uint64_t seed) {
  Sample3 s{f, g, h};
  return normalize(knn_cmi(s, k, seed), f, g, k, seed);
}

}  // namespace soh
