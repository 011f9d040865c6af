#pragma once

#include <Eigen/Core>
#include <utility>

#include "soh/types.hpp"

namespace soh {

struct KsResult {
  double statistic = 0.0;  // sup |ECDF_a - ECDF_b|, in [0, 1]
  double p_value = 1.0;    // asymptotic Kolmogorov distribution
};

/// Two-sample Kolmogorov-Smirnov test. Throws ValidationError on empty input.
KsResult ks_two_sample(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Survival function of the Kolmogorov distribution, Q(lambda) = P(K > lambda).
double kolmogorov_sf(double lambda);

/// Disjoint, exhaustive, seed-reproducible partition of the table's rows.
/// Throws ValidationError when either side would be empty.
std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, const SplitSpec& spec);

/// The index sets behind split(), train first, each sorted ascending.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_indices(Eigen::Index n,
                                                                              const SplitSpec& spec);

}  // namespace soh
