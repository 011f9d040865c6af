#include "soh/standardize.hpp"

#include <cmath>

#include "soh/errors.hpp"

namespace soh {

namespace {

// Sample mean/std over the unmasked entries of one column.
std::pair<double, double> column_stats(const FeatureTable& t, Eigen::Index j) {
  double sum = 0;
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    if (t.mask(i, j)) {
      sum += t.values(i, j);
      ++n;
    }
  if (n < 2) throw ValidationError("standardize: column " + t.feature_names[static_cast<std::size_t>(j)] +
                                   " has fewer than 2 available entries");
  const double mean = sum / static_cast<double>(n);
  double ss = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    if (t.mask(i, j)) {
      const double d = t.values(i, j) - mean;
      ss += d * d;
    }
  return {mean, std::sqrt(ss / static_cast<double>(n - 1))};
}

void check_columns(const FeatureTable& t, const Standardization& p) {
  if (t.feature_names != p.feature_names)
    throw ValidationError("standardize: parameter column set does not match table");
}

}  // namespace

FeatureTable standardize_fit(const FeatureTable& table) {
  if (table.rows() < 2) throw ValidationError("standardize: need at least 2 rows");

  Standardization p;
  p.feature_names = table.feature_names;
  p.mean.resize(table.cols());
  p.std.resize(table.cols());
  for (Eigen::Index j = 0; j < table.cols(); ++j) {
    auto [m, s] = column_stats(table, j);
    if (s <= 0.0)
      throw ValidationError("standardize: constant column " +
                            table.feature_names[static_cast<std::size_t>(j)]);
    p.mean[j] = m;
    p.std[j] = s;
  }
  if (table.has_labels) {
    const double m = table.labels.mean();
    const double s = std::sqrt((table.labels.array() - m).square().sum() /
                               static_cast<double>(table.rows() - 1));
    if (s <= 0.0) throw ValidationError("standardize: constant label column");
    p.label_mean = m;
    p.label_std = s;
    p.has_label_params = true;
  }
  return standardize_apply(table, p);
}

FeatureTable standardize_apply(const FeatureTable& table, const Standardization& params) {
  check_columns(table, params);
  FeatureTable out = table;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (out.mask(i, j)) out.values(i, j) = (out.values(i, j) - params.mean[j]) / params.std[j];
  if (out.has_labels && params.has_label_params)
    out.labels = (out.labels.array() - params.label_mean) / params.label_std;
  out.standardization = params;
  return out;
}

FeatureTable standardize_invert(const FeatureTable& table, const Standardization& params) {
  check_columns(table, params);
  FeatureTable out = table;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (out.mask(i, j)) out.values(i, j) = out.values(i, j) * params.std[j] + params.mean[j];
  if (out.has_labels && params.has_label_params)
    out.labels = out.labels.array() * params.label_std + params.label_mean;
  out.standardization.reset();
  return out;
}

}  // namespace soh
