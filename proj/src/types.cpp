#include "soh/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "soh/errors.hpp"

namespace soh {

void validate_profile(const QVProfile& p) {
  const auto n = p.size();
  if (p.capacity_ah.size() != n)
    throw ValidationError("profile " + p.source_id + ": capacity/voltage length mismatch");
  if (n < 8)
    throw ValidationError("profile " + p.source_id + ": too short (" + std::to_string(n) +
                          " samples, need >= 8)");
  if (!p.capacity_ah.allFinite() || !p.voltage_v.allFinite())
    throw ValidationError("profile " + p.source_id + ": non-finite sample");
  for (Eigen::Index i = 1; i < n; ++i) {
    if (p.capacity_ah[i] < p.capacity_ah[i - 1])
      throw ValidationError("profile " + p.source_id + ": capacity decreases at sample " +
                            std::to_string(i));
    if (p.voltage_v[i] <= p.voltage_v[i - 1])
      throw ValidationError("profile " + p.source_id + ": voltage not strictly increasing at sample " +
                            std::to_string(i));
  }
  if (p.soh_label) {
    const double s = *p.soh_label;
    if (!(s > 0.0 && s <= 1.2))
      throw ValidationError("profile " + p.source_id + ": soh label " + std::to_string(s) +
                            " outside (0, 1.2]");
  }
}

Eigen::Index FeatureTable::column(const std::string& name) const {
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(feature_names.size()); ++j)
    if (feature_names[static_cast<std::size_t>(j)] == name) return j;
  throw ValidationError("unknown feature: " + name);
}

Eigen::MatrixXd FeatureTable::select_columns(const std::vector<std::string>& names) const {
  Eigen::MatrixXd out(rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = values.col(column(names[j]));
  return out;
}

FeatureTable FeatureTable::take_rows(const std::vector<Eigen::Index>& idx) const {
  FeatureTable out;
  out.feature_names = feature_names;
  out.has_labels = has_labels;
  out.standardization = standardization;
  const auto m = static_cast<Eigen::Index>(idx.size());
  out.values.resize(m, cols());
  out.mask.resize(m, cols());
  if (has_labels) out.labels.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.values.row(i) = values.row(idx[static_cast<std::size_t>(i)]);
    out.mask.row(i) = mask.row(idx[static_cast<std::size_t>(i)]);
    if (has_labels) out.labels[i] = labels[idx[static_cast<std::size_t>(i)]];
  }
  if (!row_ids.empty()) {
    out.row_ids.reserve(idx.size());
    for (auto i : idx) out.row_ids.push_back(row_ids[static_cast<std::size_t>(i)]);
  }
  return out;
}

FeatureTable make_feature_table(std::vector<std::string> names, Eigen::MatrixXd values,
                                std::optional<Eigen::VectorXd> labels, std::vector<RowId> row_ids,
                                Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask) {
  if (values.cols() != static_cast<Eigen::Index>(names.size()))
    throw ValidationError("feature table: name/column count mismatch");
  std::set<std::string> uniq(names.begin(), names.end());
  if (uniq.size() != names.size()) throw ValidationError("feature table: duplicate feature names");
  if (!values.allFinite()) throw ValidationError("feature table: non-finite entry");

  FeatureTable t;
  t.feature_names = std::move(names);
  t.values = std::move(values);
  if (mask.size() == 0) {
    t.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(t.values.rows(), t.values.cols(), true);
  } else {
    if (mask.rows() != t.values.rows() || mask.cols() != t.values.cols())
      throw ValidationError("feature table: mask shape mismatch");
    t.mask = std::move(mask);
  }
  if (labels) {
    if (labels->size() != t.values.rows())
      throw ValidationError("feature table: label length mismatch");
    if (!labels->allFinite()) throw ValidationError("feature table: non-finite label");
    t.labels = std::move(*labels);
    t.has_labels = true;
  }
  if (!row_ids.empty() && static_cast<Eigen::Index>(row_ids.size()) != t.values.rows())
    throw ValidationError("feature table: row id count mismatch");
  t.row_ids = std::move(row_ids);
  return t;
}

std::pair<FeatureTable, std::vector<std::string>> drop_constant_columns(const FeatureTable& t,
                                                                        double rel_tol) {
  std::vector<Eigen::Index> keep;
  std::vector<std::string> dropped;
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    double lo = 0, hi = 0;
    bool any = false;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      if (!t.mask(i, j)) continue;
      const double v = t.values(i, j);
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    const double scale = std::max({std::abs(lo), std::abs(hi), 1.0});
    if (any && hi - lo > rel_tol * scale)
      keep.push_back(j);
    else
      dropped.push_back(t.feature_names[static_cast<std::size_t>(j)]);
  }

  FeatureTable out;
  out.has_labels = t.has_labels;
  out.labels = t.labels;
  out.row_ids = t.row_ids;
  out.values.resize(t.rows(), static_cast<Eigen::Index>(keep.size()));
  out.mask.resize(t.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t jj = 0; jj < keep.size(); ++jj) {
    out.feature_names.push_back(t.feature_names[static_cast<std::size_t>(keep[jj])]);
    out.values.col(static_cast<Eigen::Index>(jj)) = t.values.col(keep[jj]);
    out.mask.col(static_cast<Eigen::Index>(jj)) = t.mask.col(keep[jj]);
  }
  return {std::move(out), std::move(dropped)};
}

}  // namespace soh
