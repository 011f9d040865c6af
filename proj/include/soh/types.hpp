#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace soh {

/// One constant-current charging record: sampled (charged capacity, voltage)
/// pairs plus the charging conditions. Capacity is accumulated from the start
/// of the charging window, in Ah; voltage is the terminal voltage in V.
struct QVProfile {
  Eigen::VectorXd capacity_ah;  // non-decreasing
  Eigen::VectorXd voltage_v;    // strictly increasing, same length
  double temperature_c = 25.0;
  double c_rate = 0.0;
  std::optional<double> soh_label;  // fraction in (0, 1.2]; absent for inference inputs
  std::string source_id;
  long cycle = 0;

  Eigen::Index size() const { return voltage_v.size(); }
};

/// Throws ValidationError if the profile violates its invariants
/// (length >= 8, equal lengths, monotone samples, finite values,
/// label in (0, 1.2] when present).
void validate_profile(const QVProfile& p);

/// Per-column affine transform parameters, fitted on one table and applied
/// to others. Feature columns and the label column are tracked together.
struct Standardization {
  std::vector<std::string> feature_names;
  Eigen::VectorXd mean;  // per feature column
  Eigen::VectorXd std;   // per feature column, sample (n-1) convention
  double label_mean = 0.0;
  double label_std = 1.0;
  bool has_label_params = false;
};

/// Identifies the profile a feature row came from.
struct RowId {
  std::string source_id;
  long cycle = 0;
};

/// Matrix of named feature values, one row per sample, with the SOH label
/// column and (when fitted) standardization metadata. Masked entries hold
/// 0.0 in `values` and false in `mask`; all stored values are finite.
struct FeatureTable {
  std::vector<std::string> feature_names;
  Eigen::MatrixXd values;  // N x F
  Eigen::VectorXd labels;  // N, only meaningful when has_labels
  bool has_labels = false;
  std::vector<RowId> row_ids;                  // N entries (may be empty for synthetic tables)
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // N x F, true = available
  std::optional<Standardization> standardization;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  /// Index of a feature by name; throws ValidationError if absent.
  Eigen::Index column(const std::string& name) const;

  /// Rows N x |names| submatrix in the given column order.
  Eigen::MatrixXd select_columns(const std::vector<std::string>& names) const;

  /// New table containing the given rows, in order.
  FeatureTable take_rows(const std::vector<Eigen::Index>& idx) const;
};

/// Builds a table from parts, checking name uniqueness and finiteness.
/// An empty mask means "all available".
FeatureTable make_feature_table(std::vector<std::string> names, Eigen::MatrixXd values,
                                std::optional<Eigen::VectorXd> labels = std::nullopt,
                                std::vector<RowId> row_ids = {},
                                Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask = {});

/// Drops columns whose available entries are all equal (or all masked).
/// Returns the surviving table plus the names that were dropped.
std::pair<FeatureTable, std::vector<std::string>> drop_constant_columns(const FeatureTable& t,
                                                                        double rel_tol = 1e-12);

enum class SplitMode { random, fixed_count };

/// Reproducible train/test split request. `train_count` is used in
/// fixed_count mode, `train_fraction` otherwise.
struct SplitSpec {
  double train_fraction = 0.8;
  Eigen::Index train_count = 0;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::random;
};

}  // namespace soh
