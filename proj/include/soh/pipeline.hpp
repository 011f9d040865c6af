#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "soh/featext.hpp"
#include "soh/featsel.hpp"
#include "soh/rvr.hpp"
#include "soh/synthgen.hpp"
#include "soh/types.hpp"

namespace soh {

void save_selection(const std::string& path, const RankReport& report);
void save_removed(const std::string& path, const RankReport& report);

/// Pairwise normalized MI and CMI-given-label matrices of a standardized,
/// labeled table (the data behind redundancy/complementarity heatmaps).
struct MiMatrices {
  std::vector<std::string> names;
  Eigen::MatrixXd nmi;              // symmetric, ~1 on the diagonal
  Eigen::MatrixXd ncmi_given_label; // symmetric
  Eigen::VectorXd relevance;        // normalized MI against the label
};

MiMatrices mi_matrices(const FeatureTable& standardized, int k, std::uint64_t seed);
void save_mi_matrices(const std::string& nmi_path, const std::string& cmi_path,
                      const std::string& relevance_path, const MiMatrices& m);

struct CvFold {
  int fold = 0;
  EvalMetrics metrics;
  int n_rv = 0;
};

struct CvCombo {
  int n_features = 0;
  double rho_scale = 1.0;
  double mean_rmse = 0.0;
  double mean_three_sigma = 0.0;
  double mean_n_rv = 0.0;
  std::vector<CvFold> folds;
};

struct CvReport {
  std::vector<CvCombo> combos;
};

/// K-fold cross-validation over (number of leading ranked features, kernel
/// width scale). Fold assignment is a seeded shuffle dealt round-robin.
/// Rows with a masked entry among the used features are excluded per combo.
CvReport cross_validate(const FeatureTable& raw_table, const std::vector<std::string>& ranked,
                        const std::vector<int>& n_features_grid,
                        const std::vector<double>& rho_scale_grid, int folds, std::uint64_t seed,
                        const RvrConfig& base_config);

void save_cv_report(const std::string& path, const CvReport& report);

struct PipelineConfig {
  std::string workdir = "out";
  std::string dataset_path;  // empty: synthesize into the workdir
  AgingSpec aging;
  CellSpec base_cell;
  ExtractConfig extract;
  int n_features = 2;
  double threshold = 0.9;
  int k = 5;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  RvrConfig rvr;
  int threads = 1;
  bool verbose = false;
};

struct PipelineResult {
  std::vector<std::string> features_used;
  SelectionState selection;
  EvalMetrics train_metrics;
  EvalMetrics test_metrics;
  int n_rv = 0;
  int profiles_in = 0;
  int profiles_used = 0;
  int profiles_skipped = 0;
  int rows_masked_out = 0;  // rows dropped for masked entries among used features
  std::vector<std::string> dropped_constant;
  double ks_statistic = 0.0;  // train labels vs all labels
  double ks_p_value = 1.0;
};

/// End-to-end run: dataset (loaded or synthesized), extraction, selection,
/// training, evaluation, reports. Every stage writes its artifact into the
/// workdir; a stage failure removes that stage's partial files and rethrows.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace soh
