#include "soh/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "soh/csv.hpp"
#include "soh/dataset_io.hpp"
#include "soh/errors.hpp"
#include "soh/infotheory.hpp"
#include "soh/standardize.hpp"
#include "soh/stats.hpp"

namespace fs = std::filesystem;

namespace soh {

void save_selection(const std::string& path, const RankReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "rank,feature,preselected,J,relevance,redundancy,complementarity\n";
  for (const auto& e : report.entries)
    out << e.rank << ',' << e.feature << ',' << (e.preselected ? 1 : 0) << ','
        << csv::format(e.value.j) << ',' << csv::format(e.value.relevance) << ','
        << csv::format(e.value.avg_redundancy) << ',' << csv::format(e.value.avg_complementarity)
        << '\n';
}

void save_removed(const std::string& path, const RankReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "feature,redundant_with,nmi\n";
  for (const auto& r : report.removed)
    out << r.removed << ',' << r.trigger << ',' << csv::format(r.nmi) << '\n';
}

MiMatrices mi_matrices(const FeatureTable& standardized, int k, std::uint64_t seed) {
  if (!standardized.standardization) throw ValidationError("mi_matrices: table must be standardized");
  if (!standardized.has_labels) throw ValidationError("mi_matrices: table must be labeled");
  const auto& names = standardized.feature_names;
  const auto nf = static_cast<Eigen::Index>(names.size());

  MiMatrices m;
  m.names = names;
  m.nmi = Eigen::MatrixXd::Zero(nf, nf);
  m.ncmi_given_label = Eigen::MatrixXd::Zero(nf, nf);
  m.relevance.resize(nf);

  Eigen::MatrixXd label = standardized.labels;

  auto column = [&](Eigen::Index j) {
    // Complete rows only; the estimators need full vectors.
    std::vector<double> vals;
    for (Eigen::Index i = 0; i < standardized.rows(); ++i)
      if (standardized.mask(i, j)) vals.push_back(standardized.values(i, j));
    return vals;
  };
  auto pair_cols = [&](Eigen::Index a, Eigen::Index b) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < standardized.rows(); ++i)
      if (standardized.mask(i, a) && standardized.mask(i, b)) rows.push_back(i);
    Eigen::MatrixXd fa(static_cast<Eigen::Index>(rows.size()), 1),
        fb(static_cast<Eigen::Index>(rows.size()), 1), y(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      fa(static_cast<Eigen::Index>(i), 0) = standardized.values(rows[i], a);
      fb(static_cast<Eigen::Index>(i), 0) = standardized.values(rows[i], b);
      y(static_cast<Eigen::Index>(i), 0) = standardized.labels[rows[i]];
    }
    return std::make_tuple(fa, fb, y);
  };

  for (Eigen::Index a = 0; a < nf; ++a) {
    {
      auto vals = column(a);
      Eigen::MatrixXd fa(static_cast<Eigen::Index>(vals.size()), 1);
      Eigen::MatrixXd y(static_cast<Eigen::Index>(vals.size()), 1);
      Eigen::Index r = 0;
      for (Eigen::Index i = 0; i < standardized.rows(); ++i)
        if (standardized.mask(i, a)) {
          fa(r, 0) = standardized.values(i, a);
          y(r, 0) = standardized.labels[i];
          ++r;
        }
      m.relevance[a] = normalized_mi(fa, y, k, seed).normalized.value();
    }
    m.nmi(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < nf; ++b) {
      auto [fa, fb, y] = pair_cols(a, b);
      const double nmi = normalized_mi(fa, fb, k, seed).normalized.value();
      const double ncmi = normalized_cmi(fa, fb, y, k, seed).normalized.value();
      m.nmi(a, b) = m.nmi(b, a) = nmi;
      m.ncmi_given_label(a, b) = m.ncmi_given_label(b, a) = ncmi;
    }
  }
  return m;
}

namespace {

void save_matrix(const std::string& path, const std::vector<std::string>& names,
                 const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "feature";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << names[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << csv::format(m(i, j));
    out << '\n';
  }
}

}  // namespace

void save_mi_matrices(const std::string& nmi_path, const std::string& cmi_path,
                      const std::string& relevance_path, const MiMatrices& m) {
  save_matrix(nmi_path, m.names, m.nmi);
  save_matrix(cmi_path, m.names, m.ncmi_given_label);
  std::ofstream out(relevance_path);
  if (!out) throw IoError("cannot write " + relevance_path);
  out << "feature,relevance\n";
  for (std::size_t i = 0; i < m.names.size(); ++i)
    out << m.names[i] << ',' << csv::format(m.relevance[static_cast<Eigen::Index>(i)]) << '\n';
}

namespace {

// Rows usable for a model over the given features: every entry unmasked.
std::vector<Eigen::Index> usable_rows(const FeatureTable& t, const std::vector<std::string>& feats) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    bool ok = true;
    for (const auto& f : feats)
      if (!t.mask(i, t.column(f))) {
        ok = false;
        break;
      }
    if (ok) rows.push_back(i);
  }
  return rows;
}

}  // namespace

CvReport cross_validate(const FeatureTable& raw_table, const std::vector<std::string>& ranked,
                        const std::vector<int>& n_features_grid,
                        const std::vector<double>& rho_scale_grid, int folds, std::uint64_t seed,
                        const RvrConfig& base_config) {
  if (folds < 2) throw ValidationError("cross_validate: need folds >= 2");
  if (n_features_grid.empty() || rho_scale_grid.empty())
    throw ValidationError("cross_validate: empty grid");
  if (!raw_table.has_labels) throw ValidationError("cross_validate: table must be labeled");

  CvReport report;
  for (int nf : n_features_grid) {
    if (nf < 1 || nf > static_cast<int>(ranked.size()))
      throw ValidationError("cross_validate: n_features " + std::to_string(nf) +
                            " outside [1, " + std::to_string(ranked.size()) + "]");
    for (double rs : rho_scale_grid) {
      CvCombo combo;
      combo.n_features = nf;
      combo.rho_scale = rs;

      std::vector<std::string> feats(ranked.begin(), ranked.begin() + nf);
      const auto rows = usable_rows(raw_table, feats);
      const auto n = static_cast<Eigen::Index>(rows.size());
      if (n < 2 * folds)
        throw ValidationError("cross_validate: too few usable rows (" + std::to_string(n) + ")");

      // Seeded shuffle dealt round-robin keeps fold assignment deterministic.
      std::vector<Eigen::Index> order(rows);
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);

      const Eigen::MatrixXd all_x = raw_table.select_columns(feats);
      for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> tr, va;
        for (std::size_t i = 0; i < order.size(); ++i)
          (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? va : tr).push_back(order[i]);
        if (va.size() < 2 || tr.size() < 4)
          throw ValidationError("cross_validate: fold with too few samples");

        Eigen::MatrixXd xtr(static_cast<Eigen::Index>(tr.size()), all_x.cols());
        Eigen::VectorXd ytr(static_cast<Eigen::Index>(tr.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
          xtr.row(static_cast<Eigen::Index>(i)) = all_x.row(tr[i]);
          ytr[static_cast<Eigen::Index>(i)] = raw_table.labels[tr[i]];
        }
        Eigen::MatrixXd xva(static_cast<Eigen::Index>(va.size()), all_x.cols());
        Eigen::VectorXd yva(static_cast<Eigen::Index>(va.size()));
        for (std::size_t i = 0; i < va.size(); ++i) {
          xva.row(static_cast<Eigen::Index>(i)) = all_x.row(va[i]);
          yva[static_cast<Eigen::Index>(i)] = raw_table.labels[va[i]];
        }

        RvrConfig cfg = base_config;
        cfg.rho_scale = rs;
        const RvrModel model = train(xtr, ytr, cfg, feats);
        CvFold fold;
        fold.fold = f;
        fold.metrics = evaluate(model, xva, yva);
        fold.n_rv = static_cast<int>(model.n_relevance_vectors());
        combo.folds.push_back(fold);
      }

      for (const auto& f : combo.folds) {
        combo.mean_rmse += f.metrics.rmse;
        combo.mean_three_sigma += f.metrics.avg_three_sigma;
        combo.mean_n_rv += f.n_rv;
      }
      const double nf_d = static_cast<double>(combo.folds.size());
      combo.mean_rmse /= nf_d;
      combo.mean_three_sigma /= nf_d;
      combo.mean_n_rv /= nf_d;
      report.combos.push_back(std::move(combo));
    }
  }
  return report;
}

void save_cv_report(const std::string& path, const CvReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "n_features,rho_scale,fold,rmse,avg_three_sigma,n_rv\n";
  for (const auto& c : report.combos) {
    for (const auto& f : c.folds)
      out << c.n_features << ',' << csv::format(c.rho_scale) << ',' << f.fold << ','
          << csv::format(f.metrics.rmse) << ',' << csv::format(f.metrics.avg_three_sigma) << ','
          << f.n_rv << '\n';
    out << c.n_features << ',' << csv::format(c.rho_scale) << ",mean," << csv::format(c.mean_rmse)
        << ',' << csv::format(c.mean_three_sigma) << ',' << csv::format(c.mean_n_rv) << '\n';
  }
}

namespace {

// Tracks files written by the active stage so failures can clean up.
class StageGuard {
 public:
  explicit StageGuard(std::string name) : name_(std::move(name)) {}
  void track(const std::string& path) { files_.push_back(path); }
  void commit() { files_.clear(); }
  ~StageGuard() {
    for (const auto& f : files_) {
      std::error_code ec;
      fs::remove(f, ec);
    }
  }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<std::string> files_;
};

void save_error_histogram(const std::string& path, const std::vector<double>& abs_errors_pct) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "bin_lo_pct,bin_hi_pct,count\n";
  if (abs_errors_pct.empty()) return;
  const double max_err = *std::max_element(abs_errors_pct.begin(), abs_errors_pct.end());
  const int bins = 20;
  const double width = max_err > 0 ? max_err / bins : 1.0;
  std::vector<int> counts(bins, 0);
  for (double e : abs_errors_pct) {
    int b = static_cast<int>(e / width);
    if (b >= bins) b = bins - 1;
    ++counts[static_cast<std::size_t>(b)];
  }
  for (int b = 0; b < bins; ++b)
    out << csv::format(b * width) << ',' << csv::format((b + 1) * width) << ',' << counts[static_cast<std::size_t>(b)]
        << '\n';
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  fs::create_directories(config.workdir);
  auto path = [&](const std::string& name) { return (fs::path(config.workdir) / name).string(); };
  PipelineResult result;

  // Stage 1: dataset.
  std::vector<QVProfile> profiles;
  {
    StageGuard stage("dataset");
    if (config.dataset_path.empty()) {
      SynthDataset ds = synth_dataset(config.aging, config.base_cell);
      stage.track(path("dataset.csv"));
      stage.track(path("ground_truth.csv"));
      save_dataset(path("dataset.csv"), ds.profiles);
      save_ground_truth(path("ground_truth.csv"), ds);
      profiles = std::move(ds.profiles);
    } else {
      profiles = load_dataset(config.dataset_path);
    }
    stage.commit();
  }
  result.profiles_in = static_cast<int>(profiles.size());

  // Stage 2: feature extraction.
  FeatureTable table;
  ExtractReport extract_report;
  {
    StageGuard stage("extract");
    table = extract_table(profiles, config.extract, config.threads, &extract_report);
    stage.track(path("features.csv"));
    stage.track(path("feature_mask.csv"));
    save_feature_table(path("features.csv"), table);
    save_feature_mask(path("feature_mask.csv"), table);
    stage.commit();
  }
  result.profiles_used = extract_report.extracted;
  result.profiles_skipped = static_cast<int>(extract_report.skipped.size());

  auto [reduced, dropped] = drop_constant_columns(table);
  result.dropped_constant = dropped;
  if (reduced.feature_names.empty())
    throw ValidationError("pipeline: every feature column is constant");
  if (!reduced.has_labels) throw ValidationError("pipeline: dataset must be labeled for training");

  // Stage 3: split, standardize on the training side, select.
  SplitSpec split_spec;
  split_spec.train_fraction = config.train_fraction;
  split_spec.seed = config.seed;
  auto [train_table, test_table] = split(reduced, split_spec);

  const KsResult ks = ks_two_sample(train_table.labels, reduced.labels);
  result.ks_statistic = ks.statistic;
  result.ks_p_value = ks.p_value;

  const FeatureTable train_std = standardize_fit(train_table);
  RankReport rank;
  {
    StageGuard stage("select");
    SelectOptions opts;
    opts.threshold = config.threshold;
    opts.k = config.k;
    opts.seed = config.seed;
    auto [state, trace] = select_features(train_std, opts);
    result.selection = state;
    rank = rank_report(state, trace);
    stage.track(path("selection.csv"));
    stage.track(path("removed.csv"));
    save_selection(path("selection.csv"), rank);
    save_removed(path("removed.csv"), rank);
    stage.commit();
  }

  if (config.n_features < 1 || config.n_features > static_cast<int>(result.selection.selected.size()))
    throw ValidationError("pipeline: n_features " + std::to_string(config.n_features) +
                          " outside [1, " + std::to_string(result.selection.selected.size()) + "]");
  result.features_used.assign(result.selection.selected.begin(),
                              result.selection.selected.begin() + config.n_features);

  // Stage 4: train on the raw training columns, evaluate on the held-out side.
  RvrModel model;
  {
    StageGuard stage("train");
    const auto train_rows = usable_rows(train_table, result.features_used);
    result.rows_masked_out += static_cast<int>(train_table.rows()) - static_cast<int>(train_rows.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(train_rows.size()),
                      static_cast<Eigen::Index>(result.features_used.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(train_rows.size()));
    const Eigen::MatrixXd cols = train_table.select_columns(result.features_used);
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = cols.row(train_rows[i]);
      y[static_cast<Eigen::Index>(i)] = train_table.labels[train_rows[i]];
    }
    model = train(x, y, config.rvr, result.features_used);
    result.n_rv = static_cast<int>(model.n_relevance_vectors());
    result.train_metrics = evaluate(model, x, y);
    stage.track(path("model.json"));
    save_model(path("model.json"), model);
    stage.commit();
  }

  // Stage 5: evaluation artifacts.
  {
    StageGuard stage("eval");
    const auto test_rows = usable_rows(test_table, result.features_used);
    result.rows_masked_out += static_cast<int>(test_table.rows()) - static_cast<int>(test_rows.size());
    if (test_rows.empty()) throw ValidationError("pipeline: empty test set after masking");
    const Eigen::MatrixXd cols = test_table.select_columns(result.features_used);

    std::ofstream pred(path("predictions.csv"));
    if (!pred) throw IoError("cannot write " + path("predictions.csv"));
    stage.track(path("predictions.csv"));
    pred << "source_id,cycle,soh_mean,soh_sigma,lo,hi,soh_label\n";

    double ss = 0, sigma_sum = 0;
    Eigen::Index covered = 0;
    std::vector<double> abs_errors_pct;
    for (auto i : test_rows) {
      const SohEstimate e = predict(model, cols.row(i).transpose());
      const double label = test_table.labels[i];
      const double err = e.mean - label;
      ss += err * err;
      sigma_sum += 3.0 * e.sigma;
      if (label >= e.lo && label <= e.hi) ++covered;
      abs_errors_pct.push_back(std::abs(err) * 100.0);
      const auto& id = test_table.row_ids[static_cast<std::size_t>(i)];
      pred << id.source_id << ',' << id.cycle << ',' << csv::format(e.mean) << ','
           << csv::format(e.sigma) << ',' << csv::format(e.lo) << ',' << csv::format(e.hi) << ','
           << csv::format(label) << '\n';
    }
    result.test_metrics.n = static_cast<Eigen::Index>(test_rows.size());
    result.test_metrics.rmse = std::sqrt(ss / static_cast<double>(test_rows.size()));
    result.test_metrics.avg_three_sigma = sigma_sum / static_cast<double>(test_rows.size());
    result.test_metrics.coverage_997 =
        static_cast<double>(covered) / static_cast<double>(test_rows.size());

    stage.track(path("error_histogram.csv"));
    save_error_histogram(path("error_histogram.csv"), abs_errors_pct);

    std::ofstream metrics(path("metrics.csv"));
    if (!metrics) throw IoError("cannot write " + path("metrics.csv"));
    stage.track(path("metrics.csv"));
    metrics << "split,n,rmse,avg_three_sigma,coverage_997,n_rv\n";
    metrics << "train," << result.train_metrics.n << ',' << csv::format(result.train_metrics.rmse)
            << ',' << csv::format(result.train_metrics.avg_three_sigma) << ','
            << csv::format(result.train_metrics.coverage_997) << ',' << result.n_rv << '\n';
    metrics << "test," << result.test_metrics.n << ',' << csv::format(result.test_metrics.rmse)
            << ',' << csv::format(result.test_metrics.avg_three_sigma) << ','
            << csv::format(result.test_metrics.coverage_997) << ',' << result.n_rv << '\n';

    std::ofstream rep(path("report.txt"));
    if (!rep) throw IoError("cannot write " + path("report.txt"));
    stage.track(path("report.txt"));
    rep << "SOH estimation pipeline report\n";
    rep << "==============================\n\n";
    rep << "profiles: " << result.profiles_in << " in, " << result.profiles_used << " used, "
        << result.profiles_skipped << " skipped (insufficient charging range)\n";
    rep << "rows excluded by feature mask: " << result.rows_masked_out << "\n";
    rep << "constant columns dropped:";
    for (const auto& d : result.dropped_constant) rep << ' ' << d;
    rep << "\n";
    rep << "train/test label KS: statistic " << csv::format(result.ks_statistic) << ", p "
        << csv::format(result.ks_p_value) << "\n\n";
    rep << "feature ranking (selected set S):\n";
    for (const auto& e : rank.entries)
      rep << "  " << e.rank << ". " << e.feature << (e.preselected ? " (preselected)" : "")
          << "  J=" << csv::format(e.value.j) << " rel=" << csv::format(e.value.relevance)
          << " red=" << csv::format(e.value.avg_redundancy)
          << " comp=" << csv::format(e.value.avg_complementarity) << "\n";
    rep << "removed set R:";
    for (const auto& r : rank.removed) rep << ' ' << r.removed;
    rep << "\n\n";
    rep << "model: " << result.n_rv << " relevance vectors, features";
    for (const auto& f : result.features_used) rep << ' ' << f;
    rep << "\n";
    rep << "train: rmse " << csv::format(result.train_metrics.rmse * 100) << "% SOH, avg 3-sigma "
        << csv::format(result.train_metrics.avg_three_sigma * 100) << "% SOH\n";
    rep << "test:  rmse " << csv::format(result.test_metrics.rmse * 100) << "% SOH, avg 3-sigma "
        << csv::format(result.test_metrics.avg_three_sigma * 100) << "% SOH, coverage "
        << csv::format(result.test_metrics.coverage_997) << "\n";
    stage.commit();
  }

  return result;
}

}  // namespace soh
