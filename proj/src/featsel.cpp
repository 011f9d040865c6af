#include "soh/featsel.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "soh/errors.hpp"
#include "soh/infotheory.hpp"

namespace soh {

CriterionValue criterion_j(const Eigen::VectorXd& candidate,
                           const std::vector<Eigen::VectorXd>& selected,
                           const Eigen::VectorXd& label, int k, std::uint64_t seed) {
  CriterionValue v;
  v.relevance = normalized_mi(candidate, label, k, seed).normalized.value();
  if (!selected.empty()) {
    double red = 0.0, comp = 0.0;
    for (const auto& s : selected) {
      red += normalized_mi(candidate, s, k, seed).normalized.value();
      comp += normalized_cmi(candidate, s, label, k, seed).normalized.value();
    }
    v.avg_redundancy = red / static_cast<double>(selected.size());
    v.avg_complementarity = comp / static_cast<double>(selected.size());
  }
  v.j = v.relevance - v.avg_redundancy + v.avg_complementarity;
  return v;
}

namespace {

constexpr const char* kLabelKey = "\x01label";  // cannot collide with a feature name

// Per-run estimate cache. Raw MI/CMI are computed on pairwise-complete rows;
// self-informations are cached per column over that column's available rows,
// which matches the per-pair normalization exactly whenever masks are full.
class PairCache {
 public:
  PairCache(const FeatureTable& table, int k, std::uint64_t seed)
      : table_(table), k_(k), seed_(seed) {}

  double nmi(const std::string& a, const std::string& b) {
    const auto key = ordered(a, b);
    if (auto it = mi_.find(key); it != mi_.end()) return it->second;
    auto [fa, fb] = pair_columns(a, b);
    const double raw = knn_mi(fa, fb, k_, seed_).raw;
    const double value = raw / denom(a, b);
    mi_.emplace(key, value);
    return value;
  }

  double ncmi_given_label(const std::string& a, const std::string& b) {
    const auto key = ordered(a, b);
    if (auto it = cmi_.find(key); it != cmi_.end()) return it->second;
    auto [fa, fb, y] = pair_columns_with_label(a, b);
    const double raw = knn_cmi({fa, fb, y}, k_, seed_).raw;
    const double value = raw / denom(a, b);
    cmi_.emplace(key, value);
    return value;
  }

  double relevance(const std::string& a) { return nmi(a, kLabelKey); }

 private:
  static std::pair<std::string, std::string> ordered(const std::string& a, const std::string& b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }

  Eigen::MatrixXd column(const std::string& name, const std::vector<Eigen::Index>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), 1);
    if (name == kLabelKey) {
      for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = table_.labels[rows[i]];
    } else {
      const auto j = table_.column(name);
      for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = table_.values(rows[i], j);
    }
    return out;
  }

  std::vector<Eigen::Index> complete_rows(const std::vector<std::string>& names) const {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < table_.rows(); ++i) {
      bool ok = true;
      for (const auto& nm : names)
        if (nm != kLabelKey && !table_.mask(i, table_.column(nm))) {
          ok = false;
          break;
        }
      if (ok) rows.push_back(i);
    }
    if (static_cast<int>(rows.size()) <= 2 * k_)
      throw ValidationError("select_features: too few complete rows for pair (" +
                            std::to_string(rows.size()) + ")");
    return rows;
  }

  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> pair_columns(const std::string& a,
                                                           const std::string& b) {
    const auto rows = complete_rows({a, b});
    return {column(a, rows), column(b, rows)};
  }

  std::tuple<Eigen::MatrixXd, Eigen::MatrixXd, Eigen::MatrixXd> pair_columns_with_label(
      const std::string& a, const std::string& b) {
    const auto rows = complete_rows({a, b});
    return {column(a, rows), column(b, rows), column(kLabelKey, rows)};
  }

  double self(const std::string& name) {
    if (auto it = self_.find(name); it != self_.end()) return it->second;
    const auto rows = complete_rows({name});
    const double value = self_information(column(name, rows), k_, seed_).raw;
    self_.emplace(name, value);
    return value;
  }

  double denom(const std::string& a, const std::string& b) {
    const double d = std::min(self(a), self(b));
    if (d <= 1e-6)
      throw NumericError("select_features: self-information of " +
                         std::string(self(a) <= self(b) ? a : b) + " is degenerate");
    return d;
  }

  const FeatureTable& table_;
  int k_;
  std::uint64_t seed_;
  std::map<std::string, double> self_;
  std::map<std::pair<std::string, std::string>, double> mi_;
  std::map<std::pair<std::string, std::string>, double> cmi_;
};

void snapshot(IterationRecord& rec, const std::vector<std::string>& s,
              const std::set<std::string>& r, const std::set<std::string>& u) {
  rec.selected_after = s;
  rec.removed_after.assign(r.begin(), r.end());
  rec.candidates_after.assign(u.begin(), u.end());
}

}  // namespace

std::pair<SelectionState, CriterionTrace> select_features(const FeatureTable& table,
                                                          const SelectOptions& opts) {
  if (table.feature_names.empty()) throw ValidationError("select_features: empty feature set");
  if (!table.standardization) throw ValidationError("select_features: table must be standardized");
  if (!table.has_labels) throw ValidationError("select_features: table must be labeled");
  // The excursion band above 1 mirrors the estimator's documented tolerance.
  if (!(opts.threshold > 0.0 && opts.threshold <= 1.1))
    throw ValidationError("select_features: threshold must be in (0, 1.1]");

  std::vector<std::string> selected;
  std::set<std::string> removed;
  std::set<std::string> candidates(table.feature_names.begin(), table.feature_names.end());
  for (const auto& p : opts.preselected) {
    if (!candidates.erase(p))
      throw ValidationError("select_features: preselected feature '" + p +
                            "' not in the table (or listed twice)");
    selected.push_back(p);
  }

  PairCache cache(table, opts.k, opts.seed);
  CriterionTrace trace;

  // Initial removal of features completely redundant to preselected ones.
  {
    IterationRecord rec;
    rec.iteration = 0;
    for (auto it = candidates.begin(); it != candidates.end();) {
      bool hit = false;
      for (const auto& s : selected) {
        const double v = cache.nmi(*it, s);
        if (v >= opts.threshold) {
          rec.removals.push_back({*it, s, v});
          removed.insert(*it);
          hit = true;
          break;
        }
      }
      it = hit ? candidates.erase(it) : std::next(it);
    }
    snapshot(rec, selected, removed, candidates);
    trace.iterations.push_back(std::move(rec));
  }

  int iteration = 0;
  while (!candidates.empty()) {
    IterationRecord rec;
    rec.iteration = ++iteration;

    std::string best;
    CriterionValue best_value;
    for (const auto& name : candidates) {  // lexicographic order; ties keep the first
      CriterionValue v;
      v.relevance = cache.relevance(name);
      if (!selected.empty()) {
        double red = 0.0, comp = 0.0;
        for (const auto& s : selected) {
          red += cache.nmi(name, s);
          comp += cache.ncmi_given_label(name, s);
        }
        v.avg_redundancy = red / static_cast<double>(selected.size());
        v.avg_complementarity = comp / static_cast<double>(selected.size());
      }
      v.j = v.relevance - v.avg_redundancy + v.avg_complementarity;
      rec.evaluations.push_back({name, v});
      if (best.empty() || v.j > best_value.j) {
        best = name;
        best_value = v;
      }
    }

    rec.winner = best;
    selected.push_back(best);
    candidates.erase(best);

    for (auto it = candidates.begin(); it != candidates.end();) {
      const double v = cache.nmi(best, *it);
      if (v >= opts.threshold) {
        rec.removals.push_back({*it, best, v});
        removed.insert(*it);
        it = candidates.erase(it);
      } else {
        ++it;
      }
    }
    snapshot(rec, selected, removed, candidates);
    trace.iterations.push_back(std::move(rec));
  }

  SelectionState state;
  state.selected = std::move(selected);
  state.removed.assign(removed.begin(), removed.end());
  state.all = table.feature_names;
  state.preselected = opts.preselected;
  state.threshold = opts.threshold;
  return {std::move(state), std::move(trace)};
}

RankReport rank_report(const SelectionState& state, const CriterionTrace& trace) {
  RankReport report;
  std::map<std::string, CriterionValue> chosen;
  for (const auto& it : trace.iterations)
    for (const auto& e : it.evaluations)
      if (e.name == it.winner) chosen[e.name] = e.value;

  int rank = 1;
  for (const auto& name : state.selected) {
    RankEntry entry;
    entry.rank = rank++;
    entry.feature = name;
    entry.preselected =
        std::find(state.preselected.begin(), state.preselected.end(), name) != state.preselected.end();
    if (auto it = chosen.find(name); it != chosen.end()) entry.value = it->second;
    report.entries.push_back(std::move(entry));
  }
  for (const auto& it : trace.iterations)
    for (const auto& r : it.removals) report.removed.push_back(r);
  return report;
}

}  // namespace soh
