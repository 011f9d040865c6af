#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "soh/types.hpp"

namespace soh {

struct CriterionValue {
  double j = 0.0;
  double relevance = 0.0;
  double avg_redundancy = 0.0;
  double avg_complementarity = 0.0;
};

/// J(X) = relevance - average redundancy + average complementarity against
/// the already selected columns; just the relevance when none are selected.
/// Inputs are standardized columns.
CriterionValue criterion_j(const Eigen::VectorXd& candidate,
                           const std::vector<Eigen::VectorXd>& selected,
                           const Eigen::VectorXd& label, int k, std::uint64_t seed);

struct CandidateEval {
  std::string name;
  CriterionValue value;
};

struct RemovalRecord {
  std::string removed;
  std::string trigger;  // selected feature it is redundant with
  double nmi = 0.0;
};

struct IterationRecord {
  int iteration = 0;  // 0 = pre-loop removal against preselected features
  std::vector<CandidateEval> evaluations;
  std::string winner;
  std::vector<RemovalRecord> removals;
  // Partition snapshot at the iteration boundary.
  std::vector<std::string> selected_after;
  std::vector<std::string> removed_after;
  std::vector<std::string> candidates_after;
};

struct CriterionTrace {
  std::vector<IterationRecord> iterations;
};

struct SelectionState {
  std::vector<std::string> selected;  // ranked; preselected entries first
  std::vector<std::string> removed;   // unranked
  std::vector<std::string> candidates;  // empty after a completed run
  std::vector<std::string> all;
  std::vector<std::string> preselected;
  double threshold = 0.9;
};

struct SelectOptions {
  double threshold = 0.9;  // in (0, 1.1]; removal needs nmi >= threshold
  std::vector<std::string> preselected;
  int k = 5;
  std::uint64_t seed = 0;
};

/// Forward search maximizing J with threshold-based removal of completely
/// redundant features. The table must be standardized and labeled. Rows with
/// a masked entry among the compared columns are dropped pairwise. Ties at
/// the argmax break lexicographically; pair estimates are cached across
/// iterations.
std::pair<SelectionState, CriterionTrace> select_features(const FeatureTable& table,
                                                          const SelectOptions& opts);

struct RankEntry {
  int rank = 0;
  std::string feature;
  bool preselected = false;
  CriterionValue value;
};

struct RankReport {
  std::vector<RankEntry> entries;
  std::vector<RemovalRecord> removed;
};

RankReport rank_report(const SelectionState& state, const CriterionTrace& trace);

}  // namespace soh
