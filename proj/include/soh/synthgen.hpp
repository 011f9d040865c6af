#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "soh/types.hpp"

namespace soh {

/// Phenomenological cell model: charged capacity is a weighted mixture of
/// logistic plateaus, so the IC curve is a sum of bell-shaped peaks.
struct CellSpec {
  double capacity_ah = 70.0;
  std::vector<double> peak_centers_v = {3.45, 3.65, 3.85};
  std::vector<double> peak_widths_v = {0.035, 0.05, 0.04};
  std::vector<double> peak_weights = {0.30, 0.45, 0.25};
  double resistance_ohm = 5e-4;
};

void validate_cell_spec(const CellSpec& spec);

/// Qc(V) = capacity * sum_j weight_j * sigmoid((V - center_j) / width_j).
double cell_qc(const CellSpec& spec, double v);
/// dQc/dV of cell_qc, analytic.
double cell_ic(const CellSpec& spec, double v);

/// Validated curve handle for a single cell.
struct CellCurve {
  CellSpec spec;
  double qc(double v) const { return cell_qc(spec, v); }
  double ic(double v) const { return cell_ic(spec, v); }
  double operator()(double v) const { return qc(v); }
};

CellCurve synth_cell_curve(CellSpec spec);

/// Quasi-static parallel connection: cells share the terminal voltage and
/// the pack current splits proportionally to cell capacity, each cell seeing
/// a resistive voltage offset.
double module_qc(const std::vector<CellSpec>& cells, double current_a, double v);
double module_ic(const std::vector<CellSpec>& cells, double current_a, double v);

struct ModuleSamplingSpec {
  int n_samples = 240;
  double v_min = 0.0;  // 0 = derive the window from the cell specs
  double v_max = 0.0;
};

/// Samples the module curve on a uniform charged-capacity grid over the
/// voltage window, reporting capacity from the window start, then adds
/// Gaussian voltage noise. Samples that break strict voltage increase after
/// the noise are dropped.
QVProfile synth_module_profile(const std::vector<CellSpec>& cells, double current_a,
                               double noise_sigma_v, std::uint64_t seed,
                               const ModuleSamplingSpec& sampling = {});

struct AgingSpec {
  int n_modules = 12;
  int cells_per_module = 3;
  int n_checkpoints = 20;
  double soh_end = 0.86;         // mean module SOH at the last checkpoint
  double variation_cv = 0.03;    // coefficient of variation of per-cell fade increments
  double peak_shift_per_fade_v = 0.2;  // V per unit capacity-fraction lost
  double noise_sigma_v = 1e-3;
  std::uint64_t seed = 1;
  // Charging context shared by all generated profiles.
  double c_rate = 0.5;
  double temperature_c = 25.0;
  int samples_per_profile = 240;
};

void validate_aging_spec(const AgingSpec& spec);

struct SynthDataset {
  std::vector<QVProfile> profiles;  // one per (module, checkpoint)
  struct TruthRow {
    int module = 0;
    int checkpoint = 0;
    int cell = 0;
    double capacity_ah = 0.0;
  };
  std::vector<TruthRow> truth;
};

/// Ages each cell along an independent log-spaced fade trajectory with
/// multiplicative increment noise of the given CV; peak centers drift with
/// fade. The profile label is the exact capacity-sum ratio.
SynthDataset synth_dataset(const AgingSpec& aging, const CellSpec& base);

void save_ground_truth(const std::string& path, const SynthDataset& ds);

}  // namespace soh
