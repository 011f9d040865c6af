#pragma once

#include <string>
#include <vector>

#include "soh/curvefit.hpp"
#include "soh/types.hpp"

namespace soh {

struct Extremum {
  double location = 0.0;  // V for IC curves, Ah for DV curves
  double height = 0.0;    // Ah/V for IC, V/Ah for DV
};

enum class CurveKind { ic, dv };

struct ExtremaResult {
  std::vector<Extremum> peaks;    // ordered by location
  std::vector<Extremum> valleys;  // ordered by location; alternates with peaks
};

/// Local extrema of the analytic curve on an evaluation grid, refined by
/// golden-section search to 1e-5 abscissa tolerance. Extrema within 1% of
/// the range ends are discarded as boundary artifacts, and adjacent
/// peak/valley pairs whose height gap is below min_prominence of the
/// tallest extremum are merged away (shoulder splits from noise and
/// cell-to-cell misalignment sit well under 2%; genuine valleys are deep).
/// grid_size >= 64.
ExtremaResult find_extrema(const IcDvCurve& curve, CurveKind which, int grid_size = 512,
                           double min_prominence = 0.02);

/// Areas under the IC curve split at the valley voltages: v_min to the first
/// valley, between consecutive valleys, last valley to v_max. Computed
/// exactly from the fitted Qc. No valleys gives the single total area.
std::vector<double> ic_peak_areas(const IcDvCurve& curve, const std::vector<double>& valley_voltages);

enum class PartialAreaMode { cutoff_line, voltage_window };

struct PartialAreaSpec {
  PartialAreaMode mode = PartialAreaMode::voltage_window;
  double cutoff = 0.0;        // Ah/V, cutoff_line mode
  double half_width = 0.025;  // V, voltage_window mode
  int target_peak_index = 0;  // 0 = dominant (tallest) peak, k >= 1 = k-th by location
};

struct PartialArea {
  double area_ah = 0.0;
  bool below_cutoff = false;  // cutoff sits above the target peak
};

/// Area above a horizontal cutoff around the target peak (adaptive Simpson
/// to 1e-6 Ah), or the charged capacity inside a symmetric voltage window
/// clipped to the fitted range.
PartialArea ic_partial_area(const IcDvCurve& curve, const PartialAreaSpec& spec,
                            const std::vector<Extremum>& peaks);

struct CurveFeature {
  std::string name;
  double value = 0.0;
};

/// How many extrema of each kind the feature catalog expects. Negative
/// means "use the profile's own counts" (single-profile extraction).
struct ExpectedCounts {
  int ic_peaks = -1;
  int ic_valleys = -1;
  int dv_peaks = -1;
  int dv_valleys = -1;
};

struct ExtractConfig {
  FitOptions fit;
  int grid_size = 512;
  std::vector<PartialAreaSpec> partial_areas = {PartialAreaSpec{}};
  bool include_areas = true;
  // Estimation gate: minimum profile samples inside the dominant IC peak's
  // window for the profile to be usable at all.
  int gate_min_samples = 8;
  double gate_window_v = 0.025;
};

struct ProfileFeatures {
  std::vector<std::string> names;
  std::vector<double> values;       // 0.0 where unavailable
  std::vector<bool> available;
  IcDvCurve curve;
  ExtremaResult ic;
  ExtremaResult dv;
};

/// Fits the profile, finds extrema on both curves and emits every catalog
/// feature that exists, index-matched by location rank against the expected
/// counts. TEMP and C_RATE are always present.
ProfileFeatures extract_features(const QVProfile& profile, const ExtractConfig& config,
                                 const ExpectedCounts& expected = {});

struct ExtractReport {
  struct Skip {
    std::string source_id;
    long cycle = 0;
    std::string reason;
  };
  std::vector<Skip> skipped;
  int extracted = 0;
};

/// Whole-dataset extraction. Expected extrema counts come from the reference
/// profile (highest SOH label; lexicographically smallest id on ties or when
/// unlabeled), so features are index-matched across samples. Profiles whose
/// samples do not cover the dominant peak window are skipped with a reason.
FeatureTable extract_table(const std::vector<QVProfile>& profiles, const ExtractConfig& config,
                           int n_threads = 1, ExtractReport* report = nullptr);

}  // namespace soh
