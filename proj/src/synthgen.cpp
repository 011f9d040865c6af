#include "soh/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "soh/csv.hpp"
#include "soh/errors.hpp"

namespace soh {

namespace {

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Per-cell currents for a capacity-proportional split of the pack current.
std::vector<double> cell_currents(const std::vector<CellSpec>& cells, double current_a) {
  double total = 0;
  for (const auto& c : cells) total += c.capacity_ah;
  std::vector<double> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(current_a * c.capacity_ah / total);
  return out;
}

// Monotone inversion of module_qc on [v_lo, v_hi].
double invert_module_qc(const std::vector<CellSpec>& cells, double current_a, double target_q,
                        double v_lo, double v_hi) {
  double a = v_lo, b = v_hi;
  for (int it = 0; it < 80; ++it) {
    const double m = 0.5 * (a + b);
    if (module_qc(cells, current_a, m) < target_q)
      a = m;
    else
      b = m;
  }
  return 0.5 * (a + b);
}

// Charging window set by voltage cutoffs at 2.5% and 97.5% of the module
// capacity, the way a constant-current segment ends while the IC is still
// moderate. This keeps the uniform-capacity sampling dense in voltage.
std::pair<double, double> auto_window(const std::vector<CellSpec>& cells, double current_a) {
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  double ir_max = 0;
  const auto currents = cell_currents(cells, current_a);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ir_max = std::max(ir_max, std::abs(currents[c] * cells[c].resistance_ohm));
    for (std::size_t j = 0; j < cells[c].peak_centers_v.size(); ++j) {
      lo = std::min(lo, cells[c].peak_centers_v[j] - 8.0 * cells[c].peak_widths_v[j]);
      hi = std::max(hi, cells[c].peak_centers_v[j] + 8.0 * cells[c].peak_widths_v[j]);
    }
  }
  lo -= ir_max;
  hi += ir_max;
  const double q_lo = module_qc(cells, current_a, lo);
  const double q_hi = module_qc(cells, current_a, hi);
  const double v_start = invert_module_qc(cells, current_a, q_lo + 0.025 * (q_hi - q_lo), lo, hi);
  const double v_cutoff = invert_module_qc(cells, current_a, q_lo + 0.975 * (q_hi - q_lo), lo, hi);
  return {v_start, v_cutoff};
}

}  // namespace

void validate_cell_spec(const CellSpec& spec) {
  if (!(spec.capacity_ah > 0)) throw ValidationError("cell spec: capacity must be positive");
  const auto n = spec.peak_centers_v.size();
  if (n == 0 || spec.peak_widths_v.size() != n || spec.peak_weights.size() != n)
    throw ValidationError("cell spec: centers/widths/weights must be non-empty and equal length");
  double wsum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!(spec.peak_widths_v[j] > 0)) throw ValidationError("cell spec: widths must be positive");
    if (spec.peak_weights[j] < 0) throw ValidationError("cell spec: weights must be non-negative");
    wsum += spec.peak_weights[j];
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw ValidationError("cell spec: weights must sum to 1 (got " + std::to_string(wsum) + ")");
}

double cell_qc(const CellSpec& spec, double v) {
  double q = 0;
  for (std::size_t j = 0; j < spec.peak_centers_v.size(); ++j)
    q += spec.peak_weights[j] * sigmoid((v - spec.peak_centers_v[j]) / spec.peak_widths_v[j]);
  return spec.capacity_ah * q;
}

double cell_ic(const CellSpec& spec, double v) {
  double s = 0;
  for (std::size_t j = 0; j < spec.peak_centers_v.size(); ++j) {
    const double u = sigmoid((v - spec.peak_centers_v[j]) / spec.peak_widths_v[j]);
    s += spec.peak_weights[j] / spec.peak_widths_v[j] * u * (1.0 - u);
  }
  return spec.capacity_ah * s;
}

CellCurve synth_cell_curve(CellSpec spec) {
  validate_cell_spec(spec);
  return CellCurve{std::move(spec)};
}

double module_qc(const std::vector<CellSpec>& cells, double current_a, double v) {
  if (cells.empty()) throw ValidationError("module: need at least one cell");
  const auto currents = cell_currents(cells, current_a);
  double q = 0;
  for (std::size_t c = 0; c < cells.size(); ++c)
    q += cell_qc(cells[c], v + currents[c] * cells[c].resistance_ohm);
  return q;
}

double module_ic(const std::vector<CellSpec>& cells, double current_a, double v) {
  if (cells.empty()) throw ValidationError("module: need at least one cell");
  const auto currents = cell_currents(cells, current_a);
  double s = 0;
  for (std::size_t c = 0; c < cells.size(); ++c)
    s += cell_ic(cells[c], v + currents[c] * cells[c].resistance_ohm);
  return s;
}

QVProfile synth_module_profile(const std::vector<CellSpec>& cells, double current_a,
                               double noise_sigma_v, std::uint64_t seed,
                               const ModuleSamplingSpec& sampling) {
  if (cells.empty()) throw ValidationError("synth_module_profile: need at least one cell");
  for (const auto& c : cells) validate_cell_spec(c);
  if (sampling.n_samples < 8) throw ValidationError("synth_module_profile: need >= 8 samples");

  double v_lo = sampling.v_min, v_hi = sampling.v_max;
  if (v_lo >= v_hi) std::tie(v_lo, v_hi) = auto_window(cells, current_a);

  const double q_lo = module_qc(cells, current_a, v_lo);
  const double q_hi = module_qc(cells, current_a, v_hi);
  const int n = sampling.n_samples;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> qs, vs;
  qs.reserve(static_cast<std::size_t>(n));
  vs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double q = q_lo + (q_hi - q_lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    double v = (i == 0) ? v_lo : (i == n - 1 ? v_hi : invert_module_qc(cells, current_a, q, v_lo, v_hi));
    if (noise_sigma_v > 0) v += noise_sigma_v * noise(rng);
    if (!vs.empty() && v <= vs.back()) continue;  // keep voltage strictly increasing
    qs.push_back(q - q_lo);                       // capacity counted from window start
    vs.push_back(v);
  }

  QVProfile p;
  p.capacity_ah = Eigen::Map<Eigen::VectorXd>(qs.data(), static_cast<Eigen::Index>(qs.size()));
  p.voltage_v = Eigen::Map<Eigen::VectorXd>(vs.data(), static_cast<Eigen::Index>(vs.size()));
  validate_profile(p);
  return p;
}

void validate_aging_spec(const AgingSpec& spec) {
  if (spec.n_modules < 1 || spec.cells_per_module < 1)
    throw ValidationError("aging spec: need at least one module and one cell");
  if (spec.n_checkpoints < 2) throw ValidationError("aging spec: need at least 2 checkpoints");
  if (!(spec.soh_end > 0 && spec.soh_end < 1))
    throw ValidationError("aging spec: soh_end must be in (0, 1)");
  if (spec.variation_cv < 0) throw ValidationError("aging spec: variation_cv must be >= 0");
}

SynthDataset synth_dataset(const AgingSpec& aging, const CellSpec& base) {
  validate_aging_spec(aging);
  validate_cell_spec(base);

  const int T = aging.n_checkpoints;
  const double fade_total = 1.0 - aging.soh_end;
  // Log-spaced fade schedule: faster early-life fade, g(0) = 0, g(T-1) = 1.
  std::vector<double> g(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t)
    g[static_cast<std::size_t>(t)] =
        std::log1p(9.0 * static_cast<double>(t) / static_cast<double>(T - 1)) / std::log1p(9.0);

  const double fresh_module_capacity = base.capacity_ah * aging.cells_per_module;
  const double current_a = aging.c_rate * fresh_module_capacity;

  // Fixed measurement window across all ages, set from the fresh state.
  std::vector<CellSpec> fresh(static_cast<std::size_t>(aging.cells_per_module), base);
  const auto [v_lo, v_hi] = auto_window(fresh, current_a);

  std::mt19937_64 rng(aging.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthDataset ds;
  for (int m = 0; m < aging.n_modules; ++m) {
    std::vector<double> fade(static_cast<std::size_t>(aging.cells_per_module), 0.0);
    for (int t = 0; t < T; ++t) {
      if (t > 0) {
        const double dg = g[static_cast<std::size_t>(t)] - g[static_cast<std::size_t>(t - 1)];
        for (auto& f : fade) {
          const double eps = aging.variation_cv > 0 ? aging.variation_cv * gauss(rng) : 0.0;
          f += dg * fade_total * std::max(0.0, 1.0 + eps);
        }
      }
      std::vector<CellSpec> cells;
      cells.reserve(fade.size());
      double aged_capacity = 0;
      for (int c = 0; c < aging.cells_per_module; ++c) {
        CellSpec spec = base;
        const double f = fade[static_cast<std::size_t>(c)];
        spec.capacity_ah = base.capacity_ah * (1.0 - f);
        for (auto& center : spec.peak_centers_v) center += aging.peak_shift_per_fade_v * f;
        aged_capacity += spec.capacity_ah;
        ds.truth.push_back({m, t, c, spec.capacity_ah});
        cells.push_back(std::move(spec));
      }

      const std::uint64_t profile_seed = rng();
      QVProfile p = synth_module_profile(cells, current_a, aging.noise_sigma_v, profile_seed,
                                         {aging.samples_per_profile, v_lo, v_hi});
      p.temperature_c = aging.temperature_c;
      p.c_rate = aging.c_rate;
      p.soh_label = aged_capacity / fresh_module_capacity;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "M%03d", m);
      p.source_id = buf;
      p.cycle = t;
      ds.profiles.push_back(std::move(p));
    }
  }
  return ds;
}

void save_ground_truth(const std::string& path, const SynthDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "module_id,checkpoint,cell_index,cell_capacity_ah\n";
  for (const auto& r : ds.truth)
    out << r.module << ',' << r.checkpoint << ',' << r.cell << ',' << csv::format(r.capacity_ah)
        << '\n';
}

}  // namespace soh
