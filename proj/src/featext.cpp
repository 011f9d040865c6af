#include "soh/featext.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

#include "soh/errors.hpp"

namespace soh {

namespace {

constexpr double kGoldenTol = 1e-5;
constexpr double kBoundaryFraction = 0.01;

double golden_max(const std::function<double(double)>& f, double a, double b) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > kGoldenTol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

struct Tagged {
  Extremum e;
  bool is_peak;
};

// Drop same-type neighbors (possible after boundary exclusion), keeping the
// stronger one, so peaks and valleys alternate.
std::vector<Tagged> enforce_alternation(std::vector<Tagged> xs) {
  bool changed = true;
  while (changed && xs.size() > 1) {
    changed = false;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      if (xs[i].is_peak != xs[i + 1].is_peak) continue;
      const bool keep_first = xs[i].is_peak ? xs[i].e.height >= xs[i + 1].e.height
                                            : xs[i].e.height <= xs[i + 1].e.height;
      xs.erase(xs.begin() + static_cast<std::ptrdiff_t>(keep_first ? i + 1 : i));
      changed = true;
      break;
    }
  }
  return xs;
}

}  // namespace

ExtremaResult find_extrema(const IcDvCurve& curve, CurveKind which, int grid_size,
                           double min_prominence) {
  if (grid_size < 64) throw ValidationError("find_extrema: grid_size must be >= 64");

  double lo, hi;
  std::function<double(double)> f;
  if (which == CurveKind::ic) {
    lo = curve.v_min;
    hi = curve.v_max;
    f = [&curve](double v) { return ic_at(curve, v); };
  } else {
    lo = curve.q_min;
    hi = curve.q_max;
    f = [&curve](double q) {
      const double v = voltage_at_capacity(curve, q);
      const double ic = ic_at(curve, v);
      // Saturate instead of throwing so grid scans survive flat tails.
      if (std::abs(ic) < 1e-12) return ic >= 0 ? 1e12 : -1e12;
      return 1.0 / ic;
    };
  }

  const double range = hi - lo;
  Eigen::VectorXd x(grid_size), y(grid_size);
  for (int i = 0; i < grid_size; ++i) {
    x[i] = lo + range * static_cast<double>(i) / static_cast<double>(grid_size - 1);
    y[i] = f(x[i]);
  }

  std::vector<Tagged> found;
  for (int i = 1; i + 1 < grid_size; ++i) {
    const bool peak = y[i] > y[i - 1] && y[i] > y[i + 1];
    const bool valley = y[i] < y[i - 1] && y[i] < y[i + 1];
    if (!peak && !valley) continue;
    const auto g = peak ? f : [&f](double t) { return -f(t); };
    const double loc = golden_max(g, x[i - 1], x[i + 1]);
    found.push_back({{loc, f(loc)}, peak});
  }

  // Kernel-edge derivative artifacts extend about half a bandwidth past the
  // window ends, so the exclusion zone tracks the bandwidth. It is defined
  // in the voltage domain and mapped through the fitted Qc for DV curves,
  // which keeps IC/DV extrema pairings consistent.
  const double v_span = curve.v_max - curve.v_min;
  const double excl_v = std::max(kBoundaryFraction * v_span, 0.5 * curve.bandwidth);
  double keep_lo, keep_hi;
  if (which == CurveKind::ic) {
    keep_lo = curve.v_min + excl_v;
    keep_hi = curve.v_max - excl_v;
  } else {
    keep_lo = qc_at(curve, curve.v_min + excl_v);
    keep_hi = qc_at(curve, curve.v_max - excl_v);
  }
  std::vector<Tagged> interior;
  for (const auto& t : found)
    if (t.e.location >= keep_lo && t.e.location <= keep_hi) interior.push_back(t);
  interior = enforce_alternation(std::move(interior));

  // Merge shallow adjacent pairs, smallest height gap first. Removing a
  // (peak, valley) pair keeps the list alternating.
  if (min_prominence > 0 && interior.size() > 1) {
    double scale = 0;
    for (const auto& t : interior) scale = std::max(scale, std::abs(t.e.height));
    while (interior.size() > 1) {
      std::size_t best = 0;
      double best_gap = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i + 1 < interior.size(); ++i) {
        const double gap = std::abs(interior[i].e.height - interior[i + 1].e.height);
        if (gap < best_gap) {
          best_gap = gap;
          best = i;
        }
      }
      if (best_gap >= min_prominence * scale) break;
      interior.erase(interior.begin() + static_cast<std::ptrdiff_t>(best),
                     interior.begin() + static_cast<std::ptrdiff_t>(best) + 2);
    }
  }

  ExtremaResult out;
  for (const auto& t : interior)
    (t.is_peak ? out.peaks : out.valleys).push_back(t.e);
  return out;
}

std::vector<double> ic_peak_areas(const IcDvCurve& curve, const std::vector<double>& valley_voltages) {
  std::vector<double> bounds{curve.v_min};
  for (double v : valley_voltages) {
    if (v < curve.v_min || v > curve.v_max)
      throw ValidationError("ic_peak_areas: valley outside fitted range");
    if (v <= bounds.back()) throw ValidationError("ic_peak_areas: valleys must be sorted");
    bounds.push_back(v);
  }
  bounds.push_back(curve.v_max);
  std::vector<double> areas;
  areas.reserve(bounds.size() - 1);
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k)
    areas.push_back(qc_at(curve, bounds[k + 1]) - qc_at(curve, bounds[k]));
  return areas;
}

namespace {

double adaptive_simpson(const std::function<double(double)>& f, double a, double fa, double b,
                        double fb, double m, double fm, double whole, double eps, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, fa, m, fm, lm, flm, left, eps / 2.0, depth - 1) +
         adaptive_simpson(f, m, fm, b, fb, rm, frm, right, eps / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double eps) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, fa, b, fb, m, fm, whole, eps, 40);
}

const Extremum& resolve_target_peak(const PartialAreaSpec& spec, const std::vector<Extremum>& peaks) {
  if (peaks.empty()) throw ValidationError("ic_partial_area: no IC peak available");
  if (spec.target_peak_index == 0) {
    return *std::max_element(peaks.begin(), peaks.end(),
                             [](const Extremum& a, const Extremum& b) { return a.height < b.height; });
  }
  if (spec.target_peak_index < 1 || spec.target_peak_index > static_cast<int>(peaks.size()))
    throw ValidationError("ic_partial_area: target peak " + std::to_string(spec.target_peak_index) +
                          " does not exist");
  return peaks[static_cast<std::size_t>(spec.target_peak_index - 1)];
}

}  // namespace

PartialArea ic_partial_area(const IcDvCurve& curve, const PartialAreaSpec& spec,
                            const std::vector<Extremum>& peaks) {
  const Extremum& peak = resolve_target_peak(spec, peaks);

  if (spec.mode == PartialAreaMode::voltage_window) {
    if (!(spec.half_width > 0)) throw ValidationError("ic_partial_area: half_width must be positive");
    const double lo = peak.location - spec.half_width;
    const double hi = peak.location + spec.half_width;
    if (hi < curve.v_min || lo > curve.v_max)
      throw ValidationError("ic_partial_area: window outside fitted range");
    return {qc_at(curve, std::min(hi, curve.v_max)) - qc_at(curve, std::max(lo, curve.v_min)), false};
  }

  if (spec.cutoff < 0) throw ValidationError("ic_partial_area: cutoff must be non-negative");
  if (spec.cutoff >= peak.height) return {0.0, true};

  // Contiguous interval around the peak where IC stays above the cutoff.
  const double step = (curve.v_max - curve.v_min) / 1024.0;
  auto cross = [&](double from, double direction_step, double fence) {
    double x = from;
    while (true) {
      double next = x + direction_step;
      if ((direction_step < 0 && next <= fence) || (direction_step > 0 && next >= fence)) {
        if (ic_at(curve, fence) >= spec.cutoff) return fence;
        next = fence;
      }
      if (ic_at(curve, next) < spec.cutoff) {
        // Bisect the crossing between x (above) and next (below).
        double a = x, b = next;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (a + b);
          if (ic_at(curve, mid) >= spec.cutoff)
            a = mid;
          else
            b = mid;
        }
        return 0.5 * (a + b);
      }
      x = next;
      if (x == fence) return fence;
    }
  };
  const double a = cross(peak.location, -step, curve.v_min);
  const double b = cross(peak.location, step, curve.v_max);
  auto above = [&](double v) { return std::max(ic_at(curve, v) - spec.cutoff, 0.0); };
  return {integrate(above, a, b, 1e-6), false};
}

ProfileFeatures extract_features(const QVProfile& profile, const ExtractConfig& config,
                                 const ExpectedCounts& expected) {
  ProfileFeatures out;
  out.curve = fit_qv(profile, config.fit);
  out.ic = find_extrema(out.curve, CurveKind::ic, config.grid_size);
  out.dv = find_extrema(out.curve, CurveKind::dv, config.grid_size);

  const int n_icp = expected.ic_peaks < 0 ? static_cast<int>(out.ic.peaks.size()) : expected.ic_peaks;
  const int n_icv = expected.ic_valleys < 0 ? static_cast<int>(out.ic.valleys.size()) : expected.ic_valleys;
  const int n_dvp = expected.dv_peaks < 0 ? static_cast<int>(out.dv.peaks.size()) : expected.dv_peaks;
  const int n_dvv = expected.dv_valleys < 0 ? static_cast<int>(out.dv.valleys.size()) : expected.dv_valleys;

  auto emit = [&out](const std::string& name, double value, bool present) {
    out.names.push_back(name);
    out.values.push_back(present ? value : 0.0);
    out.available.push_back(present);
  };
  auto emit_extrema = [&emit](const std::string& prefix_h, const std::string& prefix_l,
                              const std::vector<Extremum>& xs, int n_expected) {
    for (int k = 1; k <= n_expected; ++k) {
      const bool present = k <= static_cast<int>(xs.size());
      const Extremum e = present ? xs[static_cast<std::size_t>(k - 1)] : Extremum{};
      emit(prefix_h + std::to_string(k), e.height, present);
      emit(prefix_l + std::to_string(k), e.location, present);
    }
  };

  emit_extrema("IC_PH_", "IC_PL_", out.ic.peaks, n_icp);
  emit_extrema("IC_VH_", "IC_VL_", out.ic.valleys, n_icv);
  emit_extrema("DV_PH_", "DV_PL_", out.dv.peaks, n_dvp);
  emit_extrema("DV_VH_", "DV_VL_", out.dv.valleys, n_dvv);

  // Areas need the expected valley structure; a profile whose valley count
  // drifted from it gets masked entries rather than misaligned ones.
  if (config.include_areas && n_icv >= 1) {
    const bool aligned = static_cast<int>(out.ic.valleys.size()) == n_icv;
    std::vector<double> areas;
    if (aligned) {
      std::vector<double> vlocs;
      for (const auto& e : out.ic.valleys) vlocs.push_back(e.location);
      areas = ic_peak_areas(out.curve, vlocs);
    }
    for (int k = 1; k <= n_icv + 1; ++k)
      emit("IC_AR_" + std::to_string(k), aligned ? areas[static_cast<std::size_t>(k - 1)] : 0.0,
           aligned);
  }

  for (std::size_t s = 0; s < config.partial_areas.size(); ++s) {
    const auto& spec = config.partial_areas[s];
    bool present = !out.ic.peaks.empty() &&
                   (spec.target_peak_index <= static_cast<int>(out.ic.peaks.size()));
    double value = 0.0;
    if (present) value = ic_partial_area(out.curve, spec, out.ic.peaks).area_ah;
    emit("IC_PA_" + std::to_string(s + 1), value, present);
  }

  emit("TEMP", profile.temperature_c, true);
  emit("C_RATE", profile.c_rate, true);
  return out;
}

namespace {

// Samples inside the dominant peak's window; the estimation gate.
bool passes_gate(const QVProfile& p, const ProfileFeatures& f, const ExtractConfig& config) {
  if (f.ic.peaks.empty()) return false;
  const Extremum& dom = *std::max_element(
      f.ic.peaks.begin(), f.ic.peaks.end(),
      [](const Extremum& a, const Extremum& b) { return a.height < b.height; });
  int count = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (std::abs(p.voltage_v[i] - dom.location) <= config.gate_window_v) ++count;
  return count >= config.gate_min_samples;
}

std::size_t reference_profile(const std::vector<QVProfile>& profiles) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < profiles.size(); ++i) {
    const auto key = [](const QVProfile& p) {
      return std::make_tuple(-(p.soh_label ? *p.soh_label : 0.0), p.source_id, p.cycle);
    };
    if (key(profiles[i]) < key(profiles[best])) best = i;
  }
  return best;
}

}  // namespace

FeatureTable extract_table(const std::vector<QVProfile>& profiles, const ExtractConfig& config,
                           int n_threads, ExtractReport* report) {
  if (profiles.empty()) throw ValidationError("extract_table: no profiles");

  const std::size_t ref = reference_profile(profiles);
  const ProfileFeatures ref_features = extract_features(profiles[ref], config);
  ExpectedCounts expected{static_cast<int>(ref_features.ic.peaks.size()),
                          static_cast<int>(ref_features.ic.valleys.size()),
                          static_cast<int>(ref_features.dv.peaks.size()),
                          static_cast<int>(ref_features.dv.valleys.size())};

  std::vector<ProfileFeatures> results(profiles.size());
  std::vector<std::exception_ptr> errors(profiles.size());
  const int workers = std::max(1, n_threads);
  auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < profiles.size(); i += stride) {
      try {
        results[i] = extract_features(profiles[i], config, expected);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, static_cast<std::size_t>(w), workers);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExtractReport local;
  ExtractReport& rep = report ? *report : local;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (passes_gate(profiles[i], results[i], config)) {
      kept.push_back(i);
    } else {
      rep.skipped.push_back({profiles[i].source_id, profiles[i].cycle, "insufficient charging range"});
    }
  }
  if (kept.empty()) throw ValidationError("extract_table: every profile failed the estimation gate");
  rep.extracted = static_cast<int>(kept.size());

  const auto& names = ref_features.names;
  const auto n = static_cast<Eigen::Index>(kept.size());
  const auto nf = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd values(n, nf);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(n, nf);
  std::vector<RowId> ids;
  bool all_labeled = true;
  Eigen::VectorXd labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = results[kept[static_cast<std::size_t>(i)]];
    const auto& p = profiles[kept[static_cast<std::size_t>(i)]];
    if (r.names != names)
      throw NumericError("extract_table: inconsistent feature catalog for " + p.source_id);
    for (Eigen::Index j = 0; j < nf; ++j) {
      values(i, j) = r.values[static_cast<std::size_t>(j)];
      mask(i, j) = r.available[static_cast<std::size_t>(j)];
    }
    ids.push_back({p.source_id, p.cycle});
    if (p.soh_label)
      labels[i] = *p.soh_label;
    else
      all_labeled = false;
  }

  return make_feature_table(names, std::move(values),
                            all_labeled ? std::optional<Eigen::VectorXd>(labels) : std::nullopt,
                            std::move(ids), std::move(mask));
}

}  // namespace soh
