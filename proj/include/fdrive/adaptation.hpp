// Copyright 2026 The fdrive Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fdrive/contour.hpp"
#include "fdrive/core.hpp"
#include "fdrive/filterbank.hpp"
#include "fdrive/regression.hpp"

namespace fdrive {

enum class TrendBranch { nonneg, negative, automatic };

inline const char* to_string(TrendBranch b) {
  switch (b) {
    case TrendBranch::nonneg: return "nonneg";
    case TrendBranch::negative: return "negative";
    default: return "auto";
  }
}

struct TrendOptions {
  int fourier_order = 3;
  std::int64_t m = 1;
  double min_cycles = 3.0;  // fundamental cycles required in the window
  TrendBranch branch = TrendBranch::automatic;
};

/// Result of the trend regression on one window.
///
///   nonneg:    phidot/h = alpha t + P(phi/h)
///   negative:  h/phidot = -alpha t + P(phi/h)
///
/// P holds a constant and K sin/cos pairs of phi/(h m). `coeffs` is ordered
/// constant, sin 1, cos 1, ..., sin K, cos K.
struct TrendFit {
  double alpha = 0.0;
  std::vector<double> coeffs;
  double residual_rms = 0.0;  // in the regressand's units
  TrendBranch branch = TrendBranch::nonneg;
  double velocity_slope = 0.0;  // rad/sample^2, comparable across branches
  double mean_velocity = 0.0;   // normalized, rad/sample
  double condition = 0.0;
  std::size_t samples = 0;

  /// Residual expressed as normalized phase velocity (rad/sample).
  double velocity_residual() const {
    return branch == TrendBranch::negative ? residual_rms * mean_velocity * mean_velocity
                                           : residual_rms;
  }
};

namespace detail {

inline TrendFit fit_trend_branch(const Series& t, const Series& u, const Series& v, double mean_v,
                                 TrendBranch branch, const TrendOptions& opt) {
  const Eigen::Index n = static_cast<Eigen::Index>(t.size());
  const int k_max = opt.fourier_order;
  Eigen::MatrixXd a(n, 2 + 2 * k_max);
  Eigen::VectorXd y(n);
  const double m = static_cast<double>(opt.m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sign = branch == TrendBranch::negative ? -1.0 : 1.0;
    a(i, 0) = sign * t[i];
    a(i, 1) = 1.0;
    for (int k = 1; k <= k_max; ++k) {
      a(i, 2 * k) = std::sin(k * u[i] / m);
      a(i, 2 * k + 1) = std::cos(k * u[i] / m);
    }
    y[i] = branch == TrendBranch::negative ? 1.0 / v[i] : v[i];
  }
  const auto ls = least_squares(a, y);
  TrendFit f;
  f.alpha = ls.coeffs[0];
  f.coeffs.assign(ls.coeffs.data() + 1, ls.coeffs.data() + ls.coeffs.size());
  f.residual_rms = ls.residual_rms;
  f.branch = branch;
  f.mean_velocity = mean_v;
  f.velocity_slope = branch == TrendBranch::negative ? f.alpha * mean_v * mean_v : f.alpha;
  f.condition = ls.condition;
  f.samples = t.size();
  return f;
}

}  // namespace detail

/// Fits the phase-velocity trend of one window. `h` divides the phase
/// (winding normalization); the time origin is the first sample of `phase`.
inline TrendFit estimate_trend(const PhaseSeries& phase, double h, const TrendOptions& opt = {}) {
  if (!(h > 0.0)) throw DomainError("estimate_trend: winding number must be > 0");
  if (opt.fourier_order < 0) throw DomainError("estimate_trend: negative Fourier order");
  if (opt.m < 1) throw DomainError("estimate_trend: m must be >= 1");
  const Series d = central_difference(phase.unwrapped);
  Series t, u, v;
  for (std::size_t i = 0; i < phase.size(); ++i) {
    if (!phase.valid[i] || !std::isfinite(d[i])) continue;
    t.push_back(static_cast<double>(i));
    u.push_back(phase.unwrapped[i] / h);
    v.push_back(d[i] / h);
  }
  const std::size_t unknowns = 2 + 2 * static_cast<std::size_t>(opt.fourier_order);
  if (t.size() < unknowns + 2) throw DataError("estimate_trend: window too short");
  const double cycles = std::abs(u.back() - u.front()) / kTwoPi;
  if (cycles < opt.min_cycles)
    throw DataError("estimate_trend: window spans " + std::to_string(cycles) + " cycles, need " +
                    std::to_string(opt.min_cycles));
  const double mean_v = mean_finite(v);

  if (opt.branch == TrendBranch::nonneg) return detail::fit_trend_branch(t, u, v, mean_v, opt.branch, opt);
  const bool positive = std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
  if (opt.branch == TrendBranch::negative) {
    if (!positive) throw DataError("estimate_trend: inverse-velocity branch needs positive velocity");
    return detail::fit_trend_branch(t, u, v, mean_v, opt.branch, opt);
  }
  TrendFit a = detail::fit_trend_branch(t, u, v, mean_v, TrendBranch::nonneg, opt);
  if (!positive) return a;
  TrendFit b = detail::fit_trend_branch(t, u, v, mean_v, TrendBranch::negative, opt);
  return b.velocity_residual() < a.velocity_residual() ? b : a;
}

/// Second mapping: trend slope back to a relative chirp rate of the contour.
///
/// With omega_f = omega_{j,0}/h the fundamental velocity at the window start:
///   nonneg:   phidot/h ~ omega_f (1 + c t)    =>  alpha = c omega_f
///   negative: h/phidot ~ (1 - c t)/omega_f    =>  alpha = c / omega_f
inline double trend_to_chirp(const TrendFit& fit, const ChirpContour& contour, double h) {
  if (!(contour.omega0 > 0.0)) throw DomainError("trend_to_chirp: omega0 must be > 0");
  if (!(h > 0.0)) throw DomainError("trend_to_chirp: winding number must be > 0");
  const double omega_f = contour.omega0 / h;
  return fit.branch == TrendBranch::negative ? fit.alpha * omega_f : fit.alpha / omega_f;
}

// ---------------------------------------------------------------------------
// First mapping: contour -> part-tone phase on one window
// ---------------------------------------------------------------------------

/// Analysis band: which harmonic, which filter, which phase.
struct Band {
  Rational winding{1};
  int gamma_order = 5;
  double erb = 0.0;  // cycles/sample
  PhaseKind kind = PhaseKind::carrier;
  int part_tone_index = 0;
};

/// Placement of one analysis window in the signal. The filter runs from
/// start - lead; `tail` extra samples after the window feed the envelope
/// smoother and Hilbert transform.
struct WindowGeometry {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t lead = 0;
  std::size_t tail = 0;
  std::size_t margin = 200;      // envelope: samples kept before the window for the Hilbert step
  double settle_delays = 2.0;    // carrier: group delays discarded after filter start
};

struct EnvelopeOptions {
  double exponent = 0.33;
  double smoothing_periods = 0.25;  // moving-average length in fundamental periods
};

/// Phase of one band over [start, start+length), using a contour anchored at
/// `contour.window_offset`. Carrier phases include the settle mask.
inline PhaseSeries window_phase(std::span<const double> signal, const Band& band,
                                const ChirpContour& contour, const WindowGeometry& g,
                                const EnvelopeOptions& env = {}) {
  const std::size_t n = signal.size();
  if (g.start + g.length > n) throw DomainError("window_phase: window exceeds signal");
  if (g.lead > g.start) throw DomainError("window_phase: lead-in exceeds window start");
  const std::size_t first = g.start - g.lead;
  const double damping = damping_from_erb(band.erb, band.gamma_order);
  const std::size_t delay = group_delay_samples(damping, band.gamma_order);
  const bool envelope = band.kind == PhaseKind::envelope;
  std::size_t last = g.start + g.length + g.tail + (envelope ? delay : 0);
  last = std::min(last, n);

  const Series w = sample_contour(contour, static_cast<std::int64_t>(first), last - first);
  FilterSpec spec;
  spec.gamma_order = band.gamma_order;
  spec.erb = band.erb;
  spec.damping = damping;
  spec.contour = w;
  spec.part_tone_index = band.part_tone_index;
  spec.winding_number = band.winding;
  const PartTone pt = filter_signal(signal.subspan(first, last - first), spec);

  PhaseSeries ph;
  if (!envelope) {
    ph = carrier_phase(pt);
    const auto settle = static_cast<std::size_t>(g.settle_delays * static_cast<double>(delay));
    for (std::size_t i = 0; i < std::min(settle, ph.size()); ++i) {
      ph.valid[i] = 0;
      ph.wrapped[i] = ph.unwrapped[i] = kNaN;
    }
  } else {
    const double omega_f = contour.omega0 / band.winding.value();
    const auto smooth = static_cast<std::size_t>(
        std::max(1.0, std::round(env.smoothing_periods * kTwoPi / omega_f)));
    const std::size_t margin = std::min(g.margin, g.lead);
    SampleRange r{g.lead - margin, std::min(g.lead + g.length + g.tail, pt.samples.size())};
    ph = envelope_phase(pt, env.exponent, smooth, r);
  }
  return ph.slice(g.lead, g.length);
}

/// Phase normalization for trend fits: carrier phases rotate h times per
/// fundamental cycle, envelope phases once.
inline double phase_normalizer(const Band& band) {
  return band.kind == PhaseKind::carrier ? band.winding.value() : 1.0;
}

// ---------------------------------------------------------------------------
// Fixed-point iteration
// ---------------------------------------------------------------------------

struct IterationOptions {
  double tol_rel = 1e-3;
  double tol_abs = 1e-9;
  int max_iter = 50;
  double damping = 1.0;             // relaxation weight of the new estimate
  double max_chirp_span = 0.9;      // |c| * (lead + length) above this is divergence
  double max_gap_fraction = 0.1;
  // velocity residual / mean velocity accepted at convergence; coherent
  // harmonics stay well below these, filtered noise mostly does not
  double max_rel_residual = 0.02;
  double max_rel_residual_envelope = 0.1;
  bool branch_from_contour = true;  // fit the branch matching the contour's chirp sign
  TrendOptions trend;
  EnvelopeOptions envelope;
};

struct IterationStep {
  double chirp_in = 0.0;
  double chirp_out = 0.0;
  double alpha = 0.0;
  double residual_rms = 0.0;  // velocity units
  TrendBranch branch = TrendBranch::nonneg;
};

struct IterationTrace {
  std::vector<IterationStep> steps;
  bool converged = false;
  int iterations = 0;
  std::string status;  // converged | max_iter | residual | diverged | gaps | fit_failed
};

struct AdaptResult {
  ChirpContour contour;
  IterationTrace trace;
  std::optional<TrendFit> fit;
};

/// One pass of both mappings. Returns the trend fit; throws DataError when
/// the window has too many gaps.
inline TrendFit map_once(std::span<const double> signal, const Band& band, const ChirpContour& contour,
                         const WindowGeometry& g, const IterationOptions& opt) {
  const PhaseSeries ph = window_phase(signal, band, contour, g, opt.envelope);
  const std::size_t settle =
      band.kind == PhaseKind::carrier
          ? [&] {
              const double lam = damping_from_erb(band.erb, band.gamma_order);
              const auto s = static_cast<std::size_t>(
                  g.settle_delays * static_cast<double>(group_delay_samples(lam, band.gamma_order)));
              return s > g.lead ? s - g.lead : std::size_t{0};
            }()
          : 0;
  const std::size_t usable = g.length > settle ? g.length - settle : 0;
  const std::size_t valid = ph.valid_count();
  if (usable == 0 || static_cast<double>(usable - std::min(valid, usable)) >
                         opt.max_gap_fraction * static_cast<double>(usable))
    throw DataError("phase gaps cover more than the allowed fraction of the window");
  TrendOptions topt = opt.trend;
  if (opt.branch_from_contour) topt.branch = contour.chirp >= 0.0 ? TrendBranch::nonneg : TrendBranch::negative;
  return estimate_trend(ph, phase_normalizer(band), topt);
}

/// Iterates contour -> phase -> trend -> contour until the chirp settles.
/// Failures are reported through the trace rather than thrown.
inline AdaptResult self_consistent_iterate(std::span<const double> signal, const Band& band,
                                           const ChirpContour& initial, const WindowGeometry& g,
                                           const IterationOptions& opt = {}) {
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw DomainError("iterate: damping outside (0,1]");
  if (opt.max_iter < 1) throw DomainError("iterate: max_iter must be >= 1");
  AdaptResult r;
  r.contour = initial;
  const double span = static_cast<double>(g.lead + g.length + g.tail);
  const double h = band.winding.value();
  for (int it = 0; it < opt.max_iter; ++it) {
    TrendFit fit;
    try {
      fit = map_once(signal, band, r.contour, g, opt);
    } catch (const DataError& e) {
      r.trace.status = std::string(e.what()).find("gaps") != std::string::npos ? "gaps" : "fit_failed";
      r.trace.iterations = it;
      return r;
    } catch (const DomainError&) {
      r.trace.status = "diverged";
      r.trace.iterations = it;
      return r;
    }
    const double c_old = r.contour.chirp;
    const double c_new = trend_to_chirp(fit, r.contour, h);
    const double c_next = (1.0 - opt.damping) * c_old + opt.damping * c_new;
    IterationStep step{c_old, c_new, fit.alpha, fit.velocity_residual(), fit.branch};
    r.trace.steps.push_back(step);
    r.trace.iterations = it + 1;
    r.fit = fit;
    if (!std::isfinite(c_next) || std::abs(c_next) * span > opt.max_chirp_span) {
      r.trace.status = "diverged";
      return r;
    }
    r.contour.chirp = c_next;
    if (std::abs(c_next - c_old) <= opt.tol_rel * std::abs(c_old) + opt.tol_abs) {
      const double rel = fit.velocity_residual() / std::max(std::abs(fit.mean_velocity), 1e-300);
      const double limit =
          band.kind == PhaseKind::envelope ? opt.max_rel_residual_envelope : opt.max_rel_residual;
      r.trace.converged = rel <= limit;
      r.trace.status = r.trace.converged ? "converged" : "residual";
      return r;
    }
  }
  r.trace.status = "max_iter";
  return r;
}

// ---------------------------------------------------------------------------
// Sweep diagnostics
// ---------------------------------------------------------------------------

struct SweepRow {
  int part_tone = 0;  // winding numerator for integer harmonics
  Rational winding{1};
  PhaseKind kind = PhaseKind::carrier;
  double rel_chirp_in = 0.0;
  double rel_trend_out = kNaN;
  double residual_rms = kNaN;
  bool ok = false;
};

/// Open-loop map value per grid point: the contour chirp is set to
/// rel * chirp_ref and the returned trend is expressed as a multiple of
/// omega_ref * chirp_ref (fundamental units). Rows that fail are kept with
/// ok = false.
inline std::vector<SweepRow> chirp_response_curve(std::span<const double> signal,
                                                  std::span<const Band> bands, std::span<const double> grid,
                                                  double omega_ref, double chirp_ref, const WindowGeometry& g,
                                                  const IterationOptions& opt = {}) {
  if (grid.empty()) throw DomainError("chirp_response_curve: empty grid");
  if (!(omega_ref > 0.0) || chirp_ref == 0.0) throw DomainError("chirp_response_curve: invalid reference");
  std::vector<SweepRow> rows;
  for (const Band& band : bands) {
    const double h = band.winding.value();
    for (double rel : grid) {
      SweepRow row;
      row.part_tone = static_cast<int>(band.winding.num / band.winding.den);
      row.winding = band.winding;
      row.kind = band.kind;
      row.rel_chirp_in = rel;
      try {
        ChirpContour c{h * omega_ref, rel * chirp_ref, static_cast<std::int64_t>(g.start)};
        const TrendFit fit = map_once(signal, band, c, g, opt);
        row.rel_trend_out = trend_to_chirp(fit, c, h) / chirp_ref;
        row.residual_rms = fit.velocity_residual();
        row.ok = true;
      } catch (const std::exception&) {
        row.ok = false;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

struct FixedPoint {
  double rel_chirp = 0.0;
  double slope = 0.0;  // derivative of the map at the crossing
};

/// Diagonal crossings of a sampled map (x sorted ascending). A grid point
/// exactly on the diagonal counts once.
inline std::vector<FixedPoint> find_fixed_points(std::span<const double> x, std::span<const double> y) {
  std::vector<FixedPoint> out;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double d0 = y[i] - x[i], d1 = y[i + 1] - x[i + 1];
    if (!std::isfinite(d0) || !std::isfinite(d1)) continue;
    const double slope = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    if (d0 == 0.0) {
      out.push_back({x[i], slope});
    } else if ((d0 < 0.0) != (d1 < 0.0) && d1 != 0.0) {
      const double f = d0 / (d0 - d1);
      out.push_back({x[i] + f * (x[i + 1] - x[i]), slope});
    }
  }
  if (x.size() >= 2 && y.back() == x.back()) {
    const std::size_t k = x.size() - 1;
    out.push_back({x[k], (y[k] - y[k - 1]) / (x[k] - x[k - 1])});
  }
  return out;
}

}  // namespace fdrive
