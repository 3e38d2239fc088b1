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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fdrive/adaptation.hpp"
#include "fdrive/config.hpp"
#include "fdrive/drive.hpp"
#include "fdrive/filterbank.hpp"
#include "fdrive/io.hpp"
#include "fdrive/response.hpp"
#include "fdrive/sync.hpp"
#include "fdrive/synth.hpp"

namespace fdrive {

// ---------------------------------------------------------------------------
// Pitch seed
// ---------------------------------------------------------------------------

/// Fundamental from the normalized autocorrelation (rad/sample). The
/// shortest-lag peak within 90% of the best one is taken, then refined by a
/// parabola. Throws DataError when nothing periodic is found.
inline double estimate_f0_acf(std::span<const double> x, double fs, double f0_min, double f0_max,
                              double min_peak = 0.3) {
  const std::size_t n = x.size();
  const auto lag_lo = static_cast<std::size_t>(std::floor(fs / f0_max));
  auto lag_hi = static_cast<std::size_t>(std::ceil(fs / f0_min));
  lag_hi = std::min(lag_hi, n / 2);
  if (lag_lo < 2 || lag_hi < lag_lo + 3) throw DataError("f0 estimate: segment too short for the f0 range");
  const double mu = mean_finite(x);
  Series r(lag_hi + 2, 0.0);
  for (std::size_t tau = lag_lo - 1; tau <= lag_hi + 1 && tau < n; ++tau) {
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t t = 0; t + tau < n; ++t) {
      const double a = x[t] - mu, b = x[t + tau] - mu;
      sxy += a * b;
      sxx += a * a;
      syy += b * b;
    }
    r[tau] = sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  }
  double best = -1.0;
  for (std::size_t tau = lag_lo; tau <= lag_hi; ++tau)
    if (r[tau] > r[tau - 1] && r[tau] >= r[tau + 1]) best = std::max(best, r[tau]);
  if (best < min_peak) throw DataError("f0 estimate: no periodicity found");
  for (std::size_t tau = lag_lo; tau <= lag_hi; ++tau) {
    if (!(r[tau] > r[tau - 1] && r[tau] >= r[tau + 1]) || r[tau] < 0.9 * best) continue;
    const double den = r[tau - 1] - 2.0 * r[tau] + r[tau + 1];
    const double shift = den != 0.0 ? 0.5 * (r[tau - 1] - r[tau + 1]) / den : 0.0;
    return kTwoPi / (static_cast<double>(tau) + shift);
  }
  throw DataError("f0 estimate: no periodicity found");
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

struct BandPlan {
  Band band;
  bool resolved = true;
  std::string name;
};

struct WindowSummary {
  std::size_t index = 0;
  std::size_t start = 0;
  std::size_t length = 0;
  bool voiced = false;
  std::string status;
  std::size_t cluster_size = 0;
  std::int64_t m = 1;
  std::vector<std::pair<std::string, Rational>> members;
  double omega_start = kNaN;  // fitted line at the window start, rad/sample
  double chirp = kNaN;        // relative, 1/sample
};

struct TraceRow {
  std::size_t window = 0;
  std::string band;
  int iteration = 0;
  IterationStep step;
  std::string status;
};

struct AnalysisResult {
  PipelineConfig config;
  double sample_rate = 16000.0;
  std::size_t samples = 0;
  std::string status = "unconfirmed";
  std::vector<WindowSummary> windows;
  std::vector<TraceRow> traces;
  FundamentalDrive fd;  // NaN outside voiced windows
  std::vector<std::size_t> cluster_size;
  std::size_t segment_begin = 0, segment_end = 0;  // longest voiced run
  std::vector<NamedPhase> part_tone_phases;        // over the longest run
  EquivalenceSummary locking;
  std::string gauge_status;
  std::optional<CouplingModel> coupling;
  std::optional<SecondaryFilter> secondary;
  std::string model_status;
};

namespace detail {

inline std::vector<BandPlan> plan_bands(const PipelineConfig& cfg, double omega_f, bool force_resolved = false) {
  std::vector<BandPlan> plans;
  for (const auto& h : cfg.harmonics) {
    BandPlan p;
    p.band.winding = h;
    p.band.gamma_order = cfg.gamma_order;
    const double centre_hz = h.value() * omega_f * cfg.sample_rate / kTwoPi;
    p.band.erb = cfg.erb_factor * erb_hz(centre_hz) / cfg.sample_rate;
    p.resolved = force_resolved || h.value() <= cfg.resolved_max;
    p.band.kind = p.resolved ? PhaseKind::carrier : PhaseKind::envelope;
    p.name = "h" + h.str();
    plans.push_back(p);
  }
  return plans;
}

inline PartTone filter_span(std::span<const double> x, const Band& band, const Series& contour, std::size_t first,
                            std::size_t last) {
  FilterSpec spec;
  spec.gamma_order = band.gamma_order;
  spec.erb = band.erb;
  spec.damping = damping_from_erb(band.erb, band.gamma_order);
  spec.contour = contour;
  spec.winding_number = band.winding;
  return filter_signal(x.subspan(first, last - first), spec);
}

struct LineFit {
  double p0 = kNaN, p1 = kNaN;  // value at k = 0 and slope
};

inline LineFit fit_line(const Series& y) {
  double n = 0, sk = 0, sy = 0, skk = 0, sky = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (!std::isfinite(y[k])) continue;
    const double kk = static_cast<double>(k);
    n += 1;
    sk += kk;
    sy += y[k];
    skk += kk * kk;
    sky += kk * y[k];
  }
  LineFit f;
  const double den = n * skk - sk * sk;
  if (n < 2 || den == 0.0) return f;
  f.p1 = (n * sky - sk * sy) / den;
  f.p0 = (sy - f.p1 * sk) / n;
  return f;
}

struct WindowState {
  double w0 = 0.0;     // fundamental at the window start, rad/sample
  double chirp = 0.0;  // relative, 1/sample
};

struct WindowOutcome {
  WindowSummary summary;
  Series omega;
  std::vector<TraceRow> traces;
  LineFit line;
};

inline IterationOptions iteration_options(const PipelineConfig& cfg) {
  IterationOptions o;
  o.tol_rel = cfg.iter_tol;
  o.max_iter = cfg.iter_max;
  o.damping = cfg.iter_damping;
  o.trend.fourier_order = cfg.trend_order;
  o.trend.min_cycles = cfg.trend_min_cycles;
  o.envelope.exponent = cfg.nu;
  o.envelope.smoothing_periods = cfg.envelope_smoothing;
  return o;
}

inline std::int64_t harmonic_lcd(const PipelineConfig& cfg) { return lcm_of_denominators(cfg.harmonics); }

/// Adapts every band on one window and clusters the resulting contours.
/// `single_source` > 0 skips clustering and takes the FD from that carrier.
inline WindowOutcome process_window(std::span<const double> x, const std::vector<BandPlan>& plans, std::size_t index,
                                    std::size_t start, std::size_t length, const WindowState& state,
                                    const PipelineConfig& cfg, int single_source = 0) {
  const std::size_t n = x.size();
  const std::size_t end = start + length;
  const std::size_t lead = std::min(start, cfg.lead_samples());
  const double period = kTwoPi / state.w0;
  const auto smooth = static_cast<std::size_t>(std::max(1.0, std::round(period * harmonic_lcd(cfg))));
  const std::size_t tail = std::min(n - end, smooth);
  const IterationOptions opt = iteration_options(cfg);

  WindowOutcome out;
  out.summary.index = index;
  out.summary.start = start;
  out.summary.length = length;

  std::vector<Series> contours, weights;
  std::vector<std::size_t> contour_plan;
  std::vector<double> chirps;
  for (std::size_t j = 0; j < plans.size(); ++j) {
    const auto& p = plans[j];
    if (!p.resolved) continue;
    if (single_source > 0 && !(p.band.winding == Rational(single_source))) continue;
    const double h = p.band.winding.value();
    WindowGeometry g;
    g.start = start;
    g.length = length;
    g.lead = lead;
    AdaptResult ar;
    try {
      ar = self_consistent_iterate(x, p.band, ChirpContour{h * state.w0, state.chirp, static_cast<std::int64_t>(start)},
                                   g, opt);
    } catch (const std::exception& e) {
      ar.trace.status = std::string("error: ") + e.what();
    }
    for (std::size_t i = 0; i < ar.trace.steps.size(); ++i)
      out.traces.push_back({index, p.name, static_cast<int>(i + 1), ar.trace.steps[i], ar.trace.status});
    if (ar.trace.steps.empty()) out.traces.push_back({index, p.name, 0, IterationStep{}, ar.trace.status});
    if (ar.trace.status == "diverged" || ar.trace.status == "gaps" || ar.trace.steps.empty()) continue;
    if (ar.trace.converged) chirps.push_back(ar.contour.chirp);
    try {
      const std::size_t first = start - lead, last = end + tail;
      const Series w = sample_contour(ar.contour, static_cast<std::int64_t>(first), last - first);
      const PartTone pt = filter_span(x, p.band, w, first, last);
      const PhaseSeries ph = carrier_phase(pt);
      Series v = central_difference(ph.unwrapped);
      const auto settle = static_cast<std::size_t>(
          2.0 * static_cast<double>(group_delay_samples(pt.spec.damping, pt.spec.gamma_order)));
      for (std::size_t i = 0; i < std::min(settle, v.size()); ++i) v[i] = kNaN;
      v = centred_average(v, smooth);
      const Series amp = normalized_amplitude(pt);
      contours.emplace_back(v.begin() + lead, v.begin() + lead + length);
      weights.emplace_back(amp.begin() + lead, amp.begin() + lead + length);
      contour_plan.push_back(j);
    } catch (const std::exception&) {
    }
  }

  const double chirp_med = chirps.empty() ? state.chirp : median(chirps);
  if (single_source == 0) {
    for (std::size_t j = 0; j < plans.size(); ++j) {
      const auto& p = plans[j];
      if (p.resolved) continue;
      try {
        const double h = p.band.winding.value();
        const ChirpContour c{h * state.w0, chirp_med, static_cast<std::int64_t>(start)};
        const double lam = damping_from_erb(p.band.erb, p.band.gamma_order);
        const std::size_t delay = group_delay_samples(lam, p.band.gamma_order);
        const std::size_t env_tail = std::min(n - end, std::max<std::size_t>(200, smooth));
        const std::size_t first = start - lead, last = std::min(n, end + env_tail + delay);
        const Series w = sample_contour(c, static_cast<std::int64_t>(first), last - first);
        const PartTone pt = filter_span(x, p.band, w, first, last);
        const auto env_smooth =
            static_cast<std::size_t>(std::max(1.0, std::round(cfg.envelope_smoothing * period)));
        const std::size_t margin = std::min<std::size_t>(200, lead);
        const PhaseSeries ph = envelope_phase(pt, cfg.nu, env_smooth,
                                              SampleRange{lead - margin, std::min(pt.samples.size(), lead + length + env_tail)});
        Series v = central_difference(ph.unwrapped);
        // settling plus whatever part of the Hilbert margin the lead-in could not supply
        const std::size_t masked = 2 * delay + (200 - margin);
        for (std::size_t i = 0; i < std::min(masked, v.size()); ++i) v[i] = kNaN;
        v = centred_average(v, smooth);
        const Series amp = normalized_amplitude(pt);
        contours.emplace_back(v.begin() + lead, v.begin() + lead + length);
        weights.emplace_back(amp.begin() + lead, amp.begin() + lead + length);
        contour_plan.push_back(j);
      } catch (const std::exception&) {
      }
    }
  }

  ClusterResult cl;
  if (single_source > 0) {
    if (!contours.empty()) {
      cl.status = ClusterStatus::confirmed;
      cl.members.push_back({0, Rational(single_source), 0.0});
      cl.omega = contours[0];
      for (auto& v : cl.omega) v /= single_source;
    }
  } else {
    ClusterOptions co;
    co.rel_tol = cfg.cluster_rel_tol;
    co.min_omega = kTwoPi * cfg.f0_min_hz / cfg.sample_rate;
    co.max_omega = kTwoPi * cfg.f0_max_hz / cfg.sample_rate;
    for (const std::size_t j : contour_plan) co.unit_winding.push_back(plans[j].resolved ? 0 : 1);
    const auto candidates = default_candidates(cfg.max_winding_num, cfg.max_winding_den);
    cl = coincidence_cluster(contours, weights, candidates, co);
  }
  out.summary.cluster_size = cl.members.size();
  out.summary.m = cl.m;
  for (const auto& mb : cl.members) out.summary.members.emplace_back(plans[contour_plan[mb.index]].name, mb.winding);
  if (!cl.confirmed()) {
    out.summary.status = "unconfirmed";
    out.omega.assign(length, kNaN);
    return out;
  }
  out.line = fit_line(cl.omega);
  if (!std::isfinite(out.line.p0) || !(out.line.p0 > 0.0)) {
    out.summary.status = "unconfirmed";
    out.omega.assign(length, kNaN);
    return out;
  }
  out.omega = cl.omega;
  for (std::size_t k = 0; k < length; ++k)
    if (!std::isfinite(out.omega[k])) out.omega[k] = out.line.p0 + out.line.p1 * static_cast<double>(k);
  out.summary.voiced = true;
  out.summary.status = "confirmed";
  out.summary.omega_start = out.line.p0;
  out.summary.chirp = out.line.p1 / out.line.p0;
  return out;
}

/// Window start offsets: abutting windows, the last absorbing the remainder.
inline std::vector<std::pair<std::size_t, std::size_t>> window_layout(std::size_t n, std::size_t w) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (n == 0 || w == 0) return out;
  if (n < w) return {{0, n}};
  const std::size_t count = n / w;
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(i * w, i + 1 == count ? n - i * w : w);
  return out;
}

}  // namespace detail

/// Reconstructs the fundamental drive window by window, then filters the
/// longest voiced run with contours locked to it for amplitude, gauge,
/// locking and model estimation.
///
/// `single_source` > 0 takes the drive from that resolved carrier alone.
inline AnalysisResult analyze(std::span<const double> x, const PipelineConfig& cfg, int single_source = 0) {
  validate(cfg);
  if (!all_finite(x)) throw DataError("analyze: non-finite input sample");
  AnalysisResult res;
  res.config = cfg;
  res.sample_rate = cfg.sample_rate;
  res.samples = x.size();
  const std::size_t n = x.size();
  const std::size_t w = cfg.window_samples();
  const auto layout = detail::window_layout(n, w);
  res.fd.omega.assign(n, kNaN);
  res.fd.psi.assign(n, kNaN);
  res.fd.amp_fast.assign(n, kNaN);
  res.fd.amp_slow.assign(n, kNaN);
  res.cluster_size.assign(n, 0);

  auto unvoiced = [&](const std::string& why) {
    for (const auto& [s, l] : layout) {
      WindowSummary ws;
      ws.index = res.windows.size();
      ws.start = s;
      ws.length = l;
      ws.status = why;
      res.windows.push_back(ws);
    }
    return res;
  };

  const double min_period = cfg.sample_rate / cfg.f0_max_hz;
  if (n < static_cast<std::size_t>(3.0 * min_period) + 8) throw DataError("analyze: signal shorter than 3 periods");
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) return unvoiced("silent");

  detail::WindowState state;
  if (cfg.initial_f0_hz > 0.0) {
    state.w0 = kTwoPi * cfg.initial_f0_hz / cfg.sample_rate;
  } else {
    try {
      state.w0 = estimate_f0_acf(x.subspan(0, std::min(n, w)), cfg.sample_rate, cfg.f0_min_hz, cfg.f0_max_hz);
    } catch (const DataError&) {
      return unvoiced("aperiodic");
    }
  }

  // first window twice more from its own line fit
  const auto [s0, l0] = layout.front();
  std::vector<BandPlan> plans = detail::plan_bands(cfg, state.w0, single_source > 0);
  for (int pass = 0; pass < 2; ++pass) {
    const auto probe = detail::process_window(x, plans, 0, s0, l0, state, cfg, single_source);
    if (!probe.summary.voiced) break;
    state.w0 = probe.line.p0;
    state.chirp = probe.line.p1 / probe.line.p0;
    plans = detail::plan_bands(cfg, state.w0, single_source > 0);
  }

  for (std::size_t wi = 0; wi < layout.size(); ++wi) {
    const auto [s, l] = layout[wi];
    auto o = detail::process_window(x, plans, wi, s, l, state, cfg, single_source);
    res.traces.insert(res.traces.end(), o.traces.begin(), o.traces.end());
    if (o.summary.voiced) {
      for (std::size_t k = 0; k < l; ++k) {
        res.fd.omega[s + k] = o.omega[k];
        res.cluster_size[s + k] = o.summary.cluster_size;
      }
      const double len = static_cast<double>(l);
      const double w_next = o.line.p0 + o.line.p1 * len;
      if (w_next > 0.0) {
        state.w0 = w_next;
        state.chirp = o.line.p1 / w_next;
      }
    }
    res.windows.push_back(o.summary);
  }

  // longest voiced run
  std::size_t best_len = 0;
  for (std::size_t i = 0; i < res.windows.size();) {
    if (!res.windows[i].voiced) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < res.windows.size() && res.windows[j].voiced) ++j;
    const std::size_t b = res.windows[i].start, e = res.windows[j - 1].start + res.windows[j - 1].length;
    if (e - b > best_len) {
      best_len = e - b;
      res.segment_begin = b;
      res.segment_end = e;
    }
    // psi over this run
    const Series psi = continue_phase(std::span<const double>(res.fd.omega).subspan(b, e - b), 0.0);
    std::copy(psi.begin(), psi.end(), res.fd.psi.begin() + static_cast<std::ptrdiff_t>(b));
    i = j;
  }
  if (best_len == 0) {
    res.status = "unconfirmed";
    return res;
  }
  res.status = "confirmed";
  // most frequent window m, larger on ties
  std::map<std::int64_t, std::size_t> m_votes;
  for (const auto& ws : res.windows)
    if (ws.voiced && ws.start >= res.segment_begin && ws.start < res.segment_end) ++m_votes[ws.m];
  std::int64_t m = 1;
  std::size_t votes = 0;
  for (const auto& [mv, count] : m_votes)
    if (count >= votes) {
      m = mv;
      votes = count;
    }
  res.fd.m = m;

  // segment-level part-tones locked to the drive
  const std::size_t b = res.segment_begin, e = res.segment_end;
  const std::span<const double> omega_seg(res.fd.omega.data() + b, e - b);
  for (const auto& p : plans) {
    Series contour(omega_seg.begin(), omega_seg.end());
    const double h = p.band.winding.value();
    bool ok = true;
    for (auto& v : contour) {
      v *= h;
      if (!(v > 0.0 && v < kPi)) ok = false;
    }
    if (!ok) continue;
    const PartTone pt = detail::filter_span(x, p.band, contour, b, e);
    PhaseSeries ph = carrier_phase(pt);
    const std::size_t delay = group_delay_samples(pt.spec.damping, pt.spec.gamma_order);
    for (std::size_t i = 0; i < std::min(2 * delay, ph.size()); ++i) ph.unwrapped[i] = kNaN;
    res.part_tone_phases.push_back({p.name, ph.unwrapped});
  }

  // a_t per window, bandwidths re-planned at the window's fundamental so that
  // the t* advance still lines envelope peaks up with the excitation
  for (const auto& ws : res.windows) {
    if (ws.start < b || ws.start >= e) continue;
    const std::size_t first = std::max(b, ws.start - std::min(ws.start, cfg.lead_samples()));
    const auto wplans = detail::plan_bands(cfg, res.fd.omega[ws.start]);
    std::vector<Series> amps;
    std::vector<Rational> windings;
    for (const auto& p : wplans) {
      const double h = p.band.winding.value();
      const double lam = damping_from_erb(p.band.erb, p.band.gamma_order);
      const std::size_t delay = group_delay_samples(lam, p.band.gamma_order);
      const std::size_t last = std::min(e, ws.start + ws.length + delay);
      Series contour(res.fd.omega.begin() + static_cast<std::ptrdiff_t>(first),
                     res.fd.omega.begin() + static_cast<std::ptrdiff_t>(last));
      bool ok = true;
      for (auto& v : contour) {
        v *= h;
        if (!(v > 0.0 && v < kPi)) ok = false;
      }
      if (!ok) continue;
      const Series a = normalized_amplitude(detail::filter_span(x, p.band, contour, first, last));
      Series adv(ws.length, kNaN);
      for (std::size_t k = 0; k < ws.length; ++k) {
        // skip samples the filter produced while still settling
        const std::size_t i = ws.start - first + k + delay;
        if (i >= 2 * delay && i < a.size()) adv[k] = a[i];
      }
      amps.push_back(std::move(adv));
      windings.push_back(p.band.winding);
    }
    if (amps.empty()) continue;
    const Series at = instantaneous_amplitude(amps, harmonic_weights(windings, cfg.nu), cfg.nu);
    std::copy(at.begin(), at.end(), res.fd.amp_fast.begin() + static_cast<std::ptrdiff_t>(ws.start));
  }

  // slow amplitude, C1 across windows
  {
    std::vector<std::size_t> lengths;
    std::size_t first = e;
    for (const auto& ws : res.windows) {
      if (ws.start < b || ws.start >= e) continue;
      first = std::min(first, ws.start);
      lengths.push_back(ws.length);
    }
    try {
      const auto fits = smooth_amplitude_joint(std::span<const double>(res.fd.amp_fast).subspan(b, e - b), lengths);
      std::size_t off = first;
      for (const auto& f : fits) {
        std::copy(f.values.begin(), f.values.end(), res.fd.amp_slow.begin() + static_cast<std::ptrdiff_t>(off));
        off += f.length;
      }
    } catch (const std::exception&) {
    }
  }

  // gauge
  try {
    const GaugeResult g = gauge_phase(std::span<const double>(res.fd.psi).subspan(b, e - b),
                                      std::span<const double>(res.fd.amp_fast).subspan(b, e - b), m);
    res.fd.gauge_offset = g.offset;
    for (std::size_t t = b; t < e; ++t) res.fd.psi[t] -= g.offset;
    res.gauge_status = "ok";
  } catch (const DataError& err) {
    res.gauge_status = err.what();
  }

  // locking against the gauged drive
  const Series psi_seg(res.fd.psi.begin() + static_cast<std::ptrdiff_t>(b), res.fd.psi.begin() + static_cast<std::ptrdiff_t>(e));
  res.locking = confirm_equivalence(res.part_tone_phases, psi_seg, cfg.strength_threshold, cfg.max_winding_num,
                                    cfg.max_winding_den);

  if (cfg.fit_model) {
    const std::span<const double> xs = x.subspan(b, e - b);
    const std::span<const double> as(res.fd.amp_slow.data() + b, e - b);
    try {
      res.coupling = fit_coupling(xs, psi_seg, as, cfg.coupling_order, m);
      res.model_status = "coupling";
      if (cfg.ar_order > 0) {
        try {
          const auto alt = alternate(xs, psi_seg, as, cfg.coupling_order, m, cfg.ar_order);
          res.secondary = alt.secondary;
          res.model_status = "coupling+secondary";
        } catch (const DataError& err) {
          res.model_status = std::string("coupling; secondary rejected: ") + err.what();
        }
      }
    } catch (const std::exception& err) {
      res.model_status = std::string("failed: ") + err.what();
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sweep and circle maps
// ---------------------------------------------------------------------------

/// Grid from config, endpoints inclusive.
inline std::vector<double> sweep_grid(const PipelineConfig& cfg) {
  std::vector<double> g;
  const double span = cfg.sweep_grid_max - cfg.sweep_grid_min;
  const auto steps = static_cast<long>(std::floor(span / cfg.sweep_grid_step + 1e-9));
  for (long i = 0; i <= steps; ++i) g.push_back(cfg.sweep_grid_min + static_cast<double>(i) * cfg.sweep_grid_step);
  return g;
}

struct SweepSetup {
  std::vector<Band> bands;
  WindowGeometry geometry;
  double omega_ref = 0.0;
  double chirp_ref = 0.0;
};

/// Carrier part-tones 2, 4, 6 and envelope part-tone 9 on a window of
/// `sweep_periods` local periods at `sweep_start_ms`, referenced to the
/// local values of the given phase law.
inline SweepSetup sweep_setup(std::size_t n, const PipelineConfig& cfg) {
  SynthSpec law;
  law.omega0_prime = kTwoPi * cfg.sweep_ref_f0_hz;
  law.chirp_prime = cfg.sweep_ref_chirp;
  law.sample_rate = cfg.sample_rate;
  const auto t0 = static_cast<std::size_t>(std::llround(cfg.sweep_start_ms * 1e-3 * cfg.sample_rate));
  const LocalReference ref = local_reference(law, t0);
  SweepSetup s;
  s.omega_ref = ref.omega;
  s.chirp_ref = ref.chirp;
  s.geometry.start = t0;
  s.geometry.length = static_cast<std::size_t>(cfg.sweep_periods * kTwoPi / ref.omega);
  s.geometry.lead = std::min(t0, static_cast<std::size_t>(std::llround(cfg.sweep_lead_ms * 1e-3 * cfg.sample_rate)));
  s.geometry.tail = 200;
  s.geometry.margin = 200;
  if (t0 + s.geometry.length > n) throw DataError("sweep: window exceeds the signal");
  s.geometry.tail = std::min(s.geometry.tail, n - t0 - s.geometry.length);
  for (int h : {2, 4, 6, 9}) {
    Band b;
    b.winding = Rational(h);
    b.gamma_order = cfg.gamma_order;
    b.erb = cfg.erb_factor * erb_hz(h * ref.omega * cfg.sample_rate / kTwoPi) / cfg.sample_rate;
    b.kind = h == 9 ? PhaseKind::envelope : PhaseKind::carrier;
    b.part_tone_index = h;
    s.bands.push_back(b);
  }
  return s;
}

inline std::vector<SweepRow> run_sweep(std::span<const double> x, const PipelineConfig& cfg,
                                       std::span<const double> grid) {
  if (grid.empty()) throw DomainError("sweep: empty grid");
  const SweepSetup s = sweep_setup(x.size(), cfg);
  const double span = static_cast<double>(s.geometry.lead + s.geometry.length + s.geometry.tail);
  for (double r : grid)
    if (!std::isfinite(r) || std::abs(r * s.chirp_ref) * span >= 1.0)
      throw DomainError("sweep: grid value " + format_double(r) + " outside the contour domain");
  return chirp_response_curve(x, s.bands, grid, s.omega_ref, s.chirp_ref, s.geometry, detail::iteration_options(cfg));
}

/// Envelope phase of part-tone h along the drive, computed window by window
/// (bandwidth at the window's fundamental, mean removed per window) and
/// joined by unwrapping the concatenated angles.
inline Series windowed_envelope_phase(std::span<const double> x, const AnalysisResult& a, int h,
                                      const PipelineConfig& cfg) {
  const std::size_t b = a.segment_begin, e = a.segment_end;
  Series ang(e - b, 0.0);
  std::vector<std::uint8_t> valid(e - b, 0);
  for (const auto& ws : a.windows) {
    if (ws.start < b || ws.start >= e) continue;
    const double of = a.fd.omega[ws.start];
    Band band;
    band.winding = Rational(h);
    band.gamma_order = cfg.gamma_order;
    band.erb = cfg.erb_factor * erb_hz(h * of * cfg.sample_rate / kTwoPi) / cfg.sample_rate;
    const std::size_t first = std::max(b, ws.start - std::min(ws.start, cfg.lead_samples()));
    const std::size_t last = std::min(e, ws.start + ws.length + 400);
    Series contour(a.fd.omega.begin() + static_cast<std::ptrdiff_t>(first),
                   a.fd.omega.begin() + static_cast<std::ptrdiff_t>(last));
    bool ok = true;
    for (auto& v : contour) {
      v *= h;
      if (!(v > 0.0 && v < kPi)) ok = false;
    }
    if (!ok) continue;
    const std::size_t off = ws.start - first;
    // the window needs a full Hilbert margin of lead-in
    if (off < 200) continue;
    const PartTone pt = detail::filter_span(x, band, contour, first, last);
    const auto smooth = static_cast<std::size_t>(std::max(1.0, std::round(cfg.envelope_smoothing * kTwoPi / of)));
    const SampleRange range{off - 200, std::min(pt.samples.size(), off + ws.length + 200)};
    PhaseSeries ph;
    try {
      ph = envelope_phase(pt, cfg.nu, smooth, range);
    } catch (const DataError&) {
      continue;
    }
    const std::size_t masked = 2 * group_delay_samples(pt.spec.damping, pt.spec.gamma_order);
    for (std::size_t k = 0; k < ws.length; ++k) {
      const std::size_t i = off + k;
      if (i < masked || i >= ph.size() || !ph.valid[i]) continue;
      ang[ws.start - b + k] = ph.wrapped[i];
      valid[ws.start - b + k] = 1;
    }
  }
  return phase_from_angles(ang, valid, PhaseKind::envelope).unwrapped;
}

struct CircleMapSet {
  std::vector<std::pair<std::string, CircleMap>> maps;
  std::vector<LockingReport> reports;
  std::string status;
};

/// Drive from one carrier, then carrier and envelope phases of part-tones
/// 5 and 6 against it.
inline CircleMapSet run_circlemap(std::span<const double> x, const PipelineConfig& cfg) {
  const AnalysisResult a = analyze(x, cfg, cfg.fd_source_harmonic);
  CircleMapSet out;
  out.status = a.status;
  if (a.status != "confirmed") return out;
  const std::size_t b = a.segment_begin, e = a.segment_end;
  const Series psi(a.fd.psi.begin() + static_cast<std::ptrdiff_t>(b), a.fd.psi.begin() + static_cast<std::ptrdiff_t>(e));
  const double omega_f = a.fd.omega[b];
  for (int h : {5, 6}) {
    Band band;
    band.winding = Rational(h);
    band.gamma_order = cfg.gamma_order;
    band.erb = cfg.erb_factor * erb_hz(h * omega_f * cfg.sample_rate / kTwoPi) / cfg.sample_rate;
    Series contour(a.fd.omega.begin() + static_cast<std::ptrdiff_t>(b), a.fd.omega.begin() + static_cast<std::ptrdiff_t>(e));
    for (auto& v : contour) v *= h;
    const PartTone pt = detail::filter_span(x, band, contour, b, e);
    const std::size_t delay = group_delay_samples(pt.spec.damping, pt.spec.gamma_order);
    PhaseSeries car = carrier_phase(pt);
    for (std::size_t i = 0; i < std::min(2 * delay, car.size()); ++i) car.unwrapped[i] = kNaN;
    const Series env_psi = windowed_envelope_phase(x, a, h, cfg);

    const std::string cname = "carrier" + std::to_string(h), ename = "envelope" + std::to_string(h);
    out.maps.emplace_back(cname, circle_map(psi, car.unwrapped, 1.0, h));
    out.maps.emplace_back(ename, circle_map(psi, env_psi, 1.0, 1.0));
    for (const auto& [name, ph] : {std::pair{cname, car.unwrapped}, std::pair{ename, env_psi}}) {
      LockingReport r;
      r.a = "fd";
      r.b = name;
      try {
        const auto wn = winding_number(psi, ph, cfg.max_winding_num, cfg.max_winding_den);
        r.ratio = wn.ratio;
        r.winding = wn.snapped;
        if (wn.snapped) {
          r.strength = locking_strength(psi, ph, wn.snapped->num, wn.snapped->den);
          r.confirmed = r.strength >= cfg.strength_threshold;
        }
      } catch (const DataError&) {
      }
      r.linearity_rms = circle_map(psi, ph, 1.0, r.winding ? r.winding->value() : 1.0).linearity_rms;
      out.reports.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// File emission
// ---------------------------------------------------------------------------

/// Collects written files and their hashes.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    write_text(dir_ / name, content);
    entries_.push_back({{"file", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
  }

  /// Writes manifest.json; returns its path.
  std::filesystem::path finish() {
    nlohmann::json j;
    j["format"] = "fdrive-manifest";
    j["version"] = 1;
    j["files"] = entries_;
    const auto path = dir_ / "manifest.json";
    write_text(path, j.dump(2) + "\n");
    return path;
  }

 private:
  std::filesystem::path dir_;
  nlohmann::json entries_ = nlohmann::json::array();
};

inline std::string fd_csv(const AnalysisResult& a) {
  CsvTable t({"t", "omega", "psi_wrapped", "psi_unwrapped", "a_fast", "A_slow", "m", "cluster_size"});
  for (std::size_t i = 0; i < a.samples; ++i) {
    const double psi = a.fd.psi[i];
    const double period = kTwoPi * static_cast<double>(a.fd.m);
    t.add_row({static_cast<double>(i) / a.sample_rate, a.fd.omega[i], std::isfinite(psi) ? wrap_positive(psi, period) : kNaN,
               psi, a.fd.amp_fast[i], a.fd.amp_slow[i], static_cast<std::int64_t>(a.fd.m),
               static_cast<std::int64_t>(a.cluster_size[i])});
  }
  return t.str();
}

inline std::string locking_csv(const std::vector<LockingReport>& rows) {
  CsvTable t({"a", "b", "ratio", "winding", "strength", "linearity_rms", "confirmed"});
  for (const auto& r : rows)
    t.add_row({r.a, r.b, r.ratio, r.winding ? r.winding->str() : std::string("unlocked"), r.strength, r.linearity_rms,
               std::string(r.confirmed ? "true" : "false")});
  return t.str();
}

inline std::string traces_csv(const std::vector<TraceRow>& rows) {
  CsvTable t({"window", "part_tone", "iteration", "chirp_in", "chirp_out", "alpha", "residual_rms", "branch", "status"});
  for (const auto& r : rows)
    t.add_row({static_cast<std::int64_t>(r.window), r.band, static_cast<std::int64_t>(r.iteration), r.step.chirp_in,
               r.step.chirp_out, r.step.alpha, r.step.residual_rms, std::string(to_string(r.step.branch)), r.status});
  return t.str();
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  CsvTable t({"part_tone", "phase_kind", "rel_chirp_in", "rel_trend_out", "residual_rms", "converged"});
  for (const auto& r : rows)
    t.add_row({r.winding.str(), std::string(to_string(r.kind)), r.rel_chirp_in, r.rel_trend_out, r.residual_rms,
               std::string(r.ok ? "true" : "false")});
  return t.str();
}

inline std::string circlemap_csv(const CircleMapSet& s) {
  CsvTable t({"pair", "abscissa", "ordinate"});
  for (const auto& [name, cm] : s.maps)
    for (std::size_t i = 0; i < cm.x.size(); ++i) t.add_row({name, cm.x[i] / kPi, cm.y[i] / kPi});
  return t.str();
}

inline nlohmann::json report_json(const AnalysisResult& a) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["format"] = "fdrive-report";
  j["version"] = 1;
  j["status"] = a.status;
  j["samples"] = a.samples;
  j["sample_rate"] = a.sample_rate;
  j["segment"] = {{"begin", a.segment_begin}, {"end", a.segment_end}};
  j["m"] = a.fd.m;
  j["gauge"] = {{"offset", a.fd.gauge_offset}, {"status", a.gauge_status}};
  json wins = json::array();
  for (const auto& w : a.windows) {
    json members = json::array();
    for (const auto& [name, r] : w.members) members.push_back({{"part_tone", name}, {"winding", r.str()}});
    wins.push_back({{"index", w.index}, {"start", w.start}, {"length", w.length}, {"status", w.status},
                    {"cluster_size", w.cluster_size}, {"m", w.m}, {"members", members},
                    {"omega_start", num(w.omega_start)}, {"chirp", num(w.chirp)}});
  }
  j["windows"] = wins;
  json lock = json::array();
  for (const auto& r : a.locking.versus_fd)
    lock.push_back({{"part_tone", r.b}, {"winding", r.winding ? r.winding->str() : "unlocked"},
                    {"strength", r.strength}, {"confirmed", r.confirmed}});
  j["locking"] = {{"versus_fd", lock},
                  {"confirmed_part_tones", a.locking.confirmed_part_tones},
                  {"confirmed_pairs", a.locking.confirmed_pairs}};
  j["model"] = {{"status", a.model_status},
                {"residual_rms", a.coupling ? num(a.coupling->residual_rms) : json(nullptr)},
                {"secondary_residual_rms", a.secondary ? num(a.secondary->residual_rms) : json(nullptr)}};
  return j;
}

/// Writes report.json, fd.csv, locking.csv, traces.csv, model.txt (when a
/// model was fitted) and manifest.json.
inline std::filesystem::path write_analysis(const AnalysisResult& a, const std::filesystem::path& dir) {
  Manifest m(dir);
  m.write("fd.csv", fd_csv(a));
  std::vector<LockingReport> rows = a.locking.versus_fd;
  rows.insert(rows.end(), a.locking.pairs.begin(), a.locking.pairs.end());
  m.write("locking.csv", locking_csv(rows));
  m.write("traces.csv", traces_csv(a.traces));
  if (a.coupling) m.write("model.txt", export_model(*a.coupling, a.secondary));
  m.write("report.json", report_json(a).dump(2) + "\n");
  return m.finish();
}

}  // namespace fdrive
