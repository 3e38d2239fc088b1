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

#include "fdrive/core.hpp"
#include "fdrive/regression.hpp"

namespace fdrive {

// ---------------------------------------------------------------------------
// Instantaneous amplitude
// ---------------------------------------------------------------------------

/// Weights proportional to the harmonic order, scaled so that sum w^nu = 1.
inline std::vector<double> harmonic_weights(std::span<const Rational> windings, double nu) {
  if (!(nu > 0.0 && nu <= 1.0)) throw DomainError("harmonic_weights: nu outside (0,1]");
  if (windings.empty()) throw DomainError("harmonic_weights: empty set");
  double s = 0.0;
  for (const auto& h : windings) s += std::pow(h.value(), nu);
  const double norm = std::pow(s, 1.0 / nu);
  std::vector<double> w;
  for (const auto& h : windings) w.push_back(h.value() / norm);
  return w;
}

inline double weight_norm(std::span<const double> weights, double nu) {
  double s = 0.0;
  for (double w : weights) s += std::pow(w, nu);
  return s;
}

/// a_t = (sum_j (w_j a_{j,t})^nu)^(1/nu). Weights must already satisfy
/// sum w^nu = 1; NaN in any band propagates.
inline Series instantaneous_amplitude(const std::vector<Series>& amplitudes, std::span<const double> weights,
                                      double nu) {
  if (!(nu > 0.0 && nu <= 1.0)) throw DomainError("instantaneous_amplitude: nu outside (0,1]");
  if (amplitudes.size() != weights.size()) throw DomainError("instantaneous_amplitude: weight count mismatch");
  if (amplitudes.empty()) throw DomainError("instantaneous_amplitude: no bands");
  for (double w : weights)
    if (!(w >= 0.0)) throw DomainError("instantaneous_amplitude: negative weight");
  if (std::abs(weight_norm(weights, nu) - 1.0) > 1e-12)
    throw DomainError("instantaneous_amplitude: weights not normalized (sum w^nu != 1)");
  const std::size_t n = amplitudes.front().size();
  for (const auto& a : amplitudes)
    if (a.size() != n) throw DomainError("instantaneous_amplitude: length mismatch");
  Series out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < amplitudes.size(); ++j) s += std::pow(weights[j] * amplitudes[j][t], nu);
    out[t] = std::pow(s, 1.0 / nu);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Slow amplitude
// ---------------------------------------------------------------------------

/// Value and slope the next window has to continue from.
struct JoinCondition {
  double value = 0.0;
  double slope = 0.0;  // per sample
};

struct SmoothFit {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;  // A(t) = c0 + c1 t + c2 t^2 (or exp of it)
  bool gaussian = false;
  std::size_t length = 0;
  Series values;

  double eval(double t) const {
    const double q = c0 + c1 * t + c2 * t * t;
    return gaussian ? std::exp(q) : q;
  }
  double slope(double t) const {
    const double dq = c1 + 2.0 * c2 * t;
    return gaussian ? eval(t) * dq : dq;
  }
  /// Boundary condition at the first sample after this window.
  JoinCondition join() const {
    const double t = static_cast<double>(length);
    return {eval(t), slope(t)};
  }
};

/// Quadratic least-squares fit of a window of a_t, t = 0..n-1. With a join
/// condition the fit takes value and slope at t = 0 from it, leaving the
/// curvature as the only free parameter. The Gaussian variant fits the
/// logarithm (requires positive samples and a positive join value).
inline SmoothFit smooth_amplitude(std::span<const double> a, std::optional<JoinCondition> prior = std::nullopt,
                                  bool gaussian = false) {
  if (a.size() < 8) throw DomainError("smooth_amplitude: window shorter than 8 samples");
  std::vector<double> t, y;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) continue;
    if (gaussian && !(a[i] > 0.0)) throw DomainError("smooth_amplitude: Gaussian fit needs positive samples");
    t.push_back(static_cast<double>(i));
    y.push_back(gaussian ? std::log(a[i]) : a[i]);
  }
  if (t.size() < 3) throw DataError("smooth_amplitude: fewer than 3 finite samples");
  SmoothFit f;
  f.gaussian = gaussian;
  f.length = a.size();
  if (prior) {
    if (gaussian && !(prior->value > 0.0)) throw DomainError("smooth_amplitude: non-positive join value");
    f.c0 = gaussian ? std::log(prior->value) : prior->value;
    f.c1 = gaussian ? prior->slope / prior->value : prior->slope;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double t2 = t[i] * t[i];
      num += t2 * (y[i] - f.c0 - f.c1 * t[i]);
      den += t2 * t2;
    }
    f.c2 = num / den;
  } else {
    const double scale = static_cast<double>(a.size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.size()), 3);
    Eigen::VectorXd v(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double u = t[i] / scale;
      m.row(static_cast<Eigen::Index>(i)) << 1.0, u, u * u;
      v[static_cast<Eigen::Index>(i)] = y[i];
    }
    const auto ls = least_squares(m, v);
    f.c0 = ls.coeffs[0];
    f.c1 = ls.coeffs[1] / scale;
    f.c2 = ls.coeffs[2] / (scale * scale);
  }
  f.values.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) f.values[i] = f.eval(static_cast<double>(i));
  return f;
}

/// Joint fit over consecutive windows: one quadratic per window, value and
/// slope continuous at every join, all pieces solved in one least-squares
/// problem. `lengths` partition `a`. Each piece is what smooth_amplitude would
/// return given the previous piece's join(), with the curvatures chosen
/// globally. Windows with fewer than 3 finite samples keep zero curvature.
inline std::vector<SmoothFit> smooth_amplitude_joint(std::span<const double> a, std::span<const std::size_t> lengths) {
  std::size_t total = 0;
  for (std::size_t l : lengths) {
    if (l < 8) throw DomainError("smooth_amplitude_joint: window shorter than 8 samples");
    total += l;
  }
  if (total != a.size()) throw DomainError("smooth_amplitude_joint: lengths do not cover the series");
  const std::size_t w = lengths.size();
  // parameters: c0, c1 of the first piece, then the curvature of each free piece
  std::vector<int> curv_col(w, -1);
  int cols = 2;
  std::size_t finite_total = 0;
  for (std::size_t k = 0, off = 0; k < w; off += lengths[k], ++k) {
    std::size_t finite = 0;
    for (std::size_t i = 0; i < lengths[k]; ++i) finite += std::isfinite(a[off + i]) ? 1 : 0;
    finite_total += finite;
    if (finite >= 3) curv_col[k] = cols++;
  }
  if (finite_total < 3) throw DataError("smooth_amplitude_joint: fewer than 3 finite samples");

  // c0_k, c1_k as linear combinations of the parameters, in units of a
  // per-window normalized time u = tau / L_k for conditioning
  std::vector<Eigen::VectorXd> c0(w, Eigen::VectorXd::Zero(cols)), c1(w, Eigen::VectorXd::Zero(cols)),
      c2(w, Eigen::VectorXd::Zero(cols));
  c0[0][0] = 1.0;
  c1[0][1] = 1.0 / static_cast<double>(lengths[0]);
  for (std::size_t k = 0; k < w; ++k) {
    const double l = static_cast<double>(lengths[k]);
    if (curv_col[k] >= 0) c2[k][curv_col[k]] = 1.0 / (l * l);
    if (k + 1 < w) {
      c0[k + 1] = c0[k] + c1[k] * l + c2[k] * l * l;
      c1[k + 1] = c1[k] + c2[k] * (2.0 * l);
    }
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(finite_total), cols);
  Eigen::VectorXd y(static_cast<Eigen::Index>(finite_total));
  Eigen::Index r = 0;
  for (std::size_t k = 0, off = 0; k < w; off += lengths[k], ++k)
    for (std::size_t i = 0; i < lengths[k]; ++i) {
      if (!std::isfinite(a[off + i])) continue;
      const double t = static_cast<double>(i);
      m.row(r) = (c0[k] + c1[k] * t + c2[k] * t * t).transpose();
      y[r++] = a[off + i];
    }
  const auto ls = least_squares(m, y);
  std::vector<SmoothFit> out(w);
  for (std::size_t k = 0; k < w; ++k) {
    auto& f = out[k];
    f.c0 = c0[k].dot(ls.coeffs);
    f.c1 = c1[k].dot(ls.coeffs);
    f.c2 = c2[k].dot(ls.coeffs);
    f.length = lengths[k];
    f.values.resize(lengths[k]);
    for (std::size_t i = 0; i < lengths[k]; ++i) f.values[i] = f.eval(static_cast<double>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subharmonic coincidence clustering
// ---------------------------------------------------------------------------

/// Integers 1..max_integer plus n/d for d = 2..max_den, n/d >= 1, n/d <= max_integer.
inline std::vector<Rational> default_candidates(std::int64_t max_integer = 20, std::int64_t max_den = 2) {
  std::vector<Rational> out;
  for (std::int64_t d = 1; d <= max_den; ++d)
    for (std::int64_t n = d; n <= max_integer * d; ++n) {
      const Rational r(n, d);
      if (r.den != d) continue;
      out.push_back(r);
    }
  std::sort(out.begin(), out.end());
  return out;
}

struct ClusterOptions {
  double rel_tol = 0.03;
  double min_omega = 0.0;  // rad/sample, fundamentals outside are not considered
  double max_omega = kPi;
  // per contour; nonzero marks envelope contours, which never seed a group
  // and can only join with winding 1
  std::vector<std::uint8_t> unit_winding;
};

struct ClusterMember {
  std::size_t index = 0;
  Rational winding{1};
  double deviation = 0.0;  // median relative deviation from the reference
};

enum class ClusterStatus { confirmed, unconfirmed };

struct ClusterResult {
  ClusterStatus status = ClusterStatus::unconfirmed;
  std::vector<ClusterMember> members;
  Series omega;  // fundamental velocity, rad/sample
  std::int64_t m = 1;

  bool confirmed() const { return status == ClusterStatus::confirmed; }
};

namespace detail {

inline double median_ratio(const Series& a, const Series& b) {
  Series r(a.size(), kNaN);
  for (std::size_t t = 0; t < a.size(); ++t)
    if (std::isfinite(a[t]) && std::isfinite(b[t]) && b[t] != 0.0) r[t] = a[t] / b[t];
  return median(r);
}

inline double median_rel_dev(const Series& v, double q, const Series& ref) {
  Series d(v.size(), kNaN);
  for (std::size_t t = 0; t < v.size(); ++t)
    if (std::isfinite(v[t]) && std::isfinite(ref[t]) && ref[t] != 0.0)
      d[t] = std::abs(v[t] / q - ref[t]) / std::abs(ref[t]);
  return median(d);
}

}  // namespace detail

/// Groups velocity contours that agree after division by candidate winding
/// numbers. `weights` (per contour, per sample) weight the centroid median;
/// pass an empty vector for equal weights.
inline ClusterResult coincidence_cluster(const std::vector<Series>& contours, const std::vector<Series>& weights,
                                         std::span<const Rational> candidates, const ClusterOptions& opt = {}) {
  ClusterResult best;
  if (contours.size() < 2 || candidates.empty()) return best;
  const std::size_t n = contours.front().size();
  for (const auto& c : contours)
    if (c.size() != n) throw DomainError("coincidence_cluster: contours on different grids");
  if (!weights.empty() && weights.size() != contours.size())
    throw DomainError("coincidence_cluster: weight count mismatch");
  if (!opt.unit_winding.empty() && opt.unit_winding.size() != contours.size())
    throw DomainError("coincidence_cluster: unit_winding count mismatch");
  auto unit = [&](std::size_t k) { return !opt.unit_winding.empty() && opt.unit_winding[k] != 0; };

  double best_fundamental = 0.0;
  std::vector<ClusterMember> best_members;
  Series ref(n);
  for (std::size_t j = 0; j < contours.size(); ++j) {
    if (unit(j)) continue;
    for (const Rational& q : candidates) {
      for (std::size_t t = 0; t < n; ++t) ref[t] = contours[j][t] / q.value();
      const double fundamental = median(ref);
      if (!std::isfinite(fundamental) || fundamental < opt.min_omega || fundamental > opt.max_omega) continue;
      std::vector<ClusterMember> members{{j, q, 0.0}};
      for (std::size_t k = 0; k < contours.size(); ++k) {
        if (k == j) continue;
        const double r = detail::median_ratio(contours[k], ref);
        if (!std::isfinite(r) || r <= 0.0) continue;
        if (unit(k)) {
          const double dev = detail::median_rel_dev(contours[k], 1.0, ref);
          if (dev < opt.rel_tol) members.push_back({k, Rational(1), dev});
          continue;
        }
        // two candidates nearest the observed ratio
        std::vector<Rational> near(candidates.begin(), candidates.end());
        std::partial_sort(near.begin(), near.begin() + std::min<std::ptrdiff_t>(2, std::ssize(near)), near.end(),
                          [r](const Rational& a, const Rational& b) {
                            return std::abs(a.value() - r) < std::abs(b.value() - r);
                          });
        ClusterMember pick{k, Rational(1), std::numeric_limits<double>::infinity()};
        for (std::size_t c = 0; c < std::min<std::size_t>(2, near.size()); ++c) {
          const double dev = detail::median_rel_dev(contours[k], near[c].value(), ref);
          if (dev < pick.deviation) pick = {k, near[c], dev};
        }
        if (pick.deviation < opt.rel_tol) members.push_back(pick);
      }
      const bool larger = members.size() > best_members.size();
      const bool tie_higher = members.size() == best_members.size() && fundamental > best_fundamental;
      if (larger || tie_higher) {
        best_members = std::move(members);
        best_fundamental = fundamental;
      }
    }
  }
  if (best_members.size() < 2) return best;

  std::sort(best_members.begin(), best_members.end(),
            [](const ClusterMember& a, const ClusterMember& b) { return a.index < b.index; });
  // deviations relative to the centroid rather than the seed contour
  // envelope members only enter the centroid when fewer than two carriers joined
  std::vector<ClusterMember> central;
  for (const auto& mb : best_members)
    if (!unit(mb.index)) central.push_back(mb);
  if (central.size() < 2) central = best_members;
  best.omega.assign(n, kNaN);
  std::vector<double> vals(central.size()), wts(central.size());
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t finite = 0;
    for (std::size_t i = 0; i < central.size(); ++i) {
      const auto& mb = central[i];
      vals[i] = contours[mb.index][t] / mb.winding.value();
      wts[i] = weights.empty() ? 1.0 : weights[mb.index][t];
      finite += std::isfinite(vals[i]) ? 1 : 0;
    }
    // a centroid needs most of the cluster present at that sample
    if (2 * finite > central.size()) best.omega[t] = weighted_median(vals, wts);
  }
  std::vector<Rational> ws;
  for (auto& mb : best_members) {
    mb.deviation = detail::median_rel_dev(contours[mb.index], mb.winding.value(), best.omega);
    ws.push_back(mb.winding);
  }
  best.members = std::move(best_members);
  best.m = lcm_of_denominators(ws);
  best.status = ClusterStatus::confirmed;
  return best;
}

// ---------------------------------------------------------------------------
// Fundamental phase
// ---------------------------------------------------------------------------

/// psi_0 = psi0, psi_t = psi_{t-1} + omega_t.
inline Series fundamental_phase(std::span<const double> omega, double psi0) {
  Series psi(omega.size());
  double acc = psi0;
  for (std::size_t t = 0; t < omega.size(); ++t) {
    if (t > 0) acc += omega[t];
    psi[t] = acc;
  }
  return psi;
}

/// Continues a phase whose last value was `psi_last`: psi_t = psi_{t-1} + omega_t.
inline Series continue_phase(std::span<const double> omega, double psi_last) {
  Series psi(omega.size());
  double acc = psi_last;
  for (std::size_t t = 0; t < omega.size(); ++t) {
    acc += omega[t];
    psi[t] = acc;
  }
  return psi;
}

struct GaugeResult {
  double offset = 0.0;  // subtract from psi
  std::size_t cycles = 0;
  double resultant = 0.0;
};

/// Offset that puts the per-cycle maxima of `a` at psi = 0 mod 2 pi m on
/// circular average. Cycles are delimited in psi, recentred once around the
/// first estimate so that maxima do not straddle a boundary.
inline GaugeResult gauge_phase(std::span<const double> psi, std::span<const double> a, std::int64_t m = 1) {
  if (psi.size() != a.size()) throw DomainError("gauge_phase: length mismatch");
  if (m < 1) throw DomainError("gauge_phase: m must be >= 1");
  const double period = kTwoPi * static_cast<double>(m);

  auto pass = [&](double centre) {
    // cycle k covers psi in [centre - period/2 + k period, centre + period/2 + k period)
    std::vector<double> at_max;
    std::size_t i = 0;
    while (i < psi.size() && !std::isfinite(psi[i])) ++i;
    if (i == psi.size()) return at_max;
    auto cycle_of = [&](double p) { return std::floor((p - centre + 0.5 * period) / period); };
    double current = cycle_of(psi[i]);
    std::size_t begin = i;
    bool first = true;
    for (std::size_t t = i; t <= psi.size(); ++t) {
      const bool end = t == psi.size() || !std::isfinite(psi[t]) || cycle_of(psi[t]) != current;
      if (!end) continue;
      // the first and any cycle cut by the series end are incomplete
      const bool complete = !first && t < psi.size() && std::isfinite(psi[t]);
      if (complete) {
        std::size_t arg = begin;
        bool ok = true;
        for (std::size_t u = begin; u < t; ++u) {
          if (!std::isfinite(a[u])) ok = false;
          else if (a[u] > a[arg] || !std::isfinite(a[arg])) arg = u;
        }
        if (ok) at_max.push_back(psi[arg]);
      }
      if (t == psi.size()) break;
      if (!std::isfinite(psi[t])) {
        while (t < psi.size() && !std::isfinite(psi[t])) ++t;
        if (t == psi.size()) break;
        first = true;
      } else {
        first = false;
      }
      current = cycle_of(psi[t]);
      begin = t;
    }
    return at_max;
  };
  auto circ = [&](const std::vector<double>& xs, double& resultant) {
    Complex s{};
    for (double x : xs) s += std::polar(1.0, x / static_cast<double>(m));
    s /= static_cast<double>(xs.size());
    resultant = std::abs(s);
    return std::arg(s) * static_cast<double>(m);
  };

  std::vector<double> peaks = pass(0.0);
  if (peaks.size() < 3) throw DataError("gauge_phase: fewer than 3 complete cycles");
  GaugeResult g;
  const double first_est = circ(peaks, g.resultant);
  peaks = pass(first_est);
  if (peaks.size() < 3) throw DataError("gauge_phase: fewer than 3 complete cycles");
  g.offset = wrap_positive(circ(peaks, g.resultant), period);
  g.cycles = peaks.size();
  return g;
}

/// Reconstructed drive of one voiced segment.
struct FundamentalDrive {
  Series psi;       // unwrapped, gauged
  Series omega;     // rad/sample
  Series amp_fast;  // a_t
  Series amp_slow;  // A_t
  std::int64_t m = 1;
  double gauge_offset = 0.0;
};

}  // namespace fdrive
