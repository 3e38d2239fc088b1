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

namespace fdrive {

// Phases here are unwrapped series on a common grid; NaN marks invalid samples.

struct CircleMap {
  Series x;  // rad, [0, 2 pi)
  Series y;  // rad, offset by the same wraps as x
  double norm_a = 1.0;
  double norm_b = 1.0;
  double linearity_rms = kNaN;  // rad, residual of the unwrapped relation's best-fit line
  double slope = kNaN;
};

inline void check_grid(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size()) throw DomainError(std::string(who) + ": phases on different grids");
}

/// Normalized phases plotted against each other with simultaneous wrapping:
/// whenever psi_a/norm_a passes a multiple of 2 pi, psi_b/norm_b is shifted
/// by the same 2 pi.
inline CircleMap circle_map(std::span<const double> psi_a, std::span<const double> psi_b, double norm_a,
                            double norm_b) {
  check_grid(psi_a, psi_b, "circle_map");
  if (!(norm_a > 0.0) || !(norm_b > 0.0)) throw DomainError("circle_map: normalizations must be > 0");
  CircleMap c;
  c.norm_a = norm_a;
  c.norm_b = norm_b;
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < psi_a.size(); ++t) {
    if (!std::isfinite(psi_a[t]) || !std::isfinite(psi_b[t])) continue;
    const double a = psi_a[t] / norm_a, b = psi_b[t] / norm_b;
    const double k = std::floor(a / kTwoPi);
    c.x.push_back(a - kTwoPi * k);
    c.y.push_back(b - kTwoPi * k);
    sx += a;
    sy += b;
    ++n;
  }
  if (n >= 2) {
    // centred sums keep the line fit well conditioned for long phases
    const double mx = sx / n, my = sy / n;
    double vxx = 0, vxy = 0;
    for (std::size_t t = 0; t < psi_a.size(); ++t) {
      if (!std::isfinite(psi_a[t]) || !std::isfinite(psi_b[t])) continue;
      const double dx = psi_a[t] / norm_a - mx, dy = psi_b[t] / norm_b - my;
      vxx += dx * dx;
      vxy += dx * dy;
    }
    if (vxx > 0.0) {
      c.slope = vxy / vxx;
      double ss = 0.0;
      for (std::size_t t = 0; t < psi_a.size(); ++t) {
        if (!std::isfinite(psi_a[t]) || !std::isfinite(psi_b[t])) continue;
        const double dx = psi_a[t] / norm_a - mx, dy = psi_b[t] / norm_b - my;
        const double r = dy - c.slope * dx;
        ss += r * r;
      }
      c.linearity_rms = std::sqrt(ss / static_cast<double>(n));
    }
  }
  return c;
}

struct WindingEstimate {
  double ratio = kNaN;  // unsnapped advance ratio
  std::optional<Rational> snapped;
};

/// Nearest n/d with d <= max_den and n <= max_num, accepted if
/// |ratio - n/d| < 0.02/d^2. Smallest denominator wins.
inline std::optional<Rational> snap_rational(double ratio, std::int64_t max_num, std::int64_t max_den) {
  if (!std::isfinite(ratio) || ratio <= 0.0) return std::nullopt;
  for (std::int64_t d = 1; d <= max_den; ++d) {
    const auto n = static_cast<std::int64_t>(std::llround(ratio * static_cast<double>(d)));
    if (n < 1 || n > max_num) continue;
    const double dd = static_cast<double>(d);
    if (std::abs(ratio - static_cast<double>(n) / dd) < 0.02 / (dd * dd)) {
      const Rational r(n, d);
      if (r.den == d) return r;
    }
  }
  return std::nullopt;
}

/// Ratio of total unwrapped advances of psi_b over psi_a, snapped.
inline WindingEstimate winding_number(std::span<const double> psi_a, std::span<const double> psi_b,
                                      std::int64_t max_num = 20, std::int64_t max_den = 2) {
  check_grid(psi_a, psi_b, "winding_number");
  std::size_t first = psi_a.size(), last = 0;
  for (std::size_t t = 0; t < psi_a.size(); ++t) {
    if (!std::isfinite(psi_a[t]) || !std::isfinite(psi_b[t])) continue;
    first = std::min(first, t);
    last = t;
  }
  if (first >= last) throw DataError("winding_number: no common valid samples");
  const double da = psi_a[last] - psi_a[first];
  const double db = psi_b[last] - psi_b[first];
  if (std::min(std::abs(da), std::abs(db)) < 3.0 * kTwoPi)
    throw DataError("winding_number: fewer than 3 cycles of the slower phase");
  WindingEstimate w;
  w.ratio = db / da;
  w.snapped = snap_rational(w.ratio, max_num, max_den);
  return w;
}

/// |mean exp(i (m psi_b - n psi_a))| over common valid samples.
inline double locking_strength(std::span<const double> psi_a, std::span<const double> psi_b, std::int64_t n,
                               std::int64_t m) {
  check_grid(psi_a, psi_b, "locking_strength");
  Complex s{};
  std::size_t count = 0;
  for (std::size_t t = 0; t < psi_a.size(); ++t) {
    if (!std::isfinite(psi_a[t]) || !std::isfinite(psi_b[t])) continue;
    const double d = static_cast<double>(m) * psi_b[t] - static_cast<double>(n) * psi_a[t];
    s += std::polar(1.0, std::remainder(d, kTwoPi));
    ++count;
  }
  return count ? std::min(1.0, std::abs(s) / static_cast<double>(count)) : 0.0;
}

struct NamedPhase {
  std::string name;
  Series psi;
};

struct LockingReport {
  std::string a;
  std::string b;
  double ratio = kNaN;
  std::optional<Rational> winding;
  double strength = 0.0;
  double linearity_rms = kNaN;
  bool confirmed = false;
};

struct EquivalenceSummary {
  std::vector<LockingReport> versus_fd;  // one per part-tone
  std::vector<LockingReport> pairs;      // part-tone pairs, both locked to the FD
  std::size_t confirmed_part_tones = 0;
  std::size_t confirmed_pairs = 0;
};

/// Locks each part-tone phase to the FD phase and, for part-tones locked to
/// the FD, checks every pair at the ratio implied by their FD winding numbers.
inline EquivalenceSummary confirm_equivalence(const std::vector<NamedPhase>& part_tones, std::span<const double> fd_psi,
                                              double threshold = 0.9, std::int64_t max_num = 20,
                                              std::int64_t max_den = 2) {
  EquivalenceSummary s;
  for (const auto& p : part_tones) {
    LockingReport r;
    r.a = "fd";
    r.b = p.name;
    try {
      const auto w = winding_number(fd_psi, p.psi, max_num, max_den);
      r.ratio = w.ratio;
      r.winding = w.snapped;
    } catch (const DataError&) {
    }
    if (r.winding) {
      r.strength = locking_strength(fd_psi, p.psi, r.winding->num, r.winding->den);
      r.linearity_rms = circle_map(fd_psi, p.psi, 1.0, r.winding->value()).linearity_rms;
      r.confirmed = r.strength >= threshold;
    }
    if (r.confirmed) ++s.confirmed_part_tones;
    s.versus_fd.push_back(r);
  }
  for (std::size_t i = 0; i < part_tones.size(); ++i) {
    if (!s.versus_fd[i].confirmed) continue;
    for (std::size_t j = i + 1; j < part_tones.size(); ++j) {
      if (!s.versus_fd[j].confirmed) continue;
      const Rational hi = *s.versus_fd[i].winding, hj = *s.versus_fd[j].winding;
      const Rational w(hj.num * hi.den, hj.den * hi.num);  // psi_j / psi_i
      LockingReport r;
      r.a = part_tones[i].name;
      r.b = part_tones[j].name;
      r.winding = w;
      try {
        r.ratio = winding_number(part_tones[i].psi, part_tones[j].psi, w.num, w.den).ratio;
      } catch (const DataError&) {
      }
      r.strength = locking_strength(part_tones[i].psi, part_tones[j].psi, w.num, w.den);
      r.confirmed = r.strength >= threshold;
      if (r.confirmed) ++s.confirmed_pairs;
      s.pairs.push_back(r);
    }
  }
  return s;
}

}  // namespace fdrive
