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
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fdrive/core.hpp"

namespace fdrive {

/// Asymmetric triangle pulse: rises with slope 1, falls with slope s.
///   G(psi) = min(mod(psi, 2pi), s (2pi - mod(psi, 2pi)))
inline double sawtooth_coupling(double psi, double s) {
  if (!(s > 0.0)) throw DomainError("sawtooth_coupling: slope ratio must be > 0");
  const double p = wrap_positive(psi);
  return std::min(p, s * (kTwoPi - p));
}

struct GlottalPhase {
  double psi = 0.0;    // rad
  double omega = 0.0;  // rad/s
};

/// Phase law of a linearly chirped oscillator (nonneg chirp) or of one whose
/// period grows linearly (negative chirp). t in seconds.
inline GlottalPhase glottal_phase(double t, double omega0, double chirp) {
  if (chirp >= 0.0) return {omega0 * (t + 0.5 * chirp * t * t), omega0 * (1.0 + chirp * t)};
  const double f = 1.0 - chirp * t;
  if (!(f > 0.0)) throw DomainError("glottal_phase: singular period law (c t >= 1)");
  return {-(omega0 / chirp) * std::log(f), omega0 / f};
}

struct SynthSpec {
  double omega0_prime = kTwoPi * 100.0;  // rad/s
  double chirp_prime = 6.0;              // 1/s
  double slope_ratio = 6.0;
  double amplitude = 1.0;       // used when amplitude_contour is empty
  Series amplitude_contour;     // optional per-sample A_t
  double noise_level = 0.0;
  std::int64_t subharmonic_m = 1;
  double duration = 0.4;        // s
  double sample_rate = 16000.0;
  std::uint64_t rng_seed = 1;
  std::vector<double> secondary_ar;  // y_t = sum a_k y_{t-k} + E_t

  std::size_t samples() const { return static_cast<std::size_t>(std::llround(duration * sample_rate)); }
};

struct GroundTruth {
  Series psi_prime;    // rad
  Series omega_prime;  // rad/s
  Series excitation;
  Series signal;
  double sample_rate = 16000.0;
};

/// Max pole modulus of y_t = sum_k a_k y_{t-k} + x_t (0 for an empty filter).
inline double ar_pole_radius(std::span<const double> a) {
  const auto p = static_cast<Eigen::Index>(a.size());
  if (p == 0) return 0.0;
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index k = 0; k < p; ++k) comp(0, k) = a[static_cast<std::size_t>(k)];
  for (Eigen::Index k = 1; k < p; ++k) comp(k, k - 1) = 1.0;
  const Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline Series ar_filter(std::span<const double> x, std::span<const double> a, double feedthrough = 1.0) {
  Series y(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = feedthrough * x[t];
    for (std::size_t k = 1; k <= a.size() && k <= t; ++k) acc += a[k - 1] * y[t - k];
    y[t] = acc;
  }
  return y;
}

inline void validate(const SynthSpec& s) {
  if (!(s.duration > 0.0) || s.samples() == 0) throw DomainError("synth: duration must be > 0");
  if (!(s.sample_rate > 0.0)) throw DomainError("synth: sample rate must be > 0");
  if (!(s.omega0_prime > 0.0)) throw DomainError("synth: omega0' must be > 0");
  if (!(s.slope_ratio > 0.0)) throw DomainError("synth: slope ratio must be > 0");
  if (!(s.noise_level >= 0.0)) throw DomainError("synth: noise level must be >= 0");
  if (s.subharmonic_m < 1) throw DomainError("synth: m must be >= 1");
  if (s.chirp_prime < 0.0 && !(s.duration * -s.chirp_prime < 1.0))
    throw DomainError("synth: duration reaches the period-law singularity");
  if (!s.amplitude_contour.empty() && s.amplitude_contour.size() != s.samples())
    throw DomainError("synth: amplitude contour length mismatch");
  const double peak = s.omega0_prime * (s.chirp_prime >= 0.0 ? 1.0 + s.chirp_prime * s.duration
                                                             : 1.0 / (1.0 + s.chirp_prime * s.duration));
  if (!(peak / s.sample_rate < kPi)) throw DomainError("synth: fundamental exceeds Nyquist");
  if (!(ar_pole_radius(s.secondary_ar) < 1.0))
    throw DomainError("synth: secondary filter is unstable (pole radius " +
                      std::to_string(ar_pole_radius(s.secondary_ar)) + ")");
}

/// E_t = A_t (G(psi'_t / m) + sigma xi_t), optionally all-pole filtered.
inline GroundTruth generate(const SynthSpec& spec) {
  validate(spec);
  const std::size_t n = spec.samples();
  GroundTruth g;
  g.sample_rate = spec.sample_rate;
  g.psi_prime.resize(n);
  g.omega_prime.resize(n);
  g.excitation.resize(n);
  std::mt19937_64 rng(spec.rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double m = static_cast<double>(spec.subharmonic_m);
  for (std::size_t t = 0; t < n; ++t) {
    const auto gp = glottal_phase(static_cast<double>(t) / spec.sample_rate, spec.omega0_prime, spec.chirp_prime);
    g.psi_prime[t] = gp.psi;
    g.omega_prime[t] = gp.omega;
    const double a = spec.amplitude_contour.empty() ? spec.amplitude : spec.amplitude_contour[t];
    double e = sawtooth_coupling(gp.psi / m, spec.slope_ratio);
    if (spec.noise_level > 0.0) e += spec.noise_level * normal(rng);
    g.excitation[t] = a * e;
  }
  g.signal = spec.secondary_ar.empty() ? g.excitation : ar_filter(g.excitation, spec.secondary_ar);
  return g;
}

/// Window-local truth at sample t0: fundamental velocity (rad/sample) and
/// relative chirp (1/sample) of the contour re-anchored at t0.
struct LocalReference {
  double omega = 0.0;
  double chirp = 0.0;
};

inline LocalReference local_reference(const SynthSpec& s, std::size_t t0) {
  const double t = static_cast<double>(t0) / s.sample_rate;
  const auto gp = glottal_phase(t, s.omega0_prime, s.chirp_prime);
  const double c = s.chirp_prime >= 0.0 ? s.chirp_prime / (1.0 + s.chirp_prime * t)
                                        : s.chirp_prime / (1.0 - s.chirp_prime * t);
  return {gp.omega / s.sample_rate, c / s.sample_rate};
}

/// Named experiment presets.
inline SynthSpec preset(const std::string& name) {
  SynthSpec s;
  if (name == "fig2" || name == "fig3") {
    // 100 Hz doubling after 25 cycles: psi'(T) = 50 pi with omega'(T) = 2 omega0'
    return s;
  }
  if (name == "subharmonic-m2") {
    s.omega0_prime = kTwoPi * 200.0;
    s.chirp_prime = 1.0;
    s.duration = 0.3;
    s.subharmonic_m = 2;
    return s;
  }
  throw DomainError("unknown preset '" + name + "'");
}

}  // namespace fdrive
