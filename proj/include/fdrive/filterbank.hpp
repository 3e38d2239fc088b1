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

#include <cstdint>
#include <optional>
#include <span>
#include <type_traits>

#include <unsupported/Eigen/FFT>

#include "fdrive/contour.hpp"
#include "fdrive/core.hpp"

namespace fdrive {

// ---------------------------------------------------------------------------
// Bandwidth conventions
// ---------------------------------------------------------------------------

/// Ratio ERB / b of a gamma-order cascade whose power response is
/// (1 + (df/b)^2)^-order:  pi (2n-2)! 2^-(2n-2) / ((n-1)!)^2.
/// a(4) = 0.98175, a(5) = 0.85903.
inline double a_gamma(int gamma_order) {
  if (gamma_order < 1) throw DomainError("a_gamma: order must be >= 1");
  // (2n-2)! / ((n-1)!)^2 / 4^(n-1) computed as a running product
  double r = 1.0;
  for (int k = 1; k <= gamma_order - 1; ++k) r *= (2.0 * k - 1.0) / (2.0 * k);
  return kPi * r;
}

/// Audiological equivalent rectangular bandwidth in Hz.
inline double erb_hz(double frequency_hz) { return 24.7 * (4.37 * frequency_hz / 1000.0 + 1.0); }

/// Per-sample pole radius for a cascade with the given ERB (cycles/sample).
/// The decay rate b = erb / a_gamma reproduces the requested ERB.
inline double damping_from_erb(double erb_cycles_per_sample, int gamma_order) {
  if (!(erb_cycles_per_sample > 0.0)) throw DomainError("damping_from_erb: erb must be > 0");
  return std::exp(-kTwoPi * erb_cycles_per_sample / a_gamma(gamma_order));
}

/// Asymptotic gain of the cascade for a matched input, (1 - lambda)^-order.
/// Equals the negative-binomial series sum_n lambda^n C(n+order-1, order-1).
inline double gain_factor(double damping, int gamma_order) {
  if (gamma_order < 1) throw DomainError("gain_factor: order must be >= 1");
  if (!(damping >= 0.0)) throw DomainError("gain_factor: damping must be >= 0");
  if (!(damping < 1.0)) throw DomainError("gain_factor: series diverges for damping >= 1");
  return std::pow(1.0 - damping, -static_cast<double>(gamma_order));
}

/// Lower-left element of L^-(lag+1): (lag+order-1)! / ((order-1)! lag!).
/// Exact; throws instead of wrapping on overflow.
inline std::uint64_t binomial_weight(std::uint64_t lag, int gamma_order) {
  if (gamma_order < 1) throw DomainError("binomial_weight: order must be >= 1");
  const std::uint64_t k = std::min<std::uint64_t>(static_cast<std::uint64_t>(gamma_order - 1), lag);
  const std::uint64_t n = lag + static_cast<std::uint64_t>(gamma_order - 1);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i stays integral; divide common factors first
    std::uint64_t factor = n - k + i;
    std::uint64_t div = i;
    const std::uint64_t g1 = std::gcd(result, div);
    result /= g1;
    div /= g1;
    factor /= div;  // exact: div | factor once gcd(result, div) == 1
    std::uint64_t next = 0;
    if (__builtin_mul_overflow(result, factor, &next))
      throw DomainError("binomial_weight: result exceeds 64 bits");
    result = next;
  }
  return result;
}

/// Same value as a double, for lags where the integer form would overflow.
inline double binomial_weight_real(double lag, int gamma_order) {
  double r = 1.0;
  for (int i = 1; i < gamma_order; ++i) r *= (lag + i) / i;
  return r;
}

/// Lag of the impulse-response amplitude maximum, floor((lambda*order - 1)/(1 - lambda)).
inline std::size_t group_delay_samples(double damping, int gamma_order) {
  const double num = damping * gamma_order - 1.0;
  if (num <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(num / (1.0 - damping)));
}

// ---------------------------------------------------------------------------
// Part-tones
// ---------------------------------------------------------------------------

struct FilterSpec {
  int gamma_order = 5;
  double erb = 0.0;      // cycles/sample
  double damping = 0.0;  // lambda
  Series contour;        // rad/sample, one value per input sample
  int part_tone_index = 0;
  Rational winding_number{1};

  void validate() const {
    if (gamma_order < 1) throw DomainError("FilterSpec: gamma_order must be >= 1");
    if (!(damping > 0.0 && damping < 1.0)) throw DomainError("FilterSpec: damping outside (0,1)");
    for (double w : contour)
      if (!(w > 0.0 && w < kPi)) throw DomainError("FilterSpec: contour outside (0, pi)");
  }
};

inline FilterSpec make_filter_spec(int gamma_order, double erb, Series contour, int index = 0,
                                   Rational winding = Rational(1)) {
  FilterSpec s;
  s.gamma_order = gamma_order;
  s.erb = erb;
  s.damping = damping_from_erb(erb, gamma_order);
  s.contour = std::move(contour);
  s.part_tone_index = index;
  s.winding_number = winding;
  s.validate();
  return s;
}

struct PartTone {
  ComplexSeries samples;
  FilterSpec spec;
  double gain = 1.0;
  double sample_rate = 16000.0;
};

enum class PhaseKind { carrier, envelope };

inline const char* to_string(PhaseKind k) { return k == PhaseKind::carrier ? "carrier" : "envelope"; }

/// Phase series with validity mask. Invalid samples carry NaN in both views.
struct PhaseSeries {
  Series wrapped;    // (-pi, pi]
  Series unwrapped;  // cumulative
  std::vector<std::uint8_t> valid;
  PhaseKind kind = PhaseKind::carrier;
  double normalizer = 1.0;  // already divided out of the values

  std::size_t size() const { return unwrapped.size(); }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }

  /// Values divided by `h` (winding-number normalization).
  PhaseSeries normalized(double h) const {
    PhaseSeries out = *this;
    for (std::size_t t = 0; t < size(); ++t) {
      if (!valid[t]) continue;
      out.unwrapped[t] = unwrapped[t] / h;
      out.wrapped[t] = wrap_pi(out.unwrapped[t]);
    }
    out.normalizer = normalizer * h;
    return out;
  }

  /// Restricts to [begin, begin+count).
  PhaseSeries slice(std::size_t begin, std::size_t count) const {
    PhaseSeries out;
    out.kind = kind;
    out.normalizer = normalizer;
    out.wrapped.assign(wrapped.begin() + begin, wrapped.begin() + begin + count);
    out.unwrapped.assign(unwrapped.begin() + begin, unwrapped.begin() + begin + count);
    out.valid.assign(valid.begin() + begin, valid.begin() + begin + count);
    return out;
  }
};

/// Builds a PhaseSeries from wrapped angles; unwrapping accumulates increments
/// wrapped into (-pi, pi] and bridges gaps from the last valid sample.
inline PhaseSeries phase_from_angles(const Series& angles, const std::vector<std::uint8_t>& valid,
                                     PhaseKind kind) {
  PhaseSeries p;
  p.kind = kind;
  const std::size_t n = angles.size();
  p.wrapped.assign(n, kNaN);
  p.unwrapped.assign(n, kNaN);
  p.valid = valid;
  bool have = false;
  double last_wrapped = 0.0, acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (!valid[t]) continue;
    const double w = angles[t];
    p.wrapped[t] = w;
    acc = have ? acc + wrap_pi(w - last_wrapped) : w;
    p.unwrapped[t] = acc;
    last_wrapped = w;
    have = true;
  }
  return p;
}

/// Runs the time-varying Gamma-tone recursion
///
///   L X_t = lambda exp(i omega_t) X_{t-1} + e_1 S_t,   X_{-1} = 0,
///
/// where L has ones on the diagonal and -1 below it. The output is the last
/// cascade stage. Works for real and complex inputs; a real input is filtered
/// as is, the complex filter suppressing the mirror frequencies.
template <typename Sample>
PartTone filter_signal(std::span<const Sample> signal, const FilterSpec& spec,
                       double sample_rate = 16000.0) {
  static_assert(std::is_same_v<Sample, double> || std::is_same_v<Sample, Complex>);
  if (spec.contour.size() < signal.size())
    throw DomainError("filter_signal: contour shorter than signal");
  if (!all_finite(signal)) throw DataError("filter_signal: non-finite input sample");
  spec.validate();

  const int order = spec.gamma_order;
  std::vector<Complex> state(static_cast<std::size_t>(order), Complex{});
  PartTone out;
  out.samples.resize(signal.size());
  for (std::size_t t = 0; t < signal.size(); ++t) {
    const Complex pole = std::polar(spec.damping, spec.contour[t]);
    // stage k reads its own previous value before being overwritten and the
    // already updated stage k-1
    state[0] = pole * state[0] + Complex(signal[t]);
    for (int k = 1; k < order; ++k) state[k] = state[k - 1] + pole * state[k];
    out.samples[t] = state[static_cast<std::size_t>(order - 1)];
  }
  out.spec = spec;
  out.gain = gain_factor(spec.damping, order);
  out.sample_rate = sample_rate;
  return out;
}

template <typename Sample>
PartTone filter_signal(const std::vector<Sample>& signal, const FilterSpec& spec,
                       double sample_rate = 16000.0) {
  return filter_signal(std::span<const Sample>(signal), spec, sample_rate);
}

/// Carrier phases. Samples with |z| < rel_epsilon * max|z| are gaps.
inline PhaseSeries carrier_phase(const PartTone& pt, double rel_epsilon = 1e-12) {
  const std::size_t n = pt.samples.size();
  double peak = 0.0;
  for (const auto& z : pt.samples) peak = std::max(peak, std::abs(z));
  Series ang(n, 0.0);
  std::vector<std::uint8_t> valid(n, 0);
  for (std::size_t t = 0; t < n; ++t) {
    const double mag = std::abs(pt.samples[t]);
    if (peak == 0.0 || mag < rel_epsilon * peak) continue;
    double a = std::arg(pt.samples[t]);
    if (a <= -kPi) a = kPi;
    ang[t] = a;
    valid[t] = 1;
  }
  return phase_from_angles(ang, valid, PhaseKind::carrier);
}

/// a_t = |z_t| / gain.
inline Series normalized_amplitude(const PartTone& pt) {
  Series a(pt.samples.size());
  for (std::size_t t = 0; t < a.size(); ++t) a[t] = std::abs(pt.samples[t]) / pt.gain;
  return a;
}

/// Analytic signal by zeroing negative frequencies of the DFT.
inline ComplexSeries analytic_signal(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) throw DataError("analytic_signal: window shorter than 4 samples");
  Eigen::FFT<double> fft;
  std::vector<double> in(x.begin(), x.end());
  std::vector<Complex> spec;
  fft.fwd(spec, in);
  spec.resize(n);  // Eigen may return the half spectrum for real input
  // rebuild the full spectrum if only half was produced
  if (fft.HasFlag(Eigen::FFT<double>::HalfSpectrum)) {
    for (std::size_t k = n / 2 + 1; k < n; ++k) spec[k] = std::conj(spec[n - k]);
  }
  for (std::size_t k = 1; k < n; ++k) {
    if (2 * k < n)
      spec[k] *= 2.0;
    else if (2 * k > n)
      spec[k] = 0.0;
  }
  std::vector<Complex> out;
  fft.inv(out, spec);
  return out;
}

/// Restricts the envelope-phase computation to [begin, end) of the part-tone.
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Envelope (Hilbert) phase of a part-tone's modulation amplitude.
///
/// The normalized amplitude is advanced by the filter's group delay, raised
/// to `exponent`, smoothed by a centred moving average of `smoothing_period`
/// samples, mean-removed over `range` and turned into an analytic signal on
/// that range. Outside `range` (and in the last group-delay samples) the
/// phase is invalid.
inline PhaseSeries envelope_phase(const PartTone& pt, double exponent, std::size_t smoothing_period,
                                  std::optional<SampleRange> range = std::nullopt,
                                  double rel_epsilon = 1e-9) {
  if (!(exponent > 0.0 && exponent <= 1.0)) throw DomainError("envelope_phase: exponent outside (0,1]");
  if (smoothing_period < 1) throw DomainError("envelope_phase: smoothing period must be >= 1");
  const std::size_t n = pt.samples.size();
  const std::size_t delay = group_delay_samples(pt.spec.damping, pt.spec.gamma_order);
  const Series amp = normalized_amplitude(pt);

  Series scaled(n, kNaN);
  for (std::size_t t = 0; t + delay < n; ++t) scaled[t] = std::pow(amp[t + delay], exponent);
  const Series smooth = centred_average(scaled, smoothing_period | 1u);

  SampleRange r = range.value_or(SampleRange{0, n});
  r.end = std::min(r.end, n);
  while (r.end > r.begin && !std::isfinite(smooth[r.end - 1])) --r.end;
  if (r.end < r.begin + 4) throw DataError("envelope_phase: window shorter than 4 samples");

  std::vector<double> seg(smooth.begin() + static_cast<std::ptrdiff_t>(r.begin),
                          smooth.begin() + static_cast<std::ptrdiff_t>(r.end));
  const double mu = mean_finite(seg);
  for (auto& v : seg) v -= mu;
  const ComplexSeries an = analytic_signal(seg);

  double peak = 0.0;
  for (const auto& z : an) peak = std::max(peak, std::abs(z));
  double level = 0.0;
  for (double v : seg) level = std::max(level, std::abs(v));
  // a constant envelope leaves only rounding noise after mean removal
  const double floor = rel_epsilon * std::max(mu, 1e-300);

  Series ang(n, 0.0);
  std::vector<std::uint8_t> valid(n, 0);
  for (std::size_t i = 0; i < an.size(); ++i) {
    const double mag = std::abs(an[i]);
    if (peak == 0.0 || level <= floor || mag < 1e-12 * peak) continue;
    double a = std::arg(an[i]);
    if (a <= -kPi) a = kPi;
    ang[r.begin + i] = a;
    valid[r.begin + i] = 1;
  }
  return phase_from_angles(ang, valid, PhaseKind::envelope);
}

}  // namespace fdrive
