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

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fdrive {

using Complex = std::complex<double>;
using Series = std::vector<double>;
using ComplexSeries = std::vector<Complex>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Precondition violations on numeric arguments (singular contours, divergent
// series, out-of-range parameters).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Problems with the data being analysed: non-finite samples, too-short
// windows, rank-deficient fits, unreadable files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Positive rational number n/d kept in lowest terms.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  constexpr Rational() = default;
  Rational(std::int64_t n, std::int64_t d = 1) : num(n), den(d) {
    if (den == 0) throw DomainError("Rational: zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Rational inverse() const { return Rational(den, num); }
  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return a.num * b.den < b.num * a.den;
  }
};

/// Parses "n" or "n/d".
inline Rational parse_rational(const std::string& text) {
  const auto slash = text.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const long long n = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return Rational(n);
    }
    const std::string a = text.substr(0, slash), b = text.substr(slash + 1);
    std::size_t ua = 0, ub = 0;
    const long long n = std::stoll(a, &ua);
    const long long d = std::stoll(b, &ub);
    if (ua != a.size() || ub != b.size()) throw std::invalid_argument(text);
    return Rational(n, d);
  } catch (const std::logic_error&) {
    throw DomainError("not a rational number: '" + text + "'");
  }
}

inline std::int64_t lcm_of_denominators(std::span<const Rational> values) {
  std::int64_t m = 1;
  for (const auto& r : values) m = std::lcm(m, r.den);
  return m;
}

/// Wraps to (-pi, pi].
inline double wrap_pi(double x) {
  double y = std::remainder(x, kTwoPi);
  if (y <= -kPi) y += kTwoPi;
  return y;
}

/// Wraps to [0, period).
inline double wrap_positive(double x, double period = kTwoPi) {
  double y = std::fmod(x, period);
  if (y < 0) y += period;
  if (y >= period) y -= period;
  return y;
}

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

inline bool all_finite(std::span<const Complex> xs) {
  return std::all_of(xs.begin(), xs.end(), [](const Complex& v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  });
}

/// Median of the finite entries; NaN if there are none.
inline double median(std::span<const double> xs) {
  std::vector<double> v;
  v.reserve(xs.size());
  for (double x : xs)
    if (std::isfinite(x)) v.push_back(x);
  if (v.empty()) return kNaN;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

/// Weighted median: the smallest value whose cumulative weight reaches half
/// of the total. Non-finite values and non-positive weights are skipped.
inline double weighted_median(std::span<const double> values, std::span<const double> weights) {
  std::vector<std::pair<double, double>> vw;
  vw.reserve(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!std::isfinite(values[i]) || !(w > 0.0)) continue;
    vw.emplace_back(values[i], w);
    total += w;
  }
  if (vw.empty()) return kNaN;
  std::sort(vw.begin(), vw.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < vw.size(); ++i) {
    acc += vw[i].second;
    if (acc > 0.5 * total) return vw[i].first;
    if (acc == 0.5 * total) return 0.5 * (vw[i].first + vw[i + 1].first);
  }
  return vw.back().first;
}

inline double mean_finite(std::span<const double> xs) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : xs)
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  return n ? s / static_cast<double>(n) : kNaN;
}

/// Central differences with one-sided endpoints. A NaN neighbour falls back
/// to the one-sided difference on the other side.
inline Series central_difference(std::span<const double> x) {
  const std::size_t n = x.size();
  Series d(n, kNaN);
  if (n < 2) return d;
  for (std::size_t t = 0; t < n; ++t) {
    const bool has_prev = t > 0 && std::isfinite(x[t - 1]);
    const bool has_next = t + 1 < n && std::isfinite(x[t + 1]);
    if (!std::isfinite(x[t])) continue;
    if (has_prev && has_next)
      d[t] = 0.5 * (x[t + 1] - x[t - 1]);
    else if (has_next)
      d[t] = x[t + 1] - x[t];
    else if (has_prev)
      d[t] = x[t] - x[t - 1];
  }
  return d;
}

/// Centred moving average over `length` samples (made odd). Near the ends the
/// window shrinks symmetrically; any NaN inside the window yields NaN.
inline Series centred_average(std::span<const double> x, std::size_t length) {
  const std::size_t n = x.size();
  const std::size_t half = length / 2;
  Series out(n, kNaN);
  // prefix sums over finite values plus a NaN counter
  std::vector<double> sum(n + 1, 0.0);
  std::vector<std::size_t> bad(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = std::isfinite(x[i]);
    sum[i + 1] = sum[i] + (ok ? x[i] : 0.0);
    bad[i + 1] = bad[i] + (ok ? 0 : 1);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = std::min({half, i, n - 1 - i});
    const std::size_t lo = i - k, hi = i + k + 1;
    if (bad[hi] != bad[lo]) continue;
    out[i] = (sum[hi] - sum[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace fdrive
