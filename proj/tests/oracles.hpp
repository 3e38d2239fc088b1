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

// Brute-force reference computations shared by the tests. Nothing here calls
// into the library except for plain value types.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdrive/fdrive.hpp"

namespace oracle {

using Complex = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// n-choose-k in doubles, by the product formula.
inline double choose(std::uint64_t n, std::uint64_t k) {
  double r = 1.0;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

/// Direct double sum of the Gamma-fold cascade output:
///   z_t = sum_{u<=t} exp(i (Phi_t - Phi_u)) lambda^(t-u) C(t-u+G-1, G-1) S_u
/// with Phi_t = sum_{k=1..t} omega_k.
inline std::vector<Complex> cascade_direct(std::span<const Complex> s, std::span<const double> omega,
                                           double lambda, int order) {
  const std::size_t n = s.size();
  std::vector<double> phi(n, 0.0), w(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) phi[t] = phi[t - 1] + omega[t];
  for (std::size_t k = 0; k < n; ++k)
    w[k] = std::pow(lambda, static_cast<double>(k)) * choose(k + order - 1, static_cast<std::uint64_t>(order - 1));
  std::vector<Complex> z(n);
  for (std::size_t t = 0; t < n; ++t) {
    Complex acc{};
    for (std::size_t u = 0; u <= t; ++u) acc += std::polar(w[t - u], phi[t] - phi[u]) * s[u];
    z[t] = acc;
  }
  return z;
}

/// Partial sum of lambda^t C(t+G-1, G-1), t = 0..terms-1.
inline double gain_partial_sum(double lambda, int order, std::size_t terms) {
  double s = 0.0;
  for (std::size_t t = 0; t < terms; ++t) s += std::pow(lambda, static_cast<double>(t)) * choose(t + order - 1, order - 1);
  return s;
}

/// Equivalent rectangular bandwidth (cycles/sample) of the cascade
/// 1/(1 - lambda e^{-i theta})^G, by midpoint integration of |H|^2.
inline double cascade_erb(double lambda, int order, int points = 400000) {
  double area = 0.0, peak = 0.0;
  for (int i = 0; i < points; ++i) {
    const double th = -kPi + kTwoPi * (i + 0.5) / points;
    const double p = std::pow(std::norm(1.0 - std::polar(lambda, -th)), -order);
    area += p * kTwoPi / points;
    peak = std::max(peak, p);
  }
  return area / peak / kTwoPi;
}

/// Lag of the largest lambda^t C(t+G-1, G-1), by scanning.
inline std::size_t impulse_peak(double lambda, int order) {
  std::size_t best = 0;
  double bv = -1.0;
  for (std::size_t t = 0; t < 100000; ++t) {
    const double v = std::pow(lambda, static_cast<double>(t)) * choose(t + order - 1, order - 1);
    if (v > bv) {
      bv = v;
      best = t;
    }
    if (v < 1e-3 * bv) break;
  }
  return best;
}

/// Asymmetric triangle, written out independently of the library.
inline double triangle(double psi, double s) {
  double p = std::fmod(psi, kTwoPi);
  if (p < 0) p += kTwoPi;
  const double peak = kTwoPi * s / (s + 1.0);
  return p <= peak ? p : s * (kTwoPi - p);
}

/// Fourier coefficients [a0, a1, b1, a2, b2, ...] of the triangle over one
/// period by a dense midpoint sum.
inline std::vector<double> triangle_series(int k_max, double s, int points = 200000) {
  std::vector<double> c(2 * static_cast<std::size_t>(k_max) + 1, 0.0);
  for (int i = 0; i < points; ++i) {
    const double p = kTwoPi * (i + 0.5) / points;
    const double g = triangle(p, s);
    c[0] += g / points;
    for (int k = 1; k <= k_max; ++k) {
      c[2 * k - 1] += 2.0 * g * std::cos(k * p) / points;
      c[2 * k] += 2.0 * g * std::sin(k * p) / points;
    }
  }
  return c;
}

inline double series_eval(const std::vector<double>& c, double p) {
  double v = c[0];
  const int k_max = static_cast<int>((c.size() - 1) / 2);
  for (int k = 1; k <= k_max; ++k) v += c[2 * k - 1] * std::cos(k * p) + c[2 * k] * std::sin(k * p);
  return v;
}

/// Glottal phase by trapezoidal integration of the velocity law (rad, t in s).
inline double integrated_phase(double t, double omega0, double chirp, int steps = 20000) {
  auto w = [&](double u) { return chirp >= 0 ? omega0 * (1.0 + chirp * u) : omega0 / (1.0 - chirp * u); };
  const double h = t / steps;
  double s = 0.5 * (w(0) + w(t));
  for (int i = 1; i < steps; ++i) s += w(i * h);
  return s * h;
}

/// Quadratic fit with value and slope pinned at t = 0, solved as an
/// equality-constrained least-squares problem through its KKT system.
inline Eigen::Vector3d constrained_quadratic(std::span<const double> a, double value, double slope) {
  // time in window lengths keeps the system well scaled
  const double n = static_cast<double>(a.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(5, 5);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) continue;
    const double u = static_cast<double>(i) / n;
    const Eigen::Vector3d r(1.0, u, u * u);
    kkt.topLeftCorner(3, 3) += 2.0 * r * r.transpose();
    rhs.head(3) += 2.0 * r * a[i];
  }
  kkt(0, 3) = kkt(3, 0) = 1.0;
  kkt(1, 4) = kkt(4, 1) = 1.0;
  rhs[3] = value;
  rhs[4] = slope * n;
  const Eigen::VectorXd x = kkt.fullPivLu().solve(rhs);
  return {x[0], x[1] / n, x[2] / (n * n)};
}

/// Best scale and circular shift that align f(p - d) to g(p) on a grid;
/// returns the max absolute error of the aligned curve.
template <typename F, typename G>
double aligned_max_error(F f, G g, int grid = 720, int shifts = 3600, double* shift_out = nullptr) {
  double best = 1e300;
  for (int j = 0; j < shifts; ++j) {
    const double d = kTwoPi * j / shifts;
    double num = 0, den = 0;
    for (int i = 0; i < grid; ++i) {
      const double p = kTwoPi * i / grid;
      num += g(p) * f(p - d);
      den += f(p - d) * f(p - d);
    }
    const double sc = num / den;
    double err = 0;
    for (int i = 0; i < grid; ++i) {
      const double p = kTwoPi * i / grid;
      err = std::max(err, std::abs(sc * f(p - d) - g(p)));
    }
    if (err < best) {
      best = err;
      if (shift_out) *shift_out = d;
    }
  }
  return best;
}

/// Seeded standard Gaussian white noise.
inline std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> x(n);
  for (auto& v : x) v = nd(rng);
  return x;
}

/// Mean resultant length of n_b psi_b - n_a psi_a, counted directly.
inline double resultant(std::span<const double> a, std::span<const double> b, double na, double nb) {
  Complex s{};
  std::size_t c = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (!std::isfinite(a[t]) || !std::isfinite(b[t])) continue;
    s += std::polar(1.0, nb * b[t] - na * a[t]);
    ++c;
  }
  return c ? std::abs(s) / static_cast<double>(c) : 0.0;
}

/// Analytic-phase curves read from a sweep table, keyed by band.
struct Curve {
  std::vector<double> x, y;
};

inline std::map<std::string, Curve> sweep_curves(const std::vector<fdrive::SweepRow>& rows) {
  std::map<std::string, Curve> out;
  for (const auto& r : rows) {
    if (!r.ok) continue;
    auto& c = out[std::string(r.kind == fdrive::PhaseKind::carrier ? "carrier" : "envelope") + r.winding.str()];
    c.x.push_back(r.rel_chirp_in);
    c.y.push_back(r.rel_trend_out);
  }
  return out;
}

/// Curve crossings of the diagonal by sign changes, with local slope.
inline std::vector<std::pair<double, double>> diagonal_crossings(const Curve& c) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i + 1 < c.x.size(); ++i) {
    const double d0 = c.y[i] - c.x[i], d1 = c.y[i + 1] - c.x[i + 1];
    const double slope = (c.y[i + 1] - c.y[i]) / (c.x[i + 1] - c.x[i]);
    if (d0 == 0.0)
      out.emplace_back(c.x[i], slope);
    else if (d1 != 0.0 && (d0 < 0) != (d1 < 0))
      out.emplace_back(c.x[i] + d0 / (d0 - d1) * (c.x[i + 1] - c.x[i]), slope);
  }
  return out;
}

}  // namespace oracle
