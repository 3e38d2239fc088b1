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

#include <charconv>
#include <istream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fdrive/core.hpp"
#include "fdrive/drive.hpp"
#include "fdrive/regression.hpp"
#include "fdrive/synth.hpp"

namespace fdrive {

/// Fourier basis of period 2 pi m: 1, cos(k psi/m), sin(k psi/m), k = 1..K.
inline void fourier_row(double psi, int k_max, std::int64_t m, double* row) {
  const double u = psi / static_cast<double>(m);
  row[0] = 1.0;
  for (int k = 1; k <= k_max; ++k) {
    row[2 * k - 1] = std::cos(k * u);
    row[2 * k] = std::sin(k * u);
  }
}

inline double fourier_eval(std::span<const double> coeffs, double psi, std::int64_t m) {
  const int k_max = static_cast<int>((coeffs.size() - 1) / 2);
  std::vector<double> row(coeffs.size());
  fourier_row(psi, k_max, m, row.data());
  double s = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) s += coeffs[i] * row[i];
  return s;
}

struct CouplingModel {
  int k_max = 12;
  std::int64_t m = 1;
  std::vector<double> g_coeffs;      // 2K+1
  std::vector<double> sigma_coeffs;  // 2K+1
  double residual_rms = 0.0;

  double g(double psi) const { return fourier_eval(g_coeffs, psi, m); }
  double sigma(double psi) const { return std::max(0.0, fourier_eval(sigma_coeffs, psi, m)); }
};

struct CouplingOptions {
  int sigma_bins = 32;
  double ridge = 0.0;
  double amp_epsilon = 1e-9;
};

/// Regresses E_t / A_t on the Fourier basis in psi_t; sigma(psi) from binned
/// squared residuals projected onto the same basis.
inline CouplingModel fit_coupling(std::span<const double> excitation, std::span<const double> psi,
                                  std::span<const double> amp, int k_max, std::int64_t m,
                                  const CouplingOptions& opt = {}) {
  if (k_max < 0) throw DomainError("fit_coupling: K must be >= 0");
  if (m < 1) throw DomainError("fit_coupling: m must be >= 1");
  if (excitation.size() != psi.size() || amp.size() != psi.size())
    throw DomainError("fit_coupling: length mismatch");
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < psi.size(); ++t) {
    if (!std::isfinite(psi[t]) || !std::isfinite(amp[t]) || !std::isfinite(excitation[t])) continue;
    if (!(std::abs(amp[t]) > opt.amp_epsilon)) throw DataError("fit_coupling: amplitude below epsilon");
    idx.push_back(t);
  }
  const double period = kTwoPi * static_cast<double>(m);
  if (idx.empty() || std::abs(psi[idx.back()] - psi[idx.front()]) < 3.0 * period)
    throw DataError("fit_coupling: fewer than 3 m cycles");

  const int cols = 2 * k_max + 1;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(idx.size()), cols);
  Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    fourier_row(psi[idx[i]], k_max, m, row.data());
    for (int c = 0; c < cols; ++c) a(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
    y[static_cast<Eigen::Index>(i)] = excitation[idx[i]] / amp[idx[i]];
  }
  const auto ls = least_squares(a, y, opt.ridge);
  CouplingModel model;
  model.k_max = k_max;
  model.m = m;
  model.g_coeffs.assign(ls.coeffs.data(), ls.coeffs.data() + cols);
  model.residual_rms = ls.residual_rms;

  // sigma: RMS residual per phase bin, then least squares on the basis
  const int bins = opt.sigma_bins;
  std::vector<double> ss(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> cnt(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double p = wrap_positive(psi[idx[i]], period);
    auto b = static_cast<std::size_t>(p / period * bins);
    b = std::min(b, static_cast<std::size_t>(bins - 1));
    const double r = ls.residuals[static_cast<Eigen::Index>(i)];
    ss[b] += r * r;
    ++cnt[b];
  }
  std::vector<double> centres, level;
  for (int b = 0; b < bins; ++b) {
    if (cnt[static_cast<std::size_t>(b)] == 0) continue;
    centres.push_back((b + 0.5) * period / bins);
    level.push_back(std::sqrt(ss[static_cast<std::size_t>(b)] / static_cast<double>(cnt[static_cast<std::size_t>(b)])));
  }
  const int sk = std::max(0, std::min(k_max, (static_cast<int>(centres.size()) - 1) / 2));
  Eigen::MatrixXd sa(static_cast<Eigen::Index>(centres.size()), 2 * sk + 1);
  Eigen::VectorXd sy(static_cast<Eigen::Index>(centres.size()));
  std::vector<double> srow(static_cast<std::size_t>(2 * sk + 1));
  for (std::size_t i = 0; i < centres.size(); ++i) {
    fourier_row(centres[i], sk, m, srow.data());
    for (int c = 0; c < 2 * sk + 1; ++c) sa(static_cast<Eigen::Index>(i), c) = srow[static_cast<std::size_t>(c)];
    sy[static_cast<Eigen::Index>(i)] = level[i];
  }
  model.sigma_coeffs.assign(static_cast<std::size_t>(cols), 0.0);
  if (!centres.empty()) {
    const Eigen::VectorXd sc = sa.colPivHouseholderQr().solve(sy);
    for (int c = 0; c < 2 * sk + 1; ++c) model.sigma_coeffs[static_cast<std::size_t>(c)] = sc[c];
  }
  return model;
}

/// Same, taking psi and A_t from a reconstructed drive; `m` must match the drive's.
inline CouplingModel fit_coupling(std::span<const double> excitation, const FundamentalDrive& fd, int k_max,
                                  std::int64_t m, const CouplingOptions& opt = {}) {
  if (m != fd.m)
    throw DomainError("fit_coupling: coupling period m=" + std::to_string(m) + " differs from the drive's m=" +
                      std::to_string(fd.m));
  return fit_coupling(excitation, fd.psi, fd.amp_slow, k_max, m, opt);
}

struct SecondaryFilter {
  std::vector<double> ar_coeffs;
  double feedthrough = 1.0;
  double pole_radius = 0.0;
  double residual_rms = 0.0;
};

/// Least squares y_t = sum_k a_k y_{t-k} + b0 E_t over t >= P.
inline SecondaryFilter fit_secondary(std::span<const double> excitation, std::span<const double> signal, int order) {
  if (excitation.size() != signal.size()) throw DomainError("fit_secondary: length mismatch");
  if (order < 0) throw DomainError("fit_secondary: order must be >= 0");
  const auto p = static_cast<std::size_t>(order);
  if (signal.size() <= p + static_cast<std::size_t>(order) + 1) throw DataError("fit_secondary: signal too short");
  const auto rows = static_cast<Eigen::Index>(signal.size() - p);
  Eigen::MatrixXd a(rows, order + 1);
  Eigen::VectorXd y(rows);
  for (std::size_t t = p; t < signal.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t - p);
    for (std::size_t k = 1; k <= p; ++k) a(r, static_cast<Eigen::Index>(k - 1)) = signal[t - k];
    a(r, order) = excitation[t];
    y[r] = signal[t];
  }
  const auto ls = least_squares(a, y);
  SecondaryFilter f;
  f.ar_coeffs.assign(ls.coeffs.data(), ls.coeffs.data() + order);
  f.feedthrough = ls.coeffs[order];
  f.residual_rms = ls.residual_rms;
  f.pole_radius = ar_pole_radius(f.ar_coeffs);
  if (!(f.pole_radius < 1.0))
    throw DataError("fit_secondary: unstable estimate (max pole modulus " + std::to_string(f.pole_radius) + ")");
  return f;
}

struct AlternationResult {
  CouplingModel coupling;
  SecondaryFilter secondary;
  std::vector<double> objective;  // sum of squared errors after each round
};

/// Block-coordinate least squares on
///   J = sum_t (y_t - sum_k a_k y_{t-k} - b0 A_t G(psi_t))^2
/// alternating G (with a, b0 fixed) and (a, b0) (with G fixed). Each block
/// step is an exact minimizer, so J never increases.
inline AlternationResult alternate(std::span<const double> signal, std::span<const double> psi,
                                   std::span<const double> amp, int k_max, std::int64_t m, int order,
                                   int rounds = 5) {
  if (rounds < 1 || rounds > 5) throw DomainError("alternate: rounds must be in 1..5");
  const std::size_t n = signal.size();
  if (psi.size() != n || amp.size() != n) throw DomainError("alternate: length mismatch");
  const auto p = static_cast<std::size_t>(order);
  std::vector<std::size_t> idx;
  for (std::size_t t = p; t < n; ++t)
    if (std::isfinite(psi[t]) && std::isfinite(amp[t])) idx.push_back(t);
  const int cols = 2 * k_max + 1;
  if (idx.size() < static_cast<std::size_t>(cols + order + 1)) throw DataError("alternate: too few samples");

  AlternationResult res;
  res.secondary.ar_coeffs.assign(p, 0.0);
  res.secondary.feedthrough = 1.0;
  std::vector<double> row(static_cast<std::size_t>(cols));
  Series drive(n, 0.0);
  for (int round = 0; round < rounds; ++round) {
    // G step
    Eigen::MatrixXd a(static_cast<Eigen::Index>(idx.size()), cols);
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t t = idx[i];
      fourier_row(psi[t], k_max, m, row.data());
      const double s = res.secondary.feedthrough * amp[t];
      for (int c = 0; c < cols; ++c) a(static_cast<Eigen::Index>(i), c) = s * row[static_cast<std::size_t>(c)];
      double target = signal[t];
      for (std::size_t k = 1; k <= p; ++k) target -= res.secondary.ar_coeffs[k - 1] * signal[t - k];
      y[static_cast<Eigen::Index>(i)] = target;
    }
    const auto lg = least_squares(a, y);
    res.coupling.k_max = k_max;
    res.coupling.m = m;
    res.coupling.g_coeffs.assign(lg.coeffs.data(), lg.coeffs.data() + cols);
    res.coupling.sigma_coeffs.assign(static_cast<std::size_t>(cols), 0.0);
    // (a, b0) step
    Eigen::MatrixXd b(static_cast<Eigen::Index>(idx.size()), order + 1);
    Eigen::VectorXd z(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t t = idx[i];
      for (std::size_t k = 1; k <= p; ++k) b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k - 1)) = signal[t - k];
      b(static_cast<Eigen::Index>(i), order) = amp[t] * res.coupling.g(psi[t]);
      z[static_cast<Eigen::Index>(i)] = signal[t];
    }
    const auto lb = least_squares(b, z);
    res.secondary.ar_coeffs.assign(lb.coeffs.data(), lb.coeffs.data() + order);
    res.secondary.feedthrough = lb.coeffs[order];
    res.secondary.residual_rms = lb.residual_rms;
    res.coupling.residual_rms = lb.residual_rms;
    res.objective.push_back(lb.residuals.squaredNorm());
  }
  res.secondary.pole_radius = ar_pole_radius(res.secondary.ar_coeffs);
  if (!(res.secondary.pole_radius < 1.0))
    throw DataError("alternate: unstable secondary estimate (max pole modulus " +
                    std::to_string(res.secondary.pole_radius) + ")");
  return res;
}

/// E_t = A_t (G(psi_t) + sigma(psi_t) xi_t), optionally all-pole filtered.
/// With `stochastic` false the sigma term is dropped.
inline Series resynthesize(std::span<const double> psi, std::span<const double> amp, const CouplingModel& model,
                           const std::optional<SecondaryFilter>& secondary = std::nullopt, std::uint64_t seed = 1,
                           bool stochastic = true) {
  if (psi.size() != amp.size()) throw DomainError("resynthesize: length mismatch");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Series e(psi.size(), 0.0);
  for (std::size_t t = 0; t < psi.size(); ++t) {
    const double xi = normal(rng);
    if (!std::isfinite(psi[t]) || !std::isfinite(amp[t])) continue;
    e[t] = amp[t] * (model.g(psi[t]) + (stochastic ? model.sigma(psi[t]) * xi : 0.0));
  }
  if (!secondary) return e;
  return ar_filter(e, secondary->ar_coeffs, secondary->feedthrough);
}

// ---------------------------------------------------------------------------
// Text export
// ---------------------------------------------------------------------------
//
//   fdrive-model 1
//   m <int>
//   K <int>
//   P <int>
//   residual_rms <double>
//   g <2K+1 doubles>
//   sigma <2K+1 doubles>
//   ar <P doubles>
//   feedthrough <double>
//
// Coefficient order: constant, then (cos k, sin k) for k = 1..K.

inline constexpr int kModelFormatVersion = 1;

namespace detail {
inline std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
}  // namespace detail

inline std::string export_model(const CouplingModel& c, const std::optional<SecondaryFilter>& s) {
  std::ostringstream os;
  os << "fdrive-model " << kModelFormatVersion << "\n";
  os << "m " << c.m << "\nK " << c.k_max << "\nP " << (s ? s->ar_coeffs.size() : 0) << "\n";
  os << "residual_rms " << detail::fmt_double(c.residual_rms) << "\n";
  auto line = [&](const char* key, const std::vector<double>& v) {
    os << key;
    for (double x : v) os << ' ' << detail::fmt_double(x);
    os << "\n";
  };
  line("g", c.g_coeffs);
  line("sigma", c.sigma_coeffs);
  line("ar", s ? s->ar_coeffs : std::vector<double>{});
  os << "feedthrough " << detail::fmt_double(s ? s->feedthrough : 1.0) << "\n";
  return os.str();
}

struct ImportedModel {
  CouplingModel coupling;
  SecondaryFilter secondary;
};

inline ImportedModel import_model(const std::string& text) {
  std::istringstream is(text);
  std::string key;
  int version = 0;
  if (!(is >> key >> version) || key != "fdrive-model") throw DataError("import_model: missing header");
  if (version != kModelFormatVersion) throw DataError("import_model: unsupported version " + std::to_string(version));
  ImportedModel out;
  std::size_t p = 0;
  auto read_vec = [&](const char* want, std::size_t count) {
    std::string k;
    if (!(is >> k) || k != want) throw DataError(std::string("import_model: expected ") + want);
    std::vector<double> v(count);
    for (auto& x : v)
      if (!(is >> x)) throw DataError(std::string("import_model: short ") + want);
    return v;
  };
  auto read_scalar = [&](const char* want) { return read_vec(want, 1)[0]; };
  out.coupling.m = static_cast<std::int64_t>(read_scalar("m"));
  out.coupling.k_max = static_cast<int>(read_scalar("K"));
  p = static_cast<std::size_t>(read_scalar("P"));
  out.coupling.residual_rms = read_scalar("residual_rms");
  const auto cols = static_cast<std::size_t>(2 * out.coupling.k_max + 1);
  out.coupling.g_coeffs = read_vec("g", cols);
  out.coupling.sigma_coeffs = read_vec("sigma", cols);
  out.secondary.ar_coeffs = read_vec("ar", p);
  out.secondary.feedthrough = read_scalar("feedthrough");
  out.secondary.pole_radius = ar_pole_radius(out.secondary.ar_coeffs);
  return out;
}

}  // namespace fdrive
