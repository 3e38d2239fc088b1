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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "fdrive/fdrive.hpp"
#include "oracles.hpp"

using namespace fdrive;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void need(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " (FAILED)");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const GroundTruth& fig2_truth() {
  static const GroundTruth g = generate(preset("fig2"));
  return g;
}

const AnalysisResult& fig2_analysis() {
  static const AnalysisResult a = analyze(fig2_truth().signal, preset_config("fig2"));
  return a;
}

Series slice(const Series& s, std::size_t b, std::size_t e) {
  return Series(s.begin() + static_cast<std::ptrdiff_t>(b), s.begin() + static_cast<std::ptrdiff_t>(e));
}

// 1. recursion vs direct double sum
Outcome filter_oracle() {
  Outcome o;
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0, lib_time = 0.0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(16 + u(rng) * (2048 - 16));
    const int g = 1 + static_cast<int>(u(rng) * 6);
    std::vector<Complex> s(n);
    Series contour(n);
    const double base = 0.35 + 2.3 * u(rng), chirp = (u(rng) - 0.5) * 2e-4, wobble = 0.2 * u(rng);
    for (std::size_t t = 0; t < n; ++t) {
      s[t] = Complex(u(rng) - 0.5, u(rng) - 0.5);
      contour[t] = base + chirp * static_cast<double>(t) + wobble * (u(rng) - 0.5);
    }
    const FilterSpec spec = make_filter_spec(g, 0.001 + 0.05 * u(rng), contour);
    const auto l0 = Clock::now();
    const PartTone pt = filter_signal(std::span<const Complex>(s), spec);
    lib_time += seconds_since(l0);
    const auto want = oracle::cascade_direct(s, contour, spec.damping, g);
    double peak = 0.0, diff = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      peak = std::max(peak, std::abs(want[t]));
      diff = std::max(diff, std::abs(pt.samples[t] - want[t]));
    }
    worst = std::max(worst, diff / peak);
  }
  o.need(worst < 1e-9, "max rel err " + fmt("%.2e", worst) + " < 1e-9");
  o.need(lib_time < 10.0, "recursion " + fmt("%.3f", lib_time) + " s < 10 s");
  o.detail += ", with oracle " + fmt("%.1f", seconds_since(t0)) + " s";
  return o;
}

// 2. matched chirp keeps its phase increments; amplitude settles at the gain
Outcome matched_filter() {
  Outcome o;
  const std::size_t n = 8000;
  Series contour(n);
  std::vector<Complex> s(n);
  const double amp = 0.7;
  double phase = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    contour[t] = 0.12 + 2e-5 * static_cast<double>(t);
    if (t > 0) phase += contour[t];
    s[t] = std::polar(amp, phase);
  }
  const PartTone pt = filter_signal(std::span<const Complex>(s), make_filter_spec(5, 0.01, contour));
  const PhaseSeries ph = carrier_phase(pt);
  double dphi = 0.0;
  for (std::size_t t = 1; t < n; ++t) dphi = std::max(dphi, std::abs(ph.unwrapped[t] - ph.unwrapped[t - 1] - contour[t]));
  const double closed = std::pow(1.0 - pt.spec.damping, -5);
  const double ratio = std::abs(pt.samples[n - 1]) / amp;
  o.need(dphi < 1e-10, "phase increment err " + fmt("%.1e", dphi) + " < 1e-10");
  o.need(std::abs(ratio / closed - 1.0) < 1e-3, "amplitude/gain " + fmt("%.6f", ratio / closed) + " within 0.1%");
  return o;
}

// 3. sweep curves: one crossing each, contracting, fixed point in (0, 1]
Outcome sweep() {
  Outcome o;
  const auto t0 = Clock::now();
  const PipelineConfig cfg = preset_config("fig2");
  const auto rows = run_sweep(fig2_truth().signal, cfg, sweep_grid(cfg));
  const double elapsed = seconds_since(t0);
  const auto curves = oracle::sweep_curves(rows);
  for (const char* name : {"carrier2", "carrier4", "carrier6", "envelope9"}) {
    const auto it = curves.find(name);
    if (it == curves.end()) {
      o.need(false, std::string(name) + " missing");
      continue;
    }
    const auto x = oracle::diagonal_crossings(it->second);
    const bool one = x.size() == 1;
    const bool ok = one && std::abs(x[0].second) < 1.0 && x[0].first > 0.0 && x[0].first <= 1.0;
    o.need(ok, std::string(name) + (one ? " at " + fmt("%.4f", x[0].first) + " slope " + fmt("%.3f", x[0].second)
                                        : " crossings " + std::to_string(x.size())));
  }
  o.need(elapsed < 60.0, fmt("%.2f", elapsed) + " s < 60 s");
  return o;
}

// 4. circle maps against the drive from part-tone 4
Outcome circle_maps() {
  Outcome o;
  const CircleMapSet s = run_circlemap(fig2_truth().signal, preset_config("fig2"));
  o.need(s.status == "confirmed", "drive " + s.status);
  for (const auto& [name, cm] : s.maps) {
    if (name.rfind("carrier", 0) == 0)
      o.need(cm.linearity_rms < 0.05, name + " rms " + fmt("%.4f", cm.linearity_rms) + " < 0.05");
    else
      o.detail += "; " + name + " rms " + fmt("%.4f", cm.linearity_rms) + " (report only)";
  }
  for (const auto& r : s.reports) {
    const bool carrier = r.b.rfind("carrier", 0) == 0;
    const Rational want = carrier ? Rational(std::stoll(r.b.substr(7))) : Rational(1);
    o.need(r.winding && *r.winding == want, r.b + " winds " + (r.winding ? r.winding->str() : std::string("unlocked")));
  }
  return o;
}

// 5. drive velocity and phase against the truth
Outcome drive_accuracy() {
  Outcome o;
  const auto& g = fig2_truth();
  const auto& a = fig2_analysis();
  o.need(a.status == "confirmed", "status " + a.status);
  const std::size_t w = a.config.window_samples();
  double worst = 0.0;
  for (std::size_t t = w; t < a.samples; ++t)
    worst = std::max(worst, std::abs(a.fd.omega[t] / (g.omega_prime[t] / g.sample_rate) - 1.0));
  o.need(worst < 0.005, "omega max rel err " + fmt("%.4f", worst) + " < 0.005");
  std::size_t i1 = w;
  while (i1 + 1 < a.samples && g.psi_prime[i1] - g.psi_prime[w] < 50.0 * oracle::kPi) ++i1;
  double drift = 0.0;
  for (std::size_t t = w; t <= i1; ++t)
    drift = std::max(drift, std::abs((a.fd.psi[t] - a.fd.psi[w]) - (g.psi_prime[t] - g.psi_prime[w])));
  o.need(g.psi_prime[i1] - g.psi_prime[w] >= 50.0 * oracle::kPi, "25 cycles available");
  o.need(drift < 0.05, "drift " + fmt("%.4f", drift) + " rad < 0.05");
  return o;
}

// 6. coupling shape against the brute-force K=12 truncation, and round trip
Outcome coupling() {
  Outcome o;
  const auto& g = fig2_truth();
  const auto& a = fig2_analysis();
  if (!a.coupling) {
    o.need(false, "no coupling model");
    return o;
  }
  const auto ref = oracle::triangle_series(12, preset("fig2").slope_ratio);
  double peak = 0.0;
  for (int i = 0; i < 720; ++i) peak = std::max(peak, std::abs(oracle::series_eval(ref, oracle::kTwoPi * i / 720)));
  // the drive's gauge fixes zero at the steepest rise; align by shift and scale
  const auto& model = *a.coupling;
  const double err = oracle::aligned_max_error([&](double p) { return model.g(p); },
                                               [&](double p) { return oracle::series_eval(ref, p); });
  o.need(err / peak < 0.02, "shape err " + fmt("%.4f", err / peak) + " of peak < 0.02");
  double num = 0.0, den = 0.0;
  for (std::size_t t = a.segment_begin; t < a.segment_end; ++t) {
    const double r = a.fd.amp_slow[t] * model.g(a.fd.psi[t]) - g.signal[t];
    num += r * r;
    den += g.signal[t] * g.signal[t];
  }
  const double rel = std::sqrt(num / den);
  o.need(rel < 0.03, "round trip rel rms " + fmt("%.4f", rel) + " < 0.03");
  return o;
}

// 7. subharmonic preset
Outcome subharmonic() {
  Outcome o;
  const auto a = analyze(generate(preset("subharmonic-m2")).signal, preset_config("subharmonic-m2"));
  o.need(a.fd.m == 2, "m = " + std::to_string(a.fd.m));
  std::size_t windows = 0, with_half = 0;
  for (const auto& w : a.windows) {
    if (w.status != "confirmed") continue;
    ++windows;
    for (const auto& [name, r] : w.members)
      if (r == Rational(15, 2)) ++with_half;
  }
  o.need(with_half > 0, "15/2 member in " + std::to_string(with_half) + "/" + std::to_string(windows) +
                            " confirmed windows");
  return o;
}

// 8. invariants over seeded random inputs
Outcome invariants() {
  Outcome o;
  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // amplitude combination: normalization and degree-one homogeneity
  double norm_err = 0.0, homog_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Rational> h;
    const int k = 1 + trial % 9;
    for (int i = 0; i < k; ++i) h.emplace_back(1 + static_cast<int>(u(rng) * 20), 1 + static_cast<int>(u(rng) * 2));
    const double nu = 0.05 + 0.95 * u(rng);
    const auto w = harmonic_weights(h, nu);
    double s = 0.0;
    for (double x : w) s += std::pow(x, nu);
    norm_err = std::max(norm_err, std::abs(s - 1.0));
    std::vector<Series> bands(h.size(), Series(16));
    for (auto& b : bands)
      for (auto& v : b) v = 0.01 + u(rng);
    const double gamma = 0.1 + 10.0 * u(rng);
    auto scaled = bands;
    for (auto& b : scaled)
      for (auto& v : b) v *= gamma;
    const auto a1 = instantaneous_amplitude(bands, w, nu), a2 = instantaneous_amplitude(scaled, w, nu);
    for (std::size_t t = 0; t < a1.size(); ++t) homog_err = std::max(homog_err, std::abs(a2[t] / (gamma * a1[t]) - 1.0));
  }
  o.need(norm_err < 1e-12, "weight norm err " + fmt("%.1e", norm_err));
  o.need(homog_err < 1e-12, "homogeneity err " + fmt("%.1e", homog_err));

  // locking reports under constant phase shifts and per-part-tone delay offsets
  double shift_err = 0.0;
  bool same_windings = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4000;
    const double w0 = 0.01 + 0.03 * u(rng);
    std::normal_distribution<double> jitter(0.0, 0.02 + 0.1 * u(rng));
    Series fd(n);
    for (std::size_t t = 0; t < n; ++t) fd[t] = w0 * static_cast<double>(t);
    std::vector<NamedPhase> tones, moved;
    for (int h = 1; h <= 5; ++h) {
      Series p(n);
      for (std::size_t t = 0; t < n; ++t) p[t] = h * fd[t] + jitter(rng);
      tones.push_back({"h" + std::to_string(h), p});
      const double offset = -h * w0 * std::floor(40.0 * u(rng)) + 10.0 * (u(rng) - 0.5);
      for (auto& v : p) v += offset;
      moved.push_back({tones.back().name, p});
    }
    Series fd_moved = fd;
    const double fd_shift = 20.0 * (u(rng) - 0.5);
    for (auto& v : fd_moved) v += fd_shift;
    const auto a = confirm_equivalence(tones, fd), b = confirm_equivalence(moved, fd_moved);
    for (std::size_t i = 0; i < a.versus_fd.size(); ++i) {
      shift_err = std::max(shift_err, std::abs(a.versus_fd[i].strength - b.versus_fd[i].strength));
      shift_err = std::max(shift_err, std::abs(a.versus_fd[i].ratio - b.versus_fd[i].ratio));
      same_windings = same_windings && a.versus_fd[i].winding == b.versus_fd[i].winding &&
                      a.versus_fd[i].confirmed == b.versus_fd[i].confirmed;
    }
    same_windings = same_windings && a.confirmed_pairs == b.confirmed_pairs;
  }
  o.need(shift_err < 1e-9 && same_windings, "locking shift/delay invariance err " + fmt("%.1e", shift_err));

  // hash-identical reruns
  const auto& x = fig2_truth().signal;
  const auto r1 = analyze(x, preset_config("fig2")), r2 = analyze(x, preset_config("fig2"));
  const std::string h1 = sha256_hex(fd_csv(r1) + report_json(r1).dump());
  const std::string h2 = sha256_hex(fd_csv(r2) + report_json(r2).dump());
  const std::string s1 = sha256_hex(encode_wav(generate(preset("fig2")).signal, 16000));
  const std::string s2 = sha256_hex(encode_wav(generate(preset("fig2")).signal, 16000));
  o.need(h1 == h2 && s1 == s2, "rerun hashes " + h1.substr(0, 12) + (h1 == h2 ? " equal" : " differ"));

  // closed-form gain against partial sums
  double gain_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double lambda = 0.05 + 0.9 * u(rng);
    const int g = 1 + static_cast<int>(u(rng) * 6);
    gain_err = std::max(gain_err, std::abs(gain_factor(lambda, g) / oracle::gain_partial_sum(lambda, g, 5000) - 1.0));
  }
  o.need(gain_err < 1e-9, "gain closed form err " + fmt("%.1e", gain_err));
  return o;
}

// 9. white noise and two-voice mixtures
Outcome negative_controls() {
  Outcome o;
  const PipelineConfig cfg = preset_config("fig2");
  const auto& v1 = fig2_truth();
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto noise = analyze(oracle::white_noise(v1.signal.size(), seed), cfg);
    o.need(noise.status != "confirmed" && noise.locking.confirmed_part_tones == 0,
           "noise " + std::to_string(seed) + " " + noise.status);

    SynthSpec s2 = preset("fig2");
    s2.omega0_prime = oracle::kTwoPi * 100.0 * std::sqrt(2.0) * (1.0 + 0.1 * static_cast<double>(seed));
    s2.chirp_prime = -2.0;
    const GroundTruth v2 = generate(s2);
    Series mix(v1.signal.size());
    for (std::size_t t = 0; t < mix.size(); ++t) mix[t] = v1.signal[t] + v2.signal[t];
    const auto a = analyze(mix, cfg);

    // windows whose cluster matches neither voice (reported, not gated)
    std::size_t stray = 0;
    for (const auto& w : a.windows) {
      if (w.status != "confirmed") continue;
      const double f1 = v1.omega_prime[w.start] / v1.sample_rate, f2 = v2.omega_prime[w.start] / v2.sample_rate;
      if (std::abs(w.omega_start / f1 - 1.0) >= 0.03 && std::abs(w.omega_start / f2 - 1.0) >= 0.03) ++stray;
    }
    // a nonempty confirmation set must come from a drive that follows one voice
    bool tracks = true;
    if (a.locking.confirmed_part_tones > 0) {
      Series r1, r2;
      for (std::size_t t = a.segment_begin; t < a.segment_end; ++t) {
        r1.push_back(a.fd.omega[t] / (v1.omega_prime[t] / v1.sample_rate));
        r2.push_back(a.fd.omega[t] / (v2.omega_prime[t] / v2.sample_rate));
      }
      tracks = std::abs(median(r1) - 1.0) < 0.03 || std::abs(median(r2) - 1.0) < 0.03;
    }
    // part-tones tuned to the second voice must not lock to the drive
    std::size_t locked = 0;
    double strongest = 0.0;
    if (a.status == "confirmed" && a.segment_end > a.segment_begin) {
      const std::size_t b = a.segment_begin, e = a.segment_end;
      const Series fd = slice(a.fd.psi, b, e);
      const double mid = v2.omega_prime[(b + e) / 2] / v2.sample_rate;
      for (const auto& plan : detail::plan_bands(cfg, mid, true)) {
        const double h = plan.band.winding.value();
        Series contour(e - b);
        bool ok = true;
        for (std::size_t t = b; t < e; ++t) {
          contour[t - b] = h * v2.omega_prime[t] / v2.sample_rate;
          ok = ok && contour[t - b] < oracle::kPi;
        }
        if (!ok) continue;
        const PartTone pt = detail::filter_span(mix, plan.band, contour, b, e);
        PhaseSeries ph = carrier_phase(pt);
        const std::size_t delay = group_delay_samples(pt.spec.damping, pt.spec.gamma_order);
        for (std::size_t i = 0; i < std::min(2 * delay, ph.size()); ++i) ph.unwrapped[i] = kNaN;
        const auto rep = confirm_equivalence({{plan.name, ph.unwrapped}}, fd, cfg.strength_threshold,
                                             cfg.max_winding_num, cfg.max_winding_den);
        strongest = std::max(strongest, rep.versus_fd[0].strength);
        locked += rep.confirmed_part_tones;
      }
    }
    o.need(tracks && locked == 0, "mixture " + std::to_string(seed) + " " + a.status + ", " +
                                      std::to_string(a.locking.confirmed_part_tones) + " confirmed, second voice locked " +
                                      std::to_string(locked) + " (max strength " + fmt("%.2f", strongest) + "), " +
                                      std::to_string(stray) + " stray windows");
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"filter recursion matches direct sum", filter_oracle},
      {"matched-filter phase and gain law", matched_filter},
      {"chirp response sweep", sweep},
      {"circle maps", circle_maps},
      {"drive accuracy", drive_accuracy},
      {"coupling recovery", coupling},
      {"subharmonic m=2", subharmonic},
      {"invariant suite", invariants},
      {"negative controls", negative_controls},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.need(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
