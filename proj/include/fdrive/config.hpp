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
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fdrive/core.hpp"
#include "fdrive/io.hpp"
#include "fdrive/synth.hpp"

namespace fdrive {

inline constexpr int kConfigVersion = 1;

/// Analysis settings. Text form: one `key = value` per line, '#' starts a
/// comment, unknown keys are rejected. Lists are comma separated.
struct PipelineConfig {
  double sample_rate = 16000.0;
  double window_ms = 35.0;
  double lead_in_ms = 37.5;
  std::vector<Rational> harmonics = {Rational(1), Rational(2), Rational(3), Rational(4), Rational(5),
                                     Rational(6), Rational(8), Rational(10), Rational(12), Rational(15)};
  double resolved_max = 6.0;  // winding numbers up to this are tracked by their carrier
  double erb_factor = 1.0;    // bandwidth multiplier on the ERB scale
  int gamma_order = 5;
  double nu = 0.33;
  double envelope_smoothing = 0.25;  // fundamental periods
  double cluster_rel_tol = 0.03;
  double iter_tol = 1e-3;
  int iter_max = 50;
  double iter_damping = 1.0;
  int trend_order = 3;
  double trend_min_cycles = 1.5;  // fundamental cycles left after filter settling
  int coupling_order = 12;
  int ar_order = 10;
  std::int64_t max_winding_num = 20;
  std::int64_t max_winding_den = 2;
  double strength_threshold = 0.9;
  std::uint64_t rng_seed = 1;
  std::string output_dir = "out";
  double f0_min_hz = 50.0;
  double f0_max_hz = 500.0;
  double initial_f0_hz = 0.0;  // 0: estimate from the first window
  bool fit_model = true;
  double sweep_start_ms = 200.0;
  double sweep_periods = 5.0;
  double sweep_lead_ms = 30.0;
  double sweep_grid_min = 0.0;
  double sweep_grid_max = 2.0;
  double sweep_grid_step = 0.1;
  double sweep_ref_f0_hz = 100.0;  // initial f0 of the reference phase law
  double sweep_ref_chirp = 6.0;    // 1/s
  int fd_source_harmonic = 4;

  std::size_t window_samples() const {
    return static_cast<std::size_t>(std::llround(window_ms * 1e-3 * sample_rate));
  }
  std::size_t lead_samples() const {
    return static_cast<std::size_t>(std::llround(lead_in_ms * 1e-3 * sample_rate));
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw DomainError("config: bad value for '" + key + "': '" + v + "'");
  return out;
}

struct ConfigField {
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename T>
ConfigField number_field(const char* key, T PipelineConfig::*member) {
  return {key,
          [member](const PipelineConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
            else return std::to_string(c.*member);
          },
          [member, key](PipelineConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); }};
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back(number_field("sample_rate", &PipelineConfig::sample_rate));
    f.push_back(number_field("window_ms", &PipelineConfig::window_ms));
    f.push_back(number_field("lead_in_ms", &PipelineConfig::lead_in_ms));
    f.push_back({"harmonics",
                 [](const PipelineConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.harmonics.size(); ++i) s += (i ? "," : "") + c.harmonics[i].str();
                   return s;
                 },
                 [](PipelineConfig& c, const std::string& v) {
                   c.harmonics.clear();
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) c.harmonics.push_back(parse_rational(trim(item)));
                   if (c.harmonics.empty()) throw DomainError("config: empty harmonic set");
                 }});
    f.push_back(number_field("resolved_max", &PipelineConfig::resolved_max));
    f.push_back(number_field("erb_factor", &PipelineConfig::erb_factor));
    f.push_back(number_field("gamma_order", &PipelineConfig::gamma_order));
    f.push_back(number_field("nu", &PipelineConfig::nu));
    f.push_back(number_field("envelope_smoothing", &PipelineConfig::envelope_smoothing));
    f.push_back(number_field("cluster_rel_tol", &PipelineConfig::cluster_rel_tol));
    f.push_back(number_field("iter_tol", &PipelineConfig::iter_tol));
    f.push_back(number_field("iter_max", &PipelineConfig::iter_max));
    f.push_back(number_field("iter_damping", &PipelineConfig::iter_damping));
    f.push_back(number_field("trend_order", &PipelineConfig::trend_order));
    f.push_back(number_field("trend_min_cycles", &PipelineConfig::trend_min_cycles));
    f.push_back(number_field("coupling_order", &PipelineConfig::coupling_order));
    f.push_back(number_field("ar_order", &PipelineConfig::ar_order));
    f.push_back(number_field("max_winding_num", &PipelineConfig::max_winding_num));
    f.push_back(number_field("max_winding_den", &PipelineConfig::max_winding_den));
    f.push_back(number_field("strength_threshold", &PipelineConfig::strength_threshold));
    f.push_back(number_field("rng_seed", &PipelineConfig::rng_seed));
    f.push_back({"output_dir", [](const PipelineConfig& c) { return c.output_dir; },
                 [](PipelineConfig& c, const std::string& v) { c.output_dir = v; }});
    f.push_back(number_field("f0_min_hz", &PipelineConfig::f0_min_hz));
    f.push_back(number_field("f0_max_hz", &PipelineConfig::f0_max_hz));
    f.push_back(number_field("initial_f0_hz", &PipelineConfig::initial_f0_hz));
    f.push_back({"fit_model", [](const PipelineConfig& c) { return std::string(c.fit_model ? "true" : "false"); },
                 [](PipelineConfig& c, const std::string& v) {
                   if (v == "true") c.fit_model = true;
                   else if (v == "false") c.fit_model = false;
                   else throw DomainError("config: fit_model must be true or false");
                 }});
    f.push_back(number_field("sweep_start_ms", &PipelineConfig::sweep_start_ms));
    f.push_back(number_field("sweep_periods", &PipelineConfig::sweep_periods));
    f.push_back(number_field("sweep_lead_ms", &PipelineConfig::sweep_lead_ms));
    f.push_back(number_field("sweep_grid_min", &PipelineConfig::sweep_grid_min));
    f.push_back(number_field("sweep_grid_max", &PipelineConfig::sweep_grid_max));
    f.push_back(number_field("sweep_grid_step", &PipelineConfig::sweep_grid_step));
    f.push_back(number_field("sweep_ref_f0_hz", &PipelineConfig::sweep_ref_f0_hz));
    f.push_back(number_field("sweep_ref_chirp", &PipelineConfig::sweep_ref_chirp));
    f.push_back(number_field("fd_source_harmonic", &PipelineConfig::fd_source_harmonic));
    return f;
  }();
  return fields;
}

}  // namespace detail

inline void validate(const PipelineConfig& c) {
  if (!(c.sample_rate > 0.0)) throw DomainError("config: sample_rate must be > 0");
  if (!(c.window_ms > 0.0)) throw DomainError("config: window_ms must be > 0");
  if (!(c.lead_in_ms >= 0.0)) throw DomainError("config: lead_in_ms must be >= 0");
  if (c.gamma_order < 1) throw DomainError("config: gamma_order must be >= 1");
  if (!(c.nu > 0.0 && c.nu <= 1.0)) throw DomainError("config: nu outside (0,1]");
  if (!(c.erb_factor > 0.0)) throw DomainError("config: erb_factor must be > 0");
  if (!(c.iter_damping > 0.0 && c.iter_damping <= 1.0)) throw DomainError("config: iter_damping outside (0,1]");
  if (c.iter_max < 1) throw DomainError("config: iter_max must be >= 1");
  if (!(c.trend_min_cycles > 0.0)) throw DomainError("config: trend_min_cycles must be > 0");
  if (c.trend_order < 0 || c.coupling_order < 0 || c.ar_order < 0) throw DomainError("config: negative order");
  if (c.max_winding_num < 1 || c.max_winding_den < 1) throw DomainError("config: winding bounds must be >= 1");
  if (!(c.f0_min_hz > 0.0 && c.f0_max_hz > c.f0_min_hz)) throw DomainError("config: bad f0 range");
  if (!(c.sweep_grid_step > 0.0)) throw DomainError("config: sweep_grid_step must be > 0");
  std::vector<Rational> sorted = c.harmonics;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].num <= 0) throw DomainError("config: harmonics must be positive");
    if (i && sorted[i] == sorted[i - 1]) throw DomainError("config: duplicate harmonic " + sorted[i].str());
  }
}

inline std::string to_text(const PipelineConfig& c) {
  std::string s = "config_version = " + std::to_string(kConfigVersion) + "\n";
  for (const auto& f : detail::config_fields()) s += f.key + " = " + f.get(c) + "\n";
  return s;
}

namespace detail {

/// Calls fn(key, value, line) for every `key = value` line; '#' comments.
template <typename Fn>
void for_each_entry(const std::string& text, const char* who, Fn&& fn) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DomainError(std::string(who) + " line " + std::to_string(lineno) + ": expected key = value");
    fn(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno);
  }
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<double>(key, item));
  }
  return out;
}

}  // namespace detail

inline PipelineConfig parse_config(const std::string& text, PipelineConfig base = {}) {
  detail::for_each_entry(text, "config", [&](const std::string& key, const std::string& value, int lineno) {
    if (key == "config_version") {
      if (detail::parse_number<int>(key, value) != kConfigVersion)
        throw DomainError("config: unsupported config_version " + value);
      return;
    }
    const auto& fields = detail::config_fields();
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == key; });
    if (it == fields.end()) throw DomainError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->set(base, value);
  });
  validate(base);
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

/// Analysis settings matched to a synthesis preset.
inline PipelineConfig preset_config(const std::string& name) {
  PipelineConfig c;
  if (name == "fig2" || name == "fig3") return c;
  if (name == "subharmonic-m2") {
    c.initial_f0_hz = 200.0;
    c.erb_factor = 0.5;
    c.harmonics = {Rational(1), Rational(2), Rational(3), Rational(4), Rational(5), Rational(6), Rational(15, 2),
                   Rational(9)};
    c.resolved_max = 10.0;
    return c;
  }
  throw DomainError("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Synthesis spec files
//
//   preset = fig2          # optional, must come first; fields below override
//   f0_hz = 100
//   chirp = 6              # 1/s
//   slope_ratio = 6
//   amplitude = 1
//   noise_level = 0
//   subharmonic_m = 1
//   duration_s = 0.4
//   sample_rate = 16000
//   rng_seed = 1
//   secondary_ar = 1.2, -0.5
// ---------------------------------------------------------------------------

inline SynthSpec parse_synth_spec(const std::string& text, SynthSpec base = {}) {
  bool first = true;
  detail::for_each_entry(text, "synth spec", [&](const std::string& key, const std::string& v, int lineno) {
    using detail::parse_number;
    if (key == "preset") {
      if (!first) throw DomainError("synth spec line " + std::to_string(lineno) + ": preset must come first");
      base = preset(v);
    } else if (key == "f0_hz") {
      base.omega0_prime = kTwoPi * parse_number<double>(key, v);
    } else if (key == "chirp") {
      base.chirp_prime = parse_number<double>(key, v);
    } else if (key == "slope_ratio") {
      base.slope_ratio = parse_number<double>(key, v);
    } else if (key == "amplitude") {
      base.amplitude = parse_number<double>(key, v);
    } else if (key == "noise_level") {
      base.noise_level = parse_number<double>(key, v);
    } else if (key == "subharmonic_m") {
      base.subharmonic_m = parse_number<std::int64_t>(key, v);
    } else if (key == "duration_s") {
      base.duration = parse_number<double>(key, v);
    } else if (key == "sample_rate") {
      base.sample_rate = parse_number<double>(key, v);
    } else if (key == "rng_seed") {
      base.rng_seed = parse_number<std::uint64_t>(key, v);
    } else if (key == "secondary_ar") {
      base.secondary_ar = detail::parse_list(key, v);
    } else {
      throw DomainError("synth spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    first = false;
  });
  validate(base);
  return base;
}

}  // namespace fdrive
