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

// fdrive command line: synth, analyze, sweep, circlemap.
//
// Exit codes: 0 success, 1 usage or invalid parameters, 2 data error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fdrive/fdrive.hpp"

namespace {

using namespace fdrive;

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
};

PipelineConfig make_config(const Common& o) {
  PipelineConfig c = o.preset.empty() ? PipelineConfig{} : preset_config(o.preset);
  if (!o.config.empty()) c = parse_config(read_text(o.config), c);
  if (o.seed) c.rng_seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  validate(c);
  return c;
}

Series load_signal(const std::string& path, PipelineConfig& cfg) {
  const WavData w = read_wav(path);
  cfg.sample_rate = static_cast<double>(w.sample_rate);
  return w.samples;
}

std::string truth_csv(const GroundTruth& g) {
  CsvTable t({"t", "psi_prime", "omega_prime", "excitation", "signal"});
  for (std::size_t i = 0; i < g.signal.size(); ++i)
    t.add_row({static_cast<double>(i) / g.sample_rate, g.psi_prime[i], g.omega_prime[i], g.excitation[i], g.signal[i]});
  return t.str();
}

std::vector<double> parse_grid(const std::string& s, const PipelineConfig& cfg) {
  if (s.empty()) return sweep_grid(cfg);
  // min:max:step or a comma list
  if (s.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(detail::parse_number<double>("grid", detail::trim(item)));
    if (parts.size() != 3) throw DomainError("grid: expected min:max:step");
    PipelineConfig g = cfg;
    g.sweep_grid_min = parts[0];
    g.sweep_grid_max = parts[1];
    g.sweep_grid_step = parts[2];
    if (!(g.sweep_grid_step > 0.0)) throw DomainError("grid: step must be > 0");
    return sweep_grid(g);
  }
  return detail::parse_list("grid", s);
}

int cmd_synth(const Common& o, const std::string& spec_file) {
  SynthSpec spec = o.preset.empty() ? SynthSpec{} : preset(o.preset);
  if (!spec_file.empty()) spec = parse_synth_spec(read_text(spec_file), spec);
  if (o.seed) spec.rng_seed = *o.seed;
  validate(spec);
  const GroundTruth g = generate(spec);
  Manifest m(o.out.empty() ? "out" : o.out);
  m.write("signal.wav", encode_wav(g.signal, static_cast<std::uint32_t>(std::lround(spec.sample_rate))));
  m.write("truth.csv", truth_csv(g));
  const auto path = m.finish();
  std::cout << "synth: " << g.signal.size() << " samples -> " << path.string() << "\n";
  return 0;
}

int cmd_analyze(const Common& o, const std::string& wav) {
  PipelineConfig cfg = make_config(o);
  const Series x = load_signal(wav, cfg);
  const AnalysisResult a = analyze(x, cfg);
  const auto path = write_analysis(a, cfg.output_dir);
  std::size_t voiced = 0;
  for (const auto& w : a.windows) voiced += w.voiced ? 1 : 0;
  std::cout << "analyze: status " << a.status << ", " << voiced << "/" << a.windows.size() << " windows voiced, m "
            << a.fd.m << ", " << a.locking.confirmed_part_tones << " part-tones confirmed -> " << path.string() << "\n";
  return 0;
}

int cmd_sweep(const Common& o, const std::string& wav, const std::string& grid_text) {
  PipelineConfig cfg = make_config(o);
  const Series x = load_signal(wav, cfg);
  const auto grid = parse_grid(grid_text, cfg);
  const auto rows = run_sweep(x, cfg, grid);
  Manifest m(cfg.output_dir);
  m.write("sweep.csv", sweep_csv(rows));
  const auto path = m.finish();
  std::cout << "sweep: " << rows.size() << " rows -> " << path.string() << "\n";
  return 0;
}

int cmd_circlemap(const Common& o, const std::string& wav) {
  PipelineConfig cfg = make_config(o);
  const Series x = load_signal(wav, cfg);
  const CircleMapSet s = run_circlemap(x, cfg);
  Manifest m(cfg.output_dir);
  m.write("circlemap.csv", circlemap_csv(s));
  m.write("circlemap_locking.csv", locking_csv(s.reports));
  nlohmann::json j;
  j["format"] = "fdrive-circlemap";
  j["version"] = 1;
  j["status"] = s.status;
  j["fd_source_harmonic"] = cfg.fd_source_harmonic;
  nlohmann::json maps = nlohmann::json::array();
  for (const auto& [name, cm] : s.maps)
    maps.push_back({{"pair", name},
                    {"slope", std::isfinite(cm.slope) ? nlohmann::json(cm.slope) : nlohmann::json(nullptr)},
                    {"linearity_rms",
                     std::isfinite(cm.linearity_rms) ? nlohmann::json(cm.linearity_rms) : nlohmann::json(nullptr)}});
  j["maps"] = maps;
  m.write("circlemap.json", j.dump(2) + "\n");
  const auto path = m.finish();
  if (s.status != "confirmed") std::cerr << "circlemap: warning: drive " << s.status << ", maps are empty\n";
  std::cout << "circlemap: " << s.maps.size() << " maps -> " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fdrive: fundamental drive analysis of voiced signals"};
  app.require_subcommand(1);

  Common o;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--preset", o.preset, "fig2 | fig3 | subharmonic-m2");
    c->add_option("--seed", o.seed, "RNG seed override");
    c->add_option("--out", o.out, "output directory");
  };

  std::string spec_file, wav, grid;
  auto* synth = app.add_subcommand("synth", "synthesize a chirped sawtooth excitation and its ground truth");
  synth->add_option("--spec", spec_file, "synthesis spec file (key = value)");
  add_common(synth);

  auto* an = app.add_subcommand("analyze", "reconstruct the fundamental drive of a WAV file");
  auto* sw = app.add_subcommand("sweep", "relative part-tone chirp response over a grid");
  auto* cm = app.add_subcommand("circlemap", "circle maps of part-tones 5 and 6 against a single-source drive");
  for (auto* c : {an, sw, cm}) {
    c->add_option("wav", wav, "16-bit PCM mono WAV")->required();
    c->add_option("--config", o.config, "config file (key = value)");
    add_common(c);
  }
  sw->add_option("--grid", grid, "min:max:step or comma list of relative chirps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, spec_file);
    if (an->parsed()) return cmd_analyze(o, wav);
    if (sw->parsed()) return cmd_sweep(o, wav, grid);
    if (cm->parsed()) return cmd_circlemap(o, wav);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
