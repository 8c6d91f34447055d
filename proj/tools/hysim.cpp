// hysim: command-line front end for the refrigeration hybrid-system simulator.
//
// Configuration precedence (later wins): built-in defaults, --config file,
// --preset, individual flags.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hysim/config.hpp"
#include "hysim/dynamics.hpp"
#include "hysim/hybrid_core.hpp"
#include "hysim/intensity_analysis.hpp"
#include "hysim/io.hpp"
#include "hysim/parallel.hpp"
#include "hysim/stochastic_switching.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<double> eps;
  std::optional<double> horizon;
  std::optional<double> dt;
  std::optional<std::size_t> n_traj;
  std::optional<std::string> out;
  bool detect_period = false;
  std::optional<std::string> plane;
  std::optional<double> bin_width;
  std::optional<double> t_lower;
  std::optional<double> t_upper;
  std::optional<std::string> eps_list;
  std::optional<std::size_t> csv_stride;
  std::optional<std::string> from;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "JSON configuration file");
  cmd->add_option("--preset", f.preset, "Parameter preset")->check(CLI::IsMember({"full", "desk"}));
  cmd->add_option("--seed", f.seed, "Master random seed");
  cmd->add_option("--eps", f.eps, "Switching-surface half-width epsilon [degC]");
  cmd->add_option("--horizon", f.horizon, "Simulated time [s]");
  cmd->add_option("--dt", f.dt, "Sampling / integration step [s]");
  cmd->add_option("--n-traj", f.n_traj, "Ensemble size");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_flag("--detect-period", f.detect_period, "Write a periodic-trajectory certificate");
  cmd->add_option("--plane", f.plane, "Intensity projection")->check(CLI::IsMember({"t1t2", "t1p"}));
  cmd->add_option("--bin-width", f.bin_width, "Intensity bin width");
  cmd->add_option("--t-lower", f.t_lower, "Lower temperature bound of both display cases [degC]");
  cmd->add_option("--t-upper", f.t_upper, "Upper temperature bound of both display cases [degC]");
  cmd->add_option("--eps-list", f.eps_list, "Comma-separated epsilon values for the sweep");
  cmd->add_option("--csv-stride", f.csv_stride, "Write every n-th sample to trajectory CSVs");
  cmd->add_option("--from", f.from, "Directory of a previous stochastic run (intensity)");
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw hysim::ConfigError("eps_list", "cannot parse '" + item + "'");
    }
  }
  return out;
}

hysim::RunConfig resolve(const Flags& f) {
  hysim::RunConfig c;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw hysim::ConfigError("--config", "cannot open " + f.config_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw hysim::ConfigError("--config", e.what());
    }
    c = hysim::config_from_json(j);
  }
  if (!f.preset.empty()) c.apply_preset(f.preset);
  if (f.seed) c.seed = *f.seed;
  if (f.eps) c.epsilon = *f.eps;
  if (f.horizon) {
    c.horizon = *f.horizon;
    c.interval.reset();
  }
  if (f.dt) c.dt = *f.dt;
  if (f.n_traj) c.n_traj = *f.n_traj;
  if (f.out) c.out = *f.out;
  if (f.detect_period) c.detect_period = true;
  if (f.plane) c.planes = {*f.plane};
  if (f.bin_width) c.bin_width = *f.bin_width;
  if (f.t_lower) c.box.T1_lower = c.box.T2_lower = *f.t_lower;
  if (f.t_upper) c.box.T1_upper = c.box.T2_upper = *f.t_upper;
  if (f.eps_list) c.eps_list = parse_list(*f.eps_list);
  if (f.csv_stride) c.csv_stride = *f.csv_stride;
  if (f.from) c.ensemble_dir = *f.from;
  c.validate();
  return c;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + p.string());
}

fs::path prepare_out(const hysim::RunConfig& c) {
  const fs::path dir(c.out);
  fs::create_directories(dir);
  write_text(dir / "config.resolved.json", hysim::to_json(c).dump(2) + "\n");
  return dir;
}

std::string traj_name(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%04zu.csv", j);
  return buf;
}

json state_json(const hysim::State& x) { return {{"T1", x.T1}, {"T2", x.T2}, {"P", x.P}}; }

int cmd_deterministic(const hysim::RunConfig& c) {
  const auto dir = prepare_out(c);
  const auto model = c.model();
  hysim::EventRecorder events;
  hysim::RunSummary summary;
  {
    std::ofstream csv(dir / "trajectory.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write trajectory.csv");
    hysim::io::TrajectoryCsvWriter writer(csv, false, c.csv_stride);
    hysim::TeeObserver tee(writer, events);
    summary = hysim::run_deterministic(model, c.initial_state, c.initial_mode, c.horizon, tee,
                                       {c.dt, 1e-10, 0});
  }
  if (summary.negative_pressure) std::cerr << "warning: suction pressure became negative\n";
  std::cout << "deterministic: " << summary.events << " events over " << summary.t_end << " s";
  if (summary.no_more_events) std::cout << " (final mode never reaches a guard)";
  std::cout << "\n";

  if (c.detect_period) {
    const auto cert = hysim::detect_period(events.events, {c.tol_rec, 4});
    json j;
    if (cert) {
      j = {{"detected", true},      {"T", cert->period},       {"l", cert->shift},
           {"anchor", state_json(cert->anchor)}, {"anchor_time", cert->anchor_time}, {"error", cert->max_error}};
      std::cout << "period: T = " << cert->period << " s, l = " << cert->shift << ", anchor P = " << cert->anchor.P
                << "\n";
    } else {
      j = {{"detected", false}, {"T", nullptr}, {"l", nullptr}, {"anchor", nullptr}, {"error", nullptr}};
      std::cout << "period: none detected\n";
    }
    write_text(dir / "period.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_stochastic(const hysim::RunConfig& c) {
  const auto dir = prepare_out(c);
  const auto model = c.model();
  const hysim::NoiseModel noise{c.epsilon};
  std::vector<std::size_t> event_counts(c.n_traj);
  hysim::parallel_for(c.n_traj, hysim::worker_count(), [&](std::size_t j) {
    std::ofstream csv(dir / traj_name(j), std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + traj_name(j));
    hysim::io::TrajectoryCsvWriter writer(csv, true, c.csv_stride);
    hysim::RandomSource rng(c.seed, j);
    const auto s = hysim::run_stochastic(model, c.initial_state, c.initial_mode, c.horizon, noise, rng, writer,
                                         {c.dt, 0});
    csv.flush();
    if (!csv) throw std::runtime_error("failed writing " + traj_name(j));
    event_counts[j] = s.events;
  });

  json manifest;
  manifest["seed"] = c.seed;
  manifest["epsilon"] = c.epsilon;
  manifest["horizon"] = c.horizon;
  manifest["dt"] = c.dt;
  manifest["n_traj"] = c.n_traj;
  manifest["trajectories"] = json::array();
  for (std::size_t j = 0; j < c.n_traj; ++j) {
    manifest["trajectories"].push_back({{"index", j}, {"stream", j}, {"file", traj_name(j)}, {"events", event_counts[j]}});
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "stochastic: wrote " << c.n_traj << " trajectories to " << dir.string() << "\n";
  return 0;
}

std::vector<hysim::IntensityGrid> grids_from_files(const hysim::RunConfig& c) {
  const fs::path src(c.ensemble_dir);
  std::ifstream mf(src / "manifest.json");
  if (!mf) throw std::runtime_error("missing ensemble: no manifest.json in " + src.string());
  json manifest;
  mf >> manifest;
  const auto& list = manifest.at("trajectories");
  if (list.empty()) throw std::runtime_error("missing ensemble: manifest lists no trajectories");

  std::vector<hysim::IntensityGrid> grids;
  for (const auto& g : c.grid_settings()) grids.emplace_back(g.plane, g.bounds, g.bin_width_x, g.bin_width_y);
  const auto I = c.resolved_interval();
  for (const auto& entry : list) {
    std::ifstream in(src / entry.at("file").get<std::string>());
    if (!in) throw std::runtime_error("missing ensemble file " + entry.at("file").get<std::string>());
    const auto traj = hysim::io::read_trajectory_csv(in);
    for (const auto& s : traj.samples) {
      if (!I.contains(s.t)) continue;
      for (auto& g : grids) g.add(s.x);
    }
  }
  for (auto& g : grids) g.set_n_traj(list.size());
  return grids;
}

int cmd_intensity(const hysim::RunConfig& c) {
  const auto dir = prepare_out(c);
  std::vector<hysim::IntensityGrid> grids;
  if (!c.ensemble_dir.empty()) {
    grids = grids_from_files(c);
  } else {
    grids = hysim::ensemble_intensity(c.ensemble(hysim::worker_count()), {c.epsilon}, c.grid_settings(),
                                      c.resolved_interval());
  }
  json summary = json::array();
  for (const auto& g : grids) {
    const std::string stem = "intensity_" + std::string(hysim::to_string(g.plane()));
    std::ostringstream csv, pgm;
    hysim::io::write_grid_csv(csv, g);
    hysim::io::write_grid_pgm(pgm, g);
    write_text(dir / (stem + ".csv"), csv.str());
    write_text(dir / (stem + ".pgm"), pgm.str());
    summary.push_back({{"plane", hysim::to_string(g.plane())},
                       {"n_traj", g.n_traj()},
                       {"in_bounds", g.total_in_bounds()},
                       {"overflow", g.overflow()},
                       {"max_count", g.max_count()}});
    std::cout << "intensity " << hysim::to_string(g.plane()) << ": " << g.nx() << "x" << g.ny() << " bins, "
              << g.total_in_bounds() << " samples in bounds, " << g.overflow() << " outside\n";
  }
  write_text(dir / "intensity_summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_sweep(const hysim::RunConfig& c) {
  if (c.eps_list.empty()) throw hysim::ConfigError("eps_list", "must not be empty");
  const auto dir = prepare_out(c);
  const auto rows = hysim::prevalence_sweep(c.ensemble(hysim::worker_count()), c.eps_list, c.sync);
  std::ostringstream csv;
  hysim::io::write_sweep_csv(csv, rows);
  write_text(dir / "sweep.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_derive_params(const hysim::RunConfig& c, bool write_files) {
  const auto derived = hysim::reduce_physical(c.physical);
  const auto canonical = hysim::ReducedCoefficients::canonical();
  const std::vector<std::pair<const char*, std::pair<double, double>>> rows{
      {"a", {derived.a, canonical.a}},           {"b", {derived.b, canonical.b}},
      {"c", {derived.c, canonical.c}},           {"d", {derived.d, canonical.d}},
      {"e", {derived.e, canonical.e}},           {"alpha", {derived.alpha, canonical.alpha}},
      {"beta", {derived.beta, canonical.beta}},  {"valve_gain", {derived.valve_gain, canonical.valve_gain}},
  };
  std::printf("%-11s %16s %16s %16s\n", "coefficient", "derived", "canonical", "delta");
  json j = json::array();
  for (const auto& [name, v] : rows) {
    std::printf("%-11s %16.8g %16.8g %16.8g\n", name, v.first, v.second, v.first - v.second);
    j.push_back({{"coefficient", name}, {"derived", v.first}, {"canonical", v.second}, {"delta", v.first - v.second}});
  }
  if (write_files) {
    const auto dir = prepare_out(c);
    write_text(dir / "derive_params.json", j.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-system simulator for a two-display-case refrigeration system"};
  app.require_subcommand(1);
  Flags f;
  auto* det = app.add_subcommand("deterministic", "Hysteresis run with exact event location");
  auto* sto = app.add_subcommand("stochastic", "Seeded ensemble with noisy switching surfaces");
  auto* inten = app.add_subcommand("intensity", "Curve-intensity grids of an ensemble");
  auto* sweep = app.add_subcommand("sweep", "Synchronization prevalence as a function of epsilon");
  auto* derive = app.add_subcommand("derive-params", "Reduce physical parameters to model coefficients");
  for (auto* cmd : {det, sto, inten, sweep, derive}) add_common(cmd, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto cfg = resolve(f);
    if (det->parsed()) return cmd_deterministic(cfg);
    if (sto->parsed()) return cmd_stochastic(cfg);
    if (inten->parsed()) return cmd_intensity(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (derive->parsed()) return cmd_derive_params(cfg, f.out.has_value());
  } catch (const hysim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
