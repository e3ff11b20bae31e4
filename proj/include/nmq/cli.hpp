#pragma once

// Command-line front end. Every command assembles its results first and then
// writes all artifacts, so outputs are identical for any thread count.
//
// Exit codes: 0 success (possibly with warnings), 2 input error, 3 numerical
// guard or analysis failure of every item.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "ionmodel.hpp"
#include "metrics.hpp"
#include "noise.hpp"
#include "parallel.hpp"
#include "qmodel.hpp"
#include "regularize.hpp"

namespace nmq::cli {

namespace fs = std::filesystem;

inline constexpr const char* kOutDirEnv = "NMQ_OUT_DIR";
inline constexpr double kQubitApproximationLimit = 0.02;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
  bool svg = false;
};

struct AnalysisOptions {
  std::optional<double> threshold;
  std::optional<double> range_fraction;
  std::optional<std::string> method;
  std::optional<double> eps;
  std::optional<long> min_length;
  std::optional<long> s_steps;
};

inline int exit_code(const Error& e) { return e.category() == Error::Category::Input ? 2 : 3; }

// Collects artifacts and writes them in one pass once a command has succeeded.
class Artifacts {
public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  void add(const std::string& name, std::string contents) { files_.emplace_back(name, std::move(contents)); }

  void add_json(const std::string& name, const Json& doc) { add(name, doc.dump(2) + "\n"); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.first);
    return out;
  }

  void write(std::ostream& log) const {
    for (const auto& [name, contents] : files_) io::write_file(dir_ / name, contents);
    log << "wrote " << files_.size() << " file(s) to " << dir_.string() << "\n";
  }

private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

namespace detail {

inline std::optional<RunConfig> load(const Globals& g) {
  if (g.config.empty()) return std::nullopt;
  RunConfig cfg = load_config(g.config);
  if (g.seed && cfg.noise) {
    Json doc = cfg.document;
    doc["noise"]["seed"] = *g.seed;
    cfg = parse_config(doc);
  }
  return cfg;
}

inline RunConfig require_config(const Globals& g, const char* command) {
  auto cfg = load(g);
  if (!cfg) throw ConfigError(std::string(command) + " needs --config");
  return *cfg;
}

inline fs::path out_dir(const Globals& g, const std::optional<RunConfig>& cfg) {
  if (!g.out.empty()) return g.out;
  if (cfg && cfg->output_dir) return *cfg->output_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "nmq_out";
}

inline std::string config_hash(const RunConfig& cfg) { return "fnv1a64:" + io::hex64(io::fnv1a(cfg.document.dump())); }

inline Json manifest(const RunConfig& cfg, const std::string& command, const Artifacts& files) {
  Json m;
  m["tool"] = "nmq";
  m["command"] = command;
  m["config_hash"] = config_hash(cfg);
  m["config"] = cfg.document;
  m["resolved"] = resolved_parameters(cfg);
  if (cfg.noise) m["resolved"]["noise"] = {{"mode", noise_mode_name(cfg.noise->mode)},
                                           {"shots", cfg.noise->shots},
                                           {"seed", cfg.noise->seed}};
  m["outputs"] = files.names();
  return m;
}

inline std::string stem_label(const fs::path& p) {
  std::string s = p.stem().string();
  for (const char* prefix : {"traj_", "td_"})
    if (s.rfind(prefix, 0) == 0 && s.size() > std::string(prefix).size()) return s.substr(std::string(prefix).size());
  return s;
}

inline RegularizeConfig analysis_config(const std::optional<RunConfig>& cfg, const AnalysisOptions& a) {
  RegularizeConfig rc = cfg ? cfg->regularize() : RegularizeConfig{};
  if (a.threshold) rc.chi.amplitude_threshold = *a.threshold;
  if (a.range_fraction) rc.chi.range_fraction = *a.range_fraction;
  if (a.method) rc.chi.method = nmq::detail::parse_method(*a.method, "--method: ");
  if (a.eps) rc.plateau.eps_abs = *a.eps;
  if (a.min_length) rc.plateau.min_length = static_cast<std::size_t>(*a.min_length);
  if (a.s_steps) rc.s_grid = default_s_grid(static_cast<std::size_t>(*a.s_steps));
  if (!(rc.chi.amplitude_threshold > 0.0)) throw InvalidArgument("--threshold must be positive");
  if (!(rc.chi.range_fraction >= 0.0 && rc.chi.range_fraction < 1.0))
    throw InvalidArgument("--range-fraction must lie in [0, 1)");
  if (!(rc.plateau.eps_abs > 0.0)) throw InvalidArgument("--eps must be positive");
  if (rc.plateau.min_length < 2) throw InvalidArgument("--min-length must be >= 2");
  return rc;
}

inline Json analysis_json(const RegularizeConfig& rc) {
  return {{"method", method_name(rc.chi.method)},
          {"amplitude_threshold_min", rc.chi.amplitude_threshold},
          {"range_fraction", rc.chi.range_fraction},
          {"loess_degree", rc.loess.degree},
          {"loess_robustness_iterations", rc.loess.robustness_iterations},
          {"plateau_eps_abs", rc.plateau.eps_abs},
          {"plateau_min_length", rc.plateau.min_length},
          {"s_grid", rc.s_grid}};
}

inline Json report_json(const PairReport& rep) {
  Json j;
  j["label"] = rep.sweep.label;
  j["amplitude_threshold"] = rep.amplitude_threshold;
  j["chi_raw"] = rep.chi_raw ? Json(*rep.chi_raw) : Json(nullptr);
  if (rep.sweep.plateau) {
    const auto [a, b] = *rep.sweep.plateau;
    j["plateau"] = {{"start_index", a}, {"end_index", b}, {"s_start", rep.sweep.s_grid[a]}, {"s_end", rep.sweep.s_grid[b]}};
  } else {
    j["plateau"] = nullptr;
  }
  j["chi_regularized"] = rep.sweep.chi_regularized ? Json(*rep.sweep.chi_regularized) : Json(nullptr);
  j["error"] = rep.error ? Json(*rep.error) : Json(nullptr);
  return j;
}

inline io::Curve sweep_curve(const SweepResult& sweep, const std::string& name) {
  return {name, sweep.s_grid, sweep.chi_values};
}

inline std::vector<Trajectory> read_trajectories(const std::vector<std::string>& files) {
  std::vector<Trajectory> out;
  for (const auto& f : files) out.push_back(io::trajectory_from_csv(io::read_csv_file(f)));
  return out;
}

inline void check_distinct_labels(const std::vector<std::string>& files) {
  std::map<std::string, std::string> seen;
  for (const auto& f : files) {
    const auto label = stem_label(f);
    if (auto [it, fresh] = seen.emplace(label, f); !fresh)
      throw InvalidArgument("inputs " + it->second + " and " + f + " share the label '" + label + "'");
  }
}

// Analysis failures of some items are warnings; failure of all of them is an error.
inline int finish_reports(const std::vector<PairReport>& reports, std::ostream& out, std::ostream& err) {
  std::size_t failed = 0;
  for (const auto& rep : reports) {
    if (rep.error) {
      ++failed;
      err << "warning: " << rep.sweep.label << ": " << *rep.error << "\n";
    } else {
      out << rep.sweep.label << ": chi(0) = " << io::format_real(*rep.chi_raw)
          << ", chi_regularized = " << io::format_real(*rep.sweep.chi_regularized) << ", plateau s = ["
          << io::format_real(rep.sweep.s_grid[rep.sweep.plateau->first]) << ", "
          << io::format_real(rep.sweep.s_grid[rep.sweep.plateau->second]) << "]\n";
    }
  }
  if (!reports.empty() && failed == reports.size()) {
    err << "error: analysis failed for every pair\n";
    return 3;
  }
  return 0;
}

inline void add_sweep_artifacts(Artifacts& files, const std::vector<PairReport>& reports, bool svg,
                                const std::string& prefix = "sweep_") {
  for (const auto& rep : reports) {
    if (rep.sweep.s_grid.empty()) continue;
    files.add(prefix + rep.sweep.label + ".csv", io::render([&](std::ostream& o) { io::write_sweep(o, rep.sweep); }));
    if (svg)
      files.add(prefix + rep.sweep.label + ".svg",
                io::line_chart_svg("Measure per oscillation vs smoothing degree, pair " + rep.sweep.label,
                                   "smoothing degree s", "chi", {sweep_curve(rep.sweep, rep.sweep.label)}));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline int cmd_simulate(const Globals& g, std::ostream& out) {
  const RunConfig cfg = detail::require_config(g, "simulate");
  const auto* mp = std::get_if<ModelParams>(&cfg.model);
  if (!mp) throw ConfigError("simulate needs a two_qubit model (use ion-simulate for ion configs)");
  if (cfg.initial_states.empty()) throw ConfigError("initial_states: at least one state is required");
  const auto times = cfg.time_grid.times();

  std::vector<Trajectory> trajs(cfg.initial_states.size());
  parallel_for(trajs.size(), g.threads, [&](std::size_t k) { trajs[k] = evolve(*mp, cfg.initial_states[k].state, times); });

  Artifacts files(detail::out_dir(g, cfg));
  std::vector<io::Curve> curves;
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const auto& label = cfg.initial_states[k].label;
    files.add("traj_" + label + ".csv", io::render([&](std::ostream& o) { io::write_trajectory(o, trajs[k], cfg.time_offset); }));
    io::Curve c{"state " + label, {}, {}};
    for (std::size_t m = 0; m < times.size(); ++m) {
      c.x.push_back(times[m] + cfg.time_offset);
      c.y.push_back(trajs[k].points[m].z);
    }
    curves.push_back(std::move(c));
  }
  if (g.svg) files.add("trajectories.svg", io::line_chart_svg("System Bloch z component", "t [us]", "v_z", curves));
  files.add_json("manifest.json", detail::manifest(cfg, "simulate", files));
  files.write(out);
  return 0;
}

inline int cmd_ion_simulate(const Globals& g, std::ostream& out) {
  const RunConfig cfg = detail::require_config(g, "ion-simulate");
  const auto* ion = std::get_if<IonModel>(&cfg.model);
  if (!ion) throw ConfigError("ion-simulate needs an ion model");
  if (cfg.initial_states.empty()) throw ConfigError("initial_states: at least one state is required");
  const auto times = cfg.time_grid.times();
  const auto phonons = thermal_distribution(ion->mean_phonons, ion->params.fock_cutoff);

  std::vector<IonSimulation> sims;
  for (const auto& s : cfg.initial_states)
    sims.push_back(simulate_ion(ion->params, s.state, phonons, times, IonOptions{0.0, g.threads}));

  Artifacts files(detail::out_dir(g, cfg));
  for (std::size_t k = 0; k < sims.size(); ++k) {
    const auto& label = cfg.initial_states[k].label;
    files.add("traj_" + label + ".csv",
              io::render([&](std::ostream& o) { io::write_trajectory(o, sims[k].trajectory, cfg.time_offset); }));
    files.add("fock_" + label + ".csv",
              io::render([&](std::ostream& o) { io::write_fock(o, times, sims[k].fock_populations, cfg.time_offset); }));
  }
  if (g.svg) {
    std::vector<io::Curve> curves;
    for (std::size_t k = 0; k < sims.size(); ++k) {
      io::Curve c{"state " + cfg.initial_states[k].label, {}, {}};
      for (std::size_t m = 0; m < times.size(); ++m) {
        c.x.push_back(times[m] + cfg.time_offset);
        c.y.push_back(sims[k].trajectory.points[m].z);
      }
      curves.push_back(std::move(c));
    }
    files.add("trajectories.svg", io::line_chart_svg("Ion qubit Bloch z component", "t [us]", "v_z", curves));
  }
  files.add_json("manifest.json", detail::manifest(cfg, "ion-simulate", files));
  files.write(out);
  return 0;
}

inline int cmd_fock_check(const Globals& g, std::ostream& out) {
  const RunConfig cfg = detail::require_config(g, "fock-check");
  const auto* ion = std::get_if<IonModel>(&cfg.model);
  if (!ion) throw ConfigError("fock-check needs an ion model");
  const auto times = cfg.time_grid.times();
  const PureState2 qubit0 = cfg.initial_states.empty() ? PureState2{} : cfg.initial_states.front().state;

  std::vector<double> scan = cfg.fock_check_phonons;
  if (std::find(scan.begin(), scan.end(), ion->mean_phonons) == scan.end()) scan.push_back(ion->mean_phonons);
  std::sort(scan.begin(), scan.end());

  std::vector<FockOccupation> occ;
  for (double nbar : scan) {
    const auto sim = simulate_ion(ion->params, qubit0, thermal_distribution(nbar, ion->params.fock_cutoff), times,
                                  IonOptions{0.0, g.threads});
    occ.push_back(fock_occupation_maxima(sim));
  }

  std::string csv = "nbar";
  for (int n = 0; n <= ion->params.fock_cutoff; ++n) csv += ",max_p" + std::to_string(n);
  csv += ",max_excited\n";
  Json rows = Json::array();
  double at_config = 0.0;
  for (std::size_t k = 0; k < scan.size(); ++k) {
    csv += io::format_real(scan[k]);
    for (double p : occ[k].max_by_level) csv += "," + io::format_real(p);
    csv += "," + io::format_real(occ[k].max_excited) + "\n";
    rows.push_back({{"mean_phonons", scan[k]}, {"max_by_level", occ[k].max_by_level}, {"max_excited", occ[k].max_excited}});
    if (scan[k] == ion->mean_phonons) at_config = occ[k].max_excited;
  }
  const bool valid = at_config < kQubitApproximationLimit;

  Artifacts files(detail::out_dir(g, cfg));
  files.add("fock_check.csv", csv);
  if (g.svg) {
    std::vector<io::Curve> curves;
    for (int n = 2; n <= std::min(4, ion->params.fock_cutoff); ++n) {
      io::Curve c{"n = " + std::to_string(n), scan, {}};
      for (const auto& o : occ) c.y.push_back(o.max_by_level[static_cast<std::size_t>(n)]);
      curves.push_back(std::move(c));
    }
    files.add("fock_check.svg", io::line_chart_svg("Maximal Fock occupation", "mean phonon number", "max population", curves));
  }
  files.add_json("fock_check.json", {{"mean_phonons", ion->mean_phonons},
                                     {"max_excited", at_config},
                                     {"limit", kQubitApproximationLimit},
                                     {"qubit_approximation_valid", valid},
                                     {"scan", rows},
                                     {"config_hash", detail::config_hash(cfg)}});
  files.write(out);
  out << (valid ? "qubit approximation valid" : "qubit approximation NOT valid") << ": max occupation of n >= 2 is "
      << io::format_real(at_config) << " at mean phonon number " << io::format_real(ion->mean_phonons) << "\n";
  return 0;
}

inline int cmd_distance(const Globals& g, const std::vector<std::string>& inputs, std::ostream& out) {
  if (inputs.size() < 2) throw InvalidArgument("distance needs at least 2 trajectory files");
  detail::check_distinct_labels(inputs);
  const auto trajs = detail::read_trajectories(inputs);
  Artifacts files(detail::out_dir(g, detail::load(g)));
  for (std::size_t i = 0; i < trajs.size(); ++i)
    for (std::size_t j = i + 1; j < trajs.size(); ++j) {
      const auto label = detail::stem_label(inputs[i]) + "-" + detail::stem_label(inputs[j]);
      const auto series = series_from_trajectories(trajs[i], trajs[j]);
      files.add("td_" + label + ".csv", io::render([&](std::ostream& o) { io::write_series(o, series); }));
      if (g.svg)
        files.add("td_" + label + ".svg",
                  io::line_chart_svg("Trace distance, pair " + label, "t [us]", "D", {{label, series.times(), series.values()}}));
    }
  files.write(out);
  return 0;
}

inline int cmd_noise(const Globals& g, const std::vector<std::string>& inputs, std::optional<long> shots,
                     std::ostream& out) {
  if (inputs.empty()) throw InvalidArgument("noise needs at least one input file");
  const auto cfg = detail::load(g);
  NoiseConfig noise = cfg && cfg->noise ? *cfg->noise : NoiseConfig{};
  if (shots) noise.shots = *shots;
  if (g.seed) noise.seed = *g.seed;
  noise.validate();

  const fs::path dir = detail::out_dir(g, cfg);
  Artifacts files(dir);
  for (const auto& f : inputs) {
    if (fs::exists(dir / fs::path(f).filename()) && fs::equivalent(dir / fs::path(f).filename(), f))
      throw InvalidArgument(f + ": output would overwrite the input; choose another --out");
    const auto table = io::read_csv_file(f);
    // Streams are keyed by file name, so results do not depend on argument order.
    const std::uint64_t stream = io::fnv1a(fs::path(f).filename().string());
    std::string text;
    if (table.kind == io::CsvKind::Trajectory) {
      NoiseConfig nc = noise;
      nc.mode = NoiseMode::BlochShots;
      const auto noisy = sample_bloch_shots(io::trajectory_from_csv(table), nc, stream, g.threads);
      text = io::render([&](std::ostream& o) { io::write_trajectory(o, noisy); });
    } else if (table.kind == io::CsvKind::TraceDistance) {
      NoiseConfig nc = noise;
      nc.mode = NoiseMode::TdBinomial;
      const auto noisy = sample_td_binomial(io::series_from_csv(table), nc, stream, g.threads);
      text = io::render([&](std::ostream& o) { io::write_series(o, noisy); });
    } else {
      throw InvalidArgument(f + ": noise applies to trajectory or trace-distance files");
    }
    files.add(fs::path(f).filename().string(), std::move(text));
  }
  files.add_json("noise.json", {{"shots", noise.shots}, {"seed", noise.seed}, {"inputs", inputs.size()}});
  files.write(out);
  return 0;
}

inline int cmd_measure(const Globals& g, const std::vector<std::string>& inputs, const AnalysisOptions& a,
                       std::ostream& out, std::ostream& err) {
  if (inputs.empty()) throw InvalidArgument("measure needs at least one trace-distance file");
  const auto cfg = detail::load(g);
  RegularizeConfig rc = detail::analysis_config(cfg, a);
  Json entries = Json::array();
  std::size_t failed = 0;
  for (const auto& f : inputs) {
    const auto series = io::series_from_csv(io::read_csv_file(f));
    Json e{{"file", fs::path(f).filename().string()}, {"blp", blp_discrete(series)}};
    const double threshold = effective_threshold(series.values(), rc.chi);
    e["amplitude_threshold"] = threshold;
    try {
      const auto seg = segment_oscillations(series, threshold);
      e["rises"] = seg.rises.size();
      e["chi"] = chi_per_oscillation(series, rc.chi);
      e["error"] = nullptr;
      out << fs::path(f).filename().string() << ": chi = " << io::format_real(e["chi"].get<double>()) << " over "
          << seg.rises.size() << " rise(s)\n";
    } catch (const NoOscillations& ex) {
      ++failed;
      e["chi"] = nullptr;
      e["error"] = ex.what();
      err << "warning: " << f << ": " << ex.what() << "\n";
    }
    entries.push_back(std::move(e));
  }
  Artifacts files(detail::out_dir(g, cfg));
  files.add_json("measure.json", {{"method", method_name(rc.chi.method)}, {"results", entries}});
  files.write(out);
  return failed == inputs.size() ? 3 : 0;
}

inline int cmd_sweep(const Globals& g, const std::vector<std::string>& inputs, const AnalysisOptions& a,
                     std::ostream& out, std::ostream& err) {
  if (inputs.empty()) throw InvalidArgument("sweep needs at least one trace-distance file");
  detail::check_distinct_labels(inputs);
  const auto cfg = detail::load(g);
  const RegularizeConfig rc = detail::analysis_config(cfg, a);
  std::vector<TraceDistanceSeries> series;
  std::vector<std::pair<std::size_t, std::size_t>> index;
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    series.push_back(io::series_from_csv(io::read_csv_file(inputs[k])));
    index.emplace_back(k, k);
    labels.push_back(detail::stem_label(inputs[k]));
  }
  const auto reports = regularize_series(series, index, labels, rc, g.threads);

  Artifacts files(detail::out_dir(g, cfg));
  detail::add_sweep_artifacts(files, reports, g.svg);
  Json summary{{"analysis", detail::analysis_json(rc)}, {"seed", nullptr}, {"results", Json::array()}};
  for (const auto& rep : reports) summary["results"].push_back(detail::report_json(rep));
  files.add_json("sweep_summary.json", summary);
  const int code = detail::finish_reports(reports, out, err);
  files.write(out);
  return code;
}

// Regularizes trajectory files (every unordered pair), trace-distance files, or
// the full simulate, noise, distance, sweep pipeline described by --config.
inline int cmd_regularize(const Globals& g, const std::vector<std::string>& inputs, const AnalysisOptions& a,
                          std::ostream& out, std::ostream& err) {
  const auto cfg = detail::load(g);
  const RegularizeConfig rc = detail::analysis_config(cfg, a);
  Artifacts files(detail::out_dir(g, cfg));
  Json summary{{"analysis", detail::analysis_json(rc)}};
  std::vector<PairReport> reports;
  std::vector<PairReport> reference;

  if (!inputs.empty()) {
    detail::check_distinct_labels(inputs);
    std::vector<io::CsvTable> tables;
    for (const auto& f : inputs) tables.push_back(io::read_csv_file(f));
    std::vector<TraceDistanceSeries> series;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::string> labels;
    if (tables.front().kind == io::CsvKind::Trajectory) {
      if (inputs.size() < 2) throw InvalidArgument("regularize needs at least 2 trajectory files");
      std::vector<Trajectory> trajs;
      for (const auto& t : tables) trajs.push_back(io::trajectory_from_csv(t));
      for (std::size_t i = 0; i < trajs.size(); ++i)
        for (std::size_t j = i + 1; j < trajs.size(); ++j) {
          series.push_back(series_from_trajectories(trajs[i], trajs[j]));
          pairs.emplace_back(i, j);
          labels.push_back(detail::stem_label(inputs[i]) + "-" + detail::stem_label(inputs[j]));
        }
    } else {
      for (std::size_t k = 0; k < tables.size(); ++k) {
        series.push_back(io::series_from_csv(tables[k]));
        pairs.emplace_back(k, k);
        labels.push_back(detail::stem_label(inputs[k]));
      }
    }
    reports = regularize_series(series, pairs, labels, rc, g.threads);
    summary["seed"] = g.seed ? Json(*g.seed) : Json(nullptr);
  } else {
    if (!cfg) throw ConfigError("regularize needs input files or --config");
    if (cfg->initial_states.size() < 2) throw ConfigError("initial_states: regularize needs at least 2 states");
    const auto times = cfg->time_grid.times();
    const std::size_t count = cfg->initial_states.size();

    std::vector<Trajectory> clean(count);
    if (const auto* mp = std::get_if<ModelParams>(&cfg->model)) {
      parallel_for(count, g.threads, [&](std::size_t k) { clean[k] = evolve(*mp, cfg->initial_states[k].state, times); });
    } else {
      const auto& ion = std::get<IonModel>(cfg->model);
      const auto phonons = thermal_distribution(ion.mean_phonons, ion.params.fock_cutoff);
      for (std::size_t k = 0; k < count; ++k)
        clean[k] = simulate_ion(ion.params, cfg->initial_states[k].state, phonons, times, IonOptions{0.0, g.threads}).trajectory;
    }

    std::vector<TraceDistanceSeries> clean_series, noisy_series;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = i + 1; j < count; ++j) {
        clean_series.push_back(series_from_trajectories(clean[i], clean[j]));
        pairs.emplace_back(i, j);
        labels.push_back(cfg->initial_states[i].label + "-" + cfg->initial_states[j].label);
      }

    if (cfg->noise) {
      const NoiseConfig& nc = *cfg->noise;
      if (nc.mode == NoiseMode::BlochShots) {
        std::vector<Trajectory> noisy(count);
        for (std::size_t k = 0; k < count; ++k) noisy[k] = sample_bloch_shots(clean[k], nc, k + 1, g.threads);
        for (const auto& [i, j] : pairs) noisy_series.push_back(series_from_trajectories(noisy[i], noisy[j]));
      } else {
        for (std::size_t p = 0; p < clean_series.size(); ++p)
          noisy_series.push_back(sample_td_binomial(clean_series[p], nc, p + 1, g.threads));
      }
      reports = regularize_series(noisy_series, pairs, labels, rc, g.threads);
      reference = regularize_series(clean_series, pairs, labels, rc, g.threads);
      summary["seed"] = nc.seed;
      summary["noise"] = {{"mode", noise_mode_name(nc.mode)}, {"shots", nc.shots}};
    } else {
      reports = regularize_series(clean_series, pairs, labels, rc, g.threads);
      summary["seed"] = nullptr;
      summary["noise"] = nullptr;
    }
    const auto& analysed = cfg->noise ? noisy_series : clean_series;
    for (std::size_t p = 0; p < analysed.size(); ++p)
      files.add("td_" + labels[p] + ".csv",
                io::render([&](std::ostream& o) { io::write_series(o, analysed[p], cfg->time_offset); }));
    summary["config_hash"] = detail::config_hash(*cfg);
  }

  detail::add_sweep_artifacts(files, reports, g.svg);
  if (!reference.empty()) detail::add_sweep_artifacts(files, reference, false, "sweep_noiseless_");
  if (g.svg && reports.size() > 1) {
    std::vector<io::Curve> curves;
    for (const auto& r : reports)
      if (!r.sweep.s_grid.empty()) curves.push_back(detail::sweep_curve(r.sweep, r.sweep.label));
    files.add("sweeps.svg", io::line_chart_svg("Measure per oscillation vs smoothing degree", "smoothing degree s", "chi", curves));
  }
  summary["results"] = Json::array();
  for (std::size_t p = 0; p < reports.size(); ++p) {
    Json j = detail::report_json(reports[p]);
    if (!reference.empty()) j["noiseless"] = detail::report_json(reference[p]);
    summary["results"].push_back(std::move(j));
  }
  files.add_json("regularize_summary.json", summary);
  if (inputs.empty()) files.add_json("manifest.json", detail::manifest(*cfg, "regularize", files));
  const int code = detail::finish_reports(reports, out, err);
  files.write(out);
  return code;
}

// ---------------------------------------------------------------------------

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Non-Markovianity toolkit: simulate qubit/reservoir dynamics, inject shot noise, and regularize "
               "BLP measures per oscillation."};
  app.name("nmq");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON) or a manifest written by an earlier run");
  app.add_option("--seed", g.seed, "Noise seed (overrides the configuration)");
  app.add_option("--out", g.out, std::string("Output directory (default: config output_dir, then $") + kOutDirEnv +
                                     ", then ./nmq_out)");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
  app.add_flag("--svg", g.svg, "Also emit static SVG line charts");

  std::vector<std::string> inputs;
  std::optional<long> shots;
  AnalysisOptions a;
  auto add_analysis = [&](CLI::App* sub) {
    sub->add_option("--threshold", a.threshold, "Minimum rise amplitude for oscillation segmentation");
    sub->add_option("--method", a.method, "extrema_mean or positive_sum");
  };
  auto add_sweep = [&](CLI::App* sub) {
    add_analysis(sub);
    sub->add_option("--range-fraction", a.range_fraction, "Raise the threshold to this fraction of each series' range");
    sub->add_option("--eps", a.eps, "Plateau tolerance (max - min of chi)");
    sub->add_option("--min-length", a.min_length, "Minimum plateau length in grid points");
    sub->add_option("--s-steps", a.s_steps, "Smoothing grid s = 0, 1/n, ..., 1")->check(CLI::PositiveNumber);
  };

  auto* simulate = app.add_subcommand("simulate", "Trajectories of the two-qubit model for each initial state");
  auto* ion = app.add_subcommand("ion-simulate", "Reduced ion-qubit trajectories and Fock populations");
  auto* fock = app.add_subcommand("fock-check", "Maximal Fock-level occupation versus mean phonon number");
  auto* distance = app.add_subcommand("distance", "Trace distances for every pair of trajectory files");
  distance->add_option("inputs", inputs, "Trajectory CSV files")->required();
  auto* noise = app.add_subcommand("noise", "Binomial shot noise on trajectory or trace-distance files");
  noise->add_option("inputs", inputs, "Trajectory or trace-distance CSV files")->required();
  noise->add_option("--shots", shots, "Measurements per point")->check(CLI::PositiveNumber);
  auto* measure = app.add_subcommand("measure", "BLP measure and measure per oscillation of trace-distance files");
  measure->add_option("inputs", inputs, "Trace-distance CSV files")->required();
  add_analysis(measure);
  auto* sweep = app.add_subcommand("sweep", "Measure per oscillation over the smoothing grid, with plateau detection");
  sweep->add_option("inputs", inputs, "Trace-distance CSV files")->required();
  add_sweep(sweep);
  auto* regularize = app.add_subcommand("regularize", "Regularized measure for files or a configured pipeline");
  regularize->add_option("inputs", inputs, "Trajectory or trace-distance CSV files");
  add_sweep(regularize);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(g, out);
    if (ion->parsed()) return cmd_ion_simulate(g, out);
    if (fock->parsed()) return cmd_fock_check(g, out);
    if (distance->parsed()) return cmd_distance(g, inputs, out);
    if (noise->parsed()) return cmd_noise(g, inputs, shots, out);
    if (measure->parsed()) return cmd_measure(g, inputs, a, out, err);
    if (sweep->parsed()) return cmd_sweep(g, inputs, a, out, err);
    if (regularize->parsed()) return cmd_regularize(g, inputs, a, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace nmq::cli
