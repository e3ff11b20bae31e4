#pragma once

// Run configuration documents (JSON). Frequencies carry a unit suffix and are
// converted to rad/us when parsed; times carry _us or _ns.
//
//   {
//     "model": {"type": "two_qubit", "omega_sys_mhz_cyclic": 59, "omega_res_mhz_cyclic": -37,
//               "coupling_mhz_cyclic": 219},
//     "initial_states": ["0", "1"],
//     "time_grid": {"t_start_us": 0, "t_end_ns": 50, "n_points": 401},
//     "noise": {"mode": "td_binomial", "shots": 1000, "seed": 1}
//   }

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "ionmodel.hpp"
#include "metrics.hpp"
#include "noise.hpp"
#include "qmodel.hpp"
#include "regularize.hpp"

namespace nmq {

using Json = nlohmann::json;

struct TimeGrid {
  double t_start = 0.0;  // us
  double t_end = 0.0;    // us
  std::size_t n_points = 0;

  void validate() const {
    if (n_points < 2) throw ConfigError("time_grid.n_points must be >= 2");
    if (!(t_end > t_start)) throw ConfigError("time_grid: t_end must exceed t_start");
  }

  std::vector<double> times() const {
    validate();
    std::vector<double> t(n_points);
    const double span = t_end - t_start;
    for (std::size_t m = 0; m < n_points; ++m)
      t[m] = t_start + span * static_cast<double>(m) / static_cast<double>(n_points - 1);
    return t;
  }
};

struct IonModel {
  IonParams params;
  double mean_phonons = 0.0;
};

struct NamedState {
  std::string label;
  PureState2 state;
};

struct RunConfig {
  std::variant<ModelParams, IonModel> model{ModelParams(0.0, 0.0, 0.0)};
  std::vector<NamedState> initial_states;
  TimeGrid time_grid;
  double time_offset = 0.0;  // us, added to written times only
  std::optional<NoiseConfig> noise;
  LoessConfig loess;
  PlateauConfig plateau;
  std::size_t s_steps = 100;
  ChiOptions chi = kRegularizeChi;
  std::vector<double> fock_check_phonons;  // mean phonon numbers scanned by fock-check
  std::optional<std::string> output_dir;
  Json document;  // normalized source, embedded in manifests

  bool is_ion() const { return std::holds_alternative<IonModel>(model); }

  RegularizeConfig regularize() const {
    RegularizeConfig cfg;
    cfg.s_grid = default_s_grid(s_steps);
    cfg.chi = chi;
    cfg.loess = loess;
    cfg.plateau = plateau;
    return cfg;
  }
};

namespace detail {

// Reader over one JSON object that tracks which keys were consumed, so
// misspelled keys are reported instead of silently ignored.
class ObjectReader {
public:
  ObjectReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + "must be an object");
  }

  std::string where(const std::string& key = {}) const {
    const std::string full = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
    return full.empty() ? std::string() : full + ": ";
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const Json& raw(const std::string& key) {
    if (!has(key)) throw ConfigError(where(key) + "missing");
    used_.push_back(key);
    return obj_.at(key);
  }

  double number(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(where(key) + "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(where(key) + "must be finite");
    return d;
  }

  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  long integer(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + "must be an integer");
    return v.get<long>();
  }

  long integer(const std::string& key, long fallback) { return has(key) ? integer(key) : fallback; }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_number_unsigned()) throw ConfigError(where(key) + "must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string string(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(where(key) + "must be a string");
    return v.get<std::string>();
  }

  std::string string(const std::string& key, const std::string& fallback) { return has(key) ? string(key) : fallback; }

  // <base>_mhz_cyclic, <base>_khz_cyclic or <base>_rad_per_us, in rad/us.
  std::optional<double> frequency(const std::string& base) {
    struct Unit {
      const char* suffix;
      double scale;
    };
    static constexpr Unit units[] = {
        {"_mhz_cyclic", kTwoPi}, {"_khz_cyclic", kTwoPi * 1e-3}, {"_rad_per_us", 1.0}};
    std::optional<double> value;
    std::string seen;
    for (const auto& u : units) {
      const std::string key = base + u.suffix;
      if (!has(key)) continue;
      if (value) throw ConfigError(where(key) + "conflicts with " + seen);
      value = number(key) * u.scale;
      seen = key;
    }
    return value;
  }

  double required_frequency(const std::string& base) {
    const auto v = frequency(base);
    if (!v) throw ConfigError(where(base + "_mhz_cyclic") + "missing (also accepted: _khz_cyclic, _rad_per_us)");
    return *v;
  }

  // <base>_us or <base>_ns, in us.
  std::optional<double> time(const std::string& base) {
    const bool us = has(base + "_us"), ns = has(base + "_ns");
    if (us && ns) throw ConfigError(where(base + "_ns") + "conflicts with " + base + "_us");
    if (us) return number(base + "_us");
    if (ns) return number(base + "_ns") * 1e-3;
    return std::nullopt;
  }

  // <base>_rad or <base>_pi (multiples of pi), in rad.
  std::optional<double> angle(const std::string& base) {
    const bool rad = has(base + "_rad"), pi = has(base + "_pi");
    if (rad && pi) throw ConfigError(where(base + "_pi") + "conflicts with " + base + "_rad");
    if (rad) return number(base + "_rad");
    if (pi) return number(base + "_pi") * (kTwoPi / 2.0);
    return std::nullopt;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (std::find(used_.begin(), used_.end(), it.key()) == used_.end())
        throw ConfigError(where(it.key()) + "unknown key");
  }

private:
  const Json& obj_;
  std::string path_;
  std::vector<std::string> used_;
};

inline std::variant<ModelParams, IonModel> parse_model(const Json& obj) {
  ObjectReader r(obj, "model");
  const std::string type = r.string("type");
  if (type == "two_qubit") {
    const double sys = r.required_frequency("omega_sys");
    const double res = r.required_frequency("omega_res");
    const double g = r.required_frequency("coupling");
    r.finish();
    try {
      return ModelParams(sys, res, g);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }
  if (type == "ion") {
    IonModel ion;
    ion.params.rabi = r.required_frequency("rabi");
    ion.params.motional = r.required_frequency("motional");
    ion.params.lamb_dicke = r.number("lamb_dicke");
    ion.params.laser_phase = r.angle("laser_phase").value_or(0.0);
    ion.params.fock_cutoff = static_cast<int>(r.integer("fock_cutoff", 10));
    ion.mean_phonons = r.number("mean_phonons", 0.0);
    r.finish();
    try {
      ion.params.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
    if (!(ion.mean_phonons >= 0.0)) throw ConfigError("model.mean_phonons: must be >= 0");
    return ion;
  }
  throw ConfigError("model.type: expected \"two_qubit\" or \"ion\", got \"" + type + "\"");
}

inline PureState2 named_state(const std::string& name, const std::string& where) {
  const double h = std::sqrt(0.5);
  if (name == "0") return {1.0, 0.0};
  if (name == "1") return {0.0, 1.0};
  if (name == "+") return {h, h};
  if (name == "-") return {h, -h};
  if (name == "+i") return {h, cplx(0.0, h)};
  if (name == "-i") return {h, cplx(0.0, -h)};
  throw ConfigError(where + "unknown state name \"" + name + "\" (use 0, 1, +, -, +i, -i)");
}

// A state is a name, {"amplitudes": [[re, im], [re, im]]}, {"bloch": [x, y, z]},
// {"theta_rad", "phi_rad"} for R_phi(theta)|0>, or {"tau_us", "phi_rad"} for a
// preparation pulse of duration tau at the state_prep Rabi frequency.
inline NamedState parse_state(const Json& item, std::size_t index, std::optional<double> prep_rabi) {
  const std::string path = "initial_states[" + std::to_string(index) + "]";
  NamedState out;
  out.label = std::to_string(index + 1);
  if (item.is_string()) {
    out.state = named_state(item.get<std::string>(), path + ": ");
    return out;
  }
  ObjectReader r(item, path);
  out.label = r.string("label", out.label);
  if (out.label.empty() || out.label.find_first_of("/\\ ,") != std::string::npos)
    throw ConfigError(r.where("label") + "must be non-empty without spaces, commas or slashes");

  int forms = 0;
  if (r.has("name")) {
    out.state = named_state(r.string("name"), r.where("name"));
    ++forms;
  }
  if (r.has("amplitudes")) {
    const Json& a = r.raw("amplitudes");
    auto amp = [&](std::size_t k) {
      if (!a.is_array() || a.size() != 2 || !a[k].is_array() || a[k].size() != 2 || !a[k][0].is_number() ||
          !a[k][1].is_number())
        throw ConfigError(r.where("amplitudes") + "expected [[re, im], [re, im]]");
      return cplx(a[k][0].get<double>(), a[k][1].get<double>());
    };
    try {
      out.state = PureState2::normalized(amp(0), amp(1));
    } catch (const InvalidArgument& e) {
      throw ConfigError(r.where("amplitudes") + e.what());
    }
    ++forms;
  }
  if (r.has("bloch")) {
    const Json& b = r.raw("bloch");
    if (!b.is_array() || b.size() != 3 || !b[0].is_number() || !b[1].is_number() || !b[2].is_number())
      throw ConfigError(r.where("bloch") + "expected [x, y, z]");
    const BlochVector v{b[0].get<double>(), b[1].get<double>(), b[2].get<double>()};
    if (std::abs(v.norm() - 1.0) > 1e-9) throw ConfigError(r.where("bloch") + "pure states need a unit Bloch vector");
    out.state = state_from_bloch(v);
    ++forms;
  }
  const auto theta = r.angle("theta");
  const auto tau = r.time("tau");
  const auto phi = r.angle("phi");
  if (theta || tau) {
    if (theta && tau) throw ConfigError(r.where("tau_us") + "conflicts with theta");
    if (!phi) throw ConfigError(r.where("phi_rad") + "missing");
    double angle = 0.0;
    if (theta) {
      angle = *theta;
    } else {
      if (!prep_rabi) throw ConfigError(r.where("tau_us") + "needs state_prep.rabi_* to be set");
      angle = *prep_rabi * *tau;
    }
    out.state = prepare_state(angle, *phi);
    ++forms;
  } else if (phi) {
    throw ConfigError(r.where("phi_rad") + "given without theta or tau");
  }
  if (forms != 1) throw ConfigError(path + ": give exactly one of name, amplitudes, bloch, theta/phi, tau/phi");
  r.finish();
  return out;
}

inline ChiMethod parse_method(const std::string& name, const std::string& where) {
  if (name == "extrema_mean") return ChiMethod::ExtremaMean;
  if (name == "positive_sum") return ChiMethod::PositiveSum;
  throw ConfigError(where + "expected \"extrema_mean\" or \"positive_sum\"");
}

inline NoiseMode parse_noise_mode(const std::string& name, const std::string& where) {
  if (name == "bloch_shots") return NoiseMode::BlochShots;
  if (name == "td_binomial") return NoiseMode::TdBinomial;
  throw ConfigError(where + "expected \"bloch_shots\" or \"td_binomial\"");
}

}  // namespace detail

inline const char* method_name(ChiMethod m) { return m == ChiMethod::ExtremaMean ? "extrema_mean" : "positive_sum"; }
inline const char* noise_mode_name(NoiseMode m) { return m == NoiseMode::BlochShots ? "bloch_shots" : "td_binomial"; }

inline RunConfig parse_config(const Json& doc) {
  // A manifest embeds the configuration it was produced from.
  if (doc.is_object() && doc.contains("config") && doc.contains("config_hash")) return parse_config(doc.at("config"));

  detail::ObjectReader r(doc, "");
  RunConfig cfg;
  cfg.document = doc;

  if (!r.has("model")) throw ConfigError("model: missing");
  cfg.model = detail::parse_model(r.raw("model"));

  std::optional<double> prep_rabi;
  if (r.has("state_prep")) {
    detail::ObjectReader sp(r.raw("state_prep"), "state_prep");
    prep_rabi = sp.required_frequency("rabi");
    sp.finish();
  }
  if (r.has("initial_states")) {
    const Json& list = r.raw("initial_states");
    if (!list.is_array()) throw ConfigError("initial_states: must be an array");
    for (std::size_t k = 0; k < list.size(); ++k) cfg.initial_states.push_back(detail::parse_state(list[k], k, prep_rabi));
    for (std::size_t i = 0; i < cfg.initial_states.size(); ++i)
      for (std::size_t j = i + 1; j < cfg.initial_states.size(); ++j)
        if (cfg.initial_states[i].label == cfg.initial_states[j].label)
          throw ConfigError("initial_states: duplicate label \"" + cfg.initial_states[i].label + "\"");
  }

  if (!r.has("time_grid")) throw ConfigError("time_grid: missing");
  {
    detail::ObjectReader tg(r.raw("time_grid"), "time_grid");
    cfg.time_grid.t_start = tg.time("t_start").value_or(0.0);
    const auto t_end = tg.time("t_end");
    if (!t_end) throw ConfigError("time_grid.t_end_us: missing");
    cfg.time_grid.t_end = *t_end;
    const long n = tg.integer("n_points");
    if (n < 2) throw ConfigError("time_grid.n_points: must be >= 2");
    cfg.time_grid.n_points = static_cast<std::size_t>(n);
    tg.finish();
    cfg.time_grid.validate();
  }
  cfg.time_offset = r.time("time_offset").value_or(0.0);

  if (r.has("noise")) {
    detail::ObjectReader nz(r.raw("noise"), "noise");
    NoiseConfig noise;
    noise.mode = detail::parse_noise_mode(nz.string("mode", "bloch_shots"), nz.where("mode"));
    noise.shots = nz.integer("shots", noise.shots);
    noise.seed = nz.unsigned_integer("seed", 0);
    nz.finish();
    if (noise.shots < 1) throw ConfigError("noise.shots: must be >= 1");
    cfg.noise = noise;
  }
  if (r.has("loess")) {
    detail::ObjectReader lo(r.raw("loess"), "loess");
    cfg.loess.degree = static_cast<int>(lo.integer("degree", 2));
    cfg.loess.robustness_iterations = static_cast<int>(lo.integer("robustness_iterations", 0));
    lo.finish();
    try {
      cfg.loess.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("loess: ") + e.what());
    }
  }
  if (r.has("plateau")) {
    detail::ObjectReader pl(r.raw("plateau"), "plateau");
    cfg.plateau.eps_abs = pl.number("eps_abs", cfg.plateau.eps_abs);
    const long len = pl.integer("min_length", static_cast<long>(cfg.plateau.min_length));
    const long steps = pl.integer("s_steps", static_cast<long>(cfg.s_steps));
    pl.finish();
    if (!(cfg.plateau.eps_abs > 0.0)) throw ConfigError("plateau.eps_abs: must be positive");
    if (len < 2) throw ConfigError("plateau.min_length: must be >= 2");
    if (steps < 1) throw ConfigError("plateau.s_steps: must be >= 1");
    cfg.plateau.min_length = static_cast<std::size_t>(len);
    cfg.s_steps = static_cast<std::size_t>(steps);
  }
  if (r.has("chi")) {
    detail::ObjectReader ch(r.raw("chi"), "chi");
    cfg.chi.method = detail::parse_method(ch.string("method", "extrema_mean"), ch.where("method"));
    cfg.chi.amplitude_threshold = ch.number("amplitude_threshold", cfg.chi.amplitude_threshold);
    cfg.chi.range_fraction = ch.number("range_fraction", cfg.chi.range_fraction);
    ch.finish();
    if (!(cfg.chi.amplitude_threshold > 0.0)) throw ConfigError("chi.amplitude_threshold: must be positive");
    if (!(cfg.chi.range_fraction >= 0.0 && cfg.chi.range_fraction < 1.0))
      throw ConfigError("chi.range_fraction: must lie in [0, 1)");
  }
  if (r.has("fock_check")) {
    detail::ObjectReader fc(r.raw("fock_check"), "fock_check");
    const Json& list = fc.raw("mean_phonons");
    if (!list.is_array() || list.empty()) throw ConfigError("fock_check.mean_phonons: must be a non-empty array");
    for (const auto& v : list) {
      if (!v.is_number() || !(v.get<double>() >= 0.0))
        throw ConfigError("fock_check.mean_phonons: entries must be numbers >= 0");
      cfg.fock_check_phonons.push_back(v.get<double>());
    }
    fc.finish();
  }
  if (r.has("output_dir")) cfg.output_dir = r.string("output_dir");
  r.finish();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, column = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(column) + ": invalid JSON");
  }
  try {
    return parse_config(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + std::string(e.what()).substr(std::string("ConfigError: ").size()));
  }
}

// Model parameters in rad/us as used by the simulation.
inline Json resolved_parameters(const RunConfig& cfg) {
  Json out;
  if (const auto* mp = std::get_if<ModelParams>(&cfg.model)) {
    out["type"] = "two_qubit";
    out["omega_sys_rad_per_us"] = mp->omega_sys();
    out["omega_res_rad_per_us"] = mp->omega_res();
    out["coupling_rad_per_us"] = mp->coupling();
    out["detuning_rad_per_us"] = mp->detuning();
    out["exchange_frequency_rad_per_us"] = mp->exchange_frequency();
  } else {
    const auto& ion = std::get<IonModel>(cfg.model);
    out["type"] = "ion";
    out["rabi_rad_per_us"] = ion.params.rabi;
    out["motional_rad_per_us"] = ion.params.motional;
    out["lamb_dicke"] = ion.params.lamb_dicke;
    out["laser_phase_rad"] = ion.params.laser_phase;
    out["fock_cutoff"] = ion.params.fock_cutoff;
    out["mean_phonons"] = ion.mean_phonons;
    out["model_coupling_rad_per_us"] = ion.params.rabi * ion.params.lamb_dicke;
  }
  Json states = Json::array();
  for (const auto& s : cfg.initial_states) {
    const auto v = bloch_from_state(s.state);
    states.push_back({{"label", s.label}, {"bloch", {v.x, v.y, v.z}}});
  }
  out["initial_states"] = states;
  out["time_grid"] = {{"t_start_us", cfg.time_grid.t_start},
                      {"t_end_us", cfg.time_grid.t_end},
                      {"n_points", cfg.time_grid.n_points}};
  out["time_offset_us"] = cfg.time_offset;
  return out;
}

}  // namespace nmq
