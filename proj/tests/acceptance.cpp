// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "nmq/cli.hpp"
#include "nmq/ionmodel.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace nmq;
using namespace nmq::test;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (pass) detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// Criterion 1
Outcome transmon_analytic() {
  Outcome o;
  const ModelParams p(kTwoPi * 96.0, 0.0, kTwoPi * 219.0);
  const double chi = analytic_chi(p);
  o.require(std::abs(chi - 0.8388) <= 0.005, "chi = " + fmt(chi));
  o.note("chi = " + fmt(chi));
  return o;
}

// Criterion 2
Outcome resonance_maximum() {
  Outcome o;
  const ModelParams p(kTwoPi * 0.591, kTwoPi * 0.591, kTwoPi * 0.074);
  o.require(analytic_chi(p) == 1.0, "analytic chi = " + fmt(analytic_chi(p), 17));
  const auto times = linspace(0.0, 3.0 * kTwoPi / p.exchange_frequency(), 1201);
  const auto series = series_from_trajectories(evolve(p, {1, 0}, times), evolve(p, {0, 1}, times));
  const double chi = chi_per_oscillation(series);
  o.require(std::abs(chi - 1.0) <= 1e-3, "pipeline chi = " + fmt(chi));
  o.note("pipeline chi = " + fmt(chi, 8));
  return o;
}

// Criterion 3
Outcome analytic_numeric() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_td = 0.0, worst_rk4 = 0.0;
  for (int set = 0; set < 50; ++set) {
    const ModelParams p = random_params(rng);
    for (int k = 0; k < 20; ++k) {
      const OrthogonalPairSpec pair{u(rng), kTwoPi * u(rng)};
      const std::vector<double> t{50.0 * u(rng)};
      const auto [a, b] = pair.states();
      const double sim = trace_distance_bloch(evolve(p, a, t).points[0], evolve(p, b, t).points[0]);
      worst_td = std::max(worst_td, std::abs(sim - analytic_D_pair(p, pair, t[0])));
    }
    const double top = std::max({p.exchange_frequency(), std::abs(p.omega_sys() + p.omega_res()), 1e-3});
    const double dt = std::min(rk4_step_bound(p), kTwoPi / (400.0 * top));
    const auto times = linspace(0.0, 10.0 * kTwoPi / p.exchange_frequency(), 101);
    const PureState2 psi = random_state(rng);
    worst_rk4 = std::max(worst_rk4, max_component_gap(evolve(p, psi, times), rk4_evolve(p, psi, times, dt)));
  }
  o.require(worst_td <= 1e-9, "trace distance gap " + fmt(worst_td));
  o.require(worst_rk4 <= 1e-6, "RK4 gap " + fmt(worst_rk4));
  o.note("max trace-distance gap " + fmt(worst_td, 3) + ", max RK4 gap " + fmt(worst_rk4, 3));
  return o;
}

// Criterion 4
Outcome optimal_pair() {
  Outcome o;
  std::mt19937_64 rng(44);
  int hits = 0;
  for (int set = 0; set < 20; ++set) {
    ModelParams p = random_params(rng);
    while (std::abs(p.detuning()) < 0.1) p = random_params(rng);
    const auto times = linspace(0.0, 3.0 * kTwoPi / p.exchange_frequency(), 1201);
    const auto best = optimal_pair_search(p, times, 21);
    if (best.pair.amplitude_A == 0.0) ++hits;
    else o.require(false, "set " + std::to_string(set) + " argmax A = " + fmt(best.pair.amplitude_A));
  }
  o.note(std::to_string(hits) + "/20 parameter sets peak at A = 0");
  return o;
}

// Criterion 5
Outcome regularization_replication() {
  Outcome o;
  const auto clean = ion_pair_series();
  const auto reference = regularize_one(clean);
  if (!reference.sweep.chi_regularized) {
    o.require(false, "noiseless sweep has no plateau");
    return o;
  }
  const double chi0_clean = *reference.chi_raw, plateau_clean = *reference.sweep.chi_regularized;
  double previous = std::numeric_limits<double>::infinity();
  std::string summary = "noiseless chi(0) " + fmt(chi0_clean, 4) + ", plateau " + fmt(plateau_clean, 4);
  for (long shots : {100L, 1000L, 10000L}) {
    const auto rep = regularize_one(binomial_noise(clean, shots, 1));
    const std::string tag = "N=" + std::to_string(shots);
    o.require(rep.chi_raw && *rep.chi_raw > chi0_clean, tag + ": chi(0) not above noiseless");
    o.require(rep.chi_raw && *rep.chi_raw < previous, tag + ": chi(0) not decreasing with N");
    if (rep.chi_raw) previous = *rep.chi_raw;
    if (!rep.sweep.chi_regularized) {
      o.require(false, tag + ": no plateau (" + rep.error.value_or("") + ")");
      continue;
    }
    const double rel = *rep.sweep.chi_regularized / plateau_clean - 1.0;
    o.require(std::abs(rel) <= 0.05, tag + ": plateau off by " + fmt(100.0 * rel, 3) + "%");
    summary += "; " + tag + " chi(0) " + fmt(*rep.chi_raw, 4) + ", plateau " + fmt(*rep.sweep.chi_regularized, 4);
  }
  o.note(summary);
  return o;
}

// Criterion 6
Outcome loess_correctness() {
  Outcome o;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0), step(0.2, 1.8);
  auto times = [&](std::size_t n) {
    std::vector<double> t(n);
    for (std::size_t i = 1; i < n; ++i) t[i] = t[i - 1] + step(rng);
    return t;
  };
  double worst_fixed = 0.0, worst_linear = 0.0;
  for (double s : {0.0, 0.03, 0.1, 0.25, 0.5, 0.75, 1.0}) {
    LoessConfig cfg;
    cfg.span_fraction = s;
    const auto t = times(90);
    const double c0 = u(rng), c1 = 0.1 * u(rng), c2 = 1e-3 * u(rng);
    std::vector<double> constant(t.size(), 0.42), quad;
    for (double x : t) quad.push_back(c0 + c1 * x + c2 * x * x);
    const TraceDistanceSeries cs(t, constant);
    const auto smoothed = loess_smooth(cs, cfg);
    for (double v : smoothed.values()) worst_fixed = std::max(worst_fixed, std::abs(v - 0.42));
    const auto fit = loess_fit(t, quad, cfg);
    for (std::size_t i = 0; i < t.size(); ++i) worst_fixed = std::max(worst_fixed, std::abs(fit[i] - quad[i]));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10 + static_cast<std::size_t>(trial);
    const auto t = times(n);
    std::vector<double> d1(n), d2(n), mix(n);
    const double a = u(rng), b = u(rng);
    for (std::size_t i = 0; i < n; ++i) {
      d1[i] = u(rng);
      d2[i] = u(rng);
      mix[i] = a * d1[i] + b * d2[i];
    }
    LoessConfig cfg;
    cfg.span_fraction = 0.01 * (trial + 1);
    const auto f1 = loess_fit(t, d1, cfg), f2 = loess_fit(t, d2, cfg), fm = loess_fit(t, mix, cfg);
    for (std::size_t i = 0; i < n; ++i) worst_linear = std::max(worst_linear, std::abs(fm[i] - a * f1[i] - b * f2[i]));
  }
  o.require(worst_fixed <= 1e-9, "fixed-point gap " + fmt(worst_fixed));
  o.require(worst_linear <= 1e-12, "linearity gap " + fmt(worst_linear));
  o.note("fixed-point gap " + fmt(worst_fixed, 3) + ", linearity gap " + fmt(worst_linear, 3));
  return o;
}

// Criterion 7
Outcome error_propagation() {
  Outcome o;
  const std::size_t draws = 100000;
  double worst = 0.0;
  for (long shots : {100L, 500L})
    for (double v : {0.0, 0.5, -0.5, 0.9, -0.9}) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t m = 0; m < draws; ++m) {
        const double x = estimate_component(v, shots, 77, static_cast<std::uint64_t>(shots), m, 0);
        sum += x;
        sq += x * x;
      }
      const double mean = sum / draws;
      const double sd = std::sqrt((sq - draws * mean * mean) / (draws - 1));
      const double rel = sd / delta_v(v, shots) - 1.0;
      worst = std::max(worst, std::abs(rel));
      o.require(std::abs(rel) <= 0.03,
                "N=" + std::to_string(shots) + " v=" + fmt(v, 2) + ": sd off by " + fmt(100.0 * rel, 3) + "%");
    }
  o.note("worst relative deviation " + fmt(100.0 * worst, 3) + "%");
  return o;
}

// Criterion 8
Outcome ion_qubit_approximation() {
  Outcome o;
  const double trap = kTwoPi * 0.591;
  const IonParams ion10{trap, trap, 74.0 / 591.0, 0.0, 10}, ion14{trap, trap, 74.0 / 591.0, 0.0, 14};
  const auto times = linspace(0.0, 50.0, 501);
  const double theta = kTwoPi * 0.1875 * 3.71;
  double worst_excited = 0.0, worst_gap = 0.0, worst_occ_gap = 0.0;
  for (const PureState2& s : {PureState2{}, PureState2{0.0, 1.0}, prepare_state(theta, 0.5 * std::numbers::pi),
                              prepare_state(theta, -0.168 * std::numbers::pi)}) {
    const auto a = simulate_ion(ion10, s, thermal_distribution(0.02, 10), times);
    const auto b = simulate_ion(ion14, s, thermal_distribution(0.02, 14), times);
    const auto occ_a = fock_occupation_maxima(a), occ_b = fock_occupation_maxima(b);
    worst_excited = std::max(worst_excited, occ_a.max_excited);
    worst_gap = std::max(worst_gap, max_component_gap(a.trajectory, b.trajectory));
    worst_occ_gap = std::max(worst_occ_gap, std::abs(occ_a.max_excited - occ_b.max_excited));
  }
  o.require(worst_excited < 0.02, "max occupation of n >= 2 is " + fmt(worst_excited));
  o.require(worst_gap <= 1e-6, "n_max 10 vs 14 Bloch gap " + fmt(worst_gap));
  o.require(worst_occ_gap <= 1e-6, "n_max 10 vs 14 occupation gap " + fmt(worst_occ_gap));
  o.note("max occupation of n >= 2 " + fmt(worst_excited, 3) + ", cutoff gaps " + fmt(worst_gap, 3) + " / " +
         fmt(worst_occ_gap, 3));
  return o;
}

// Criterion 9
int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nmq");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[e.path().filename().string()] = ss.str();
  }
  return files;
}

Outcome determinism() {
  Outcome o;
  const fs::path configs = NMQ_CONFIG_DIR;
  const fs::path root = fs::temp_directory_path() / "nmq_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  {
    std::ifstream in(configs / "ion.json");
    Json ion = Json::parse(in);
    ion["noise"] = {{"mode", "bloch_shots"}, {"shots", 100}, {"seed", 3}};
    std::ofstream(root / "ion_noisy.json") << ion.dump(2);
  }
  const std::string transmon = (configs / "transmon.json").string(), pair_noise = (configs / "ion_pair_noise.json").string(),
                    ion = (configs / "ion.json").string(), ion_noisy = (root / "ion_noisy.json").string();

  // Upstream artifacts shared by the file-based commands.
  const fs::path sim = root / "sim";
  o.require(run_cli({"--config", transmon, "--out", sim.string(), "simulate"}) == 0, "simulate failed");
  const std::string t1 = (sim / "traj_1.csv").string(), t2 = (sim / "traj_2.csv").string();
  o.require(run_cli({"--out", (root / "td").string(), "distance", t1, t2}) == 0, "distance failed");
  const std::string td = (root / "td" / "td_1-2.csv").string();

  const std::vector<std::pair<std::string, std::vector<std::string>>> pipelines{
      {"simulate", {"--config", transmon, "--svg", "simulate"}},
      {"ion-simulate", {"--config", ion, "ion-simulate"}},
      {"fock-check", {"--config", ion, "fock-check"}},
      {"distance", {"distance", t1, t2}},
      {"noise", {"--seed", "5", "noise", "--shots", "200", t1, t2, td}},
      {"measure", {"measure", td}},
      {"sweep", {"sweep", td}},
      {"regularize transmon", {"--config", transmon, "regularize"}},
      {"regularize ion pair noise", {"--config", pair_noise, "--svg", "regularize"}},
      {"regularize ion noisy", {"--config", ion_noisy, "regularize"}},
  };
  std::size_t checked = 0;
  for (const auto& [name, args] : pipelines) {
    std::vector<std::map<std::string, std::string>> runs;
    for (const auto& [tag, threads] : {std::pair{"a", "1"}, std::pair{"b", "1"}, std::pair{"c", "8"}}) {
      const fs::path dir = root / (name + "_" + tag);
      std::vector<std::string> full{"--threads", threads, "--out", dir.string()};
      full.insert(full.end(), args.begin(), args.end());
      const int code = run_cli(full);
      o.require(code == 0, name + " exited " + std::to_string(code));
      runs.push_back(snapshot(dir));
    }
    o.require(!runs[0].empty(), name + " wrote nothing");
    o.require(runs[0] == runs[1], name + ": rerun differs");
    o.require(runs[0] == runs[2], name + ": 8 threads differ from 1");
    for (const auto& f : runs[0]) checked += f.second.size() > 0;
  }
  fs::remove_all(root);
  o.note(std::to_string(pipelines.size()) + " pipelines, " + std::to_string(checked) +
         " artifacts identical across reruns and 1/8 threads");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> check;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "analytic measure per oscillation for the transmon", 1e-3, transmon_analytic},
      {2, "resonance maximum", 1.0, resonance_maximum},
      {3, "analytic-numeric equivalence", 30.0, analytic_numeric},
      {4, "optimal pair at A = 0", 60.0, optimal_pair},
      {5, "regularization under binomial noise", 120.0, regularization_replication},
      {6, "Loess correctness", 10.0, loess_correctness},
      {7, "shot-noise error propagation", 30.0, error_propagation},
      {8, "ion qubit approximation", 120.0, ion_qubit_approximation},
      {9, "determinism", 60.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.limit_s) o.require(false, "runtime " + fmt(seconds, 3) + " s exceeds " + fmt(c.limit_s) + " s");
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %d: %s [%.3f s] %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, seconds, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
