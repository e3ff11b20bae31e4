#pragma once

// Laser-driven trapped ion: internal qubit coupled to one motional mode on a
// truncated Fock ladder. Joint basis index = qubit * (n_max + 1) + n.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "qmodel.hpp"

namespace nmq {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

struct IonParams {
  double rabi = 0.0;         // Omega [rad/us]
  double motional = 0.0;     // omega [rad/us]
  double lamb_dicke = 0.0;   // eta
  double laser_phase = 0.0;  // phi [rad]
  int fock_cutoff = 10;      // n_max

  int levels() const { return fock_cutoff + 1; }
  int dim() const { return 2 * levels(); }

  void validate() const {
    if (!std::isfinite(rabi) || !std::isfinite(motional) || !std::isfinite(laser_phase))
      throw InvalidArgument("ion frequencies and phase must be finite");
    if (!(lamb_dicke >= 0.0 && lamb_dicke < 1.0)) throw InvalidArgument("Lamb-Dicke parameter must lie in [0, 1)");
    if (fock_cutoff < 2) throw InvalidArgument("Fock cutoff must be at least 2");
  }
};

struct PhononDistribution {
  std::vector<double> p;

  double mean() const {
    double m = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) m += static_cast<double>(n) * p[n];
    return m;
  }

  void validate() const {
    double total = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw InvalidArgument("phonon probabilities must be non-negative");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("phonon probabilities must sum to 1");
  }
};

struct IonSimulation {
  Trajectory trajectory;
  // fock_populations[m][n]: population of Fock level n at times[m].
  std::vector<std::vector<double>> fock_populations;
};

struct IonOptions {
  double dt = 0.0;  // RK4 step; 0 selects 2 pi / (400 max(omega, Omega))
  unsigned threads = 1;
};

// ---------------------------------------------------------------------------

inline ComplexMatrix build_ion_hamiltonian(const IonParams& p) {
  p.validate();
  const int levels = p.levels();

  ComplexMatrix position = ComplexMatrix::Zero(levels, levels);  // a + a^dagger
  for (int n = 1; n < levels; ++n) position(n - 1, n) = position(n, n - 1) = std::sqrt(static_cast<double>(n));
  const ComplexMatrix displacement = (cplx(0.0, p.lamb_dicke) * position).exp();

  ComplexMatrix h = ComplexMatrix::Zero(p.dim(), p.dim());
  for (int n = 0; n < levels; ++n) {
    h(n, n) = p.motional * n;
    h(levels + n, levels + n) = p.motional * n;
  }
  // sigma_+ = |1><0| carries e^{i eta (a + a^dagger) - i phi}
  const ComplexMatrix raise = (0.5 * p.rabi) * std::polar(1.0, -p.laser_phase) * displacement;
  h.block(levels, 0, levels, levels) = raise;
  h.block(0, levels, levels, levels) = raise.adjoint();
  return h;
}

inline ModelParams ion_to_model(const IonParams& p) {
  p.validate();
  return ModelParams(p.rabi, p.motional, p.rabi * p.lamb_dicke);
}

// In the Lamb-Dicke limit the ion qubit follows the two-qubit model with the
// motional mode as reservoir, once its Bloch vector is expressed in the
// laser-dressed frame: model (x, y, z) = lab (z, -y, -x).
inline BlochVector lab_to_model_frame(const BlochVector& v) { return {v.z, -v.y, -v.x}; }
inline BlochVector model_to_lab_frame(const BlochVector& v) { return {-v.z, -v.y, v.x}; }

// p(n) = nbar^n / (1 + nbar)^(n + 1), renormalized over n = 0..n_max.
inline PhononDistribution thermal_distribution(double nbar, int n_max) {
  if (!(nbar >= 0.0) || !std::isfinite(nbar)) throw InvalidArgument("mean phonon number must be >= 0");
  if (n_max < 0) throw InvalidArgument("Fock cutoff must be non-negative");
  PhononDistribution dist;
  dist.p.resize(static_cast<std::size_t>(n_max) + 1);
  const double ratio = nbar / (1.0 + nbar);
  double term = 1.0 / (1.0 + nbar);
  double total = 0.0;
  for (auto& v : dist.p) {
    v = term;
    total += term;
    term *= ratio;
  }
  for (auto& v : dist.p) v /= total;
  return dist;
}

inline double ion_step_bound(const IonParams& p) {
  const double fastest = std::max(std::abs(p.motional), std::abs(p.rabi));
  return fastest > 0.0 ? kTwoPi / (200.0 * fastest) : std::numeric_limits<double>::infinity();
}

namespace detail {

struct FockRun {
  std::vector<Matrix2> rho;                  // per output time
  std::vector<std::vector<double>> fock;     // per output time
  std::vector<double> top;                   // per RK4 step, population of the two highest levels
};

inline FockRun run_fock_initial(const ComplexMatrix& minus_i_h, int levels, const PureState2& qubit0, int n0,
                                std::span<const double> times, double dt) {
  ComplexVector psi = ComplexVector::Zero(2 * levels);
  psi(n0) = qubit0.a;
  psi(levels + n0) = qubit0.b;

  auto top_population = [&](const ComplexVector& v) {
    double s = 0.0;
    for (int n = levels - 2; n < levels; ++n) s += std::norm(v(n)) + std::norm(v(levels + n));
    return s / v.squaredNorm();
  };

  FockRun run;
  run.rho.reserve(times.size());
  run.fock.reserve(times.size());
  double t = 0.0;
  for (double target : times) {
    const double span = target - t;
    const auto steps = static_cast<long>(std::ceil(std::abs(span) / dt));
    if (steps > 0) {
      const double h = span / static_cast<double>(steps);
      for (long k = 0; k < steps; ++k) {
        const ComplexVector k1 = minus_i_h * psi;
        const ComplexVector k2 = minus_i_h * (psi + 0.5 * h * k1);
        const ComplexVector k3 = minus_i_h * (psi + 0.5 * h * k2);
        const ComplexVector k4 = minus_i_h * (psi + h * k3);
        psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        run.top.push_back(top_population(psi));
      }
      psi.normalize();
    } else {
      run.top.push_back(top_population(psi));
    }
    t = target;

    Matrix2 rho;
    for (int q = 0; q < 2; ++q)
      for (int qp = 0; qp < 2; ++qp)
        rho(q, qp) = psi.segment(qp * levels, levels).dot(psi.segment(q * levels, levels));
    run.rho.push_back(rho);

    std::vector<double> pops(static_cast<std::size_t>(levels));
    for (int n = 0; n < levels; ++n) pops[n] = std::norm(psi(n)) + std::norm(psi(levels + n));
    run.fock.push_back(std::move(pops));
  }
  return run;
}

}  // namespace detail

// Thermal (diagonal) phonon states are simulated as the probability-weighted
// mixture of independent runs starting from |qubit0>|n>.
inline IonSimulation simulate_ion(const IonParams& params, const PureState2& qubit0,
                                  const PhononDistribution& phonons, std::span<const double> times,
                                  const IonOptions& opts = {}) {
  params.validate();
  qubit0.validate();
  phonons.validate();
  detail::check_times(times);
  const int levels = params.levels();
  if (phonons.p.size() != static_cast<std::size_t>(levels))
    throw InvalidArgument("phonon distribution length must equal n_max + 1");
  if (!(phonons.p.back() < 1e-8))
    throw TruncationOverflow("initial population of Fock level n_max is not below 1e-8; raise fock_cutoff");

  const double bound = ion_step_bound(params);
  double dt = opts.dt > 0.0 ? opts.dt : 0.5 * bound;
  if (dt > bound * (1.0 + 1e-12)) throw StepTooLarge("ion RK4 step exceeds 2 pi / (200 max(omega, Omega))");
  if (!std::isfinite(dt)) dt = std::max(1.0, times.back() - times.front());

  const ComplexMatrix minus_i_h = cplx(0.0, -1.0) * build_ion_hamiltonian(params);

  std::vector<int> active;
  for (int n = 0; n < levels; ++n)
    if (phonons.p[n] > 0.0) active.push_back(n);

  std::vector<detail::FockRun> runs(active.size());
  parallel_for(active.size(), opts.threads, [&](std::size_t k) {
    runs[k] = detail::run_fock_initial(minus_i_h, levels, qubit0, active[k], times, dt);
  });

  // Truncation guard on the mixture, checked at every integration step.
  const std::size_t steps = runs.front().top.size();
  for (std::size_t s = 0; s < steps; ++s) {
    double top = 0.0;
    for (std::size_t k = 0; k < runs.size(); ++k) top += phonons.p[active[k]] * runs[k].top[s];
    if (top > 1e-6)
      throw TruncationOverflow("population of the two highest Fock levels reached " + std::to_string(top) +
                               " (> 1e-6); raise fock_cutoff");
  }

  IonSimulation out;
  out.trajectory.times.assign(times.begin(), times.end());
  out.fock_populations.assign(times.size(), std::vector<double>(static_cast<std::size_t>(levels), 0.0));
  for (std::size_t m = 0; m < times.size(); ++m) {
    Matrix2 rho = Matrix2::Zero();
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const double w = phonons.p[active[k]];
      rho += w * runs[k].rho[m];
      for (int n = 0; n < levels; ++n) out.fock_populations[m][n] += w * runs[k].fock[m][n];
    }
    DensityMatrix2 reduced(rho);
    reduced.validate();
    out.trajectory.points.push_back(bloch_from_rho(reduced));
  }
  return out;
}

struct FockOccupation {
  std::vector<double> max_by_level;  // max over time of population in level n
  double max_excited = 0.0;          // max over time of total population in n >= 2
};

inline FockOccupation fock_occupation_maxima(const IonSimulation& sim) {
  FockOccupation occ;
  if (sim.fock_populations.empty()) return occ;
  occ.max_by_level.assign(sim.fock_populations.front().size(), 0.0);
  for (const auto& pops : sim.fock_populations) {
    double excited = 0.0;
    for (std::size_t n = 0; n < pops.size(); ++n) {
      occ.max_by_level[n] = std::max(occ.max_by_level[n], pops[n]);
      if (n >= 2) excited += pops[n];
    }
    occ.max_excited = std::max(occ.max_excited, excited);
  }
  return occ;
}

// Samples t = 0, dt, 2 dt, ... up to t_end and reports Fock-level maxima.
inline FockOccupation max_fock_occupation(const IonParams& params, double nbar, double t_end, double dt,
                                          const PureState2& qubit0 = {}, const IonOptions& opts = {}) {
  if (!(t_end > 0.0) || !(dt > 0.0)) throw InvalidArgument("t_end and dt must be positive");
  const auto count = static_cast<std::size_t>(std::floor(t_end / dt + 1e-9)) + 1;
  std::vector<double> times(count);
  for (std::size_t m = 0; m < count; ++m) times[m] = dt * static_cast<double>(m);
  const auto sim = simulate_ion(params, qubit0, thermal_distribution(nbar, params.fock_cutoff), times, opts);
  return fock_occupation_maxima(sim);
}

}  // namespace nmq
