#pragma once

// Exact dynamics of a system qubit exchanging excitations with a single
// reservoir qubit. Basis order is |sys res> = {|00>, |01>, |10>, |11>},
// sigma_z|0> = +|0>, hbar = 1, all frequencies angular.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace nmq {

using cplx = std::complex<double>;
using Matrix2 = Eigen::Matrix2cd;
using Matrix4 = Eigen::Matrix4cd;
using Vector4 = Eigen::Vector4cd;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

class ModelParams {
public:
  ModelParams(double omega_sys, double omega_res, double coupling)
      : omega_sys_(omega_sys), omega_res_(omega_res), coupling_(coupling) {
    if (!std::isfinite(omega_sys) || !std::isfinite(omega_res) || !std::isfinite(coupling))
      throw InvalidArgument("model frequencies must be finite");
    if (coupling < 0.0) throw InvalidArgument("coupling g must be non-negative");
  }

  double omega_sys() const { return omega_sys_; }
  double omega_res() const { return omega_res_; }
  double coupling() const { return coupling_; }
  double detuning() const { return omega_sys_ - omega_res_; }

  // sqrt(g^2 + Delta^2): angular frequency of the trace-distance oscillation.
  double exchange_frequency() const { return std::hypot(coupling_, detuning()); }

private:
  double omega_sys_;
  double omega_res_;
  double coupling_;
};

struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  friend bool operator==(const BlochVector&, const BlochVector&) = default;
};

struct PureState2 {
  cplx a{1.0, 0.0};  // amplitude of |0>
  cplx b{0.0, 0.0};  // amplitude of |1>

  static PureState2 normalized(cplx a, cplx b) {
    const double n = std::sqrt(std::norm(a) + std::norm(b));
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("state has zero or non-finite norm");
    return {a / n, b / n};
  }

  void validate() const {
    if (std::abs(std::norm(a) + std::norm(b) - 1.0) > 1e-12)
      throw InvalidArgument("pure state is not normalized");
  }
};

// psi0 = A|0> + B e^{i beta}|1>, psi1 = B|0> - A e^{i beta}|1>, B = sqrt(1 - A^2).
struct OrthogonalPairSpec {
  double amplitude_A = 0.0;
  double phase_beta = 0.0;

  void validate() const {
    if (!(amplitude_A >= 0.0 && amplitude_A <= 1.0)) throw InvalidArgument("A must lie in [0, 1]");
    if (!std::isfinite(phase_beta)) throw InvalidArgument("beta must be finite");
  }

  std::pair<PureState2, PureState2> states() const {
    validate();
    const double A = amplitude_A;
    const double B = std::sqrt(std::max(0.0, 1.0 - A * A));
    const cplx phase = std::polar(1.0, phase_beta);
    return {PureState2{A, B * phase}, PureState2{B, -A * phase}};
  }
};

class DensityMatrix2 {
public:
  explicit DensityMatrix2(const Matrix2& m) : m_(m) {}

  const Matrix2& matrix() const { return m_; }

  std::array<double, 2> eigenvalues() const {
    const double p = m_(0, 0).real();
    const double q = m_(1, 1).real();
    const double disc = std::sqrt((p - q) * (p - q) + 4.0 * std::norm(m_(0, 1)));
    return {0.5 * (p + q - disc), 0.5 * (p + q + disc)};
  }

  void validate() const {
    if (!m_.allFinite()) throw NonPhysical("density matrix has non-finite entries");
    if ((m_ - m_.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw NonPhysical("density matrix is not Hermitian");
    if (std::abs(m_.trace() - cplx(1.0)) > 1e-10) throw NonPhysical("density matrix trace differs from 1");
    if (eigenvalues()[0] < -1e-9) throw NonPhysical("density matrix has a negative eigenvalue");
  }

private:
  Matrix2 m_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<BlochVector> points;
  std::optional<long> shots;

  std::size_t size() const { return times.size(); }

  void validate() const {
    if (times.size() != points.size()) throw InvalidArgument("trajectory length mismatch");
    for (std::size_t m = 1; m < times.size(); ++m)
      if (!(times[m] > times[m - 1])) throw InvalidArgument("trajectory times must be strictly increasing");
    if (shots && *shots < 1) throw InvalidArgument("shot count must be positive");
  }
};

struct Eigensystem {
  std::array<double, 4> lambdas;
  Matrix4 S;
  Matrix4 S_inv;
};

// ---------------------------------------------------------------------------

inline Matrix4 build_hamiltonian(const ModelParams& p) {
  const double sum = p.omega_sys() + p.omega_res();
  const double delta = p.detuning();
  Matrix4 h = Matrix4::Zero();
  h(0, 0) = 0.5 * sum;
  h(1, 1) = 0.5 * delta;
  h(2, 2) = -0.5 * delta;
  h(3, 3) = -0.5 * sum;
  h(1, 2) = h(2, 1) = 0.5 * p.coupling();
  return h;
}

// Closed-form diagonalization. The inner columns are the (|01>, |10>)
// eigenvectors ((Delta - r)/g, 1) and ((Delta + r)/g, 1), r = sqrt(g^2 + Delta^2).
inline Eigensystem eigensystem(const ModelParams& p) {
  const double g = p.coupling();
  if (g == 0.0) throw DegenerateCoupling("S is singular at g = 0; use the diagonal propagator");
  const double delta = p.detuning();
  const double r = p.exchange_frequency();
  const double sum = p.omega_sys() + p.omega_res();

  Eigensystem es;
  es.lambdas = {0.5 * sum, -0.5 * r, 0.5 * r, -0.5 * sum};

  // (Delta - r)/g and (Delta + r)/g without cancellation.
  const double lower = delta >= 0.0 ? -g / (delta + r) : (delta - r) / g;
  const double upper = delta >= 0.0 ? (delta + r) / g : g / (r - delta);

  es.S = Matrix4::Zero();
  es.S(0, 0) = 1.0;
  es.S(3, 3) = 1.0;
  es.S(1, 1) = lower;
  es.S(1, 2) = upper;
  es.S(2, 1) = 1.0;
  es.S(2, 2) = 1.0;

  // Inverse of the inner block [[lower, upper], [1, 1]].
  const double det = lower - upper;
  es.S_inv = Matrix4::Zero();
  es.S_inv(0, 0) = 1.0;
  es.S_inv(3, 3) = 1.0;
  es.S_inv(1, 1) = 1.0 / det;
  es.S_inv(1, 2) = -upper / det;
  es.S_inv(2, 1) = -1.0 / det;
  es.S_inv(2, 2) = lower / det;
  return es;
}

// U(t) = S exp(-i Lambda t) S^-1, evaluated with the inner block collapsed to
// cos(r t/2) I - i sin(r t/2) (2/r) M. Identical algebraically, stays well
// conditioned as g -> 0 and reduces to the diagonal exponential at g = 0.
inline Matrix4 propagator(const ModelParams& p, double t) {
  const double sum = p.omega_sys() + p.omega_res();
  const double delta = p.detuning();
  const double g = p.coupling();
  const double r = p.exchange_frequency();

  const double c = std::cos(0.5 * r * t);
  // sin(r t / 2) / r, with the r -> 0 limit t/2.
  const double sinc = r > 0.0 ? std::sin(0.5 * r * t) / r : 0.5 * t;
  const cplx i(0.0, 1.0);

  Matrix4 u = Matrix4::Zero();
  u(0, 0) = std::polar(1.0, -0.5 * sum * t);
  u(3, 3) = std::polar(1.0, 0.5 * sum * t);
  u(1, 1) = c - i * sinc * delta;
  u(2, 2) = c + i * sinc * delta;
  u(1, 2) = u(2, 1) = -i * sinc * g;
  return u;
}

inline Vector4 product_state(const PureState2& sys) {
  // reservoir fixed to |0>
  Vector4 v = Vector4::Zero();
  v(0) = sys.a;
  v(2) = sys.b;
  return v;
}

// Partial trace over the reservoir qubit.
inline DensityMatrix2 reduce_to_system(const Vector4& psi) {
  Matrix2 rho;
  for (int s = 0; s < 2; ++s)
    for (int sp = 0; sp < 2; ++sp)
      rho(s, sp) = psi(2 * s) * std::conj(psi(2 * sp)) + psi(2 * s + 1) * std::conj(psi(2 * sp + 1));
  return DensityMatrix2(rho);
}

inline BlochVector bloch_from_rho(const DensityMatrix2& rho) {
  const Matrix2& m = rho.matrix();
  return {2.0 * m(1, 0).real(), 2.0 * m(1, 0).imag(), (m(0, 0) - m(1, 1)).real()};
}

inline DensityMatrix2 rho_from_bloch(const BlochVector& v) {
  if (v.norm() > 1.0 + 1e-9) throw NonPhysical("Bloch vector norm exceeds 1");
  Matrix2 m;
  m(0, 0) = 0.5 * (1.0 + v.z);
  m(1, 1) = 0.5 * (1.0 - v.z);
  m(1, 0) = cplx(0.5 * v.x, 0.5 * v.y);
  m(0, 1) = std::conj(m(1, 0));
  return DensityMatrix2(m);
}

inline BlochVector bloch_from_state(const PureState2& s) {
  const cplx coh = std::conj(s.a) * s.b;
  return {2.0 * coh.real(), 2.0 * coh.imag(), std::norm(s.a) - std::norm(s.b)};
}

// Pure state on the Bloch sphere pointing along v (|v| must be 1 up to 1e-9).
inline PureState2 state_from_bloch(const BlochVector& v) {
  const double n = v.norm();
  if (std::abs(n - 1.0) > 1e-9) throw InvalidArgument("pure state requires a unit Bloch vector");
  const double theta = std::acos(std::clamp(v.z / n, -1.0, 1.0));
  const double phi = std::atan2(v.y, v.x);
  return {std::cos(0.5 * theta), std::polar(std::sin(0.5 * theta), phi)};
}

inline Matrix2 rotation_gate(double theta, double phi) {
  const cplx i(0.0, 1.0);
  const double c = std::cos(0.5 * theta);
  const double s = std::sin(0.5 * theta);
  Matrix2 r;
  r(0, 0) = c;
  r(0, 1) = -i * std::polar(1.0, -phi) * s;
  r(1, 0) = -i * std::polar(1.0, phi) * s;
  r(1, 1) = c;
  return r;
}

// R_phi(theta)|0>.
inline PureState2 prepare_state(double theta, double phi) {
  const Matrix2 r = rotation_gate(theta, phi);
  return PureState2::normalized(r(0, 0), r(1, 0));
}

namespace detail {

inline void check_times(std::span<const double> times) {
  if (times.empty()) throw EmptyTimes("time list is empty");
  for (std::size_t m = 0; m < times.size(); ++m) {
    if (!std::isfinite(times[m])) throw InvalidArgument("times must be finite");
    if (m > 0 && !(times[m] > times[m - 1])) throw InvalidArgument("times must be strictly increasing");
  }
}

inline BlochVector record(const Vector4& psi) {
  DensityMatrix2 rho = reduce_to_system(psi);
  rho.validate();
  return bloch_from_rho(rho);
}

}  // namespace detail

inline Trajectory evolve(const ModelParams& p, const PureState2& psi0, std::span<const double> times) {
  psi0.validate();
  detail::check_times(times);
  const Vector4 start = product_state(psi0);
  Trajectory traj;
  traj.times.assign(times.begin(), times.end());
  traj.points.reserve(times.size());
  for (double t : times) traj.points.push_back(detail::record(propagator(p, t) * start));
  return traj;
}

// Largest admissible RK4 step: 200 steps per exchange period.
inline double rk4_step_bound(const ModelParams& p) {
  const double r = p.exchange_frequency();
  return r > 0.0 ? kTwoPi / (200.0 * r) : std::numeric_limits<double>::infinity();
}

// Fixed-step RK4 integration of i d(psi)/dt = H psi. Serves as an oracle for
// the closed-form propagator.
inline Trajectory rk4_evolve(const ModelParams& p, const PureState2& psi0, std::span<const double> times,
                             double dt_max) {
  psi0.validate();
  detail::check_times(times);
  if (!(dt_max > 0.0) || dt_max > rk4_step_bound(p) * (1.0 + 1e-12))
    throw StepTooLarge("dt_max must be positive and at most 2 pi / (200 sqrt(g^2 + Delta^2))");

  const Matrix4 minus_i_h = cplx(0.0, -1.0) * build_hamiltonian(p);
  Vector4 psi = product_state(psi0);
  double t = 0.0;

  Trajectory traj;
  traj.times.assign(times.begin(), times.end());
  traj.points.reserve(times.size());
  for (double target : times) {
    const double span = target - t;
    const auto steps = static_cast<long>(std::ceil(std::abs(span) / dt_max));
    if (steps > 0) {
      const double h = span / static_cast<double>(steps);
      for (long k = 0; k < steps; ++k) {
        const Vector4 k1 = minus_i_h * psi;
        const Vector4 k2 = minus_i_h * (psi + 0.5 * h * k1);
        const Vector4 k3 = minus_i_h * (psi + 0.5 * h * k2);
        const Vector4 k4 = minus_i_h * (psi + h * k3);
        psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      psi.normalize();
    }
    t = target;
    traj.points.push_back(detail::record(psi));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Closed-form trace distances and measures.

namespace detail {

inline double exchange_or_throw(const ModelParams& p) {
  const double r = p.exchange_frequency();
  if (!(r > 0.0)) throw DegenerateCoupling("g = Delta = 0: the trace distance is constant");
  return r;
}

}  // namespace detail

// Trace distance of the |0>, |1> pair.
inline double analytic_D_opt(const ModelParams& p, double t) {
  const double r = detail::exchange_or_throw(p);
  const double g = p.coupling();
  const double s = std::sin(0.5 * t * r);
  return 1.0 - g * g * s * s / (r * r);
}

inline double analytic_D_pair(const ModelParams& p, const OrthogonalPairSpec& pair, double t) {
  pair.validate();
  const double r = detail::exchange_or_throw(p);
  const double g2 = p.coupling() * p.coupling();
  const double d2 = p.detuning() * p.detuning();
  const double r2 = r * r;
  const double a2 = pair.amplitude_A * pair.amplitude_A;
  const double c = std::cos(0.5 * t * r);
  const double inner = d2 + g2 * c * c;
  const double first = (1.0 - 2.0 * a2) * (1.0 - 2.0 * a2) * inner * inner / (r2 * r2);
  const double second = 4.0 * a2 * (1.0 - a2) * inner / r2;
  return std::sqrt(first + second);
}

inline double analytic_chi(const ModelParams& p) {
  const double r = detail::exchange_or_throw(p);
  return p.coupling() * p.coupling() / (r * r);
}

inline double analytic_chi_pair(const ModelParams& p, const OrthogonalPairSpec& pair) {
  pair.validate();
  const double r = detail::exchange_or_throw(p);
  const double x = p.detuning() * p.detuning() / (r * r);
  const double a2 = pair.amplitude_A * pair.amplitude_A;
  return 1.0 - std::sqrt((1.0 - 2.0 * a2) * (1.0 - 2.0 * a2) * x * x + 4.0 * a2 * (1.0 - a2) * x);
}

}  // namespace nmq
