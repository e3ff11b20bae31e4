#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "nmq/qmodel.hpp"

namespace nmq::test {

inline ModelParams random_params(std::mt19937_64& rng, bool resonant = false) {
  std::uniform_real_distribution<double> freq(-3.0, 3.0), coupling(0.2, 2.0);
  const double omega_res = freq(rng);
  const double delta = resonant ? 0.0 : freq(rng);
  return ModelParams(omega_res + delta, omega_res, coupling(rng));
}

inline PureState2 random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return PureState2::normalized({n(rng), n(rng)}, {n(rng), n(rng)});
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

template <class M>
double max_abs(const M& m) {
  return m.cwiseAbs().maxCoeff();
}

inline double max_component_gap(const Trajectory& a, const Trajectory& b) {
  double worst = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    const auto& u = a.points[m];
    const auto& v = b.points[m];
    worst = std::max({worst, std::abs(u.x - v.x), std::abs(u.y - v.y), std::abs(u.z - v.z)});
  }
  return worst;
}

}  // namespace nmq::test
