#pragma once

// Seeded measurement shot noise. Every (stream, time index, component) draw
// uses its own counter-addressed generator, so results do not depend on the
// order or the thread in which points are sampled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include "errors.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "qmodel.hpp"

namespace nmq {

enum class NoiseMode { BlochShots, TdBinomial };

struct NoiseConfig {
  long shots = 500;
  std::uint64_t seed = 0;
  NoiseMode mode = NoiseMode::BlochShots;

  void validate() const {
    if (shots < 1) throw InvalidArgument("shots must be >= 1");
  }
};

// SplitMix64; satisfies UniformRandomBitGenerator.
class SplitMix64 {
public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t x) { return SplitMix64(x)(); }

// Generator for one draw site.
inline SplitMix64 substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index, std::uint64_t component) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ stream);
  h = mix64(h ^ index);
  h = mix64(h ^ component);
  return SplitMix64(h);
}

inline long draw_binomial(SplitMix64& gen, long trials, double p) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  std::binomial_distribution<long> dist(trials, p);
  return dist(gen);
}

inline double delta_p(double p, long shots) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("probability must lie in [0, 1]");
  if (shots < 1) throw InvalidArgument("shots must be >= 1");
  return std::sqrt(p * (1.0 - p) / static_cast<double>(shots));
}

inline double delta_v(double v, long shots) {
  if (!(std::abs(v) <= 1.0)) throw InvalidArgument("Bloch component must lie in [-1, 1]");
  if (shots < 1) throw InvalidArgument("shots must be >= 1");
  return std::sqrt((1.0 - v * v) / static_cast<double>(shots));
}

// One component estimate from N projective measurements: p = (1 + v)/2,
// n ~ Binomial(N, p), v_hat = 2 n / N - 1.
inline double estimate_component(double v, long shots, std::uint64_t seed, std::uint64_t stream_id, std::uint64_t index,
                                 int component) {
  auto gen = substream(seed, stream_id, index, static_cast<std::uint64_t>(component));
  const double p = std::clamp(0.5 * (1.0 + v), 0.0, 1.0);
  return 2.0 * static_cast<double>(draw_binomial(gen, shots, p)) / static_cast<double>(shots) - 1.0;
}

// Component-wise estimates at every time point; vectors leaving the Bloch ball
// are projected back onto it.
inline Trajectory sample_bloch_shots(const Trajectory& traj, const NoiseConfig& cfg, std::uint64_t stream_id = 0,
                                     unsigned threads = 1) {
  cfg.validate();
  if (cfg.mode != NoiseMode::BlochShots) throw InvalidArgument("sample_bloch_shots requires BlochShots mode");
  traj.validate();

  Trajectory out;
  out.times = traj.times;
  out.points.resize(traj.size());
  out.shots = cfg.shots;
  parallel_for(traj.size(), threads, [&](std::size_t m) {
    const BlochVector& v = traj.points[m];
    if (v.norm() > 1.0 + 1e-9) throw NonPhysical("Bloch vector norm exceeds 1 at index " + std::to_string(m));
    const double comps[3] = {v.x, v.y, v.z};
    double est[3];
    for (int k = 0; k < 3; ++k) est[k] = estimate_component(comps[k], cfg.shots, cfg.seed, stream_id, m, k);
    BlochVector hat{est[0], est[1], est[2]};
    const double norm = hat.norm();
    if (norm > 1.0) hat = {hat.x / norm, hat.y / norm, hat.z / norm};
    out.points[m] = hat;
  });
  return out;
}

// D_noisy(m) = n / N with n ~ Binomial(N, D(m)).
inline TraceDistanceSeries sample_td_binomial(const TraceDistanceSeries& series, const NoiseConfig& cfg,
                                              std::uint64_t stream_id = 0, unsigned threads = 1) {
  cfg.validate();
  if (cfg.mode != NoiseMode::TdBinomial) throw InvalidArgument("sample_td_binomial requires TdBinomial mode");
  std::vector<double> values(series.size());
  const double n = static_cast<double>(cfg.shots);
  parallel_for(series.size(), threads, [&](std::size_t m) {
    auto gen = substream(cfg.seed, stream_id, m, 3);
    values[m] = static_cast<double>(draw_binomial(gen, cfg.shots, series.values()[m])) / n;
  });
  return TraceDistanceSeries(series.times(), std::move(values));
}

}  // namespace nmq
