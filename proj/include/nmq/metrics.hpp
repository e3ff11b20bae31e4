#pragma once

// Trace distances, the discrete BLP measure and its per-oscillation
// normalization, and shot-noise error propagation onto trace distances.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "qmodel.hpp"

namespace nmq {

class TraceDistanceSeries {
public:
  TraceDistanceSeries() = default;

  // Values within 1e-6 of [0, 1] are clipped into it; anything further out is rejected.
  TraceDistanceSeries(std::vector<double> times, std::vector<double> values,
                      std::optional<std::vector<double>> sigmas = std::nullopt)
      : times_(std::move(times)), values_(std::move(values)), sigmas_(std::move(sigmas)) {
    if (times_.size() != values_.size()) throw InvalidArgument("series times/values length mismatch");
    if (sigmas_ && sigmas_->size() != values_.size()) throw InvalidArgument("series sigmas length mismatch");
    for (std::size_t m = 0; m < times_.size(); ++m) {
      if (!std::isfinite(times_[m]) || !std::isfinite(values_[m])) throw InvalidArgument("series entries must be finite");
      if (m > 0 && !(times_[m] > times_[m - 1])) throw InvalidArgument("series times must be strictly increasing");
      if (values_[m] < -1e-6 || values_[m] > 1.0 + 1e-6)
        throw NonPhysical("trace distance " + std::to_string(values_[m]) + " outside [0, 1]");
      values_[m] = std::clamp(values_[m], 0.0, 1.0);
    }
    if (sigmas_)
      for (double s : *sigmas_)
        if (!(s >= 0.0)) throw InvalidArgument("sigmas must be non-negative");
  }

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }
  const std::optional<std::vector<double>>& sigmas() const { return sigmas_; }
  std::size_t size() const { return values_.size(); }

  TraceDistanceSeries with_values(std::vector<double> values) const {
    return TraceDistanceSeries(times_, std::move(values), sigmas_);
  }
  TraceDistanceSeries without_sigmas() const { return TraceDistanceSeries(times_, values_); }

private:
  std::vector<double> times_;
  std::vector<double> values_;
  std::optional<std::vector<double>> sigmas_;
};

struct OscillationSegmentation {
  std::vector<std::pair<std::size_t, std::size_t>> rises;  // (min_index, max_index)
  double amplitude_threshold = 0.0;
};

// How a per-oscillation measure is formed from a segmentation.
//   PositiveSum: positive differences summed from the first rise's minimum to the
//                last rise's maximum, divided by the number of rises.
//   ExtremaMean: mean of (max - min) over the rises.
// Both agree on noise-free single-frequency data.
enum class ChiMethod { ExtremaMean, PositiveSum };

struct ChiOptions {
  double amplitude_threshold = 1e-3;
  ChiMethod method = ChiMethod::ExtremaMean;
  // When positive, the threshold is raised to this fraction of the measured
  // series' range (max - min).
  double range_fraction = 0.0;
};

// ---------------------------------------------------------------------------

inline double trace_distance_bloch(const BlochVector& v1, const BlochVector& v2) {
  return 0.5 * BlochVector{v1.x - v2.x, v1.y - v2.y, v1.z - v2.z}.norm();
}

// Half the trace norm of rho1 - rho2, from the eigenvalues of the Hermitian difference.
inline double trace_distance_rho(const DensityMatrix2& rho1, const DensityMatrix2& rho2) {
  rho1.validate();
  rho2.validate();
  const Matrix2 diff = rho1.matrix() - rho2.matrix();
  const Eigen::SelfAdjointEigenSolver<Matrix2> solver(diff, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  return std::clamp(0.5 * (std::abs(ev(0)) + std::abs(ev(1))), 0.0, 1.0);
}

// First-order propagation of independent per-component shot noise onto
// D = |v_i - v_j| / 2. When the two vectors coincide (|v_i - v_j| < 2e-9) the
// direction weights are replaced by 1, which bounds the error from above.
inline double td_error(const BlochVector& vi, long shots_i, const BlochVector& vj, long shots_j) {
  if (shots_i < 1 || shots_j < 1) throw InvalidArgument("shot count must be >= 1");
  auto dv = [](double v, long n) { return std::sqrt(std::max(0.0, 1.0 - v * v) / static_cast<double>(n)); };
  const std::array<double, 3> a{vi.x, vi.y, vi.z};
  const std::array<double, 3> b{vj.x, vj.y, vj.z};
  const double dist = 2.0 * trace_distance_bloch(vi, vj);
  const bool degenerate = dist < 2e-9;
  double acc = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double weight = degenerate ? 1.0 : (a[k] - b[k]) * (a[k] - b[k]) / (dist * dist);
    const double ei = dv(a[k], shots_i);
    const double ej = dv(b[k], shots_j);
    acc += weight * (ei * ei + ej * ej);
  }
  return 0.5 * std::sqrt(acc);
}

inline double td_error(const BlochVector& vi, const BlochVector& vj, long shots) {
  return td_error(vi, shots, vj, shots);
}

inline TraceDistanceSeries series_from_trajectories(const Trajectory& ti, const Trajectory& tj) {
  ti.validate();
  tj.validate();
  if (ti.times != tj.times) throw GridMismatch("trajectories are sampled on different time grids");
  std::vector<double> values(ti.size());
  for (std::size_t m = 0; m < ti.size(); ++m) values[m] = trace_distance_bloch(ti.points[m], tj.points[m]);
  std::optional<std::vector<double>> sigmas;
  if (ti.shots && tj.shots) {
    sigmas.emplace(ti.size());
    for (std::size_t m = 0; m < ti.size(); ++m)
      (*sigmas)[m] = td_error(ti.points[m], *ti.shots, tj.points[m], *tj.shots);
  }
  return TraceDistanceSeries(ti.times, std::move(values), std::move(sigmas));
}

inline double blp_discrete(std::span<const double> values) {
  if (values.size() < 2) throw TooShort("BLP measure needs at least 2 points");
  double total = 0.0;
  for (std::size_t m = 0; m + 1 < values.size(); ++m) total += std::max(0.0, values[m + 1] - values[m]);
  return total;
}

inline double blp_discrete(const TraceDistanceSeries& series) { return blp_discrete(series.values()); }

// Hysteresis (zig-zag) extrema detection: a turning point is confirmed once the
// series has moved away from it by at least the threshold. Equal neighbours
// keep the first index. A rise must start at a minimum reached by a confirmed
// fall, so a leading partial rise is skipped; the last sample may close a rise.
inline OscillationSegmentation segment_oscillations(std::span<const double> values, double amplitude_threshold) {
  if (values.size() < 3) throw TooShort("segmentation needs at least 3 points");
  if (!(amplitude_threshold > 0.0)) throw InvalidArgument("amplitude threshold must be positive");
  const double thr = amplitude_threshold;

  OscillationSegmentation seg;
  seg.amplitude_threshold = thr;

  enum class Trend { Unknown, Up, Down } trend = Trend::Unknown;
  std::size_t run_min = 0, run_max = 0;  // extremes since the start while the trend is unknown
  std::size_t cand = 0;                  // pending extremum once the trend is known
  std::optional<std::size_t> last_min;   // most recent confirmed minimum

  for (std::size_t m = 1; m < values.size(); ++m) {
    const double v = values[m];
    switch (trend) {
      case Trend::Unknown:
        if (v < values[run_min]) run_min = m;
        if (v > values[run_max]) run_max = m;
        if (v - values[run_min] >= thr && run_min != m) {
          trend = Trend::Up;
          cand = m;
        } else if (values[run_max] - v >= thr && run_max != m) {
          trend = Trend::Down;
          cand = m;
        }
        break;
      case Trend::Up:
        if (v > values[cand]) {
          cand = m;
        } else if (values[cand] - v >= thr) {
          if (last_min) seg.rises.emplace_back(*last_min, cand);
          last_min.reset();
          trend = Trend::Down;
          cand = m;
        }
        break;
      case Trend::Down:
        if (v < values[cand]) {
          cand = m;
        } else if (v - values[cand] >= thr) {
          last_min = cand;
          trend = Trend::Up;
          cand = m;
        }
        break;
    }
  }
  if (trend == Trend::Up && last_min) seg.rises.emplace_back(*last_min, cand);
  return seg;
}

inline OscillationSegmentation segment_oscillations(const TraceDistanceSeries& series, double amplitude_threshold) {
  return segment_oscillations(series.values(), amplitude_threshold);
}

inline double effective_threshold(std::span<const double> values, const ChiOptions& opts) {
  if (opts.range_fraction <= 0.0 || values.empty()) return opts.amplitude_threshold;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return std::max(opts.amplitude_threshold, opts.range_fraction * (*hi - *lo));
}

inline double chi_per_oscillation(std::span<const double> values, const ChiOptions& opts = {}) {
  const auto seg = segment_oscillations(values, effective_threshold(values, opts));
  if (seg.rises.empty()) throw NoOscillations("no rise above the amplitude threshold");
  const double count = static_cast<double>(seg.rises.size());
  if (opts.method == ChiMethod::ExtremaMean) {
    double total = 0.0;
    for (auto [lo, hi] : seg.rises) total += values[hi] - values[lo];
    return total / count;
  }
  const std::size_t first = seg.rises.front().first;
  const std::size_t last = seg.rises.back().second;
  return blp_discrete(values.subspan(first, last - first + 1)) / count;
}

inline double chi_per_oscillation(const TraceDistanceSeries& series, const ChiOptions& opts = {}) {
  return chi_per_oscillation(std::span<const double>(series.values()), opts);
}

struct OptimalPair {
  OrthogonalPairSpec pair;
  double chi = 0.0;
  std::vector<double> grid;        // A values evaluated
  std::vector<double> chi_values;  // measure at each A
};

// Grid search over orthogonal pairs with beta = 0. Values within 1e-9 of the
// best count as ties, resolved toward the lowest A.
inline OptimalPair optimal_pair_search(const ModelParams& params, std::span<const double> times, int grid_A,
                                       const ChiOptions& opts = {}) {
  if (grid_A < 2) throw InvalidArgument("grid_A must be at least 2");
  OptimalPair best;
  best.grid.resize(static_cast<std::size_t>(grid_A));
  best.chi_values.resize(best.grid.size());
  for (int k = 0; k < grid_A; ++k) {
    const double A = static_cast<double>(k) / static_cast<double>(grid_A - 1);
    const auto [psi0, psi1] = OrthogonalPairSpec{A, 0.0}.states();
    const auto series = series_from_trajectories(evolve(params, psi0, times), evolve(params, psi1, times));
    best.grid[k] = A;
    best.chi_values[k] = chi_per_oscillation(series, opts);
  }
  std::size_t arg = 0;
  for (std::size_t k = 1; k < best.chi_values.size(); ++k)
    if (best.chi_values[k] > best.chi_values[arg] + 1e-9) arg = k;
  best.pair = {best.grid[arg], 0.0};
  best.chi = best.chi_values[arg];
  return best;
}

}  // namespace nmq
