#pragma once

// Loess smoothing of trace-distance series, the smoothing-degree sweep of the
// per-oscillation measure, and plateau detection on the sweep.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "metrics.hpp"
#include "parallel.hpp"

namespace nmq {

struct LoessConfig {
  double span_fraction = 0.0;  // s in [0, 1]
  int degree = 2;
  int robustness_iterations = 0;

  void validate() const {
    if (!(span_fraction >= 0.0 && span_fraction <= 1.0)) throw InvalidArgument("span fraction must lie in [0, 1]");
    if (degree < 0 || degree > 2) throw InvalidArgument("Loess degree must be 0, 1 or 2");
    if (robustness_iterations < 0) throw InvalidArgument("robustness iterations must be >= 0");
  }
};

// Neighbourhood size for span s over M points: max(degree + 1, ceil(s M)).
// The 1e-9 slack keeps s = k/100 grids from rounding up past an exact integer.
inline std::size_t loess_neighbours(double span, int degree, std::size_t count) {
  const auto spanned = static_cast<std::size_t>(std::ceil(span * static_cast<double>(count) - 1e-9));
  return std::min(count, std::max<std::size_t>(static_cast<std::size_t>(degree) + 1, spanned));
}

namespace detail {

inline double tricube(double u) {
  const double a = 1.0 - std::abs(u) * std::abs(u) * std::abs(u);
  return a > 0.0 ? a * a * a : 0.0;
}

inline double bisquare(double u) {
  const double a = 1.0 - u * u;
  return std::abs(u) < 1.0 ? a * a : 0.0;
}

// Weighted least-squares polynomial evaluated at z = 0. Drops to lower degree
// when the weighted design is rank deficient.
inline double local_fit(const std::vector<double>& z, const std::vector<double>& y, const std::vector<double>& w,
                        int degree) {
  for (int d = degree; d >= 0; --d) {
    const auto rows = static_cast<Eigen::Index>(z.size());
    Eigen::MatrixXd design(rows, d + 1);
    Eigen::VectorXd rhs(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double sw = std::sqrt(w[r]);
      double power = 1.0;
      for (int c = 0; c <= d; ++c) {
        design(r, c) = sw * power;
        power *= z[r];
      }
      rhs(r) = sw * y[r];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() == d + 1) return qr.solve(rhs)(0);
  }
  return y.empty() ? 0.0 : y.front();
}

}  // namespace detail

// Loess fit at every sample, before clipping. Neighbourhoods are the q nearest
// abscissae (ties toward the lower index) with tricube weights scaled by the
// distance of the farthest neighbour.
inline std::vector<double> loess_fit(std::span<const double> times, std::span<const double> values,
                                     const LoessConfig& cfg) {
  cfg.validate();
  const std::size_t count = values.size();
  if (times.size() != count) throw InvalidArgument("Loess times/values length mismatch");
  if (count < static_cast<std::size_t>(cfg.degree) + 1 || count < 3) throw TooShort("Loess needs at least degree + 1 points");
  if (cfg.span_fraction == 0.0) return {values.begin(), values.end()};

  const std::size_t q = loess_neighbours(cfg.span_fraction, cfg.degree, count);
  std::vector<double> robust(count, 1.0);
  std::vector<double> fitted(count);
  std::vector<double> z, y, w;

  for (int pass = 0; pass <= cfg.robustness_iterations; ++pass) {
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t lo = i, hi = i;  // inclusive window
      while (hi - lo + 1 < q) {
        if (lo == 0) {
          ++hi;
        } else if (hi + 1 == count) {
          --lo;
        } else if (times[i] - times[lo - 1] <= times[hi + 1] - times[i]) {
          --lo;
        } else {
          ++hi;
        }
      }
      const double reach = std::max(times[i] - times[lo], times[hi] - times[i]);
      z.clear();
      y.clear();
      w.clear();
      for (std::size_t j = lo; j <= hi; ++j) {
        const double u = reach > 0.0 ? (times[j] - times[i]) / reach : 0.0;
        z.push_back(u);
        y.push_back(values[j]);
        w.push_back(detail::tricube(u) * robust[j]);
      }
      fitted[i] = detail::local_fit(z, y, w, cfg.degree);
    }
    if (pass == cfg.robustness_iterations) break;

    std::vector<double> residuals(count);
    for (std::size_t i = 0; i < count; ++i) residuals[i] = std::abs(values[i] - fitted[i]);
    std::vector<double> sorted = residuals;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(count / 2), sorted.end());
    const double scale = 6.0 * sorted[count / 2];
    if (!(scale > 0.0)) break;
    for (std::size_t i = 0; i < count; ++i) robust[i] = detail::bisquare(residuals[i] / scale);
  }
  return fitted;
}

inline TraceDistanceSeries loess_smooth(const TraceDistanceSeries& series, const LoessConfig& cfg) {
  cfg.validate();
  if (series.size() < static_cast<std::size_t>(cfg.degree) + 1) throw TooShort("Loess needs at least degree + 1 points");
  if (cfg.span_fraction == 0.0) return series;
  auto fitted = loess_fit(series.times(), series.values(), cfg);
  for (double& v : fitted) v = std::clamp(v, 0.0, 1.0);
  return series.with_values(std::move(fitted));
}

struct SweepResult {
  std::string label;
  std::vector<double> s_grid;
  std::vector<double> chi_values;
  std::vector<bool> no_oscillations;  // chi recorded as 0 because no rise was detected
  std::optional<std::pair<std::size_t, std::size_t>> plateau;
  std::optional<double> chi_regularized;

  void validate() const {
    if (s_grid.size() != chi_values.size() || no_oscillations.size() != chi_values.size())
      throw InvalidArgument("sweep grid and values differ in length");
    if (plateau && (plateau->first > plateau->second || plateau->second >= s_grid.size()))
      throw InvalidArgument("plateau indices out of range");
  }
};

struct PlateauConfig {
  double eps_abs = 0.02;
  std::size_t min_length = 5;
};

// s = 0, 0.01, ..., 1.
inline std::vector<double> default_s_grid(std::size_t steps = 100) {
  std::vector<double> grid(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(steps);
  return grid;
}

inline SweepResult sweep_chi(const TraceDistanceSeries& series, std::span<const double> s_grid,
                             const ChiOptions& chi = {}, const LoessConfig& loess = {}, unsigned threads = 1) {
  if (s_grid.empty()) throw InvalidArgument("smoothing grid is empty");
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    if (!(s_grid[i] >= 0.0 && s_grid[i] <= 1.0)) throw InvalidArgument("smoothing degrees must lie in [0, 1]");
    if (i > 0 && !(s_grid[i] > s_grid[i - 1])) throw InvalidArgument("smoothing grid must be ascending");
  }
  SweepResult out;
  out.s_grid.assign(s_grid.begin(), s_grid.end());
  out.chi_values.assign(s_grid.size(), 0.0);
  std::vector<char> flags(s_grid.size(), 0);
  parallel_for(s_grid.size(), threads, [&](std::size_t i) {
    LoessConfig cfg = loess;
    cfg.span_fraction = s_grid[i];
    const auto smoothed = loess_smooth(series, cfg);
    try {
      out.chi_values[i] = chi_per_oscillation(smoothed, chi);
    } catch (const NoOscillations&) {
      flags[i] = 1;
    }
  });
  out.no_oscillations.assign(flags.begin(), flags.end());
  return out;
}

// Longest run of consecutive grid points with max - min <= eps_abs, ignoring
// runs lying entirely below eps_abs; ties go to the smaller s. The regularized
// value is the median over the run.
inline SweepResult detect_plateau(SweepResult sweep, const PlateauConfig& cfg = {}) {
  sweep.validate();
  if (cfg.min_length < 2) throw InvalidArgument("plateau min_length must be >= 2");
  if (!(cfg.eps_abs > 0.0)) throw InvalidArgument("plateau eps_abs must be positive");
  const auto& chi = sweep.chi_values;
  const double width = cfg.eps_abs + 1e-12;  // decimal inputs such as 0.92 - 0.90 overshoot by an ulp

  std::optional<std::pair<std::size_t, std::size_t>> best;
  for (std::size_t start = 0; start < chi.size(); ++start) {
    double lo = chi[start], hi = chi[start];
    std::size_t end = start;
    while (end + 1 < chi.size()) {
      const double next = chi[end + 1];
      if (std::max(hi, next) - std::min(lo, next) > width) break;
      lo = std::min(lo, next);
      hi = std::max(hi, next);
      ++end;
    }
    if (hi < cfg.eps_abs) continue;
    if (end - start + 1 < cfg.min_length) continue;
    if (!best || end - start > best->second - best->first) best = {start, end};
  }
  if (!best) throw NoPlateau("no run of " + std::to_string(cfg.min_length) + " smoothing degrees within " +
                             std::to_string(cfg.eps_abs) + "; time sampling may be too coarse");

  std::vector<double> run(chi.begin() + static_cast<std::ptrdiff_t>(best->first),
                          chi.begin() + static_cast<std::ptrdiff_t>(best->second) + 1);
  std::sort(run.begin(), run.end());
  const std::size_t n = run.size();
  sweep.plateau = best;
  sweep.chi_regularized = n % 2 == 1 ? run[n / 2] : 0.5 * (run[n / 2 - 1] + run[n / 2]);
  return sweep;
}

// The range-relative threshold keeps raw shot noise from being segmented into
// spurious rises at small s.
inline constexpr ChiOptions kRegularizeChi{1e-3, ChiMethod::ExtremaMean, 0.3};

struct RegularizeConfig {
  std::vector<double> s_grid = default_s_grid();
  ChiOptions chi = kRegularizeChi;
  LoessConfig loess{};
  PlateauConfig plateau{};
};

struct PairReport {
  std::size_t first = 0;
  std::size_t second = 0;
  SweepResult sweep;
  std::optional<double> chi_raw;  // chi at s = 0 on the unsmoothed series
  double amplitude_threshold = 0.0;  // segmentation threshold on the raw series
  std::optional<std::string> error;
};

// Sweeps and plateau detection for the trace distance of every unordered pair
// of trajectories. A failing pair is reported, not propagated.
inline std::vector<PairReport> regularize_series(const std::vector<TraceDistanceSeries>& series,
                                                 const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                                 const std::vector<std::string>& labels, const RegularizeConfig& cfg,
                                                 unsigned threads = 1) {
  if (pairs.size() != series.size() || labels.size() != series.size())
    throw InvalidArgument("series, pairs and labels differ in length");
  std::vector<PairReport> reports(series.size());
  parallel_for(series.size(), threads, [&](std::size_t k) {
    PairReport& rep = reports[k];
    rep.first = pairs[k].first;
    rep.second = pairs[k].second;
    rep.sweep.label = labels[k];
    try {
      rep.amplitude_threshold = effective_threshold(series[k].values(), cfg.chi);
      rep.sweep = sweep_chi(series[k], cfg.s_grid, cfg.chi, cfg.loess);
      rep.sweep.label = labels[k];
      try {
        rep.chi_raw = chi_per_oscillation(series[k], cfg.chi);
      } catch (const NoOscillations&) {
        rep.chi_raw = 0.0;
      }
      rep.sweep = detect_plateau(rep.sweep, cfg.plateau);
    } catch (const Error& e) {
      rep.error = e.what();
    }
  });
  return reports;
}

inline std::vector<PairReport> regularize_measure(const std::vector<Trajectory>& trajs, const RegularizeConfig& cfg = {},
                                                  unsigned threads = 1) {
  if (trajs.size() < 2) throw InvalidArgument("regularization needs at least 2 trajectories");
  std::vector<TraceDistanceSeries> series;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < trajs.size(); ++i)
    for (std::size_t j = i + 1; j < trajs.size(); ++j) {
      series.push_back(series_from_trajectories(trajs[i], trajs[j]));
      pairs.emplace_back(i, j);
      labels.push_back(std::to_string(i + 1) + "-" + std::to_string(j + 1));
    }
  return regularize_series(series, pairs, labels, cfg, threads);
}

}  // namespace nmq
