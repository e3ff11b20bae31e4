#pragma once

// Flat CSV formats for trajectories, trace distances, sweeps and Fock
// populations, plus a minimal static SVG line chart.
//
//   trajectory      t,vx,vy,vz[,shots]
//   trace distance  t,D[,sigma]
//   sweep           s,chi[,flag]
//
// Reals are written with 17 significant digits so every file re-parses to the
// exact in-memory doubles.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "metrics.hpp"
#include "qmodel.hpp"
#include "regularize.hpp"

namespace nmq::io {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

enum class CsvKind { Trajectory, TraceDistance, Sweep };

struct CsvTable {
  std::string source;
  CsvKind kind = CsvKind::Trajectory;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> lines;  // source line of each row
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] inline void fail(const std::string& source, std::size_t line, std::size_t column, const std::string& msg) {
  throw FormatError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg);
}

struct Field {
  std::string_view text;
  std::size_t column;  // 1-based
};

inline std::vector<Field> split(std::string_view line, std::size_t lead) {
  std::vector<Field> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? line.size() : comma;
    const std::string_view piece = line.substr(start, end - start);
    const std::string_view text = trim(piece);
    fields.push_back({text, lead + start + static_cast<std::size_t>(text.data() - piece.data()) + 1});
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline bool header_is(const std::vector<std::string>& h, std::initializer_list<const char*> base, const char* extra) {
  if (h.size() != base.size() && h.size() != base.size() + 1) return false;
  std::size_t k = 0;
  for (const char* name : base)
    if (h[k++] != name) return false;
  return h.size() == base.size() || h.back() == extra;
}

}  // namespace detail

// Blank lines and lines starting with '#' are ignored.
inline CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  table.source = source;
  std::string raw;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto lead = static_cast<std::size_t>(line.data() - raw.data());
    const auto fields = detail::split(line, lead);
    if (!have_header) {
      for (const auto& f : fields) table.header.emplace_back(f.text);
      const auto& h = table.header;
      if (detail::header_is(h, {"t", "vx", "vy", "vz"}, "shots"))
        table.kind = CsvKind::Trajectory;
      else if (detail::header_is(h, {"t", "D"}, "sigma"))
        table.kind = CsvKind::TraceDistance;
      else if (detail::header_is(h, {"s", "chi"}, "flag"))
        table.kind = CsvKind::Sweep;
      else
        detail::fail(source, lineno, 1, "unrecognized header '" + std::string(line) + "'");
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      detail::fail(source, lineno, fields.size() < table.header.size() ? lead + line.size() + 1 : fields[table.header.size()].column,
                   "expected " + std::to_string(table.header.size()) + " fields, found " + std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      double v = 0.0;
      const char* first = f.text.data();
      const char* last = first + f.text.size();
      if (!f.text.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (f.text.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        detail::fail(source, lineno, f.column, "invalid number '" + std::string(f.text) + "'");
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
    table.lines.push_back(lineno);
  }
  if (!have_header) detail::fail(source, lineno + 1, 1, "missing header");
  return table;
}

inline CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open file");
  return read_csv(in, path.string());
}

namespace detail {

inline void check_increasing(const CsvTable& table) {
  for (std::size_t r = 1; r < table.rows.size(); ++r)
    if (!(table.rows[r][0] > table.rows[r - 1][0]))
      fail(table.source, table.lines[r], 1, "first column must be strictly increasing");
}

inline void require_kind(const CsvTable& table, CsvKind kind, const char* what) {
  if (table.kind != kind) fail(table.source, 1, 1, std::string("expected a ") + what + " file");
  if (table.rows.empty()) fail(table.source, 2, 1, "no data rows");
  check_increasing(table);
}

}  // namespace detail

inline Trajectory trajectory_from_csv(const CsvTable& table) {
  detail::require_kind(table, CsvKind::Trajectory, "trajectory");
  Trajectory traj;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const BlochVector v{row[1], row[2], row[3]};
    if (v.norm() > 1.0 + 1e-9) detail::fail(table.source, table.lines[r], 1, "Bloch vector norm exceeds 1");
    traj.times.push_back(row[0]);
    traj.points.push_back(v);
    if (row.size() == 5) {
      const double s = row[4];
      if (!(s >= 1.0) || s != std::floor(s)) detail::fail(table.source, table.lines[r], 1, "shots must be a positive integer");
      if (traj.shots && *traj.shots != static_cast<long>(s))
        detail::fail(table.source, table.lines[r], 1, "shots must be constant across rows");
      traj.shots = static_cast<long>(s);
    }
  }
  return traj;
}

inline TraceDistanceSeries series_from_csv(const CsvTable& table) {
  detail::require_kind(table, CsvKind::TraceDistance, "trace-distance");
  std::vector<double> t, d;
  std::optional<std::vector<double>> sigma;
  if (table.header.size() == 3) sigma.emplace();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row[1] < -1e-6 || row[1] > 1.0 + 1e-6) detail::fail(table.source, table.lines[r], 1, "trace distance outside [0, 1]");
    t.push_back(row[0]);
    d.push_back(row[1]);
    if (sigma) {
      if (row[2] < 0.0) detail::fail(table.source, table.lines[r], 1, "sigma must be non-negative");
      sigma->push_back(row[2]);
    }
  }
  return TraceDistanceSeries(std::move(t), std::move(d), std::move(sigma));
}

inline SweepResult sweep_from_csv(const CsvTable& table) {
  detail::require_kind(table, CsvKind::Sweep, "sweep");
  SweepResult sweep;
  for (const auto& row : table.rows) {
    sweep.s_grid.push_back(row[0]);
    sweep.chi_values.push_back(row[1]);
    sweep.no_oscillations.push_back(row.size() == 3 && row[2] != 0.0);
  }
  return sweep;
}

inline void write_trajectory(std::ostream& out, const Trajectory& traj, double time_offset = 0.0) {
  out << (traj.shots ? "t,vx,vy,vz,shots\n" : "t,vx,vy,vz\n");
  for (std::size_t m = 0; m < traj.size(); ++m) {
    const auto& v = traj.points[m];
    out << format_real(traj.times[m] + time_offset) << ',' << format_real(v.x) << ',' << format_real(v.y) << ','
        << format_real(v.z);
    if (traj.shots) out << ',' << *traj.shots;
    out << '\n';
  }
}

inline void write_series(std::ostream& out, const TraceDistanceSeries& series, double time_offset = 0.0) {
  const auto& sig = series.sigmas();
  out << (sig ? "t,D,sigma\n" : "t,D\n");
  for (std::size_t m = 0; m < series.size(); ++m) {
    out << format_real(series.times()[m] + time_offset) << ',' << format_real(series.values()[m]);
    if (sig) out << ',' << format_real((*sig)[m]);
    out << '\n';
  }
}

// flag = 1 where no oscillation survived smoothing.
inline void write_sweep(std::ostream& out, const SweepResult& sweep) {
  out << "s,chi,flag\n";
  for (std::size_t i = 0; i < sweep.s_grid.size(); ++i)
    out << format_real(sweep.s_grid[i]) << ',' << format_real(sweep.chi_values[i]) << ','
        << (sweep.no_oscillations[i] ? 1 : 0) << '\n';
}

inline void write_fock(std::ostream& out, std::span<const double> times,
                       const std::vector<std::vector<double>>& populations, double time_offset = 0.0) {
  out << 't';
  const std::size_t levels = populations.empty() ? 0 : populations.front().size();
  for (std::size_t n = 0; n < levels; ++n) out << ",p" << n;
  out << '\n';
  for (std::size_t m = 0; m < times.size(); ++m) {
    out << format_real(times[m] + time_offset);
    for (double p : populations[m]) out << ',' << format_real(p);
    out << '\n';
  }
}

// Writes through a string so the file either holds the whole artifact or
// reports the failure.
inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << contents;
  if (!out) throw FormatError(path.string() + ": write failed");
}

template <class Writer>
std::string render(Writer&& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

// ---------------------------------------------------------------------------
// SVG

struct Curve {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

inline std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string line_chart_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<Curve>& curves) {
  constexpr double width = 720, height = 440, left = 70, right = 170, top = 40, bottom = 55;
  static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                            "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"};
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      xmin = std::min(xmin, c.x[i]);
      xmax = std::max(xmax, c.x[i]);
      ymin = std::min(ymin, c.y[i]);
      ymax = std::max(ymax, c.y[i]);
    }
  if (!(xmax > xmin)) {
    xmin = std::isfinite(xmin) ? xmin - 0.5 : 0.0;
    xmax = xmin + 1.0;
  }
  if (!(ymax > ymin)) {
    ymin = std::isfinite(ymin) ? ymin - 0.5 : 0.0;
    ymax = ymin + 1.0;
  }
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title)
    << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
    s << "<text x=\"" << num(px(xv)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << num(xv)
      << "</text>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">" << svg_escape(xlabel)
    << "</text>\n";
  s << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << svg_escape(ylabel) << "</text>\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const char* color = palette[k % std::size(palette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < curves[k].x.size(); ++i)
      s << (i ? " " : "") << num(px(curves[k].x[i])) << ',' << num(py(curves[k].y[i]));
    s << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    s << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 36 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly << "\">" << svg_escape(curves[k].name) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace nmq::io
