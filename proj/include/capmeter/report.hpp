#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "capmeter/bounds.hpp"
#include "capmeter/checkpoint.hpp"
#include "capmeter/measures.hpp"
#include "capmeter/train.hpp"

namespace capmeter {

struct SweepRow {
  std::size_t h = 0;
  double train_error = 0.0;
  double test_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t epochs = 0;
  double gamma_5pct = 0.0;
  double alpha_max = 0, alpha_mean = 0, alpha_median = 0;
  double beta_max = 0, beta_mean = 0, beta_median = 0;
  double thm1_first = 0, thm1_second = 0, thm2 = 0, thm4_p2 = 0, thm4_plnh = 0;
  double table1[6] = {0, 0, 0, 0, 0, 0};
  double capacity_numerator = 0;
};

struct SweepSummary {
  std::vector<SweepRow> rows;

  void sort_by_width() {
    std::sort(rows.begin(), rows.end(),
              [](const SweepRow& a, const SweepRow& b) { return a.h < b.h; });
  }
};

namespace detail {

struct VecStats {
  double max = 0, mean = 0, median = 0;
};

inline VecStats vec_stats(const Vector& v) {
  VecStats s;
  if (v.empty()) return s;
  Vector sorted = v;
  std::sort(sorted.begin(), sorted.end());
  s.max = sorted.back();
  double acc = 0.0;
  for (double x : sorted) acc += x;
  s.mean = acc / static_cast<double>(sorted.size());
  const std::size_t mid = sorted.size() / 2;
  s.median = (sorted.size() % 2 == 1)
                 ? sorted[mid]
                 : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return s;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

inline SweepRow make_sweep_row(std::size_t width, const TrainReport& report,
                               const MeasurePanel& panel,
                               const BoundPanel& bounds, double train_error,
                               double test_error) {
  SweepRow row;
  row.h = width;
  row.train_error = train_error;
  row.test_error = test_error;
  row.epochs = report.epochs_run;
  row.gamma_5pct = panel.gamma_5pct;
  const auto alpha_stats = detail::vec_stats(panel.alpha);
  const auto beta_stats = detail::vec_stats(panel.beta);
  row.alpha_max = alpha_stats.max;
  row.alpha_mean = alpha_stats.mean;
  row.alpha_median = alpha_stats.median;
  row.beta_max = beta_stats.max;
  row.beta_mean = beta_stats.mean;
  row.beta_median = beta_stats.median;
  row.thm1_first = bounds.thm1.first;
  row.thm1_second = bounds.thm1.second;
  row.thm2 = bounds.thm2;
  if (auto it = bounds.thm4.find(2.0); it != bounds.thm4.end())
    row.thm4_p2 = it->second;
  if (auto it = bounds.thm4.find(thm4_corollary_p(width));
      it != bounds.thm4.end())
    row.thm4_plnh = it->second;
  for (int r = 1; r <= 6; ++r)
    row.table1[r - 1] = bounds.table1.rows.at(r);
  row.capacity_numerator = bounds.capacity_numerator;
  return row;
}

/// Fixed column schema; the "bound" columns additionally get a max-normalized
/// copy (norm_*) whose maximum is exactly 1 by construction.
inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols = {
      "h",          "train_error", "test_error",  "epochs",
      "gamma_5pct", "alpha_max",   "alpha_mean",  "alpha_median",
      "beta_max",   "beta_mean",   "beta_median", "thm1_first",
      "thm1_second", "thm2_bound", "thm4_p2",     "thm4_plnh",
      "table1_1",   "table1_2",    "table1_3",    "table1_4",
      "table1_5",   "table1_6",    "capacity_numerator"};
  return cols;
}

inline const std::vector<std::string>& sweep_bound_columns() {
  static const std::vector<std::string> cols = {
      "thm1_first", "thm1_second", "thm2_bound", "thm4_p2", "thm4_plnh",
      "table1_1",   "table1_2",    "table1_3",   "table1_4", "table1_5",
      "table1_6",   "capacity_numerator"};
  return cols;
}

inline double sweep_value(const SweepRow& row, const std::string& column) {
  if (column == "h") return static_cast<double>(row.h);
  if (column == "train_error") return row.train_error;
  if (column == "test_error") return row.test_error;
  if (column == "epochs") return static_cast<double>(row.epochs);
  if (column == "gamma_5pct") return row.gamma_5pct;
  if (column == "alpha_max") return row.alpha_max;
  if (column == "alpha_mean") return row.alpha_mean;
  if (column == "alpha_median") return row.alpha_median;
  if (column == "beta_max") return row.beta_max;
  if (column == "beta_mean") return row.beta_mean;
  if (column == "beta_median") return row.beta_median;
  if (column == "thm1_first") return row.thm1_first;
  if (column == "thm1_second") return row.thm1_second;
  if (column == "thm2_bound") return row.thm2;
  if (column == "thm4_p2") return row.thm4_p2;
  if (column == "thm4_plnh") return row.thm4_plnh;
  if (column.rfind("table1_", 0) == 0) {
    const int idx = std::stoi(column.substr(7));
    if (idx >= 1 && idx <= 6) return row.table1[idx - 1];
  }
  if (column == "capacity_numerator") return row.capacity_numerator;
  throw std::invalid_argument("sweep_value: unknown column " + column);
}

/// Like sweep_value, but also resolves "norm_<col>" columns (value divided by
/// the column maximum over the whole summary).
inline double sweep_value_in(const SweepSummary& summary, const SweepRow& row,
                             const std::string& column) {
  if (column.rfind("norm_", 0) == 0) {
    const std::string base = column.substr(5);
    double top = 0.0;
    for (const auto& r : summary.rows)
      top = std::max(top, sweep_value(r, base));
    const double v = sweep_value(row, base);
    return top > 0.0 ? v / top : v;
  }
  return sweep_value(row, column);
}

inline std::string summary_to_csv(const SweepSummary& summary) {
  std::vector<std::string> header = sweep_columns();
  for (const auto& col : sweep_bound_columns()) header.push_back("norm_" + col);

  std::map<std::string, double> col_max;
  for (const auto& col : sweep_bound_columns()) {
    double top = 0.0;
    for (const auto& row : summary.rows)
      top = std::max(top, sweep_value(row, col));
    col_max[col] = top;
  }

  std::ostringstream os;
  os << "#schema=";
  for (std::size_t i = 0; i < header.size(); ++i)
    os << (i ? "," : "") << header[i];
  os << "\n";
  for (std::size_t i = 0; i < header.size(); ++i)
    os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto& row : summary.rows) {
    bool first = true;
    for (const auto& col : sweep_columns()) {
      os << (first ? "" : ",") << detail::fmt(sweep_value(row, col));
      first = false;
    }
    for (const auto& col : sweep_bound_columns()) {
      const double top = col_max[col];
      const double v = sweep_value(row, col);
      os << "," << detail::fmt(top > 0.0 ? v / top : v);
    }
    os << "\n";
  }
  return os.str();
}

namespace detail {

inline const char* svg_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                  "#bcbd22", "#17becf", "#aec7e8", "#ffbb78"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

/// Standalone SVG line chart: x axis is log2(h), one polyline per requested
/// column. Output bytes are deterministic for identical inputs.
inline std::string render_svg(const SweepSummary& summary,
                              const std::vector<std::string>& columns,
                              bool log_y = false) {
  if (summary.rows.size() < 2)
    throw std::invalid_argument("render_svg: need at least 2 rows");
  if (columns.empty())
    throw std::invalid_argument("render_svg: no columns requested");

  const double width = 860, height = 520;
  const double left = 70, right = width - 190, top = 24, bottom = height - 56;

  const double x_lo = std::log2(static_cast<double>(summary.rows.front().h));
  const double x_hi = std::log2(static_cast<double>(summary.rows.back().h));
  double y_lo = log_y ? std::numeric_limits<double>::infinity() : 0.0;
  double y_hi = -std::numeric_limits<double>::infinity();
  for (const auto& row : summary.rows)
    for (const auto& col : columns) {
      const double v = sweep_value_in(summary, row, col);
      if (log_y) {
        if (v > 0.0) y_lo = std::min(y_lo, v);
      }
      y_hi = std::max(y_hi, v);
    }
  if (!(y_hi > (log_y ? 0.0 : -1.0))) y_hi = 1.0;
  if (log_y && !std::isfinite(y_lo)) y_lo = y_hi / 10.0;

  auto x_px = [&](double h) {
    const double t = x_hi > x_lo ? (std::log2(h) - x_lo) / (x_hi - x_lo) : 0.5;
    return left + t * (right - left);
  };
  auto y_px = [&](double v) {
    double t;
    if (log_y) {
      const double vv = std::max(v, y_lo);
      t = (std::log10(vv) - std::log10(y_lo)) /
          std::max(1e-12, std::log10(y_hi) - std::log10(y_lo));
    } else {
      t = (v - y_lo) / std::max(1e-300, y_hi - y_lo);
    }
    return bottom - t * (bottom - top);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
     << height << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
     << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
     << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";

  for (const auto& row : summary.rows) {
    const double x = x_px(static_cast<double>(row.h));
    os << "<line x1=\"" << detail::svg_num(x) << "\" y1=\"" << bottom
       << "\" x2=\"" << detail::svg_num(x) << "\" y2=\"" << bottom + 5
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << detail::svg_num(x) << "\" y=\"" << bottom + 20
       << "\" font-size=\"11\" text-anchor=\"middle\">" << row.h
       << "</text>\n";
  }
  os << "<text x=\"" << (left + right) / 2 << "\" y=\"" << height - 12
     << "\" font-size=\"13\" text-anchor=\"middle\">hidden units h (log2 scale)"
     << "</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double frac = tick / 4.0;
    const double y = bottom - frac * (bottom - top);
    double value;
    if (log_y)
      value = std::pow(10.0, std::log10(y_lo) +
                                 frac * (std::log10(y_hi) - std::log10(y_lo)));
    else
      value = y_lo + frac * (y_hi - y_lo);
    os << "<line x1=\"" << left - 5 << "\" y1=\"" << detail::svg_num(y)
       << "\" x2=\"" << left << "\" y2=\"" << detail::svg_num(y)
       << "\" stroke=\"black\"/>\n";
    char label[40];
    std::snprintf(label, sizeof(label), "%.3g", value);
    os << "<text x=\"" << left - 8 << "\" y=\"" << detail::svg_num(y + 4)
       << "\" font-size=\"11\" text-anchor=\"end\">" << label << "</text>\n";
  }

  for (std::size_t ci = 0; ci < columns.size(); ++ci) {
    os << "<polyline fill=\"none\" stroke=\"" << detail::svg_color(ci)
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t ri = 0; ri < summary.rows.size(); ++ri) {
      const auto& row = summary.rows[ri];
      os << (ri ? " " : "") << detail::svg_num(x_px(static_cast<double>(row.h)))
         << "," << detail::svg_num(y_px(sweep_value_in(summary, row, columns[ci])));
    }
    os << "\"/>\n";
    const double ly = top + 16 + 18 * static_cast<double>(ci);
    os << "<line x1=\"" << right + 12 << "\" y1=\"" << detail::svg_num(ly - 4)
       << "\" x2=\"" << right + 34 << "\" y2=\"" << detail::svg_num(ly - 4)
       << "\" stroke=\"" << detail::svg_color(ci) << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << right + 40 << "\" y=\"" << detail::svg_num(ly)
       << "\" font-size=\"11\">" << columns[ci] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void emit_svg(const SweepSummary& summary,
                     const std::vector<std::string>& columns,
                     const std::string& path, bool log_y = false) {
  atomic_write_file(path, render_svg(summary, columns, log_y));
}

}  // namespace capmeter
