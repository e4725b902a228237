#include "capmeter/report.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

using namespace capmeter;

namespace {

SweepSummary two_row_summary() {
  SweepSummary summary;
  SweepRow a;
  a.h = 64;
  a.train_error = 0.05;
  a.epochs = 120;
  a.gamma_5pct = 1.5;
  a.thm1_first = 10.0;
  a.thm1_second = 12.0;
  a.thm2 = 20.0;
  a.thm4_p2 = 30.0;
  a.thm4_plnh = 25.0;
  for (int r = 0; r < 6; ++r) a.table1[r] = 100.0 + r;
  a.capacity_numerator = 400.0;
  SweepRow b = a;
  b.h = 256;
  b.thm2 = 10.0;
  b.table1[2] = 250.0;
  b.capacity_numerator = 300.0;
  summary.rows = {a, b};
  return summary;
}

std::vector<std::vector<std::pair<double, double>>> parse_polylines(
    const std::string& svg) {
  std::vector<std::vector<std::pair<double, double>>> out;
  std::regex poly_re("<polyline[^>]*points=\"([^\"]*)\"");
  auto begin = std::sregex_iterator(svg.begin(), svg.end(), poly_re);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    std::vector<std::pair<double, double>> points;
    std::stringstream ss((*it)[1].str());
    std::string pair_text;
    while (ss >> pair_text) {
      const auto comma = pair_text.find(',');
      points.emplace_back(std::stod(pair_text.substr(0, comma)),
                          std::stod(pair_text.substr(comma + 1)));
    }
    out.push_back(std::move(points));
  }
  return out;
}

}  // namespace

TEST(CsvTest, SchemaLineAndNormalizedMaxIsExactlyOne) {
  const auto summary = two_row_summary();
  const std::string csv = summary_to_csv(summary);
  ASSERT_EQ(csv.rfind("#schema=", 0), 0u);

  std::stringstream ss(csv);
  std::string schema_line, header, row1, row2;
  std::getline(ss, schema_line);
  std::getline(ss, header);
  std::getline(ss, row1);
  std::getline(ss, row2);
  EXPECT_EQ("#schema=" + header, schema_line);

  // Locate norm_thm2_bound and check the column max is exactly 1.
  std::vector<std::string> names;
  {
    std::stringstream hs(header);
    std::string name;
    while (std::getline(hs, name, ',')) names.push_back(name);
  }
  auto column_values = [&](const std::string& row) {
    std::vector<double> values;
    std::stringstream rs(row);
    std::string field;
    while (std::getline(rs, field, ',')) values.push_back(std::stod(field));
    return values;
  };
  const auto v1 = column_values(row1);
  const auto v2 = column_values(row2);
  ASSERT_EQ(v1.size(), names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].rfind("norm_", 0) != 0) continue;
    const double top = std::max(v1[i], v2[i]);
    EXPECT_EQ(top, 1.0) << names[i];
  }
  // norm_thm2_bound: max at h=64 (20 vs 10).
  const auto it = std::find(names.begin(), names.end(), "norm_thm2_bound");
  ASSERT_NE(it, names.end());
  const auto idx = static_cast<std::size_t>(it - names.begin());
  EXPECT_EQ(v1[idx], 1.0);
  EXPECT_EQ(v2[idx], 0.5);
}

TEST(CsvTest, Deterministic) {
  const auto summary = two_row_summary();
  EXPECT_EQ(summary_to_csv(summary), summary_to_csv(summary));
}

TEST(SvgTest, OnePolylinePerColumnWithTwoPoints) {
  const auto summary = two_row_summary();
  const std::string svg =
      render_svg(summary, {"thm2_bound", "table1_3", "capacity_numerator"});
  const auto polylines = parse_polylines(svg);
  ASSERT_EQ(polylines.size(), 3u);
  for (const auto& line : polylines) EXPECT_EQ(line.size(), 2u);
}

TEST(SvgTest, DeterministicBytes) {
  const auto summary = two_row_summary();
  const std::vector<std::string> cols{"thm2_bound", "norm_table1_3"};
  EXPECT_EQ(render_svg(summary, cols), render_svg(summary, cols));
}

TEST(SvgTest, NormalizedColumnsPeakAtTheSamePixel) {
  const auto summary = two_row_summary();
  const std::vector<std::string> cols{"norm_thm2_bound", "norm_table1_3",
                                      "norm_capacity_numerator"};
  const auto polylines = parse_polylines(render_svg(summary, cols));
  ASSERT_EQ(polylines.size(), cols.size());
  std::vector<double> peaks;
  for (const auto& line : polylines) {
    double top = 1e300;
    for (const auto& [x, y] : line) top = std::min(top, y);  // SVG y grows down
    peaks.push_back(top);
  }
  for (double peak : peaks) EXPECT_EQ(peak, peaks.front());
}

TEST(SvgTest, RejectsDegenerateInputs) {
  SweepSummary one;
  one.rows.resize(1);
  one.rows[0].h = 8;
  EXPECT_THROW(render_svg(one, {"thm2_bound"}), std::invalid_argument);
  const auto summary = two_row_summary();
  EXPECT_THROW(render_svg(summary, {}), std::invalid_argument);
  EXPECT_THROW(render_svg(summary, {"no_such_column"}), std::invalid_argument);
}

TEST(SweepRowTest, SortAndAccessors) {
  auto summary = two_row_summary();
  std::swap(summary.rows[0], summary.rows[1]);
  summary.sort_by_width();
  EXPECT_EQ(summary.rows[0].h, 64u);
  EXPECT_EQ(sweep_value(summary.rows[0], "thm2_bound"), 20.0);
  EXPECT_EQ(sweep_value_in(summary, summary.rows[1], "norm_thm2_bound"), 0.5);
  EXPECT_THROW(sweep_value(summary.rows[0], "bogus"), std::invalid_argument);
}
