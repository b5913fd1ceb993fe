#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace quadrl::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 760;
  int height = 440;
};

/// Static SVG line chart. Non-finite points break the line. Output is a pure
/// function of the inputs (fixed number formatting), so reruns are byte-equal.
std::string render_line_plot(const std::vector<Series>& series, const PlotOptions& options);

/// "Nice" axis ticks (1, 2, 5 times a power of ten) covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target_count = 6);

/// Numeric CSV with a header row. Cells that do not parse as numbers
/// (labels, booleans spelled out) are read as NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Throws ConfigError when the column does not exist.
  std::vector<double> column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

CsvTable parse_csv_table(std::istream& in);
CsvTable read_csv_table(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace quadrl::plot
