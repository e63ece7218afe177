#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fafed {

struct PlotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One named column of a results CSV, paired with the chosen x column.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotOptions {
  std::string x_column = "t";  // t, comms or samples
  std::vector<std::string> y_columns = {"loss"};
  bool log_y = false;
  int width = 720;
  int height = 440;
  std::string title;
};

/// Reads `x_column` and each y column from a results CSV. Throws PlotError
/// naming a missing column, or when the file has no data rows.
std::vector<PlotSeries> load_series(const std::string& csv_path, const PlotOptions& opts);

/// Static line chart, one polyline per series. Output depends only on the
/// inputs. With log_y, nonpositive values are dropped.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& opts);

/// Loads every CSV (legend from file stems) and writes the chart.
void emit_plot(const std::vector<std::string>& csv_paths, const PlotOptions& opts,
               const std::string& svg_path);

}  // namespace fafed
