#include "fafed/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace fafed {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string f2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::string& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw PlotError("column '" + name + "' not found in " + path);
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

std::vector<PlotSeries> load_series(const std::string& csv_path, const PlotOptions& opts) {
  std::ifstream in(csv_path);
  if (!in) throw PlotError("cannot open '" + csv_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw PlotError(csv_path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  const std::size_t xi = column_index(header, opts.x_column, csv_path);
  std::vector<std::size_t> yi;
  for (const auto& c : opts.y_columns) yi.push_back(column_index(header, c, csv_path));

  const std::string stem = std::filesystem::path(csv_path).stem().string();
  std::vector<PlotSeries> out(yi.size());
  for (std::size_t k = 0; k < yi.size(); ++k)
    out[k].label = yi.size() == 1 ? stem : stem + ":" + opts.y_columns[k];

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw PlotError(csv_path + ": ragged row");
    const double x = std::strtod(cells[xi].c_str(), nullptr);
    for (std::size_t k = 0; k < yi.size(); ++k) {
      out[k].x.push_back(x);
      out[k].y.push_back(std::strtod(cells[yi[k]].c_str(), nullptr));
    }
  }
  if (out.empty() || out.front().x.empty()) throw PlotError(csv_path + " has no data rows");
  return out;
}

std::string render_svg(const std::vector<PlotSeries>& series, const PlotOptions& opts) {
  if (series.empty()) throw PlotError("nothing to plot");
  const double left = 80, right = 180, top = 40, bottom = 50;
  const double W = opts.width, H = opts.height;
  const double pw = W - left - right, ph = H - top - bottom;

  auto ty = [&](double y) { return opts.log_y ? std::log10(y) : y; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!opts.log_y || y > 0.0);
  };

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  if (!std::isfinite(xmin)) throw PlotError("no plottable points");
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - ty(y)) / (ymax - ymin) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\""
    << opts.height << "\" viewBox=\"0 0 " << opts.width << ' ' << opts.height << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << opts.width << "\" height=\"" << opts.height
    << "\" fill=\"white\"/>\n";
  if (!opts.title.empty())
    s << "<text x=\"" << f2(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << escape(opts.title) << "</text>\n";
  s << "<rect x=\"" << f2(left) << "\" y=\"" << f2(top) << "\" width=\"" << f2(pw)
    << "\" height=\"" << f2(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

  const int ticks = 5;
  for (int k = 0; k <= ticks; ++k) {
    const double fx = xmin + (xmax - xmin) * k / ticks;
    const double gx = left + pw * k / ticks;
    s << "<line x1=\"" << f2(gx) << "\" y1=\"" << f2(top + ph) << "\" x2=\"" << f2(gx)
      << "\" y2=\"" << f2(top + ph + 5) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << f2(gx) << "\" y=\"" << f2(top + ph + 18)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << tick_label(fx) << "</text>\n";
    const double fy = ymin + (ymax - ymin) * k / ticks;
    const double gy = top + ph - ph * k / ticks;
    s << "<line x1=\"" << f2(left - 5) << "\" y1=\"" << f2(gy) << "\" x2=\"" << f2(left)
      << "\" y2=\"" << f2(gy) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << f2(left - 8) << "\" y=\"" << f2(gy + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << tick_label(opts.log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  s << "<text x=\"" << f2(left + pw / 2) << "\" y=\"" << f2(H - 12)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
    << escape(opts.x_column) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& sr = series[k];
    const char* color = kPalette[k % (sizeof kPalette / sizeof *kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      if (!usable(sr.x[i], sr.y[i])) continue;
      s << (first ? "" : " ") << f2(px(sr.x[i])) << ',' << f2(py(sr.y[i]));
      first = false;
    }
    s << "\"/>\n";
    const double ly = top + 16 + 18.0 * static_cast<double>(k);
    s << "<line x1=\"" << f2(left + pw + 12) << "\" y1=\"" << f2(ly) << "\" x2=\""
      << f2(left + pw + 36) << "\" y2=\"" << f2(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << f2(left + pw + 42) << "\" y=\"" << f2(ly + 4)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(sr.label) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_plot(const std::vector<std::string>& csv_paths, const PlotOptions& opts,
               const std::string& svg_path) {
  if (csv_paths.empty()) throw PlotError("at least one CSV is required");
  std::vector<PlotSeries> all;
  for (const auto& p : csv_paths) {
    auto s = load_series(p, opts);
    all.insert(all.end(), s.begin(), s.end());
  }
  const std::string svg = render_svg(all, opts);
  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw PlotError("cannot open '" + svg_path + "' for writing");
  out << svg;
}

}  // namespace fafed
