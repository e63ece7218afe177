#include "fafed/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "fafed/record_io.hpp"

namespace fafed {

namespace {

void check_threshold(double threshold) {
  if (!std::isfinite(threshold) || !(threshold > 0.0))
    throw std::invalid_argument("threshold must be finite and > 0");
}

std::string g6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string opt_int(const std::optional<std::int64_t>& v) {
  return v ? std::to_string(*v) : std::string("n/a");
}

}  // namespace

std::optional<RecordRow> first_below(const RunRecord& record, double threshold) {
  for (const auto& r : record.rows)
    if (r.grad_norm <= threshold) return r;
  return std::nullopt;
}

CompareRow summarize_run(const std::string& name, const RunRecord& record, double threshold) {
  check_threshold(threshold);
  if (record.rows.empty()) throw std::invalid_argument(name + ": record has no rows");
  CompareRow row;
  row.name = name;
  row.final_loss = record.rows.back().loss;
  row.final_grad_norm = record.rows.back().grad_norm;
  if (const auto hit = first_below(record, threshold)) {
    row.samples_to_threshold = hit->samples;
    row.comms_to_threshold = hit->comms;
  }
  return row;
}

std::string format_comparison(const std::vector<CompareRow>& rows, double threshold) {
  check_threshold(threshold);
  const std::vector<std::string> head = {"run", "final_loss", "final_grad_norm",
                                         "samples@" + g6(threshold), "comms@" + g6(threshold)};
  std::vector<std::vector<std::string>> cells = {head};
  for (const auto& r : rows)
    cells.push_back({r.name, g6(r.final_loss), g6(r.final_grad_norm),
                     opt_int(r.samples_to_threshold), opt_int(r.comms_to_threshold)});
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : cells)
    for (std::size_t k = 0; k < line.size(); ++k) width[k] = std::max(width[k], line[k].size());
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      os << line[k];
      if (k + 1 < line.size()) os << std::string(width[k] - line[k].size() + 2, ' ');
    }
    os << '\n';
  }
  return os.str();
}

std::string compare_runs(const std::vector<std::string>& csv_paths, double threshold) {
  check_threshold(threshold);
  std::vector<CompareRow> rows;
  for (const auto& p : csv_paths)
    rows.push_back(summarize_run(std::filesystem::path(p).stem().string(), read_csv_file(p),
                                 threshold));
  return format_comparison(rows, threshold);
}

}  // namespace fafed
