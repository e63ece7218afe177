#pragma once

#include <iosfwd>
#include <string>

#include "fafed/engine.hpp"

namespace fafed {

/// Header of every results CSV.
inline constexpr const char* kCsvHeader =
    "t,loss,grad_norm,metric_mt,consensus_err,samples,comms,wall_ms";

/// Floats are written with 17 significant digits so reading them back
/// reproduces the record bitwise.
void write_csv(std::ostream& os, const RunRecord& record);
void write_csv_file(const std::string& path, const RunRecord& record);
std::string to_csv(const RunRecord& record);

/// Throws std::runtime_error on a bad header or malformed row.
RunRecord read_csv(std::istream& is);
RunRecord read_csv_file(const std::string& path);

/// Audit trace as JSON, consumed by `fafed verify`.
std::string trace_to_json(const RunTrace& trace);
RunTrace trace_from_json(const std::string& text);
void write_trace_file(const std::string& path, const RunTrace& trace);
RunTrace read_trace_file(const std::string& path);

}  // namespace fafed
