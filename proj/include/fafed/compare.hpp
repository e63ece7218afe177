#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fafed/engine.hpp"

namespace fafed {

struct CompareRow {
  std::string name;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
  std::optional<std::int64_t> samples_to_threshold;
  std::optional<std::int64_t> comms_to_threshold;
};

/// First recorded row with grad_norm <= threshold, if any.
std::optional<RecordRow> first_below(const RunRecord& record, double threshold);

/// Throws std::invalid_argument unless threshold is finite and > 0, or when
/// the record has no rows.
CompareRow summarize_run(const std::string& name, const RunRecord& record, double threshold);

/// Aligned text table; unreached thresholds print as "n/a".
std::string format_comparison(const std::vector<CompareRow>& rows, double threshold);

/// Reads each CSV and formats the table; names are file stems.
std::string compare_runs(const std::vector<std::string>& csv_paths, double threshold);

}  // namespace fafed
