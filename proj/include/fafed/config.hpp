#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fafed/engine.hpp"
#include "fafed/problems.hpp"

namespace fafed {

/// Invalid configuration; the message names the offending key.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Which problem to build and with what options.
struct ProblemConfig {
  ProblemKind kind = ProblemKind::HeterogeneousQuadratic;
  QuadraticOptions quadratic;
  LogisticOptions logistic;

  std::shared_ptr<const Problem> build() const;
};

ProblemKind parse_problem_kind(const std::string& name);

struct ExperimentConfig {
  ProblemConfig problem;
  RunConfig run;
  std::string audit_path;  // trace JSON; empty means no trace file
};

/// Raw settings keyed by "section.key". Later assignments win, so loading
/// the file first and the flags second gives flags precedence.
class Settings {
 public:
  /// Throws ConfigError for a key that no section defines.
  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;

  /// Parses INI text: [problem], [algorithm], [run] sections of key = value
  /// lines, '#' or ';' comments.
  void load_text(const std::string& text);
  void load_file(const std::string& path);

  /// Defaults, then every stored setting. The algorithm name is applied
  /// first so its defaults never override explicit values.
  ExperimentConfig build() const;

  static const std::vector<std::string>& keys(const std::string& section);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fafed
