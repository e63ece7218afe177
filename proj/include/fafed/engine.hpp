#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fafed/optimizers.hpp"
#include "fafed/problems.hpp"

namespace fafed {

/// One row of a run's time series, describing the averaged model x_bar_t
/// at the start of step t. samples and comms are the cumulative cost spent
/// to reach x_bar_t.
struct RecordRow {
  std::int64_t t = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double metric_mt = 0.0;
  double consensus_err = 0.0;
  std::int64_t samples = 0;
  std::int64_t comms = 0;
  double wall_ms = 0.0;

  bool operator==(const RecordRow&) const = default;
};

struct RunRecord {
  std::vector<RecordRow> rows;
  bool diverged = false;
  std::int64_t diverged_at = 0;
};

/// Per-step diagnostics for the analysis checks. All quantities refer to
/// step t: x_bar_t is the client mean before the step, x_bar_{t+1} after it.
///
/// For FAFED the estimator is the client mean of m and A is the shared
/// adaptive diagonal. The baselines have no shared preconditioner, so they
/// use A = I, rho = 1 and take the estimator to be the averaged direction
/// actually applied, (x_bar_t - x_bar_{t+1}) / eta_t.
struct StepTrace {
  std::int64_t t = 0;
  double eta = 0.0;
  double rho = 1.0;          // floor used in the metric and the chain bound
  double loss = 0.0;
  double grad_norm = 0.0;    // ||grad f(x_bar_t)||
  double a_norm = 1.0;       // operator norm (max entry) of A_t
  double a_min = 1.0;        // min entry of A_t
  double move_over_eta = 0.0;
  double err_over_rho = 0.0;
  double metric_mt = 0.0;
  double consensus = 0.0;    // sum_i ||x_{t,i} - x_bar_t||^2
  double dispersion = 0.0;   // eta_t^2 sum_i ||d_{t,i} - mean d_t||^2
  double x_scale = 0.0;      // max |x_{t,i}| entry, for rounding floors
  bool synced = false;
  bool a_changed = false;
  double post_sync_dev_x = 0.0;  // max entry |client - server| after sync
  double post_sync_dev_m = 0.0;
  double post_sync_dev_v = 0.0;
  double max_abs_grad = 0.0;     // max |g_{t,i}| entry over clients
  double precond_max = 0.0;      // max preconditioner entry in use
  std::int64_t samples = 0;      // cumulative after step t
  std::int64_t comms = 0;
};

struct RunTrace {
  Algorithm algorithm = Algorithm::Fafed;
  std::size_t n_clients = 0;
  std::size_t dim = 0;
  int q = 1;
  double rho = 1.0;
  bool adaptive = false;       // a preconditioner built from squared gradients
  double precond_floor = 0.0;  // rho for FAFED, 0 for the naive method
  double init_max_abs_grad = 0.0;
  std::int64_t init_samples = 0;
  std::vector<StepTrace> steps;
};

struct RunConfig {
  Algorithm algorithm = Algorithm::Fafed;
  std::shared_ptr<const Problem> problem;
  HyperParams hp;
  std::int64_t total_steps = 1000;
  std::uint64_t seed = 0;
  std::int64_t record_every = 1;
  /// Starting point; empty means fill with x0_fill.
  Vector x0;
  double x0_fill = 0.0;
  std::size_t workers = 1;
  bool audit = false;
  bool record_wall_time = false;
  std::string output_path;
  /// Called after every step with the post-step state and its trace.
  std::function<void(const FederatedState&, const StepTrace&)> observer;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct RunResult {
  RunRecord record;
  RunTrace trace;  // steps filled only when cfg.audit is set
  FederatedState final_state;
  std::int64_t alpha_clamped_steps = 0;
};

/// Gradient evaluations and communications charged by each event.
struct SampleCost {
  std::int64_t init_samples = 0;
  std::int64_t per_step_samples = 0;
};

/// FAFED: 2 b N per step (two evaluation points per batch) plus B N at
/// init. Baselines: b N per step. Full-batch runs charge the local sizes.
SampleCost sample_accounting(Algorithm algo, const HyperParams& hp, const Problem& problem);

/// Communication rounds after `steps` steps: one initial broadcast plus one
/// per synchronization.
std::int64_t comm_rounds(std::int64_t steps, int q);

/// Magnitude beyond which a run is declared diverged.
inline constexpr double kDivergenceThreshold = 1e12;

RunResult run_experiment(const RunConfig& cfg);

/// Applies one named hyperparameter value (e.g. "eta", "beta", "c").
using ParamSetter = std::function<void(RunConfig&, const std::string& key, double value)>;

struct GridPoint {
  std::vector<std::pair<std::string, double>> params;
  double final_loss = 0.0;
  bool diverged = false;
};

struct GridResult {
  std::vector<GridPoint> table;  // in enumeration order
  std::size_t best = 0;
  RunResult best_run;
};

/// Runs every combination (first key varies slowest) and keeps the lowest
/// final global loss; ties go to the earliest combination. Diverged runs
/// rank last.
GridResult grid_search(const RunConfig& base,
                       const std::vector<std::pair<std::string, std::vector<double>>>& grid,
                       const ParamSetter& set_param);

/// Default setter covering the numeric hyperparameters.
void set_hyper_param(RunConfig& cfg, const std::string& key, double value);

/// Naive adaptive FedAvg on the three-client counter-example, recording
/// x_bar after every step next to the closed-form drift eta/(3 sqrt(1-beta^t)).
struct CounterexampleRow {
  std::int64_t t = 0;
  double x_bar = 0.0;
  double predicted = 0.0;
  double observed = 0.0;
  double abs_diff = 0.0;
};

struct CounterexampleReport {
  std::vector<CounterexampleRow> rows;
  std::vector<double> clients_after_first;  // client positions after step 1
  double x_bar_first = 0.0;
  double max_abs_diff = 0.0;
  bool all_outside_unit = true;  // every client iterate kept |x| > 1
};

CounterexampleReport reproduce_counterexample(std::int64_t steps = 50, double eta = 0.1,
                                              double beta = 0.5, double x0 = 10.0);

}  // namespace fafed
