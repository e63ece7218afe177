#include "fafed/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "fafed/metrics.hpp"
#include "fafed/worker_pool.hpp"

namespace fafed {

namespace {

double max_abs_entry(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

bool out_of_range(const Vector& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (!std::isfinite(v[k]) || std::abs(v[k]) > kDivergenceThreshold) return true;
  return false;
}

bool state_diverged(const FederatedState& s) {
  for (const auto& c : s.clients)
    if (out_of_range(c.x) || out_of_range(c.m) || out_of_range(c.v)) return true;
  return out_of_range(s.server.x_bar);
}

Vector client_mean(const std::vector<ClientState>& clients,
                   Vector ClientState::*field) {
  std::vector<Vector> vs;
  vs.reserve(clients.size());
  for (const auto& c : clients) vs.push_back(c.*field);
  return mean_of(vs);
}

// eta^2 sum_i ||d_i - mean d||^2
double dispersion(const std::vector<Vector>& dirs, double eta) {
  const Vector mean = mean_of(dirs);
  double total = 0.0;
  for (const auto& d : dirs) total += (d - mean).squaredNorm();
  return eta * eta * total;
}

FederatedState advance(Algorithm algo, FederatedState state, const Problem& problem,
                       const HyperParams& hp, const ParallelFor& par) {
  switch (algo) {
    case Algorithm::Fafed: return fafed_step(std::move(state), problem, hp, par);
    case Algorithm::NaiveAdaptive:
      return naive_adaptive_step(std::move(state), problem, hp, par);
    case Algorithm::FedAvg: return fedavg_step(std::move(state), problem, hp, par);
    case Algorithm::FedAdam: return fedadam_step(std::move(state), problem, hp, par);
  }
  throw std::logic_error("unknown algorithm");
}

}  // namespace

void RunConfig::validate() const {
  if (!problem) throw std::invalid_argument("problem is not set");
  if (total_steps < 1) throw std::invalid_argument("total_steps must be ≥ 1");
  if (record_every < 1) throw std::invalid_argument("record_every must be ≥ 1");
  if (record_every > total_steps)
    throw std::invalid_argument("record_every must be ≤ total_steps");
  if (workers < 1) throw std::invalid_argument("workers must be ≥ 1");
  if (x0.size() != 0 && static_cast<std::size_t>(x0.size()) != problem->dim())
    throw std::invalid_argument("x0 has the wrong dimension");
  hp.validate();
}

SampleCost sample_accounting(Algorithm algo, const HyperParams& hp, const Problem& problem) {
  std::int64_t step_evals = 0, init_evals = 0;
  for (std::size_t i = 0; i < problem.n_clients(); ++i) {
    const auto local = static_cast<std::int64_t>(problem.local_size(i));
    step_evals += hp.full_batch ? local : hp.b;
    init_evals += hp.full_batch ? local : hp.init_batch;
  }
  SampleCost cost;
  if (algo == Algorithm::Fafed) {
    cost.init_samples = init_evals;
    cost.per_step_samples = 2 * step_evals;
  } else {
    cost.per_step_samples = step_evals;
  }
  return cost;
}

std::int64_t comm_rounds(std::int64_t steps, int q) { return 1 + steps / q; }

RunResult run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const Problem& problem = *cfg.problem;
  const HyperParams& hp = cfg.hp;
  const Vector x0 = cfg.x0.size() ? cfg.x0 : Vector::Constant(problem.dim(), cfg.x0_fill);

  std::optional<WorkerPool> pool;
  ParallelFor par = serial_for;
  if (cfg.workers > 1) {
    pool.emplace(cfg.workers);
    par = pool->as_parallel_for();
  }

  const auto started = std::chrono::steady_clock::now();
  const bool is_fafed = cfg.algorithm == Algorithm::Fafed;
  const SampleCost cost = sample_accounting(cfg.algorithm, hp, problem);

  RunResult result;
  RunTrace& trace = result.trace;
  trace.algorithm = cfg.algorithm;
  trace.n_clients = problem.n_clients();
  trace.dim = problem.dim();
  trace.q = hp.q;
  trace.rho = is_fafed ? hp.rho : 1.0;
  trace.adaptive = is_fafed || cfg.algorithm == Algorithm::NaiveAdaptive;
  trace.precond_floor = is_fafed ? hp.rho : 0.0;
  trace.init_samples = cost.init_samples;

  FederatedState state = is_fafed ? fafed_init(problem, hp, x0, cfg.seed)
                                  : baseline_init(problem, hp, x0, cfg.seed);
  if (is_fafed)
    for (const auto& c : state.clients)
      trace.init_max_abs_grad = std::max(trace.init_max_abs_grad, max_abs_entry(c.g));
  if (cfg.algorithm == Algorithm::NaiveAdaptive)
    for (const auto& c : state.clients)
      trace.init_max_abs_grad = std::max(trace.init_max_abs_grad,
                                         std::sqrt(max_abs_entry(c.v)));

  std::int64_t samples = cost.init_samples;
  std::int64_t comms = 1;
  const std::size_t n = state.clients.size();

  for (std::int64_t t = 1; t <= cfg.total_steps; ++t) {
    state.server.t = t;
    if (is_fafed && alpha_clamped(t, hp)) ++result.alpha_clamped_steps;

    StepTrace st;
    st.t = t;
    st.eta = eta_schedule(t, hp);
    st.rho = trace.rho;

    std::vector<Vector> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = state.clients[i].x;
    const Vector x_now = mean_of(xs);
    st.consensus = consensus_error(std::span<const Vector>(xs));
    for (const auto& x : xs) st.x_scale = std::max(st.x_scale, max_abs_entry(x));
    const Vector a_before = state.server.adaptive_diag;
    const std::int64_t samples_before = samples;
    const std::int64_t comms_before = comms;

    state = advance(cfg.algorithm, std::move(state), problem, hp, par);

    samples += cost.per_step_samples;
    st.synced = t % hp.q == 0;
    if (st.synced) ++comms;
    st.samples = samples;
    st.comms = comms;

    if (state_diverged(state)) {
      result.record.diverged = true;
      result.record.diverged_at = t;
      break;
    }

    const Vector x_next = client_mean(state.clients, &ClientState::x);
    const Vector grad = problem.global_grad(x_now);

    std::vector<Vector> dirs(n);
    Vector estimator;
    Vector a_diag = Vector::Ones(x_now.size());
    switch (cfg.algorithm) {
      case Algorithm::Fafed:
        a_diag = state.server.adaptive_diag;
        for (std::size_t i = 0; i < n; ++i)
          dirs[i] = state.clients[i].m.cwiseQuotient(a_diag);
        estimator = client_mean(state.clients, &ClientState::m);
        break;
      case Algorithm::NaiveAdaptive:
        for (std::size_t i = 0; i < n; ++i)
          dirs[i] = naive_direction(state.clients[i].g, state.clients[i].v);
        estimator = mean_of(dirs);
        break;
      case Algorithm::FedAvg:
        for (std::size_t i = 0; i < n; ++i) dirs[i] = state.clients[i].g;
        estimator = mean_of(dirs);
        break;
      case Algorithm::FedAdam:
        for (std::size_t i = 0; i < n; ++i) dirs[i] = state.clients[i].g;
        estimator = st.synced ? Vector((x_now - x_next) / st.eta) : mean_of(dirs);
        break;
    }

    st.loss = problem.global_loss(x_now);
    st.grad_norm = grad.norm();
    st.a_norm = a_diag.maxCoeff();
    st.a_min = a_diag.minCoeff();
    st.a_changed = is_fafed && a_diag != a_before;
    st.move_over_eta = (x_next - x_now).norm() / st.eta;
    st.err_over_rho = (grad - estimator).norm() / st.rho;
    st.metric_mt = metric_Mt(x_next, x_now, grad, estimator, st.eta, st.rho);
    st.dispersion = st.synced ? 0.0 : dispersion(dirs, st.eta);
    for (const auto& c : state.clients) st.max_abs_grad = std::max(st.max_abs_grad, max_abs_entry(c.g));
    if (is_fafed) {
      st.precond_max = st.a_norm;
    } else if (cfg.algorithm == Algorithm::NaiveAdaptive) {
      for (const auto& c : state.clients)
        st.precond_max = std::max(st.precond_max, std::sqrt(max_abs_entry(c.v)));
    }
    if (st.synced) {
      for (const auto& c : state.clients) {
        st.post_sync_dev_x = std::max(st.post_sync_dev_x, max_abs_entry(c.x - state.server.x_bar));
        if (is_fafed) {
          st.post_sync_dev_m = std::max(st.post_sync_dev_m, max_abs_entry(c.m - state.server.m_bar));
          st.post_sync_dev_v = std::max(st.post_sync_dev_v, max_abs_entry(c.v - state.server.v_bar));
        }
      }
    }

    if (t % cfg.record_every == 0 || t == cfg.total_steps) {
      RecordRow row;
      row.t = t;
      row.loss = st.loss;
      row.grad_norm = st.grad_norm;
      row.metric_mt = st.metric_mt;
      row.consensus_err = st.consensus;
      row.samples = samples_before;
      row.comms = comms_before;
      if (cfg.record_wall_time)
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();
      result.record.rows.push_back(row);
    }
    if (cfg.observer) cfg.observer(state, st);
    if (cfg.audit) trace.steps.push_back(st);
  }
  result.final_state = std::move(state);
  return result;
}

void set_hyper_param(RunConfig& cfg, const std::string& key, double value) {
  HyperParams& hp = cfg.hp;
  if (key == "eta") {
    hp.eta = value;
    hp.eta_mode = EtaMode::Constant;
  } else if (key == "eta_mode") {
    hp.eta_mode = value == 0.0 ? EtaMode::Decaying : EtaMode::Constant;
  } else if (key == "beta") {
    hp.beta = value;
  } else if (key == "rho") {
    hp.rho = value;
  } else if (key == "c") {
    hp.c = value;
  } else if (key == "q") {
    hp.q = static_cast<int>(value);
  } else if (key == "b") {
    hp.b = static_cast<int>(value);
  } else if (key == "init_batch") {
    hp.init_batch = static_cast<int>(value);
  } else if (key == "w") {
    hp.w = value;
  } else if (key == "rho_hbar") {
    hp.rho_hbar = value;
    hp.eta_mode = EtaMode::Decaying;
  } else if (key == "beta1") {
    hp.beta1 = value;
  } else if (key == "beta2") {
    hp.beta2 = value;
  } else if (key == "tau") {
    hp.tau = value;
  } else if (key == "eta_global") {
    hp.eta_global = value;
  } else if (key == "total_steps") {
    cfg.total_steps = static_cast<std::int64_t>(value);
  } else {
    throw std::invalid_argument("unknown grid parameter '" + key + "'");
  }
}

GridResult grid_search(const RunConfig& base,
                       const std::vector<std::pair<std::string, std::vector<double>>>& grid,
                       const ParamSetter& set_param) {
  if (grid.empty()) throw std::invalid_argument("grid must not be empty");
  for (const auto& [key, values] : grid)
    if (values.empty()) throw std::invalid_argument("grid entry '" + key + "' has no values");

  GridResult out;
  std::vector<std::size_t> idx(grid.size(), 0);
  double best_loss = std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (;;) {
    RunConfig cfg = base;
    GridPoint point;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double v = grid[k].second[idx[k]];
      set_param(cfg, grid[k].first, v);
      point.params.emplace_back(grid[k].first, v);
    }
    RunResult run = run_experiment(cfg);
    point.diverged = run.record.diverged;
    if (point.diverged) {
      point.final_loss = std::numeric_limits<double>::infinity();
    } else {
      const Vector x_final = client_mean(run.final_state.clients, &ClientState::x);
      point.final_loss = cfg.problem->global_loss(x_final);
      if (!std::isfinite(point.final_loss))
        point.final_loss = std::numeric_limits<double>::infinity();
    }
    if (!have_best || point.final_loss < best_loss) {
      have_best = true;
      best_loss = point.final_loss;
      out.best = out.table.size();
      out.best_run = std::move(run);
    }
    out.table.push_back(std::move(point));

    // Odometer increment, last key fastest.
    std::size_t k = grid.size();
    while (k > 0) {
      --k;
      if (++idx[k] < grid[k].second.size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
  }
}

CounterexampleReport reproduce_counterexample(std::int64_t steps, double eta, double beta,
                                              double x0) {
  const Problem problem = make_counterexample();
  HyperParams hp = default_hyper_params(Algorithm::NaiveAdaptive);
  hp.eta_mode = EtaMode::Constant;
  hp.eta = eta;
  hp.beta = beta;
  hp.q = 1;
  hp.b = 1;
  hp.naive_v0 = 0.0;

  FederatedState state = baseline_init(problem, hp, Vector::Constant(1, x0), 0);
  CounterexampleReport report;
  double x_prev = x0;
  for (std::int64_t t = 1; t <= steps; ++t) {
    state.server.t = t;
    state = naive_adaptive_step(std::move(state), problem, hp);
    // Local candidates x_i - eta g_i / sqrt(v_i) before averaging.
    for (const auto& c : state.clients) {
      const double local = c.x_prev[0] - eta * naive_direction(c.g, c.v)[0];
      if (t == 1) report.clients_after_first.push_back(local);
      if (std::abs(local) <= 1.0 || std::abs(c.x[0]) <= 1.0) report.all_outside_unit = false;
    }
    CounterexampleRow row;
    row.t = t;
    row.x_bar = state.server.x_bar[0];
    row.predicted = eta / (3.0 * std::sqrt(1.0 - std::pow(beta, static_cast<double>(t))));
    row.observed = row.x_bar - x_prev;
    row.abs_diff = std::abs(row.observed - row.predicted);
    report.max_abs_diff = std::max(report.max_abs_diff, row.abs_diff);
    if (t == 1) report.x_bar_first = row.x_bar;
    x_prev = row.x_bar;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace fafed
