#include "fafed/cli.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "fafed/compare.hpp"
#include "fafed/config.hpp"
#include "fafed/engine.hpp"
#include "fafed/metrics.hpp"
#include "fafed/record_io.hpp"
#include "fafed/svg_plot.hpp"

namespace fafed {

namespace {

struct FlagSpec {
  const char* flag;
  const char* section;
  const char* key;
  const char* help;
};

// Flags that feed the same settings as the config file.
const FlagSpec kProblemFlags[] = {
    {"--problem", "problem", "kind", "counterexample | quadratic | logistic"},
    {"--n", "problem", "n_clients", "number of clients"},
    {"--dim", "problem", "dim", "model dimension"},
    {"--center-spread", "problem", "center_spread", "quadratic center spread"},
    {"--curvature-lo", "problem", "curvature_lo", "quadratic curvature lower end"},
    {"--curvature-hi", "problem", "curvature_hi", "quadratic curvature upper end"},
    {"--noise-sigma", "problem", "noise_sigma", "quadratic per-sample noise"},
    {"--samples-per-client", "problem", "samples_per_client", "local dataset size"},
    {"--label-skew", "problem", "label_skew", "logistic label skew in [0, 1]"},
    {"--problem-seed", "problem", "seed", "seed of the generated data"},
};

const FlagSpec kRunFlags[] = {
    {"--algo", "algorithm", "name", "fafed | naive-adaptive | fedavg | fedadam"},
    {"--beta", "algorithm", "beta", "second-moment EMA factor"},
    {"--rho", "algorithm", "rho", "adaptive floor"},
    {"--c", "algorithm", "c", "momentum coefficient, alpha = c eta^2"},
    {"--q", "algorithm", "q", "local steps per synchronization"},
    {"--b", "algorithm", "b", "minibatch size"},
    {"--init-batch", "algorithm", "init_batch", "FAFED initialization batch"},
    {"--w", "algorithm", "w", "schedule offset"},
    {"--rho-hbar", "algorithm", "rho_hbar", "schedule numerator"},
    {"--eta-mode", "algorithm", "eta_mode", "decaying | constant"},
    {"--eta", "algorithm", "eta", "constant step size"},
    {"--full-batch", "algorithm", "full_batch", "use full local gradients (true/false)"},
    {"--naive-v0", "algorithm", "naive_v0", "initial v of the naive method"},
    {"--beta1", "algorithm", "beta1", "FedAdam server beta1"},
    {"--beta2", "algorithm", "beta2", "FedAdam server beta2"},
    {"--tau", "algorithm", "tau", "FedAdam server epsilon"},
    {"--eta-global", "algorithm", "eta_global", "FedAdam server step"},
    {"--t", "run", "total_steps", "number of steps T"},
    {"--seed", "run", "seed", "run seed"},
    {"--record-every", "run", "record_every", "record period"},
    {"--x0", "run", "x0", "fill value of the starting point"},
    {"--workers", "run", "workers", "worker threads"},
    {"--audit", "run", "audit", "write the audit trace JSON here"},
    {"--wall-time", "run", "record_wall_time", "record wall-clock ms (true/false)"},
    {"--out", "run", "output", "results CSV path (stdout when absent)"},
};

struct SettingFlags {
  std::string config_path;
  std::map<std::string, std::string> values;  // flag -> value
  std::vector<const FlagSpec*> specs;

  void add(CLI::App* app, const FlagSpec* begin, const FlagSpec* end) {
    for (const FlagSpec* f = begin; f != end; ++f) {
      specs.push_back(f);
      app->add_option(f->flag, values[f->flag], f->help);
    }
  }

  Settings settings(CLI::App* app) const {
    Settings s;
    if (!config_path.empty()) s.load_file(config_path);
    for (const FlagSpec* f : specs)
      if (app->count(f->flag) > 0) s.set(f->section, f->key, values.at(f->flag));
    return s;
  }
};

std::string g(double v, int digits = 10) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void report_run(std::ostream& err, const ExperimentConfig& cfg, const RunResult& res) {
  err << to_string(cfg.run.algorithm) << ": ";
  if (res.record.diverged) {
    err << "diverged at t=" << res.record.diverged_at << '\n';
    return;
  }
  const auto& last = res.record.rows.back();
  err << "t=" << last.t << " loss=" << g(last.loss) << " grad_norm=" << g(last.grad_norm)
      << " samples=" << last.samples << " comms=" << last.comms << '\n';
  if (res.alpha_clamped_steps > 0)
    err << "warning: alpha clamped to 1 on " << res.alpha_clamped_steps << " steps\n";
}

int finish_run(std::ostream& out, std::ostream& err, const ExperimentConfig& cfg,
               const RunResult& res) {
  if (cfg.run.output_path.empty()) {
    write_csv(out, res.record);
  } else {
    write_csv_file(cfg.run.output_path, res.record);
  }
  if (!cfg.audit_path.empty()) write_trace_file(cfg.audit_path, res.trace);
  report_run(err, cfg, res);
  return res.record.diverged ? kExitDiverged : kExitOk;
}

int cmd_run(const SettingFlags& flags, CLI::App* app, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = flags.settings(app).build();
  cfg.run.problem = cfg.problem.build();
  return finish_run(out, err, cfg, run_experiment(cfg.run));
}

int cmd_grid(const SettingFlags& flags, CLI::App* app, const std::vector<std::string>& specs,
             std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = flags.settings(app).build();
  cfg.run.problem = cfg.problem.build();
  std::vector<std::pair<std::string, std::vector<double>>> grid;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw ConfigError("grid entry '" + spec + "' must look like key=v1,v2,...");
    std::vector<double> values;
    std::stringstream ss(spec.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      char* end = nullptr;
      const double v = std::strtod(item.c_str(), &end);
      if (item.empty() || *end != '\0')
        throw ConfigError("invalid grid value '" + item + "' for key '" + spec.substr(0, eq) + "'");
      values.push_back(v);
    }
    grid.emplace_back(spec.substr(0, eq), std::move(values));
  }
  GridResult res = grid_search(cfg.run, grid, set_hyper_param);
  for (std::size_t k = 0; k < res.table.size(); ++k) {
    const auto& p = res.table[k];
    err << (k == res.best ? "* " : "  ");
    for (const auto& [key, v] : p.params) err << key << '=' << g(v) << ' ';
    err << (p.diverged ? std::string("diverged") : "final_loss=" + g(p.final_loss)) << '\n';
  }
  return finish_run(out, err, cfg, res.best_run);
}

int cmd_verify(const std::string& path, std::ostream& out) {
  const RunTrace trace = read_trace_file(path);
  bool all = true;
  for (const auto& c : verify_trace(trace)) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << "  (" << c.detail << ')';
    out << '\n';
    all = all && c.passed;
  }
  return all ? kExitOk : kExitInvalid;
}

int cmd_counterexample(std::int64_t steps, double eta, double beta, double x0,
                       std::ostream& out) {
  if (steps < 1) throw ConfigError("steps must be ≥ 1");
  const CounterexampleReport rep = reproduce_counterexample(steps, eta, beta, x0);
  out << "t,x_bar,predicted_drift,observed_drift,abs_diff\n";
  for (const auto& r : rep.rows)
    out << r.t << ',' << g(r.x_bar, 17) << ',' << g(r.predicted, 17) << ','
        << g(r.observed, 17) << ',' << g(r.abs_diff, 3) << '\n';
  out << "clients after step 1:";
  for (double c : rep.clients_after_first) out << ' ' << g(c, 8);
  out << '\n';
  const bool pass = rep.max_abs_diff <= 1e-9 && rep.all_outside_unit;
  out << (pass ? "PASS" : "FAIL") << " max abs diff " << g(rep.max_abs_diff, 3)
      << ", x_bar after " << steps << " steps " << g(rep.rows.back().x_bar, 8) << '\n';
  return pass ? kExitOk : kExitInvalid;
}

std::vector<std::string> split_commas(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& it : items) {
    std::stringstream ss(it);
    std::string part;
    while (std::getline(ss, part, ',')) if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated adaptive optimization simulator"};
  app.require_subcommand(1);

  SettingFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "Run one experiment and write its CSV");
  run->add_option("--config", run_flags.config_path, "INI config file");
  run_flags.add(run, std::begin(kProblemFlags), std::end(kProblemFlags));
  run_flags.add(run, std::begin(kRunFlags), std::end(kRunFlags));

  SettingFlags grid_flags;
  std::vector<std::string> grid_specs;
  CLI::App* grid = app.add_subcommand("grid", "Grid search; writes the best run's CSV");
  grid->add_option("--config", grid_flags.config_path, "INI config file");
  grid->add_option("--grid", grid_specs, "key=v1,v2,... (repeatable)")->required();
  grid_flags.add(grid, std::begin(kProblemFlags), std::end(kProblemFlags));
  grid_flags.add(grid, std::begin(kRunFlags), std::end(kRunFlags));

  std::string trace_path;
  CLI::App* verify = app.add_subcommand("verify", "Check an audit trace");
  verify->add_option("trace", trace_path, "trace JSON written by run --audit")->required();

  std::int64_t ce_steps = 50;
  double ce_eta = 0.1, ce_beta = 0.5, ce_x0 = 10.0;
  CLI::App* ce = app.add_subcommand("counterexample", "Naive adaptive drift table");
  ce->add_option("--steps", ce_steps, "number of steps");
  ce->add_option("--eta", ce_eta, "step size");
  ce->add_option("--beta", ce_beta, "second-moment EMA factor");
  ce->add_option("--x0", ce_x0, "starting point");

  std::vector<std::string> plot_inputs, plot_y;
  PlotOptions plot_opts;
  std::string plot_out = "plot.svg";
  CLI::App* plot = app.add_subcommand("plot", "SVG line chart of results CSVs");
  plot->add_option("csv", plot_inputs, "results CSVs")->required();
  plot->add_option("--x", plot_opts.x_column, "x column")
      ->check(CLI::IsMember({"t", "comms", "samples"}));
  plot->add_option("--y", plot_y, "y column(s)");
  plot->add_flag("--log-y", plot_opts.log_y, "logarithmic y axis");
  plot->add_option("--title", plot_opts.title, "chart title");
  plot->add_option("--out", plot_out, "output SVG");

  SettingFlags problem_flags;
  CLI::App* problem = app.add_subcommand("problem", "Problem utilities");
  problem->require_subcommand(1);
  CLI::App* describe = problem->add_subcommand("describe", "Print a problem's metadata");
  describe->add_option("--config", problem_flags.config_path, "INI config file");
  problem_flags.add(describe, std::begin(kProblemFlags), std::end(kProblemFlags));

  std::vector<std::string> cmp_inputs;
  double threshold = 0.0;
  CLI::App* cmp = app.add_subcommand("compare", "Compare results CSVs");
  cmp->add_option("csv", cmp_inputs, "results CSVs")->required();
  cmp->add_option("--threshold", threshold, "grad-norm target")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*run) return cmd_run(run_flags, run, out, err);
    if (*grid) return cmd_grid(grid_flags, grid, grid_specs, out, err);
    if (*verify) return cmd_verify(trace_path, out);
    if (*ce) return cmd_counterexample(ce_steps, ce_eta, ce_beta, ce_x0, out);
    if (*plot) {
      if (!plot_y.empty()) plot_opts.y_columns = split_commas(plot_y);
      emit_plot(plot_inputs, plot_opts, plot_out);
      return kExitOk;
    }
    if (*describe) {
      const ExperimentConfig cfg = problem_flags.settings(describe).build();
      out << cfg.problem.build()->describe();
      return kExitOk;
    }
    if (*cmp) {
      out << compare_runs(cmp_inputs, threshold);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace fafed
