#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fafed/engine.hpp"
#include "fafed/record_io.hpp"

using namespace fafed;

namespace {

std::shared_ptr<const Problem> quadratic(std::uint64_t seed, std::size_t n = 4, std::size_t d = 5) {
  QuadraticOptions o;
  o.n_clients = n;
  o.dim = d;
  o.seed = seed;
  return std::make_shared<const Problem>(make_quadratic(o));
}

RunConfig base_config(Algorithm algo, std::shared_ptr<const Problem> p) {
  RunConfig cfg;
  cfg.algorithm = algo;
  cfg.problem = std::move(p);
  cfg.hp = default_hyper_params(algo);
  cfg.total_steps = 60;
  cfg.x0_fill = 1.0;
  return cfg;
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("config validation") {
    RunConfig cfg = base_config(Algorithm::Fafed, quadratic(0));
    cfg.total_steps = 0;
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
    cfg.total_steps = 10;
    cfg.record_every = 11;
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
    cfg.record_every = 10;
    cfg.problem.reset();
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
  }

  TEST_CASE("sample and communication accounting") {
    QuadraticOptions o;
    o.n_clients = 4;
    const Problem p = make_quadratic(o);
    HyperParams hp;
    hp.b = 5;
    hp.init_batch = 50;
    const SampleCost fafed = sample_accounting(Algorithm::Fafed, hp, p);
    CHECK(fafed.per_step_samples == 40);
    CHECK(fafed.init_samples == 200);
    const SampleCost avg = sample_accounting(Algorithm::FedAvg, hp, p);
    CHECK(avg.per_step_samples == 20);
    CHECK(avg.init_samples == 0);
    CHECK(comm_rounds(100, 10) == 11);
    hp.full_batch = true;
    CHECK(sample_accounting(Algorithm::FedAvg, hp, p).per_step_samples == 4 * 500);
  }

  TEST_CASE("record rows and counters") {
    RunConfig cfg = base_config(Algorithm::Fafed, quadratic(1));
    cfg.hp.q = 10;
    cfg.total_steps = 100;
    cfg.record_every = 7;
    const RunResult r = run_experiment(cfg);
    REQUIRE_FALSE(r.record.diverged);
    // t = 7, 14, ..., 98 and the final step
    CHECK(r.record.rows.size() == 15);
    CHECK(r.record.rows.back().t == 100);
    const SampleCost cost = sample_accounting(cfg.algorithm, cfg.hp, *cfg.problem);
    for (const auto& row : r.record.rows) {
      CHECK(row.samples == cost.init_samples + (row.t - 1) * cost.per_step_samples);
      CHECK(row.comms == comm_rounds(row.t - 1, cfg.hp.q));
      CHECK(row.wall_ms == 0.0);
      CHECK(row.metric_mt >= 0.0);
    }
    CHECK(r.final_state.server.sync_count == 10);
  }

  TEST_CASE("fedavg, homogeneous, full batch: zero consensus error") {
    QuadraticOptions o;
    o.center_spread = 0.0;
    o.curvature_lo = o.curvature_hi = 1.3;
    o.noise_sigma = 0.0;
    o.samples_per_client = 1;
    auto p = std::make_shared<const Problem>(make_quadratic(o));
    RunConfig cfg = base_config(Algorithm::FedAvg, p);
    cfg.hp.full_batch = true;
    cfg.hp.q = 7;
    bool identical = true;
    cfg.observer = [&](const FederatedState& s, const StepTrace&) {
      for (const auto& c : s.clients)
        for (Eigen::Index k = 0; k < c.x.size(); ++k)
          if (std::memcmp(&c.x[k], &s.clients[0].x[k], sizeof(double)) != 0) identical = false;
    };
    const RunResult r = run_experiment(cfg);
    CHECK(identical);
    // the mean of identical vectors is only exact up to rounding
    for (const auto& row : r.record.rows) CHECK(row.consensus_err <= 1e-25);
  }

  TEST_CASE("fafed on the counter-example, q = 1, reaches 1e-2") {
    RunConfig cfg = base_config(Algorithm::Fafed,
                                std::make_shared<const Problem>(make_counterexample()));
    cfg.hp.q = 1;
    cfg.x0_fill = 10.0;
    cfg.total_steps = 2000;
    const RunResult r = run_experiment(cfg);
    REQUIRE_FALSE(r.record.diverged);
    CHECK(std::abs(r.final_state.server.x_bar[0]) <= 1e-2);
  }

  TEST_CASE("identical configs give identical CSV, also with workers") {
    for (auto algo : {Algorithm::Fafed, Algorithm::NaiveAdaptive, Algorithm::FedAvg,
                      Algorithm::FedAdam}) {
      RunConfig cfg = base_config(algo, quadratic(5, 6, 4));
      cfg.seed = 42;
      const std::string a = to_csv(run_experiment(cfg).record);
      const std::string b = to_csv(run_experiment(cfg).record);
      cfg.workers = 3;
      const std::string c = to_csv(run_experiment(cfg).record);
      CHECK(a == b);
      CHECK(a == c);
      cfg.workers = 1;
      cfg.seed = 43;
      CHECK(to_csv(run_experiment(cfg).record) != a);
    }
  }

  TEST_CASE("divergence is flagged at the offending step") {
    RunConfig cfg = base_config(Algorithm::FedAvg, quadratic(2));
    cfg.hp.eta = 5.0;
    cfg.total_steps = 500;
    const RunResult r = run_experiment(cfg);
    CHECK(r.record.diverged);
    CHECK(r.record.diverged_at > 1);
    CHECK(r.record.diverged_at < 500);
    for (const auto& row : r.record.rows) CHECK(row.t < r.record.diverged_at);
  }

  TEST_CASE("naive adaptive method diverges on the counter-example") {
    RunConfig cfg = base_config(Algorithm::NaiveAdaptive,
                                std::make_shared<const Problem>(make_counterexample()));
    cfg.hp.q = 1;
    cfg.hp.b = 1;
    cfg.hp.beta = 0.5;
    cfg.x0_fill = 10.0;
    cfg.total_steps = 300;
    const RunResult r = run_experiment(cfg);
    CHECK(r.final_state.server.x_bar[0] == doctest::Approx(10.0 + 300 * 0.1 / 3.0).epsilon(1e-2));
    for (std::size_t k = 1; k < r.record.rows.size(); ++k)
      CHECK(r.record.rows[k].loss > r.record.rows[k - 1].loss);
  }

  TEST_CASE("observer sees every step") {
    RunConfig cfg = base_config(Algorithm::FedAvg, quadratic(3));
    std::int64_t calls = 0, last = 0;
    cfg.observer = [&](const FederatedState& s, const StepTrace& st) {
      ++calls;
      last = st.t;
      CHECK(s.server.t == st.t);
    };
    run_experiment(cfg);
    CHECK(calls == cfg.total_steps);
    CHECK(last == cfg.total_steps);
  }

  TEST_CASE("wall time only when requested") {
    RunConfig cfg = base_config(Algorithm::FedAvg, quadratic(3));
    cfg.record_wall_time = true;
    const RunResult r = run_experiment(cfg);
    CHECK(r.record.rows.back().wall_ms >= 0.0);
  }

  TEST_CASE("grid search") {
    RunConfig cfg = base_config(Algorithm::FedAvg, quadratic(6));
    cfg.total_steps = 80;
    SUBCASE("single point equals run_experiment") {
      const GridResult g = grid_search(cfg, {{"eta", {0.05}}}, set_hyper_param);
      RunConfig direct = cfg;
      direct.hp.eta = 0.05;
      CHECK(to_csv(g.best_run.record) == to_csv(run_experiment(direct).record));
      CHECK(g.table.size() == 1);
    }
    SUBCASE("enumeration order and selection") {
      const GridResult g =
          grid_search(cfg, {{"eta", {0.001, 0.01, 0.02, 0.05, 0.1}}, {"b", {5, 10}}},
                      set_hyper_param);
      REQUIRE(g.table.size() == 10);
      CHECK(g.table[0].params[0].second == 0.001);
      CHECK(g.table[1].params[1].second == 10);
      CHECK(g.table[2].params[0].second == 0.01);
      for (const auto& p : g.table) CHECK(g.table[g.best].final_loss <= p.final_loss);
    }
    SUBCASE("ties go to the first combination") {
      // b is irrelevant under full batch, so both points tie exactly
      cfg.hp.full_batch = true;
      const GridResult g = grid_search(cfg, {{"b", {3, 7}}}, set_hyper_param);
      CHECK(g.table[0].final_loss == g.table[1].final_loss);
      CHECK(g.best == 0);
    }
    SUBCASE("diverged runs rank last") {
      const GridResult g = grid_search(cfg, {{"eta", {50.0, 0.01}}}, set_hyper_param);
      CHECK(g.table[0].diverged);
      CHECK(g.best == 1);
    }
    CHECK_THROWS_AS(grid_search(cfg, {}, set_hyper_param), std::invalid_argument);
    CHECK_THROWS_AS(grid_search(cfg, {{"eta", {}}}, set_hyper_param), std::invalid_argument);
    CHECK_THROWS_AS(grid_search(cfg, {{"gamma", {1.0}}}, set_hyper_param),
                    std::invalid_argument);
  }

  TEST_CASE("counter-example reproduction") {
    const CounterexampleReport rep = reproduce_counterexample();
    REQUIRE(rep.rows.size() == 50);
    CHECK(rep.x_bar_first >= 10.046);
    CHECK(rep.x_bar_first <= 10.048);
    REQUIRE(rep.clients_after_first.size() == 3);
    CHECK(std::abs(rep.clients_after_first[0] - 9.8586) <= 1e-3);
    CHECK(std::abs(rep.clients_after_first[1] - 10.1414) <= 1e-3);
    CHECK(std::abs(rep.clients_after_first[2] - 10.1414) <= 1e-3);
    CHECK(rep.max_abs_diff <= 1e-9);
    CHECK(rep.all_outside_unit);
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
      const double t = static_cast<double>(k + 1);
      CHECK(rep.rows[k].predicted == doctest::Approx(0.1 / (3 * std::sqrt(1 - std::pow(0.5, t)))));
    }
  }
}
