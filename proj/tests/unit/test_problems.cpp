#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "fafed/metrics.hpp"
#include "fafed/problems.hpp"

using namespace fafed;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

Vector random_point(CounterRng& rng, std::size_t d, double scale) {
  Vector x(static_cast<Eigen::Index>(d));
  for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = scale * standard_normal(rng);
  return x;
}

// Per-sample gradients of one client at x, one column per sample.
Eigen::MatrixXd per_sample_grads(const Problem& p, std::size_t client, const Vector& x) {
  const std::size_t n = p.local_size(client);
  Eigen::MatrixXd out(x.size(), static_cast<Eigen::Index>(n));
  MiniBatch one;
  one.client_id = client;
  one.sample_ids = {0};
  for (std::size_t j = 0; j < n; ++j) {
    one.sample_ids[0] = j;
    out.col(static_cast<Eigen::Index>(j)) = p.grad_minibatch(client, x, one);
  }
  return out;
}

void check_unbiased(const Problem& p, std::size_t client, const Vector& x, std::size_t b) {
  const Eigen::MatrixXd per = per_sample_grads(p, client, x);
  const Vector exact = p.grad_exact(client, x);
  const Vector mean_cols = per.rowwise().mean();
  const Vector sd =
      ((per.colwise() - mean_cols).array().square().rowwise().mean()).sqrt().matrix();

  const int draws = 100000;
  CounterRng rng(11, client, StreamPurpose::kStepBatch);
  Vector acc = Vector::Zero(x.size());
  for (int k = 0; k < draws; ++k) acc += p.grad_minibatch(client, x, p.draw_batch(client, b, rng));
  acc /= draws;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double tol = 4.0 * sd[k] / std::sqrt(static_cast<double>(draws) * b) + 1e-12;
    CHECK(std::abs(acc[k] - exact[k]) <= tol);
  }
}

}  // namespace

TEST_SUITE("problems") {
  TEST_CASE("counter-example gradients") {
    const Problem p = make_counterexample();
    CHECK(p.grad_exact(0, vec({10}))[0] == 6.0);
    CHECK(p.grad_exact(1, vec({10}))[0] == -2.0);
    CHECK(p.grad_exact(2, vec({10}))[0] == -2.0);
    CHECK(p.grad_exact(0, vec({0.5}))[0] == 3.0);
    CHECK(p.grad_exact(0, vec({-10}))[0] == -6.0);
    CHECK(p.grad_exact(0, vec({0}))[0] == 0.0);
    // both branches have slope 6 at |x| = 1
    CHECK(p.grad_exact(0, vec({1}))[0] == 6.0);
    CHECK(p.grad_exact(1, vec({-1}))[0] == 2.0);
  }

  TEST_CASE("counter-example losses") {
    const Problem p = make_counterexample();
    CHECK(p.global_loss(vec({0})) == 0.0);
    CHECK(p.loss(0, vec({2})) == 10.0);
    CHECK(p.loss(1, vec({2})) == -3.0);
    CHECK(p.loss(2, vec({2})) == -3.0);
    CHECK(p.global_loss(vec({2})) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(p.loss(0, vec({1})) == 3.0);
    CHECK(p.loss(1, vec({1})) == -1.0);
    CHECK(p.loss(1, vec({std::nextafter(1.0, 2.0)})) == doctest::Approx(-1.0));
    const auto& m = p.metadata();
    CHECK(m.noise_sigma == 0.0);
    CHECK(m.heterogeneity_zeta > 0.0);
    CHECK(*m.lower_bound_fstar == 0.0);
  }

  TEST_CASE("counter-example minibatch equals exact") {
    const Problem p = make_counterexample();
    CounterRng rng(0, 0, StreamPurpose::kStepBatch);
    CHECK(p.grad_minibatch(0, vec({10}), p.draw_batch(0, 7, rng))[0] == 6.0);
  }

  TEST_CASE("argument errors") {
    const Problem p = make_counterexample();
    CHECK_THROWS_AS(p.grad_exact(0, vec({1, 2})), std::invalid_argument);
    CHECK_THROWS_AS(p.loss(0, vec({1, 2})), std::invalid_argument);
    CHECK_THROWS_AS(p.grad_exact(3, vec({1})), std::invalid_argument);
    MiniBatch empty;
    CHECK_THROWS_AS(p.grad_minibatch(0, vec({1}), empty), std::invalid_argument);
    QuadraticOptions bad;
    bad.curvature_lo = 0.0;
    CHECK_THROWS_AS(make_quadratic(bad), std::invalid_argument);
    bad.curvature_lo = 3.0;
    CHECK_THROWS_AS(make_quadratic(bad), std::invalid_argument);
    LogisticOptions lbad;
    lbad.samples_per_client = 0;
    CHECK_THROWS_AS(make_logistic(lbad), std::invalid_argument);
  }

  TEST_CASE("symmetric two-center quadratic") {
    const Problem p = make_quadratic_from({vec({-1}), vec({1})}, {vec({1}), vec({1})});
    CHECK(p.global_grad(vec({0}))[0] == 0.0);
    CHECK(heterogeneity_at(p, vec({0.3})) == doctest::Approx(2.0));
    CHECK(estimate_zeta(p, 5, 3.0, 1) == doctest::Approx(2.0));
    const Problem zero = make_quadratic_from({vec({0, 0})}, {vec({1, 2})});
    CHECK(zero.global_loss(vec({0, 0})) == 0.0);
  }

  TEST_CASE("homogeneous quadratic has zero heterogeneity") {
    QuadraticOptions o;
    o.center_spread = 0.0;
    o.curvature_lo = o.curvature_hi = 1.5;
    o.noise_sigma = 0.0;
    const Problem p = make_quadratic(o);
    CHECK(p.metadata().heterogeneity_zeta == 0.0);
    CHECK(estimate_zeta(p, 8, 2.0, 3) == 0.0);
  }

  TEST_CASE("single-client quadratic equals its client") {
    QuadraticOptions o;
    o.n_clients = 1;
    o.dim = 4;
    const Problem p = make_quadratic(o);
    CounterRng rng(5, 0, StreamPurpose::kProbe);
    for (int k = 0; k < 5; ++k) {
      const Vector x = random_point(rng, 4, 2.0);
      CHECK(p.global_loss(x) == p.loss(0, x));
      CHECK((p.global_grad(x) - p.grad_exact(0, x)).norm() <= 1e-12 * (1 + x.norm()));
    }
  }

  TEST_CASE("quadratic metadata") {
    QuadraticOptions o;
    o.seed = 9;
    const Problem p = make_quadratic(o);
    const auto& m = p.metadata();
    CHECK(*m.smoothness_L == 2.0);
    CHECK(m.noise_sigma == 0.5);
    CHECK_FALSE(m.grad_bound_G.has_value());
    CHECK_FALSE(m.zeta_is_global);
    CHECK(m.heterogeneity_zeta > 0.0);
    CHECK(check_smoothness(p, 50, 1) <= *m.smoothness_L * (1 + 1e-9));
    // f* is the minimum: nearby points are no lower.
    CounterRng rng(3, 0, StreamPurpose::kProbe);
    for (int k = 0; k < 10; ++k)
      CHECK(p.global_loss(random_point(rng, o.dim, 1.0)) >= *m.lower_bound_fstar);
  }

  TEST_CASE("mean property: global gradient is the client mean") {
    QuadraticOptions qo;
    qo.seed = 4;
    LogisticOptions lo;
    lo.label_skew = 0.6;
    lo.seed = 4;
    const Problem problems[] = {make_counterexample(), make_quadratic(qo), make_logistic(lo)};
    CounterRng rng(8, 0, StreamPurpose::kProbe);
    for (const auto& p : problems) {
      for (int k = 0; k < 10; ++k) {
        const Vector x = random_point(rng, p.dim(), 3.0);
        Vector mean = Vector::Zero(x.size());
        double loss_mean = 0.0;
        for (std::size_t i = 0; i < p.n_clients(); ++i) {
          mean += p.grad_exact(i, x);
          loss_mean += p.loss(i, x);
        }
        mean /= static_cast<double>(p.n_clients());
        loss_mean /= static_cast<double>(p.n_clients());
        const Vector g = p.global_grad(x);
        CHECK((g - mean).norm() <= 1e-12 * (1.0 + g.norm()));
        CHECK(std::abs(p.global_loss(x) - loss_mean) <= 1e-12 * (1.0 + std::abs(loss_mean)));
      }
    }
  }

  TEST_CASE("finite differences at random points for every kind") {
    QuadraticOptions qo;
    qo.seed = 2;
    LogisticOptions lo;
    lo.label_skew = 0.5;
    lo.seed = 2;
    const Problem quad = make_quadratic(qo);
    const Problem logi = make_logistic(lo);
    const Problem ce = make_counterexample();
    CounterRng rng(12, 0, StreamPurpose::kProbe);
    for (int k = 0; k < 10; ++k) {
      CHECK(finite_diff_check(quad, random_point(rng, qo.dim, 2.0)) <= kFiniteDiffRelTol);
      CHECK(finite_diff_check(logi, random_point(rng, lo.dim, 1.0)) <= kFiniteDiffRelTol);
      // keep away from the kinks at 0 and +-1
      double x = 0.0;
      do x = 4.0 * standard_normal(rng);
      while (std::abs(x) < 0.05 || std::abs(std::abs(x) - 1.0) < 0.05);
      CHECK(finite_diff_check(ce, vec({x})) <= kFiniteDiffRelTol);
    }
    CHECK(std::abs(finite_diff_check(ce, 0, vec({10}))) <= 1e-7);
  }

  TEST_CASE("logistic gradient at zero") {
    LogisticOptions lo;
    lo.seed = 6;
    lo.label_skew = 0.3;
    const Problem p = make_logistic(lo);
    const auto& data = std::get<LogisticData>(p.payload());
    const Vector x0 = Vector::Zero(lo.dim);
    double max_norm = 0.0;
    for (std::size_t i = 0; i < p.n_clients(); ++i) {
      const auto& a = data.features[i];
      const auto& y = data.labels[i];
      Vector expect = Vector::Zero(lo.dim);
      for (Eigen::Index j = 0; j < a.rows(); ++j) expect += -0.5 * y[j] * a.row(j).transpose();
      expect /= static_cast<double>(a.rows());
      CHECK((p.grad_exact(i, x0) - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
      max_norm = std::max(max_norm, a.rowwise().norm().maxCoeff());
    }
    for (std::size_t i = 0; i < p.n_clients(); ++i) {
      const Eigen::MatrixXd per = per_sample_grads(p, i, x0);
      CHECK(per.colwise().norm().maxCoeff() <= 0.5 * max_norm * (1 + 1e-12));
    }
  }

  TEST_CASE("logistic full batch equals exact") {
    LogisticOptions lo;
    lo.seed = 1;
    lo.label_skew = 0.8;
    const Problem p = make_logistic(lo);
    CounterRng rng(1, 0, StreamPurpose::kProbe);
    const Vector x = random_point(rng, lo.dim, 1.0);
    for (std::size_t i = 0; i < p.n_clients(); ++i) {
      const Vector g = p.grad_exact(i, x);
      CHECK((p.grad_minibatch(i, x, p.full_batch(i)) - g).norm() <= 1e-12 * g.norm());
    }
  }

  TEST_CASE("logistic heterogeneity and smoothness") {
    LogisticOptions lo;
    lo.seed = 3;
    const Problem same = make_logistic(lo);
    CHECK(same.metadata().heterogeneity_zeta == 0.0);
    CHECK(estimate_zeta(same, 8, 1.0, 2) == 0.0);
    lo.label_skew = 1.0;
    const Problem split = make_logistic(lo);
    const auto& d = std::get<LogisticData>(split.payload());
    CHECK((d.labels[0].array() == 1.0).all());
    CHECK((d.labels[1].array() == -1.0).all());
    CHECK(estimate_zeta(split, 8, 1.0, 2) > 0.0);
    CHECK(estimate_zeta(split, 8, 1.0, 2) <= split.metadata().heterogeneity_zeta);
    CHECK(check_smoothness(split, 50, 4) <= *split.metadata().smoothness_L * (1 + 1e-9));
  }

  TEST_CASE("counter-example probes") {
    const Problem p = make_counterexample();
    CHECK(heterogeneity_at(p, vec({10})) == 8.0);
    CHECK(check_smoothness(p, 200, 0, 0.5) <= 6.0 * (1 + 1e-9));
  }

  TEST_CASE("minibatch unbiasedness, Monte-Carlo at 4 sigma") {
    QuadraticOptions qo;
    qo.n_clients = 2;
    qo.dim = 6;
    qo.seed = 21;
    const Problem quad = make_quadratic(qo);
    check_unbiased(quad, 1, vec({0.3, -0.2, 1.0, 0.0, 2.0, -1.5}), 5);

    LogisticOptions lo;
    lo.n_clients = 2;
    lo.dim = 4;
    lo.label_skew = 0.5;
    lo.seed = 21;
    const Problem logi = make_logistic(lo);
    check_unbiased(logi, 0, vec({0.5, -0.5, 0.25, 1.0}), 5);
  }

  TEST_CASE("batches are drawn with replacement and replayable") {
    QuadraticOptions qo;
    qo.samples_per_client = 3;
    const Problem p = make_quadratic(qo);
    CounterRng rng(4, 2, StreamPurpose::kStepBatch);
    const MiniBatch b = p.draw_batch(2, 50, rng);
    CHECK(b.sample_ids.size() == 50);
    CHECK(b.client_id == 2);
    for (auto id : b.sample_ids) CHECK(id < 3);
    CounterRng replay(4, 2, StreamPurpose::kStepBatch);
    CHECK(p.draw_batch(2, 50, replay).sample_ids == b.sample_ids);
    CHECK(b.draw_tag == 0);
    CHECK(p.draw_batch(2, 1, rng).draw_tag == 50);
  }

  TEST_CASE("describe lists metadata") {
    const std::string s = make_counterexample().describe();
    CHECK(s.find("kind=counterexample\n") != std::string::npos);
    CHECK(s.find("n_clients=3\n") != std::string::npos);
    CHECK(s.find("lower_bound_fstar=0\n") != std::string::npos);
    QuadraticOptions qo;
    CHECK(make_quadratic(qo).describe().find("grad_bound_G=unbounded-globally") !=
          std::string::npos);
  }
}
