#include "fafed/problems.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fafed {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

double sign(double v) { return (v > 0.0) - (v < 0.0); }

// Counter-example pieces. |x| <= 1 uses the quadratic branch for values;
// gradients at |x| == 1 come from the outer branch (they coincide anyway).
double counter_loss(std::size_t client, double x) {
  const double ax = std::abs(x);
  if (client == 0) return ax <= 1.0 ? 3.0 * x * x : 6.0 * ax - 2.0;
  return ax <= 1.0 ? -x * x : -2.0 * ax + 1.0;
}

double counter_grad(std::size_t client, double x) {
  const double ax = std::abs(x);
  if (client == 0) return ax < 1.0 ? 6.0 * x : 6.0 * sign(x);
  return ax < 1.0 ? -2.0 * x : -2.0 * sign(x);
}

// log(1 + exp(-z)) without overflow.
double softplus_neg(double z) {
  return std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

// d/dz log(1 + exp(-z)) = -sigmoid(-z).
double neg_sigmoid_neg(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(z));
}

std::string fmt_optional(const std::optional<double>& v, const char* missing) {
  if (!v) return missing;
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::CounterExample1D: return "counterexample";
    case ProblemKind::HeterogeneousQuadratic: return "quadratic";
    case ProblemKind::SyntheticLogistic: return "logistic";
  }
  return "unknown";
}

Problem::Problem(ProblemKind kind, std::size_t n_clients, std::size_t dim,
                 AssumptionConstants metadata, Payload payload)
    : kind_(kind),
      n_clients_(n_clients),
      dim_(dim),
      metadata_(std::move(metadata)),
      payload_(std::move(payload)) {
  if (n_clients_ < 1) throw std::invalid_argument("n_clients must be >= 1");
  if (dim_ < 1) throw std::invalid_argument("dim must be >= 1");
  if (kind_ == ProblemKind::CounterExample1D && (n_clients_ != 3 || dim_ != 1))
    throw std::invalid_argument("counterexample requires n_clients = 3, dim = 1");
}

void Problem::check_args(std::size_t client, const Vector& x) const {
  if (client >= n_clients_)
    throw std::invalid_argument("client index " + std::to_string(client) +
                                " out of range");
  if (static_cast<std::size_t>(x.size()) != dim_)
    throw std::invalid_argument("dimension mismatch: expected " +
                                std::to_string(dim_) + ", got " +
                                std::to_string(x.size()));
}

std::size_t Problem::local_size(std::size_t client) const {
  if (client >= n_clients_) throw std::invalid_argument("client index out of range");
  return std::visit(
      Overloaded{
          [](const CounterExampleData&) -> std::size_t { return 1; },
          [&](const QuadraticData& q) -> std::size_t {
            return static_cast<std::size_t>(q.noise[client].cols());
          },
          [&](const LogisticData& l) -> std::size_t {
            return static_cast<std::size_t>(l.features[client].rows());
          },
      },
      payload_);
}

Vector Problem::grad_exact(std::size_t client, const Vector& x) const {
  check_args(client, x);
  return std::visit(
      Overloaded{
          [&](const CounterExampleData&) -> Vector {
            Vector g(1);
            g[0] = counter_grad(client, x[0]);
            return g;
          },
          [&](const QuadraticData& q) -> Vector {
            return q.curvature[client].cwiseProduct(x - q.centers[client]);
          },
          [&](const LogisticData& l) -> Vector {
            const auto& a = l.features[client];
            const auto& y = l.labels[client];
            const Eigen::Index n = a.rows();
            Vector g = Vector::Zero(x.size());
            for (Eigen::Index j = 0; j < n; ++j) {
              const double margin = y[j] * a.row(j).dot(x);
              g += (y[j] * neg_sigmoid_neg(margin)) * a.row(j).transpose();
            }
            g /= static_cast<double>(n);
            g += l.l2 * x;
            return g;
          },
      },
      payload_);
}

Vector Problem::grad_minibatch(std::size_t client, const Vector& x,
                               const MiniBatch& batch) const {
  check_args(client, x);
  if (batch.sample_ids.empty()) throw std::invalid_argument("empty minibatch");
  if (batch.client_id != client)
    throw std::invalid_argument("minibatch belongs to a different client");
  const std::size_t n_local = local_size(client);
  for (auto id : batch.sample_ids)
    if (id >= n_local) throw std::invalid_argument("sample id out of range");
  const double inv_b = 1.0 / static_cast<double>(batch.sample_ids.size());

  return std::visit(
      Overloaded{
          [&](const CounterExampleData&) -> Vector { return grad_exact(client, x); },
          [&](const QuadraticData& q) -> Vector {
            Vector noise = Vector::Zero(x.size());
            for (auto id : batch.sample_ids)
              noise += q.noise[client].col(static_cast<Eigen::Index>(id));
            return q.curvature[client].cwiseProduct(x - q.centers[client]) +
                   inv_b * noise;
          },
          [&](const LogisticData& l) -> Vector {
            const auto& a = l.features[client];
            const auto& y = l.labels[client];
            Vector g = Vector::Zero(x.size());
            for (auto id : batch.sample_ids) {
              const auto j = static_cast<Eigen::Index>(id);
              const double margin = y[j] * a.row(j).dot(x);
              g += (y[j] * neg_sigmoid_neg(margin)) * a.row(j).transpose();
            }
            g *= inv_b;
            g += l.l2 * x;
            return g;
          },
      },
      payload_);
}

double Problem::loss(std::size_t client, const Vector& x) const {
  check_args(client, x);
  return std::visit(
      Overloaded{
          [&](const CounterExampleData&) { return counter_loss(client, x[0]); },
          [&](const QuadraticData& q) {
            const Vector r = x - q.centers[client];
            return 0.5 * r.dot(q.curvature[client].cwiseProduct(r));
          },
          [&](const LogisticData& l) {
            const auto& a = l.features[client];
            const auto& y = l.labels[client];
            double total = 0.0;
            for (Eigen::Index j = 0; j < a.rows(); ++j)
              total += softplus_neg(y[j] * a.row(j).dot(x));
            return total / static_cast<double>(a.rows()) + 0.5 * l.l2 * x.squaredNorm();
          },
      },
      payload_);
}

double Problem::global_loss(const Vector& x) const {
  double total = 0.0;
  for (std::size_t i = 0; i < n_clients_; ++i) total += loss(i, x);
  return total / static_cast<double>(n_clients_);
}

Vector Problem::global_grad(const Vector& x) const {
  check_args(0, x);
  const double inv_n = 1.0 / static_cast<double>(n_clients_);
  return std::visit(
      Overloaded{
          [&](const CounterExampleData&) -> Vector {
            // f = x^2/3 inside, 2|x|/3 outside.
            Vector g(1);
            const double v = x[0];
            g[0] = std::abs(v) < 1.0 ? (2.0 / 3.0) * v : (2.0 / 3.0) * sign(v);
            return g;
          },
          [&](const QuadraticData& q) -> Vector {
            // mean_i Q_i (x - b_i) = (mean_i Q_i) x - mean_i Q_i b_i
            Vector q_mean = Vector::Zero(x.size());
            Vector qb_mean = Vector::Zero(x.size());
            for (std::size_t i = 0; i < n_clients_; ++i) {
              q_mean += q.curvature[i];
              qb_mean += q.curvature[i].cwiseProduct(q.centers[i]);
            }
            return inv_n * (q_mean.cwiseProduct(x) - qb_mean);
          },
          [&](const LogisticData& l) -> Vector {
            // Per-client sample means accumulated directly, regularizer added once.
            Vector g = Vector::Zero(x.size());
            double total = 0.0;
            Vector client_sum(x.size());
            for (std::size_t i = 0; i < n_clients_; ++i) {
              const auto& a = l.features[i];
              const auto& y = l.labels[i];
              client_sum.setZero();
              for (Eigen::Index j = 0; j < a.rows(); ++j) {
                const double margin = y[j] * a.row(j).dot(x);
                client_sum += (y[j] * neg_sigmoid_neg(margin)) * a.row(j).transpose();
              }
              g += client_sum / static_cast<double>(a.rows());
              total += 1.0;
            }
            return g / total + l.l2 * x;
          },
      },
      payload_);
}

MiniBatch Problem::draw_batch(std::size_t client, std::size_t b,
                              CounterRng& rng) const {
  if (b == 0) throw std::invalid_argument("batch size must be >= 1");
  const std::size_t n_local = local_size(client);
  MiniBatch batch;
  batch.client_id = client;
  batch.draw_tag = rng.position();
  batch.sample_ids.reserve(b);
  for (std::size_t k = 0; k < b; ++k) {
    auto id = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n_local));
    batch.sample_ids.push_back(std::min(id, n_local - 1));
  }
  return batch;
}

MiniBatch Problem::full_batch(std::size_t client) const {
  MiniBatch batch;
  batch.client_id = client;
  const std::size_t n_local = local_size(client);
  batch.sample_ids.resize(n_local);
  for (std::size_t k = 0; k < n_local; ++k) batch.sample_ids[k] = k;
  return batch;
}

std::string Problem::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "kind=" << to_string(kind_) << '\n';
  os << "n_clients=" << n_clients_ << '\n';
  os << "dim=" << dim_ << '\n';
  os << "local_size=" << local_size(0) << '\n';
  os << "smoothness_L=" << fmt_optional(metadata_.smoothness_L, "unknown") << '\n';
  os << "noise_sigma=" << metadata_.noise_sigma << '\n';
  os << "heterogeneity_zeta=" << metadata_.heterogeneity_zeta << '\n';
  os << "zeta_scope=" << (metadata_.zeta_is_global ? "global" : "empirical-region")
     << '\n';
  os << "grad_bound_G="
     << fmt_optional(metadata_.grad_bound_G, "unbounded-globally") << '\n';
  os << "lower_bound_fstar=" << fmt_optional(metadata_.lower_bound_fstar, "unknown")
     << '\n';
  return os.str();
}

Problem make_counterexample() {
  AssumptionConstants meta;
  meta.smoothness_L = 6.0;
  meta.noise_sigma = 0.0;
  meta.heterogeneity_zeta = 8.0;
  meta.zeta_is_global = true;
  meta.grad_bound_G = 6.0;
  meta.lower_bound_fstar = 0.0;
  return Problem(ProblemKind::CounterExample1D, 3, 1, meta, CounterExampleData{});
}

Problem make_quadratic(const QuadraticOptions& opts) {
  if (!(opts.curvature_lo > 0.0))
    throw std::invalid_argument("curvature_lo must be > 0");
  if (opts.curvature_hi < opts.curvature_lo)
    throw std::invalid_argument("curvature_hi must be >= curvature_lo");
  if (opts.center_spread < 0.0) throw std::invalid_argument("center_spread must be >= 0");
  if (opts.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
  if (opts.samples_per_client < 1)
    throw std::invalid_argument("samples_per_client must be >= 1");
  if (opts.n_clients < 1) throw std::invalid_argument("n_clients must be >= 1");
  if (opts.dim < 1) throw std::invalid_argument("dim must be >= 1");

  const auto d = static_cast<Eigen::Index>(opts.dim);
  const auto n_samples = static_cast<Eigen::Index>(opts.samples_per_client);
  QuadraticData data;
  for (std::size_t i = 0; i < opts.n_clients; ++i) {
    CounterRng rng(opts.seed, i, StreamPurpose::kData);
    Vector q(d), b(d);
    for (Eigen::Index k = 0; k < d; ++k)
      q[k] = opts.curvature_lo +
             (opts.curvature_hi - opts.curvature_lo) * uniform01(rng);
    for (Eigen::Index k = 0; k < d; ++k) b[k] = opts.center_spread * standard_normal(rng);
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(d, n_samples);
    if (opts.noise_sigma > 0.0) {
      for (Eigen::Index j = 0; j < n_samples; ++j)
        for (Eigen::Index k = 0; k < d; ++k)
          noise(k, j) = opts.noise_sigma * standard_normal(rng);
      const Vector col_mean = noise.rowwise().mean();
      noise.colwise() -= col_mean;
    }
    data.curvature.push_back(std::move(q));
    data.centers.push_back(std::move(b));
    data.noise.push_back(std::move(noise));
  }

  AssumptionConstants meta;
  meta.smoothness_L = opts.curvature_hi;
  meta.noise_sigma = opts.noise_sigma;
  meta.grad_bound_G = std::nullopt;

  // Closed-form global minimum of the averaged quadratic.
  Vector q_sum = Vector::Zero(d), qb_sum = Vector::Zero(d);
  for (std::size_t i = 0; i < opts.n_clients; ++i) {
    q_sum += data.curvature[i];
    qb_sum += data.curvature[i].cwiseProduct(data.centers[i]);
  }
  const Vector x_star = qb_sum.cwiseQuotient(q_sum);

  Problem probe(ProblemKind::HeterogeneousQuadratic, opts.n_clients, opts.dim, meta, data);
  meta.lower_bound_fstar = probe.global_loss(x_star);
  // Gradient differences grow linearly in x, so only a regional estimate is
  // meaningful. Probe around the centers' scale.
  const double radius = 1.0 + opts.center_spread;
  meta.heterogeneity_zeta = estimate_zeta(probe, 32, radius, opts.seed ^ 0x5a5a5a5aULL);
  meta.zeta_is_global = false;
  return Problem(ProblemKind::HeterogeneousQuadratic, opts.n_clients, opts.dim,
                 std::move(meta), std::move(data));
}

Problem make_quadratic_from(std::vector<Vector> centers, std::vector<Vector> curvature) {
  if (centers.empty() || centers.size() != curvature.size())
    throw std::invalid_argument("centers and curvature must be nonempty and equal length");
  const auto d = centers.front().size();
  double hi = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (centers[i].size() != d || curvature[i].size() != d)
      throw std::invalid_argument("inconsistent dimensions");
    if (curvature[i].minCoeff() <= 0.0)
      throw std::invalid_argument("curvature entries must be > 0");
    hi = std::max(hi, curvature[i].maxCoeff());
  }
  QuadraticData data;
  for (std::size_t i = 0; i < centers.size(); ++i)
    data.noise.emplace_back(Eigen::MatrixXd::Zero(d, 1));
  data.centers = std::move(centers);
  data.curvature = std::move(curvature);
  const std::size_t n = data.centers.size();

  AssumptionConstants meta;
  meta.smoothness_L = hi;
  Problem probe(ProblemKind::HeterogeneousQuadratic, n, static_cast<std::size_t>(d), meta,
                data);
  meta.heterogeneity_zeta = estimate_zeta(probe, 32, 1.0, 0);
  meta.zeta_is_global = false;
  return Problem(ProblemKind::HeterogeneousQuadratic, n, static_cast<std::size_t>(d),
                 std::move(meta), std::move(data));
}

Problem make_logistic(const LogisticOptions& opts) {
  if (opts.samples_per_client < 1)
    throw std::invalid_argument("samples_per_client must be >= 1");
  if (!(opts.label_skew >= 0.0 && opts.label_skew <= 1.0))
    throw std::invalid_argument("label_skew must be in [0, 1]");
  if (opts.n_clients < 1) throw std::invalid_argument("n_clients must be >= 1");
  if (opts.dim < 1) throw std::invalid_argument("dim must be >= 1");

  const auto d = static_cast<Eigen::Index>(opts.dim);
  const auto n = static_cast<Eigen::Index>(opts.samples_per_client);

  // Class mean direction, shared by every client.
  CounterRng shared(opts.seed, ~std::uint64_t{0}, StreamPurpose::kData);
  Vector mu(d);
  for (Eigen::Index k = 0; k < d; ++k) mu[k] = standard_normal(shared);
  mu *= 1.5 / mu.norm();

  auto fill_sample = [&](CounterRng& rng, double label, auto&& row) {
    for (Eigen::Index k = 0; k < d; ++k) row[k] = label * mu[k] + standard_normal(rng);
  };

  Eigen::MatrixXd base_a(n, d);
  Vector base_y(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    base_y[j] = uniform01(shared) < 0.5 ? -1.0 : 1.0;
    fill_sample(shared, base_y[j], base_a.row(j));
  }

  LogisticData data;
  double max_norm = 0.0;
  for (std::size_t i = 0; i < opts.n_clients; ++i) {
    CounterRng rng(opts.seed, i, StreamPurpose::kData);
    const double own_label = (i % 2 == 0) ? 1.0 : -1.0;
    Eigen::MatrixXd a = base_a;
    Vector y = base_y;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (opts.label_skew > 0.0 && uniform01(rng) < opts.label_skew) {
        y[j] = own_label;
        fill_sample(rng, own_label, a.row(j));
      }
    }
    max_norm = std::max(max_norm, a.rowwise().norm().maxCoeff());
    data.features.push_back(std::move(a));
    data.labels.push_back(std::move(y));
  }

  AssumptionConstants meta;
  meta.smoothness_L = 0.25 * max_norm * max_norm + data.l2;
  // Per-sample loss gradients have norm <= ||a||; the minibatch noise is
  // bounded by its second moment.
  meta.noise_sigma = max_norm;
  meta.heterogeneity_zeta = opts.label_skew == 0.0 ? 0.0 : 2.0 * max_norm;
  meta.zeta_is_global = true;
  meta.grad_bound_G = max_norm + data.l2 * kLogisticRegionRadius;
  meta.lower_bound_fstar = std::nullopt;
  return Problem(ProblemKind::SyntheticLogistic, opts.n_clients, opts.dim,
                 std::move(meta), std::move(data));
}

double heterogeneity_at(const Problem& problem, const Vector& x) {
  std::vector<Vector> grads;
  grads.reserve(problem.n_clients());
  for (std::size_t i = 0; i < problem.n_clients(); ++i)
    grads.push_back(problem.grad_exact(i, x));
  double worst = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t j = i + 1; j < grads.size(); ++j)
      worst = std::max(worst, (grads[i] - grads[j]).norm());
  return worst;
}

double estimate_zeta(const Problem& problem, std::size_t n_probe_points, double radius,
                     std::uint64_t seed) {
  if (n_probe_points < 1) throw std::invalid_argument("n_probe_points must be >= 1");
  CounterRng rng(seed, 0, StreamPurpose::kProbe);
  const auto d = static_cast<Eigen::Index>(problem.dim());
  double worst = 0.0;
  Vector x(d);
  for (std::size_t p = 0; p < n_probe_points; ++p) {
    for (Eigen::Index k = 0; k < d; ++k) x[k] = radius * standard_normal(rng);
    worst = std::max(worst, heterogeneity_at(problem, x));
  }
  return worst;
}

double check_smoothness(const Problem& problem, std::size_t n_probe_pairs,
                        std::uint64_t seed, double radius) {
  CounterRng rng(seed, 1, StreamPurpose::kProbe);
  const auto d = static_cast<Eigen::Index>(problem.dim());
  double worst = 0.0;
  Vector x1(d), x2(d);
  for (std::size_t p = 0; p < n_probe_pairs; ++p) {
    for (Eigen::Index k = 0; k < d; ++k) x1[k] = radius * standard_normal(rng);
    for (Eigen::Index k = 0; k < d; ++k) x2[k] = radius * standard_normal(rng);
    const double dist = (x1 - x2).norm();
    if (dist == 0.0) continue;
    for (std::size_t i = 0; i < problem.n_clients(); ++i) {
      const double num = (problem.grad_exact(i, x1) - problem.grad_exact(i, x2)).norm();
      worst = std::max(worst, num / dist);
    }
  }
  return worst;
}

}  // namespace fafed
