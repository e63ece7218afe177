#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "fafed/rng.hpp"

namespace fafed {

using Vector = Eigen::VectorXd;

enum class ProblemKind { CounterExample1D, HeterogeneousQuadratic, SyntheticLogistic };

std::string to_string(ProblemKind kind);

/// Measurable constants behind the standard nonconvex federated assumptions.
/// A missing optional means the quantity is unknown or globally unbounded.
struct AssumptionConstants {
  std::optional<double> smoothness_L;
  double noise_sigma = 0.0;
  /// Either a global bound on ||grad f_i - grad f_j||, or (when
  /// zeta_is_global is false) an empirical estimate over a probe region.
  double heterogeneity_zeta = 0.0;
  bool zeta_is_global = true;
  std::optional<double> grad_bound_G;
  std::optional<double> lower_bound_fstar;
};

/// Sample indices drawn for one client. draw_tag is the position of the
/// client's stream before the draw, which is enough to replay it.
struct MiniBatch {
  std::size_t client_id = 0;
  std::vector<std::size_t> sample_ids;
  std::uint64_t draw_tag = 0;
};

/// The three piecewise 1-D objectives of the adaptive-FedAvg divergence
/// example. Client 0 is 3x^2 / 6|x|-2, clients 1 and 2 are -x^2 / -2|x|+1.
struct CounterExampleData {};

/// f_i(x) = 1/2 (x - b_i)^T diag(q_i) (x - b_i). Sample j of client i adds
/// the linear term noise_i[:, j]^T x; each client's noise columns are
/// centered so the sample mean is exactly the noiseless objective.
struct QuadraticData {
  std::vector<Vector> curvature;
  std::vector<Vector> centers;
  std::vector<Eigen::MatrixXd> noise;  // dim x samples, one per client
};

/// l2-regularized binary logistic regression; labels in {-1, +1}.
struct LogisticData {
  std::vector<Eigen::MatrixXd> features;  // samples x dim, one per client
  std::vector<Vector> labels;
  double l2 = 1e-4;
};

/// A finite family {f_i} with exact and minibatch gradient oracles.
/// Immutable after construction, so concurrent reads are safe.
class Problem {
 public:
  using Payload = std::variant<CounterExampleData, QuadraticData, LogisticData>;

  Problem(ProblemKind kind, std::size_t n_clients, std::size_t dim,
          AssumptionConstants metadata, Payload payload);

  ProblemKind kind() const { return kind_; }
  std::size_t n_clients() const { return n_clients_; }
  std::size_t dim() const { return dim_; }
  const AssumptionConstants& metadata() const { return metadata_; }
  const Payload& payload() const { return payload_; }

  /// Number of samples in a client's local dataset.
  std::size_t local_size(std::size_t client) const;

  Vector grad_exact(std::size_t client, const Vector& x) const;
  Vector grad_minibatch(std::size_t client, const Vector& x,
                        const MiniBatch& batch) const;
  double loss(std::size_t client, const Vector& x) const;

  double global_loss(const Vector& x) const;
  /// Gradient of the global objective, computed from its own closed form
  /// rather than by averaging the per-client oracles.
  Vector global_grad(const Vector& x) const;

  /// b indices drawn i.i.d. with replacement from the local dataset.
  MiniBatch draw_batch(std::size_t client, std::size_t b, CounterRng& rng) const;
  /// Every local sample, once, in index order.
  MiniBatch full_batch(std::size_t client) const;

  /// Multiline key=value dump of the problem and its metadata.
  std::string describe() const;

 private:
  void check_args(std::size_t client, const Vector& x) const;

  ProblemKind kind_;
  std::size_t n_clients_;
  std::size_t dim_;
  AssumptionConstants metadata_;
  Payload payload_;
};

Problem make_counterexample();

struct QuadraticOptions {
  std::size_t n_clients = 8;
  std::size_t dim = 20;
  double center_spread = 2.0;
  double curvature_lo = 1.0;
  double curvature_hi = 2.0;
  double noise_sigma = 0.5;
  std::size_t samples_per_client = 500;
  std::uint64_t seed = 0;
};

/// Heterogeneous diagonal quadratics. Curvatures are uniform in
/// [lo, hi] per client and coordinate; lo == hi gives identical curvature
/// on every client. Throws std::invalid_argument when lo <= 0 or lo > hi.
Problem make_quadratic(const QuadraticOptions& opts);

/// Quadratic with caller-supplied centers and curvature, no sampling noise.
Problem make_quadratic_from(std::vector<Vector> centers, std::vector<Vector> curvature);

struct LogisticOptions {
  std::size_t n_clients = 8;
  std::size_t dim = 10;
  std::size_t samples_per_client = 200;
  double label_skew = 0.0;
  std::uint64_t seed = 0;
};

/// Binary logistic regression on gaussian features. All clients start from
/// one shared base dataset; each sample is independently replaced, with
/// probability label_skew, by a fresh sample of the client's own label
/// (+1 for even clients, -1 for odd). label_skew = 0 gives identical
/// clients, label_skew = 1 gives single-label clients.
Problem make_logistic(const LogisticOptions& opts);

/// Largest ||grad f_i(x) - grad f_j(x)|| over client pairs at one point.
double heterogeneity_at(const Problem& problem, const Vector& x);

/// Max of heterogeneity_at over gaussian points of scale `radius`: a lower
/// bound on the heterogeneity constant within that region.
double estimate_zeta(const Problem& problem, std::size_t n_probe_points,
                     double radius, std::uint64_t seed);

/// Max over random point pairs and clients of the gradient difference
/// quotient; a lower bound on the smoothness constant.
double check_smoothness(const Problem& problem, std::size_t n_probe_pairs,
                        std::uint64_t seed, double radius = 2.0);

/// Radius of the region over which the logistic G bound is declared; the
/// l2 term's gradient is unbounded globally.
inline constexpr double kLogisticRegionRadius = 10.0;

}  // namespace fafed
