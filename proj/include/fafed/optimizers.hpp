#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fafed/problems.hpp"
#include "fafed/rng.hpp"
#include "fafed/worker_pool.hpp"

namespace fafed {

enum class Algorithm { Fafed, NaiveAdaptive, FedAvg, FedAdam };

std::string to_string(Algorithm algo);
/// Accepts "fafed", "naive-adaptive", "fedavg", "fedadam".
Algorithm parse_algorithm(std::string_view name);

enum class EtaMode { Decaying, Constant };

struct HyperParams {
  double beta = 0.9;       // second-moment EMA factor
  double rho = 0.01;       // floor of the adaptive diagonal
  double c = 1.0;          // alpha_{t+1} = c * eta_t^2
  int q = 10;              // local steps per synchronization
  int b = 5;               // minibatch size per step
  int init_batch = 50;     // B, FAFED initialization batch
  double w = 1.0;
  double rho_hbar = 1.0;   // the product rho * h_bar
  EtaMode eta_mode = EtaMode::Decaying;
  double eta = 0.01;       // used when eta_mode == Constant
  bool full_batch = false;
  /// Keep v at zero so that A == rho * I. Only used to check reductions.
  bool freeze_second_moment = false;
  double naive_v0 = 0.0;   // initial v for the naive adaptive method

  // FedAdam server optimizer.
  double beta1 = 0.9;
  double beta2 = 0.9;
  double tau = 0.01;
  double eta_global = 0.031622776601683791;  // 10^-1.5

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
};

/// Per-algorithm defaults: decaying schedule for FAFED, constant step for
/// the baselines.
HyperParams default_hyper_params(Algorithm algo);

/// rho_hbar / (w + t)^(1/3) in decaying mode, eta in constant mode.
double eta_schedule(std::int64_t t, const HyperParams& hp);

/// min(1, c * eta_{t-1}^2), for t >= 1.
double alpha_schedule(std::int64_t t, const HyperParams& hp);
/// True when c * eta_{t-1}^2 exceeds 1 and alpha_schedule clamps.
bool alpha_clamped(std::int64_t t, const HyperParams& hp);

/// max(3/2, 1728 L^3 q^3 hbar^3): the w the convergence proof assumes.
double theoretical_w(double L, int q, double hbar);
/// 1/(12 L q hbar^3 rho^2) + 60 L^2 / (b N rho^2).
double theoretical_c(double L, int q, double hbar, double rho, int b, std::size_t n);
/// N^(2/3) / L.
double theoretical_hbar(double L, std::size_t n);

/// g_now + (1 - alpha) (m_prev - g_prev_point).
Vector storm_estimate(const Vector& g_now, const Vector& g_prev_point,
                      const Vector& m_prev, double alpha);

/// beta v_prev + (1 - beta) g^2, entrywise.
Vector ema_second_moment(const Vector& v_prev, const Vector& g, double beta);

/// sqrt(v_bar) + rho, entrywise. Throws on negative v_bar entries.
Vector adaptive_matrix(const Vector& v_bar, double rho);

/// One worker's local state. x_prev is the point the previous local step
/// started from; g is the latest batch gradient at x.
struct ClientState {
  std::size_t id = 0;
  Vector x;
  Vector m;
  Vector v;
  Vector x_prev;
  Vector g;
  CounterRng rng;
};

struct ServerState {
  Vector x_bar;
  Vector m_bar;
  Vector v_bar;
  Vector adaptive_diag;
  std::int64_t t = 0;
  std::int64_t sync_count = 0;
  // FedAdam server moments.
  Vector adam_m;
  Vector adam_v;
};

struct FederatedState {
  std::vector<ClientState> clients;
  ServerState server;
};

/// Mean over clients in ascending index order.
Vector mean_of(const std::vector<Vector>& vs);

/// Draws the batch a client uses at one step (full local dataset when
/// hp.full_batch is set).
MiniBatch draw_step_batch(const Problem& problem, std::size_t client,
                          std::size_t size, const HyperParams& hp, CounterRng& rng);

// ---------------------------------------------------------------------------
// FAFED

/// Initialization: per-client gradient on a size-B batch at x0, averaged
/// into m_bar_0 and v_bar_0; A_0 = diag(sqrt(v_bar_0) + rho); then one step
/// x_1 = x0 - eta_0 A_0^{-1} m_bar_0 on every client. Clients keep their raw
/// initial batch gradient in `g`.
FederatedState fafed_init(const Problem& problem, const HyperParams& hp,
                          const Vector& x0, std::uint64_t seed);

/// Estimator update for step t = server.t: draw one batch, evaluate it at
/// x_{t,i} and x_{t-1,i}, update m (STORM) and v (EMA). x is unchanged and
/// x_prev becomes the current x.
ClientState fafed_local_update(ClientState client, const ServerState& server,
                               const Problem& problem, const HyperParams& hp);

/// x <- x - eta_t m / A with the server's current A.
ClientState fafed_local_move(ClientState client, const ServerState& server,
                             const HyperParams& hp);

/// fafed_local_update followed by fafed_local_move.
ClientState fafed_local_step(ClientState client, const ServerState& server,
                             const Problem& problem, const HyperParams& hp);

/// One full FAFED step t = server.t for every client, including the
/// synchronization when t mod q == 0.
FederatedState fafed_step(FederatedState state, const Problem& problem,
                          const HyperParams& hp, const ParallelFor& par = serial_for);

/// Synchronization at t mod q == 0, applied to clients that already ran
/// fafed_local_update for step t. Averages v and m, rebuilds A from the new
/// v_bar, and sets every client's x to mean_i(x_i - eta_t m_i / A).
/// Throws std::logic_error when t mod q != 0.
FederatedState fafed_sync(FederatedState state, const HyperParams& hp);

// ---------------------------------------------------------------------------
// Baselines. Each advances every client by one step t = server.t and
// synchronizes when t mod q == 0.

/// Local adaptive steps with per-client v; only x is ever averaged.
FederatedState naive_adaptive_step(FederatedState state, const Problem& problem,
                                   const HyperParams& hp,
                                   const ParallelFor& par = serial_for);

FederatedState fedavg_step(FederatedState state, const Problem& problem,
                           const HyperParams& hp, const ParallelFor& par = serial_for);

/// One local SGD step; at t mod q == 0 the server applies its Adam update
/// to the round's averaged displacement and broadcasts.
FederatedState fedadam_step(FederatedState state, const Problem& problem,
                            const HyperParams& hp, const ParallelFor& par = serial_for);

/// q local SGD steps followed by the server update. Expects server.t at a
/// round boundary (t mod q == 0) and leaves it at the next one.
FederatedState fedadam_round(FederatedState state, const Problem& problem,
                             const HyperParams& hp);

/// Server half of FedAdam: delta = mean_i x_i - x_bar_start, Adam moments
/// on delta, x_bar += eta_global m / (sqrt(v) + tau), broadcast.
FederatedState fedadam_server_update(FederatedState state, const HyperParams& hp);

/// Shared initial state for the baselines: every client at x0, v = naive_v0.
FederatedState baseline_init(const Problem& problem, const HyperParams& hp,
                             const Vector& x0, std::uint64_t seed);

/// Naive method's local direction g / sqrt(v), with 0 where v == 0.
Vector naive_direction(const Vector& g, const Vector& v);

}  // namespace fafed
