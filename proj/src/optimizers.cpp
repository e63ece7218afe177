#include "fafed/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fafed {

namespace {

void require_same_length(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
}

bool is_sync_step(std::int64_t t, int q) { return t % q == 0; }

// x_i - eta * d_i averaged over clients, in index order.
Vector averaged_step(const std::vector<ClientState>& clients,
                     const std::vector<Vector>& directions, double eta) {
  std::vector<Vector> stepped;
  stepped.reserve(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i)
    stepped.push_back(clients[i].x - eta * directions[i]);
  return mean_of(stepped);
}

ClientState sgd_local_update(ClientState client, const Problem& problem,
                             const HyperParams& hp) {
  const MiniBatch batch = draw_step_batch(problem, client.id,
                                          static_cast<std::size_t>(hp.b), hp, client.rng);
  client.g = problem.grad_minibatch(client.id, client.x, batch);
  return client;
}

// Shared skeleton of the two x-averaging baselines.
template <class LocalUpdate, class Direction>
FederatedState local_then_average(FederatedState state, const HyperParams& hp,
                                  const ParallelFor& par, LocalUpdate&& update,
                                  Direction&& direction) {
  const std::int64_t t = state.server.t;
  const double eta = eta_schedule(t, hp);
  auto& clients = state.clients;
  par(clients.size(), [&](std::size_t i) { clients[i] = update(std::move(clients[i])); });

  std::vector<Vector> dirs(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) dirs[i] = direction(clients[i]);

  if (is_sync_step(t, hp.q)) {
    const Vector x_next = averaged_step(clients, dirs, eta);
    for (auto& c : clients) {
      c.x_prev = c.x;
      c.x = x_next;
    }
    state.server.x_bar = x_next;
    ++state.server.sync_count;
  } else {
    for (std::size_t i = 0; i < clients.size(); ++i) {
      clients[i].x_prev = clients[i].x;
      clients[i].x = clients[i].x - eta * dirs[i];
    }
  }
  return state;
}

}  // namespace

std::string to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::Fafed: return "fafed";
    case Algorithm::NaiveAdaptive: return "naive-adaptive";
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedAdam: return "fedadam";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "fafed") return Algorithm::Fafed;
  if (name == "naive-adaptive") return Algorithm::NaiveAdaptive;
  if (name == "fedavg") return Algorithm::FedAvg;
  if (name == "fedadam") return Algorithm::FedAdam;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                              "' (expected fafed, naive-adaptive, fedavg, fedadam)");
}

void HyperParams::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (!(beta > 0.0 && beta < 1.0)) fail("beta must be in (0, 1)");
  if (!(rho > 0.0)) fail("rho must be > 0");
  if (!(c >= 0.0)) fail("c must be ≥ 0");
  if (q < 1) fail("q must be ≥ 1");
  if (b < 1) fail("b must be ≥ 1");
  if (init_batch < 1) fail("init_batch must be ≥ 1");
  if (!(w > 0.0)) fail("w must be > 0");
  if (eta_mode == EtaMode::Decaying && w < 1.0) fail("w must be ≥ 1 for the decaying schedule");
  if (!(rho_hbar > 0.0)) fail("rho_hbar must be > 0");
  if (!(eta > 0.0) || !std::isfinite(eta)) fail("eta must be > 0");
  if (!(naive_v0 >= 0.0)) fail("naive_v0 must be ≥ 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (!(eta_global > 0.0)) fail("eta_global must be > 0");
}

HyperParams default_hyper_params(Algorithm algo) {
  HyperParams hp;
  switch (algo) {
    case Algorithm::Fafed:
      hp.eta_mode = EtaMode::Decaying;
      break;
    case Algorithm::NaiveAdaptive:
      hp.eta_mode = EtaMode::Constant;
      hp.eta = 0.1;
      break;
    case Algorithm::FedAvg:
    case Algorithm::FedAdam:
      hp.eta_mode = EtaMode::Constant;
      hp.eta = 0.01;
      break;
  }
  return hp;
}

double eta_schedule(std::int64_t t, const HyperParams& hp) {
  if (hp.eta_mode == EtaMode::Constant) return hp.eta;
  return hp.rho_hbar / std::cbrt(hp.w + static_cast<double>(t));
}

double alpha_schedule(std::int64_t t, const HyperParams& hp) {
  const double eta_prev = eta_schedule(std::max<std::int64_t>(t - 1, 0), hp);
  return std::min(1.0, hp.c * eta_prev * eta_prev);
}

bool alpha_clamped(std::int64_t t, const HyperParams& hp) {
  const double eta_prev = eta_schedule(std::max<std::int64_t>(t - 1, 0), hp);
  return hp.c * eta_prev * eta_prev > 1.0;
}

double theoretical_w(double L, int q, double hbar) {
  const double lqh = L * q * hbar;
  return std::max(1.5, 1728.0 * lqh * lqh * lqh);
}

double theoretical_c(double L, int q, double hbar, double rho, int b, std::size_t n) {
  return 1.0 / (12.0 * L * q * hbar * hbar * hbar * rho * rho) +
         60.0 * L * L / (b * static_cast<double>(n) * rho * rho);
}

double theoretical_hbar(double L, std::size_t n) {
  return std::pow(static_cast<double>(n), 2.0 / 3.0) / L;
}

Vector storm_estimate(const Vector& g_now, const Vector& g_prev_point,
                      const Vector& m_prev, double alpha) {
  require_same_length(g_now, g_prev_point, "storm_estimate");
  require_same_length(g_now, m_prev, "storm_estimate");
  return g_now + (1.0 - alpha) * (m_prev - g_prev_point);
}

Vector ema_second_moment(const Vector& v_prev, const Vector& g, double beta) {
  require_same_length(v_prev, g, "ema_second_moment");
  return beta * v_prev + (1.0 - beta) * g.cwiseProduct(g);
}

Vector adaptive_matrix(const Vector& v_bar, double rho) {
  if (v_bar.size() > 0 && !(v_bar.minCoeff() >= 0.0))
    throw std::invalid_argument("adaptive_matrix: negative second-moment entry");
  return v_bar.cwiseSqrt().array() + rho;
}

Vector mean_of(const std::vector<Vector>& vs) {
  if (vs.empty()) throw std::invalid_argument("mean_of: no vectors");
  Vector acc = vs.front();
  for (std::size_t i = 1; i < vs.size(); ++i) acc += vs[i];
  return acc / static_cast<double>(vs.size());
}

MiniBatch draw_step_batch(const Problem& problem, std::size_t client, std::size_t size,
                          const HyperParams& hp, CounterRng& rng) {
  if (hp.full_batch) return problem.full_batch(client);
  return problem.draw_batch(client, size, rng);
}

FederatedState fafed_init(const Problem& problem, const HyperParams& hp,
                          const Vector& x0, std::uint64_t seed) {
  hp.validate();
  if (static_cast<std::size_t>(x0.size()) != problem.dim())
    throw std::invalid_argument("fafed_init: x0 has wrong dimension");
  const std::size_t n = problem.n_clients();

  FederatedState state;
  state.clients.resize(n);
  std::vector<Vector> grads(n), squares(n);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng init_rng(seed, i, StreamPurpose::kInitBatch);
    const MiniBatch batch = draw_step_batch(
        problem, i, static_cast<std::size_t>(hp.init_batch), hp, init_rng);
    grads[i] = problem.grad_minibatch(i, x0, batch);
    squares[i] = grads[i].cwiseProduct(grads[i]);
  }
  const Vector m0 = mean_of(grads);
  const Vector v0 = hp.freeze_second_moment ? Vector(Vector::Zero(x0.size()))
                                            : mean_of(squares);
  const Vector a0 = adaptive_matrix(v0, hp.rho);
  const double eta0 = eta_schedule(0, hp);
  const Vector x1 = x0 - eta0 * m0.cwiseQuotient(a0);

  for (std::size_t i = 0; i < n; ++i) {
    ClientState& c = state.clients[i];
    c.id = i;
    c.x = x1;
    c.x_prev = x0;
    c.m = m0;
    c.v = v0;
    c.g = grads[i];
    c.rng = CounterRng(seed, i, StreamPurpose::kStepBatch);
  }
  state.server.x_bar = x1;
  state.server.m_bar = m0;
  state.server.v_bar = v0;
  state.server.adaptive_diag = a0;
  state.server.t = 0;
  state.server.sync_count = 0;
  return state;
}

ClientState fafed_local_update(ClientState client, const ServerState& server,
                               const Problem& problem, const HyperParams& hp) {
  const std::int64_t t = server.t;
  const MiniBatch batch = draw_step_batch(problem, client.id,
                                          static_cast<std::size_t>(hp.b), hp, client.rng);
  Vector g_now = problem.grad_minibatch(client.id, client.x, batch);
  const Vector g_prev = problem.grad_minibatch(client.id, client.x_prev, batch);
  client.m = storm_estimate(g_now, g_prev, client.m, alpha_schedule(t, hp));
  if (!hp.freeze_second_moment) client.v = ema_second_moment(client.v, g_now, hp.beta);
  client.x_prev = client.x;
  client.g = std::move(g_now);
  return client;
}

ClientState fafed_local_move(ClientState client, const ServerState& server,
                             const HyperParams& hp) {
  require_same_length(client.x, server.adaptive_diag, "fafed_local_move");
  const double eta = eta_schedule(server.t, hp);
  client.x = client.x - eta * client.m.cwiseQuotient(server.adaptive_diag);
  return client;
}

ClientState fafed_local_step(ClientState client, const ServerState& server,
                             const Problem& problem, const HyperParams& hp) {
  return fafed_local_move(fafed_local_update(std::move(client), server, problem, hp),
                          server, hp);
}

FederatedState fafed_sync(FederatedState state, const HyperParams& hp) {
  ServerState& server = state.server;
  if (!is_sync_step(server.t, hp.q))
    throw std::logic_error("fafed_sync called at t = " + std::to_string(server.t) +
                           " with t mod q != 0");
  auto& clients = state.clients;
  const std::size_t n = clients.size();
  std::vector<Vector> vs(n), ms(n);
  for (std::size_t i = 0; i < n; ++i) {
    vs[i] = clients[i].v;
    ms[i] = clients[i].m;
  }
  server.v_bar = mean_of(vs);
  server.adaptive_diag = adaptive_matrix(server.v_bar, hp.rho);
  server.m_bar = mean_of(ms);

  const double eta = eta_schedule(server.t, hp);
  std::vector<Vector> dirs(n);
  for (std::size_t i = 0; i < n; ++i) dirs[i] = clients[i].m.cwiseQuotient(server.adaptive_diag);
  server.x_bar = averaged_step(clients, dirs, eta);

  for (auto& c : clients) {
    c.x = server.x_bar;
    c.m = server.m_bar;
    c.v = server.v_bar;
  }
  ++server.sync_count;
  return state;
}

FederatedState fafed_step(FederatedState state, const Problem& problem,
                          const HyperParams& hp, const ParallelFor& par) {
  auto& clients = state.clients;
  const ServerState& server = state.server;
  if (is_sync_step(server.t, hp.q)) {
    par(clients.size(), [&](std::size_t i) {
      clients[i] = fafed_local_update(std::move(clients[i]), server, problem, hp);
    });
    return fafed_sync(std::move(state), hp);
  }
  par(clients.size(), [&](std::size_t i) {
    clients[i] = fafed_local_step(std::move(clients[i]), server, problem, hp);
  });
  return state;
}

Vector naive_direction(const Vector& g, const Vector& v) {
  require_same_length(g, v, "naive_direction");
  Vector d(g.size());
  for (Eigen::Index k = 0; k < g.size(); ++k)
    d[k] = v[k] > 0.0 ? g[k] / std::sqrt(v[k]) : 0.0;
  return d;
}

FederatedState baseline_init(const Problem& problem, const HyperParams& hp,
                             const Vector& x0, std::uint64_t seed) {
  hp.validate();
  if (static_cast<std::size_t>(x0.size()) != problem.dim())
    throw std::invalid_argument("baseline_init: x0 has wrong dimension");
  FederatedState state;
  const auto d = x0.size();
  state.clients.resize(problem.n_clients());
  for (std::size_t i = 0; i < problem.n_clients(); ++i) {
    ClientState& c = state.clients[i];
    c.id = i;
    c.x = x0;
    c.x_prev = x0;
    c.m = Vector::Zero(d);
    c.v = Vector::Constant(d, hp.naive_v0);
    c.g = Vector::Zero(d);
    c.rng = CounterRng(seed, i, StreamPurpose::kStepBatch);
  }
  state.server.x_bar = x0;
  state.server.m_bar = Vector::Zero(d);
  state.server.v_bar = Vector::Zero(d);
  state.server.adaptive_diag = Vector::Ones(d);
  state.server.adam_m = Vector::Zero(d);
  state.server.adam_v = Vector::Zero(d);
  return state;
}

FederatedState naive_adaptive_step(FederatedState state, const Problem& problem,
                                   const HyperParams& hp, const ParallelFor& par) {
  return local_then_average(
      std::move(state), hp, par,
      [&](ClientState c) {
        c = sgd_local_update(std::move(c), problem, hp);
        c.v = ema_second_moment(c.v, c.g, hp.beta);
        return c;
      },
      [](const ClientState& c) { return naive_direction(c.g, c.v); });
}

FederatedState fedavg_step(FederatedState state, const Problem& problem,
                           const HyperParams& hp, const ParallelFor& par) {
  return local_then_average(
      std::move(state), hp, par,
      [&](ClientState c) { return sgd_local_update(std::move(c), problem, hp); },
      [](const ClientState& c) { return c.g; });
}

FederatedState fedadam_server_update(FederatedState state, const HyperParams& hp) {
  ServerState& s = state.server;
  std::vector<Vector> xs;
  xs.reserve(state.clients.size());
  for (const auto& c : state.clients) xs.push_back(c.x);
  const Vector delta = mean_of(xs) - s.x_bar;
  s.adam_m = hp.beta1 * s.adam_m + (1.0 - hp.beta1) * delta;
  s.adam_v = hp.beta2 * s.adam_v + (1.0 - hp.beta2) * delta.cwiseProduct(delta);
  s.x_bar = s.x_bar + hp.eta_global * s.adam_m.cwiseQuotient(
                                          Vector(s.adam_v.cwiseSqrt().array() + hp.tau));
  for (auto& c : state.clients) c.x = s.x_bar;
  ++s.sync_count;
  return state;
}

FederatedState fedadam_step(FederatedState state, const Problem& problem,
                            const HyperParams& hp, const ParallelFor& par) {
  const std::int64_t t = state.server.t;
  const double eta = eta_schedule(t, hp);
  auto& clients = state.clients;
  par(clients.size(), [&](std::size_t i) {
    ClientState c = sgd_local_update(std::move(clients[i]), problem, hp);
    c.x_prev = c.x;
    c.x = c.x - eta * c.g;
    clients[i] = std::move(c);
  });
  if (is_sync_step(t, hp.q)) return fedadam_server_update(std::move(state), hp);
  return state;
}

FederatedState fedadam_round(FederatedState state, const Problem& problem,
                             const HyperParams& hp) {
  if (hp.q < 1) throw std::invalid_argument("q must be ≥ 1");
  if (!is_sync_step(state.server.t, hp.q))
    throw std::logic_error("fedadam_round must start at a round boundary");
  for (int k = 0; k < hp.q; ++k) {
    ++state.server.t;
    state = fedadam_step(std::move(state), problem, hp);
  }
  return state;
}

}  // namespace fafed
