#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fafed/engine.hpp"
#include "fafed/optimizers.hpp"
#include "fafed/problems.hpp"

namespace fafed {

/// Relative tolerance for algebraic identities and pathwise inequalities.
inline constexpr double kAlgebraicRelTol = 1e-9;
/// Relative tolerance for central finite differences.
inline constexpr double kFiniteDiffRelTol = 1e-5;

/// Bounds that follow from the assumption constants.
struct TheoreticalConstants {
  double G_prime = 0.0;       // 4 sqrt(sigma^2 + G^2 + rho^2)
  double A_norm_bound = 0.0;  // sqrt(2 (sigma^2 + G^2 + rho^2))
  double eta_cap = 0.0;       // rho / (12 L q)
};

/// Empty when G or L is unknown.
std::optional<TheoreticalConstants> theoretical_constants(const AssumptionConstants& k,
                                                          const HyperParams& hp);

/// ||x_next - x_now||^2 / (4 eta^2) + ||grad - m_bar||^2 / (4 rho^2).
double metric_Mt(const Vector& x_next, const Vector& x_now, const Vector& grad_at_now,
                 const Vector& m_bar, double eta_t, double rho);

/// Per-step inputs to the averaged-gradient chain bound.
struct ChainTerm {
  double a_norm = 0.0;
  double move_over_eta = 0.0;
  double err_over_rho = 0.0;
  double grad_norm = 0.0;
};

struct ChainBound {
  double lhs = 0.0;  // mean ||grad f(x_bar_t)||
  double rhs = 0.0;  // sqrt(mean ||A_t||^2) * sqrt(8 mean M_t)
  bool holds = false;
};

/// Cauchy-Schwarz chain: since ||grad f|| <= ||A|| (move/eta + err/rho)
/// pointwise whenever ||A|| >= rho, the averaged gradient norm is bounded by
/// sqrt(mean ||A||^2) sqrt(8 mean M_t).
ChainBound gradient_chain_bound(std::span<const ChainTerm> terms);

/// Every recorded preconditioner maximum stays below the running maximum of
/// observed |g| entries plus the floor: the EMA of squares never exceeds the
/// largest square it has seen.
bool a_norm_certificate(std::span<const double> precond_max,
                        std::span<const double> max_abs_grad, double initial_max_abs_grad,
                        double floor);

/// Max over coordinates of the relative error between grad_exact and a
/// central difference of loss, for one client.
double finite_diff_check(const Problem& problem, std::size_t client, const Vector& point,
                         double step = 1e-6);

/// Same, over all clients.
double finite_diff_check(const Problem& problem, const Vector& point, double step = 1e-6);

/// sum_i ||x_i - mean x||^2.
double consensus_error(std::span<const Vector> xs);
double consensus_error(const std::vector<ClientState>& clients);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Deterministic analysis checks over one audited run:
///  - consensus at each step vs (q-1) times the accumulated dispersion since
///    the last synchronization (Cauchy-Schwarz over the inner loop),
///  - the chain bound at every prefix,
///  - exact post-sync agreement,
///  - A floor and A-changes-only-at-sync (FAFED),
///  - preconditioner certificate (adaptive methods),
///  - communication counter increments only at syncs.
std::vector<CheckResult> verify_trace(const RunTrace& trace);

}  // namespace fafed
