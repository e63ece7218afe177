#include "fafed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fafed {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

bool leq_rel(double lhs, double rhs, double abs_floor = 0.0) {
  return lhs <= rhs * (1.0 + kAlgebraicRelTol) + abs_floor;
}

}  // namespace

std::optional<TheoreticalConstants> theoretical_constants(const AssumptionConstants& k,
                                                          const HyperParams& hp) {
  if (!k.grad_bound_G || !k.smoothness_L) return std::nullopt;
  const double s = k.noise_sigma * k.noise_sigma + *k.grad_bound_G * *k.grad_bound_G +
                   hp.rho * hp.rho;
  TheoreticalConstants out;
  out.G_prime = 4.0 * std::sqrt(s);
  out.A_norm_bound = std::sqrt(2.0 * s);
  out.eta_cap = hp.rho / (12.0 * *k.smoothness_L * hp.q);
  return out;
}

double metric_Mt(const Vector& x_next, const Vector& x_now, const Vector& grad_at_now,
                 const Vector& m_bar, double eta_t, double rho) {
  if (x_next.size() != x_now.size() || grad_at_now.size() != m_bar.size() ||
      x_now.size() != grad_at_now.size())
    throw std::invalid_argument("metric_Mt: length mismatch");
  if (!(eta_t > 0.0) || !(rho > 0.0))
    throw std::invalid_argument("metric_Mt: eta and rho must be > 0");
  const double move = (x_next - x_now).squaredNorm();
  const double err = (grad_at_now - m_bar).squaredNorm();
  return move / (4.0 * eta_t * eta_t) + err / (4.0 * rho * rho);
}

ChainBound gradient_chain_bound(std::span<const ChainTerm> terms) {
  ChainBound out;
  if (terms.empty()) {
    out.holds = true;
    return out;
  }
  double sum_grad = 0.0, sum_a2 = 0.0, sum_m = 0.0;
  for (const auto& term : terms) {
    sum_grad += term.grad_norm;
    sum_a2 += term.a_norm * term.a_norm;
    sum_m += 0.25 * term.move_over_eta * term.move_over_eta +
             0.25 * term.err_over_rho * term.err_over_rho;
  }
  const double n = static_cast<double>(terms.size());
  out.lhs = sum_grad / n;
  out.rhs = std::sqrt(sum_a2 / n) * std::sqrt(8.0 * sum_m / n);
  out.holds = leq_rel(out.lhs, out.rhs);
  return out;
}

bool a_norm_certificate(std::span<const double> precond_max,
                        std::span<const double> max_abs_grad, double initial_max_abs_grad,
                        double floor) {
  if (precond_max.size() != max_abs_grad.size())
    throw std::invalid_argument("a_norm_certificate: history lengths differ");
  double running = initial_max_abs_grad;
  for (std::size_t t = 0; t < precond_max.size(); ++t) {
    running = std::max(running, max_abs_grad[t]);
    if (!leq_rel(precond_max[t], running + floor)) return false;
  }
  return true;
}

double finite_diff_check(const Problem& problem, std::size_t client, const Vector& point,
                         double step) {
  const Vector g = problem.grad_exact(client, point);
  double worst = 0.0;
  Vector xp = point, xm = point;
  for (Eigen::Index k = 0; k < point.size(); ++k) {
    xp[k] = point[k] + step;
    xm[k] = point[k] - step;
    const double fd = (problem.loss(client, xp) - problem.loss(client, xm)) / (2.0 * step);
    xp[k] = point[k];
    xm[k] = point[k];
    const double scale = std::max({std::abs(g[k]), std::abs(fd), 1.0});
    worst = std::max(worst, std::abs(fd - g[k]) / scale);
  }
  return worst;
}

double finite_diff_check(const Problem& problem, const Vector& point, double step) {
  double worst = 0.0;
  for (std::size_t i = 0; i < problem.n_clients(); ++i)
    worst = std::max(worst, finite_diff_check(problem, i, point, step));
  return worst;
}

double consensus_error(std::span<const Vector> xs) {
  if (xs.empty()) return 0.0;
  Vector mean = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) mean += xs[i];
  mean /= static_cast<double>(xs.size());
  double total = 0.0;
  for (const auto& x : xs) total += (x - mean).squaredNorm();
  return total;
}

double consensus_error(const std::vector<ClientState>& clients) {
  std::vector<Vector> xs;
  xs.reserve(clients.size());
  for (const auto& c : clients) xs.push_back(c.x);
  return consensus_error(std::span<const Vector>(xs));
}

std::vector<CheckResult> verify_trace(const RunTrace& trace) {
  std::vector<CheckResult> out;
  const auto& steps = trace.steps;
  const double eps = std::numeric_limits<double>::epsilon();

  {
    // Between syncs x_{t,i} - x_bar_t is a sum of at most q-1 scaled
    // direction deviations, so Cauchy-Schwarz bounds the consensus error.
    CheckResult r{"lemma_a4_consensus", true, ""};
    double accumulated = 0.0;
    for (const auto& s : steps) {
      // Positions are only resolved to a few ulps of their magnitude.
      const double resolution = 4.0 * eps * s.x_scale;
      const double floor_abs = static_cast<double>(trace.n_clients * trace.dim) *
                               resolution * resolution;
      const double rhs = (trace.q - 1) * accumulated;
      if (!leq_rel(s.consensus, rhs, floor_abs)) {
        r.passed = false;
        r.detail = "t=" + std::to_string(s.t) + " consensus " + fmt(s.consensus) +
                   " > " + fmt(rhs);
        break;
      }
      accumulated = s.synced ? 0.0 : accumulated + s.dispersion;
    }
    out.push_back(r);
  }

  {
    CheckResult r{"gradient_chain_bound", true, ""};
    double sum_grad = 0.0, sum_a2 = 0.0, sum_m = 0.0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const auto& s = steps[k];
      sum_grad += s.grad_norm;
      sum_a2 += s.a_norm * s.a_norm;
      sum_m += 0.25 * s.move_over_eta * s.move_over_eta +
               0.25 * s.err_over_rho * s.err_over_rho;
      const double n = static_cast<double>(k + 1);
      const double lhs = sum_grad / n;
      const double rhs = std::sqrt(sum_a2 / n) * std::sqrt(8.0 * sum_m / n);
      if (!leq_rel(lhs, rhs)) {
        r.passed = false;
        r.detail = "prefix T=" + std::to_string(s.t) + ": " + fmt(lhs) + " > " + fmt(rhs);
        break;
      }
    }
    if (r.passed && !steps.empty()) {
      std::vector<ChainTerm> terms;
      terms.reserve(steps.size());
      for (const auto& s : steps)
        terms.push_back({s.a_norm, s.move_over_eta, s.err_over_rho, s.grad_norm});
      const ChainBound b = gradient_chain_bound(terms);
      r.detail = "lhs=" + fmt(b.lhs) + " rhs=" + fmt(b.rhs);
    }
    out.push_back(r);
  }

  {
    CheckResult r{"post_sync_consensus_exact", true, ""};
    for (const auto& s : steps) {
      if (!s.synced) continue;
      if (s.post_sync_dev_x != 0.0 || s.post_sync_dev_m != 0.0 || s.post_sync_dev_v != 0.0) {
        r.passed = false;
        r.detail = "t=" + std::to_string(s.t) + " clients differ from server after sync";
        break;
      }
    }
    out.push_back(r);
  }

  if (trace.algorithm == Algorithm::Fafed) {
    CheckResult floor{"adaptive_floor", true, ""};
    CheckResult changes{"adaptive_changes_only_at_sync", true, ""};
    for (const auto& s : steps) {
      if (floor.passed && s.a_min < trace.rho) {
        floor.passed = false;
        floor.detail = "t=" + std::to_string(s.t) + " min A entry " + fmt(s.a_min);
      }
      if (changes.passed && s.a_changed && !s.synced) {
        changes.passed = false;
        changes.detail = "A changed at non-sync step t=" + std::to_string(s.t);
      }
    }
    out.push_back(floor);
    out.push_back(changes);
  }

  if (trace.adaptive) {
    std::vector<double> pre, grads;
    pre.reserve(steps.size());
    grads.reserve(steps.size());
    for (const auto& s : steps) {
      pre.push_back(s.precond_max);
      grads.push_back(s.max_abs_grad);
    }
    const bool ok = a_norm_certificate(pre, grads, trace.init_max_abs_grad,
                                       trace.precond_floor);
    out.push_back({"a_norm_certificate", ok, ok ? "" : "preconditioner exceeds gradient bound"});
  }

  {
    CheckResult r{"comms_match_syncs", true, ""};
    std::int64_t expected = 1;
    std::int64_t prev_samples = trace.init_samples;
    for (const auto& s : steps) {
      if (s.synced) ++expected;
      if (s.comms != expected || s.samples < prev_samples) {
        r.passed = false;
        r.detail = "t=" + std::to_string(s.t) + " counters inconsistent";
        break;
      }
      prev_samples = s.samples;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace fafed
