#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cran/bd_core.hpp"
#include "cran/model.hpp"
#include "cran/types.hpp"

namespace cran {

enum class StepRule { kConstant, kDiminishing };

struct SolverParams {
  double eta = 0.0;                  // bits/s/Hz per active RAP
  double epsilon_w = 1e-6;           // reweighting constant, normalized power
  double step0 = 0.1;                // subgradient step size
  StepRule step_rule = StepRule::kConstant;
  double tol = 1e-4;                 // stop when slackness residual < tol
  int max_iter = 500;
  double active_thresh_rel = 1e-5;   // RAP active if omega_l >= thresh * budget_l
  std::vector<double> lambda0;       // empty: 1 on every RAP

  void validate(int num_raps) const {
    require(eta >= 0.0 && std::isfinite(eta), "eta: must be >= 0");
    require(epsilon_w > 0.0, "epsilon_w: must be > 0");
    require(step0 > 0.0, "step: must be > 0");
    require(tol > 0.0, "tol: must be > 0");
    require(max_iter >= 1, "max_iter: must be >= 1");
    require(active_thresh_rel > 0.0 && active_thresh_rel < 1.0, "active_thresh_rel: must be in (0,1)");
    require(lambda0.empty() || lambda0.size() == static_cast<std::size_t>(num_raps),
            "lambda0: need one value per RAP");
    for (double v : lambda0) require(v > 0.0, "lambda0: values must be > 0");
  }

  RVector initial_lambda(int num_raps) const {
    if (lambda0.empty()) return RVector::Ones(num_raps);
    return Eigen::Map<const RVector>(lambda0.data(), static_cast<Eigen::Index>(lambda0.size()));
  }
};

/// Multipliers, reweighting state and per-iteration history of one solve.
struct DualState {
  RVector lambda;
  RVector beta;
  RVector psi;  // diagonal of Psi = eta sum_l beta_l B_l
  int iter = 0;
  bool converged = false;
  int best_iter = 0;  // 1-based index of the returned iterate
  std::vector<double> residual_history;
  std::vector<int> active_count_history;
  std::vector<double> rate_history;
  std::vector<RVector> lambda_history;  // after the update of each iteration
  std::vector<RVector> omega_history;
};

/// beta_l = 1 / (omega_l + eps).
inline RVector update_weights(const RVector& omega_prev, double epsilon_w) {
  return (omega_prev.array().max(0.0) + epsilon_w).inverse().matrix();
}

/// Diagonal of eta sum_l beta_l B_l.
inline RVector build_psi(const Dimensions& d, double eta, const RVector& beta) {
  return expand_per_rap(d, eta * beta);
}

struct InnerSolution {
  std::vector<CMatrix> covariances;
  std::vector<CMatrix> precoders;
  RVector omega;
  // sum_k [rate_k - Tr{Omega S_k}]; the dual function is this plus lambda . budgets
  double lagrangian = 0.0;
  double sum_rate = 0.0;
};

/// Maximizes the Lagrangian over all users' covariances for fixed prices
/// Omega = Psi + sum_l lambda_l B_l. Users decouple; each gets a whitened
/// waterfilling solution inside its null space.
inline InnerSolution inner_solve(const ChannelRealization& ch, const NullBasis& basis,
                                 const RVector& psi_diag, const RVector& lambda, double sigma2) {
  const Dimensions& d = ch.dims;
  require(psi_diag.size() == d.total_antennas(), "inner_solve: Psi has wrong size");
  require(lambda.size() == d.num_raps, "inner_solve: lambda has wrong size");
  const RVector omega_diag = psi_diag + expand_per_rap(d, lambda);

  InnerSolution out;
  out.covariances.reserve(static_cast<std::size_t>(d.num_users));
  out.precoders.reserve(static_cast<std::size_t>(d.num_users));
  for (int k = 0; k < d.num_users; ++k) {
    const EffectiveChannel eff = effective_channel(ch.user(k), basis[k], omega_diag);
    const RVector loading = waterfill_dual(eff.xi, sigma2);
    CMatrix t = precoder_from_dual(basis[k], eff, loading);
    CMatrix s = t * t.adjoint();
    const double rate = user_rate(ch.user(k), s, sigma2);
    const double price = (omega_diag.array() * s.diagonal().real().array()).sum();
    out.sum_rate += rate;
    out.lagrangian += rate - price;
    out.precoders.push_back(std::move(t));
    out.covariances.push_back(std::move(s));
  }
  out.omega = per_rap_powers(d, out.covariances);
  return out;
}

/// lambda' = max(lambda - delta (budget - omega), 0).
inline RVector subgradient_step(const RVector& lambda, const RVector& omega, const RVector& budgets,
                                double delta) {
  return (lambda - delta * (budgets - omega)).cwiseMax(0.0);
}

/// sum_l |lambda_l (budget_l - omega_l)|^2.
inline double slackness_residual(const RVector& lambda, const RVector& omega, const RVector& budgets) {
  return (lambda.array() * (budgets - omega).array()).square().sum();
}

inline std::vector<int> extract_active_set(const RVector& omega, const RVector& budgets,
                                           double active_thresh_rel = 1e-5) {
  std::vector<int> out;
  for (Eigen::Index l = 0; l < omega.size(); ++l)
    if (omega(l) >= active_thresh_rel * budgets(l)) out.push_back(static_cast<int>(l));
  return out;
}

/// g(lambda) for the reweighted problem with prices Psi.
inline double dual_value(const ChannelRealization& ch, const NullBasis& basis, const RVector& psi_diag,
                         const RVector& lambda) {
  const InnerSolution in = inner_solve(ch, basis, psi_diag, lambda, ch.noise_power);
  return in.lagrangian + lambda.dot(ch.budgets);
}

/// Largest c <= 1 with c * omega_l <= budget_l for every RAP.
inline double budget_scale(const RVector& omega, const RVector& budgets) {
  double c = 1.0;
  for (Eigen::Index l = 0; l < omega.size(); ++l)
    if (omega(l) > budgets(l)) c = std::min(c, budgets(l) / omega(l));
  return c;
}

struct SolveResult {
  PrecoderSolution solution;
  DualState state;
};

/// Reweighted-l1 loop: reweight, price, inner solve, subgradient update, in
/// that order each iteration. Call step() until it returns false, then
/// result(); solve() does both.
class ReweightedSolver {
 public:
  ReweightedSolver(const ChannelRealization& ch, SolverParams params)
      : ReweightedSolver(ch, std::move(params), compute_null_basis(ch)) {}

  ReweightedSolver(ChannelRealization&&, SolverParams) = delete;

  ReweightedSolver(const ChannelRealization& ch, SolverParams params, NullBasis basis)
      : ch_(ch), params_(std::move(params)), basis_(std::move(basis)) {
    params_.validate(ch.dims.num_raps);
    require(ch.dims.null_dim() >= 1, "solve: block diagonalization is infeasible");
    state_.lambda = params_.initial_lambda(ch.dims.num_raps);
    // Starting weights come from the unpenalized solution at lambda0.
    const RVector zero_psi = RVector::Zero(ch.dims.total_antennas());
    omega_prev_ = inner_solve(ch_, basis_, zero_psi, state_.lambda, ch_.noise_power).omega;
  }

  /// One iteration. Returns false once converged or out of iterations.
  bool step() {
    if (done()) return false;
    const Dimensions& d = ch_.dims;
    ++state_.iter;
    state_.beta = update_weights(omega_prev_, params_.epsilon_w);
    state_.psi = build_psi(d, params_.eta, state_.beta);
    InnerSolution inner = inner_solve(ch_, basis_, state_.psi, state_.lambda, ch_.noise_power);

    const double delta = params_.step_rule == StepRule::kConstant
                             ? params_.step0
                             : params_.step0 / static_cast<double>(state_.iter);
    state_.lambda = subgradient_step(state_.lambda, inner.omega, ch_.budgets, delta);
    const double r = slackness_residual(state_.lambda, inner.omega, ch_.budgets);
    const auto active = extract_active_set(inner.omega, ch_.budgets, params_.active_thresh_rel);

    state_.residual_history.push_back(r);
    state_.active_count_history.push_back(static_cast<int>(active.size()));
    state_.rate_history.push_back(inner.sum_rate);
    state_.lambda_history.push_back(state_.lambda);
    state_.omega_history.push_back(inner.omega);

    if (!best_ || r < best_residual_) {
      best_residual_ = r;
      best_ = std::move(inner);
      state_.best_iter = state_.iter;
    }
    omega_prev_ = state_.omega_history.back();
    if (r < params_.tol) {
      state_.converged = true;
      // the returned iterate is the converged one even if an earlier
      // iterate had a smaller residual
      if (state_.best_iter != state_.iter) {
        best_residual_ = r;
        state_.best_iter = state_.iter;
      }
    }
    return !done();
  }

  bool done() const { return state_.converged || state_.iter >= params_.max_iter; }

  const DualState& state() const { return state_; }
  const NullBasis& basis() const { return basis_; }
  const SolverParams& params() const { return params_; }

  /// Final (or best, if not converged) iterate.
  SolveResult result() const {
    require(best_.has_value(), "ReweightedSolver::result: no iterations run");
    SolveResult out;
    out.state = state_;
    PrecoderSolution& sol = out.solution;
    sol.covariances = best_->covariances;
    sol.precoders = best_->precoders;
    sol.per_rap_power = best_->omega;
    // Dual iterates overshoot budgets by O(sqrt(tol)); scale every user
    // uniformly back onto the budget set. Zero-forcing is preserved.
    const double scale = budget_scale(sol.per_rap_power, ch_.budgets);
    if (scale < 1.0) {
      for (CMatrix& s : sol.covariances) s *= scale;
      for (CMatrix& t : sol.precoders) t *= std::sqrt(scale);
      sol.per_rap_power *= scale;
    }
    sol.active_set = extract_active_set(sol.per_rap_power, ch_.budgets, params_.active_thresh_rel);
    sol.sum_rate = scale < 1.0 ? sum_rate_unchecked(ch_, sol.covariances, ch_.noise_power) : best_->sum_rate;
    sol.objective = sol.sum_rate - params_.eta * static_cast<double>(sol.active_set.size());
    return out;
  }

 private:
  const ChannelRealization& ch_;
  SolverParams params_;
  NullBasis basis_;
  DualState state_;
  RVector omega_prev_;
  std::optional<InnerSolution> best_;
  double best_residual_ = std::numeric_limits<double>::infinity();
};

inline SolveResult solve(const ChannelRealization& ch, const SolverParams& params) {
  ReweightedSolver solver(ch, params);
  while (solver.step()) {
  }
  return solver.result();
}

inline SolveResult solve(const ChannelRealization& ch, const SolverParams& params, NullBasis basis) {
  ReweightedSolver solver(ch, params, std::move(basis));
  while (solver.step()) {
  }
  return solver.result();
}

struct FixedWeightsOptions {
  double tol = 1e-9;  // norm of the projected dual gradient
  int max_iter = 200;
};

struct FixedWeightsResult {
  InnerSolution inner;
  RVector lambda;
  double dual = 0.0;
  double pg_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes the dual g(lambda) for frozen prices Psi by projected Newton
/// steps (Hessian from finite differences of the per-RAP powers) with an
/// Armijo search along the projection arc. Reaches tolerances the fixed-step
/// loop cannot; used by the subset oracle and for duality checks. Cost per
/// iteration is L + 1 inner solves, so keep L small.
inline FixedWeightsResult solve_fixed_weights(const ChannelRealization& ch, const NullBasis& basis,
                                              const RVector& psi_diag, FixedWeightsOptions opt = {},
                                              std::optional<RVector> lambda_init = std::nullopt) {
  const RVector& p = ch.budgets;
  const int L = ch.dims.num_raps;
  auto evaluate = [&](const RVector& lam, InnerSolution& in) {
    in = inner_solve(ch, basis, psi_diag, lam, ch.noise_power);
    return in.lagrangian + lam.dot(p);
  };

  FixedWeightsResult out;
  out.lambda = lambda_init.value_or(RVector::Ones(L));
  out.dual = evaluate(out.lambda, out.inner);

  for (out.iterations = 0; out.iterations < opt.max_iter; ++out.iterations) {
    const RVector grad = p - out.inner.omega;
    out.pg_norm = (out.lambda - (out.lambda - grad).cwiseMax(0.0)).norm();
    if (out.pg_norm < opt.tol) {
      out.converged = true;
      break;
    }

    // Coordinates pinned at the bound with a gradient pushing outward stay put.
    const double eps_bind = std::min(1e-8, out.pg_norm);
    std::vector<int> free;
    for (int l = 0; l < L; ++l)
      if (!(out.lambda(l) <= eps_bind && grad(l) > 0.0)) free.push_back(l);

    RVector dir = RVector::Zero(L);
    if (!free.empty()) {
      const int nf = static_cast<int>(free.size());
      RMatrix hess(nf, nf);
      for (int j = 0; j < nf; ++j) {
        const int m = free[static_cast<std::size_t>(j)];
        const double h = 1e-6 * std::max(out.lambda(m), 1e-3);
        RVector shifted = out.lambda;
        shifted(m) += h;
        const RVector omega_h = inner_solve(ch, basis, psi_diag, shifted, ch.noise_power).omega;
        for (int i = 0; i < nf; ++i) {
          const int l = free[static_cast<std::size_t>(i)];
          hess(i, j) = (out.inner.omega(l) - omega_h(l)) / h;
        }
      }
      hess = 0.5 * (hess + hess.transpose()).eval();
      hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
      RVector g_free(nf);
      for (int i = 0; i < nf; ++i) g_free(i) = grad(free[static_cast<std::size_t>(i)]);
      Eigen::LDLT<RMatrix> ldlt(hess);
      RVector d_free = ldlt.solve(-g_free);
      if (ldlt.info() != Eigen::Success || !d_free.allFinite() || d_free.dot(g_free) >= 0.0) d_free = -g_free;
      for (int i = 0; i < nf; ++i) dir(free[static_cast<std::size_t>(i)]) = d_free(i);
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) dir = -grad;  // fall back to steepest descent
      double alpha = 1.0;
      for (int tries = 0; tries < 60; ++tries, alpha *= 0.5) {
        const RVector cand = (out.lambda + alpha * dir).cwiseMax(0.0);
        InnerSolution in;
        const double g = evaluate(cand, in);
        if (std::isfinite(g) && g <= out.dual + 1e-4 * grad.dot(cand - out.lambda)) {
          out.lambda = cand;
          out.inner = std::move(in);
          out.dual = g;
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;
  }
  return out;
}

}  // namespace cran
