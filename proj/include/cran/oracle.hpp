#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cran/bd_core.hpp"
#include "cran/linalg.hpp"
#include "cran/parallel.hpp"
#include "cran/sparse_solver.hpp"

namespace cran::oracle {

inline constexpr int kMaxExhaustiveRaps = 14;

struct SubsetResult {
  std::vector<int> subset;
  double rate = 0.0;
  bool feasible = false;
};

/// A subset leaves every user at least N null-space dimensions.
inline bool subset_feasible(const Dimensions& d, int size) {
  return size * d.antennas_per_rap - d.antennas_per_user * (d.num_users - 1) >= d.antennas_per_user;
}

struct SubsetSolution {
  double rate = 0.0;
  std::vector<CMatrix> covariances;  // subset-sized
  RVector per_rap_power;
  bool converged = false;
};

/// Max-sum-rate BD design under per-RAP budgets on the RAPs of `subset`.
/// Uses the dual machinery with no sparsity price, solved to a tight
/// tolerance, then scaled onto the budget set.
inline SubsetSolution solve_fixed_subset_full(const ChannelRealization& ch, const std::vector<int>& subset,
                                              FixedWeightsOptions opt = {}) {
  if (!subset_feasible(ch.dims, static_cast<int>(subset.size())))
    throw FeasibilityError("solve_fixed_subset: subset too small for block diagonalization");
  const ChannelRealization sub = restrict_to_subset(ch, subset);
  const NullBasis basis = compute_null_basis(sub);
  const RVector zero_psi = RVector::Zero(sub.dims.total_antennas());
  FixedWeightsResult fw = solve_fixed_weights(sub, basis, zero_psi, opt);

  const double scale = budget_scale(fw.inner.omega, sub.budgets);

  SubsetSolution out;
  out.converged = fw.converged;
  out.covariances = std::move(fw.inner.covariances);
  for (CMatrix& s : out.covariances) s *= scale;
  out.per_rap_power = fw.inner.omega * scale;
  out.rate = sum_rate_unchecked(sub, out.covariances, sub.noise_power);
  return out;
}

inline double solve_fixed_subset(const ChannelRealization& ch, const std::vector<int>& subset,
                                 FixedWeightsOptions opt = {}) {
  return solve_fixed_subset_full(ch, subset, opt).rate;
}

namespace detail {

inline std::vector<int> mask_to_subset(std::uint32_t mask) {
  std::vector<int> out;
  for (int i = 0; mask; ++i, mask >>= 1)
    if (mask & 1u) out.push_back(i);
  return out;
}

/// Next integer with the same popcount (Gosper's hack).
inline std::uint32_t next_combination(std::uint32_t x) {
  const std::uint32_t c = x & (~x + 1u);
  const std::uint32_t r = x + c;
  return (((r ^ x) >> 2) / c) | r;
}

inline bool better(const SubsetResult& a, const SubsetResult& b) {
  if (a.rate != b.rate) return a.rate > b.rate;
  return a.subset < b.subset;
}

}  // namespace detail

/// Best subset of every cardinality 0..L (index = cardinality). When
/// `only_size` is set, the other entries are left infeasible. Equal rates
/// resolve to the lexicographically smallest subset.
inline std::vector<SubsetResult> exhaustive_search(const ChannelRealization& ch, int only_size = -1,
                                                   FixedWeightsOptions opt = {}, unsigned threads = 1) {
  const int L = ch.dims.num_raps;
  if (L > kMaxExhaustiveRaps)
    throw std::invalid_argument("exhaustive_search: L = " + std::to_string(L) + " exceeds the cap of " +
                                std::to_string(kMaxExhaustiveRaps) + " RAPs");
  std::vector<SubsetResult> best(static_cast<std::size_t>(L + 1));
  for (int a = 1; a <= L; ++a) {
    if (only_size >= 0 && a != only_size) continue;
    if (!subset_feasible(ch.dims, a)) continue;
    std::vector<std::uint32_t> masks;
    for (std::uint32_t m = (1u << a) - 1u; m < (1u << L); m = detail::next_combination(m)) masks.push_back(m);

    std::vector<SubsetResult> results(masks.size());
    parallel_for(
        masks.size(),
        [&](std::size_t i) {
          SubsetResult& r = results[i];
          r.subset = detail::mask_to_subset(masks[i]);
          r.rate = solve_fixed_subset(ch, r.subset, opt);
          r.feasible = true;
        },
        threads);

    SubsetResult top = results.front();
    for (const SubsetResult& r : results)
      if (detail::better(r, top)) top = r;
    best[static_cast<std::size_t>(a)] = std::move(top);
  }
  return best;
}

struct GradientReferenceOptions {
  double initial_step = 1.0;
  double change_tol = 1e-10;
  int max_iter = 200000;
};

struct GradientReferenceResult {
  std::vector<CMatrix> covariances;  // S_k = V Q_k V^H
  double objective = 0.0;            // sum_k [rate_k - Tr{Omega S_k}]
  int iterations = 0;
};

/// Maximizes sum_k log2 det(I + H_k V_k Q_k V_k^H H_k^H / sigma2)
/// - Tr{Omega V_k Q_k V_k^H} over Q_k >= 0 by projected gradient ascent,
/// with no use of the closed-form waterfilling solution.
inline GradientReferenceResult projected_gradient_reference(const ChannelRealization& ch,
                                                            const NullBasis& basis,
                                                            const RVector& omega_diag, double sigma2,
                                                            GradientReferenceOptions opt = {}) {
  GradientReferenceResult out;
  const int n = ch.dims.antennas_per_user;
  for (int k = 0; k < ch.dims.num_users; ++k) {
    const CMatrix& v = basis[k];
    const CMatrix a = ch.user(k) * v;
    const CMatrix w = linalg::hermitian_part(v.adjoint() * omega_diag.asDiagonal() * v);
    const CMatrix eye = CMatrix::Identity(n, n);
    auto objective = [&](const CMatrix& q) {
      return linalg::log2det_hpd(eye + a * q * a.adjoint() / sigma2) - (w * q).trace().real();
    };

    CMatrix q = CMatrix::Zero(v.cols(), v.cols());
    double f = objective(q);
    double step = opt.initial_step;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
      const CMatrix inner = (sigma2 * eye + a * q * a.adjoint()).inverse();
      const CMatrix grad = linalg::hermitian_part(linalg::kInvLn2 * a.adjoint() * inner * a - w);
      bool improved = false;
      double gain = 0.0;
      while (step > 1e-300) {
        const CMatrix cand = linalg::project_psd(q + step * grad);
        const double fc = objective(cand);
        if (fc > f) {
          gain = fc - f;
          q = cand;
          f = fc;
          improved = true;
          step *= 1.5;
          break;
        }
        step *= 0.5;
      }
      if (!improved || gain < opt.change_tol) break;
    }
    out.iterations = std::max(out.iterations, it);
    out.objective += f;
    out.covariances.push_back(v * q * v.adjoint());
  }
  return out;
}

}  // namespace cran::oracle
