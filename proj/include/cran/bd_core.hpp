#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "cran/linalg.hpp"
#include "cran/model.hpp"
#include "cran/types.hpp"

namespace cran {

inline constexpr double kDegenerateGap = 1e-8;

/// Orthonormal bases of each user's interference null space.
struct NullBasis {
  std::vector<CMatrix> v_tilde;  // per user, M x (M - N(K-1))
  std::vector<bool> degenerate_users;

  bool degenerate() const {
    return std::any_of(degenerate_users.begin(), degenerate_users.end(), [](bool b) { return b; });
  }
  const CMatrix& operator[](int k) const { return v_tilde[static_cast<std::size_t>(k)]; }
};

/// Transmit design for all users. Covariances and precoders are in
/// normalized units (noise power 1, largest budget 1).
struct PrecoderSolution {
  std::vector<CMatrix> covariances;  // S_k, M x M
  std::vector<CMatrix> precoders;    // T_k, M x min(N, M - N(K-1))
  RVector per_rap_power;             // omega, length L
  std::vector<int> active_set;       // 0-based, ascending
  double sum_rate = 0.0;             // bits/s/Hz
  double objective = 0.0;            // sum_rate - eta |A|
};

/// Diagonal of the antenna selector B_l.
inline RVector selector_diagonal(const Dimensions& d, int l) {
  RVector b = RVector::Zero(d.total_antennas());
  b.segment(d.rap_offset(l), d.antennas_per_rap).setOnes();
  return b;
}

/// Expands one value per RAP to one value per antenna: sum_l v_l B_l.
inline RVector expand_per_rap(const Dimensions& d, const RVector& per_rap) {
  require(per_rap.size() == d.num_raps, "expand_per_rap: need one value per RAP");
  RVector out(d.total_antennas());
  for (int l = 0; l < d.num_raps; ++l)
    out.segment(d.rap_offset(l), d.antennas_per_rap).setConstant(per_rap(l));
  return out;
}

/// Trailing M - N(K-1) right singular vectors of the stacked channels of all
/// other users. The cut is taken by dimension count; a user is flagged
/// degenerate when the other users' stack is rank deficient at the cut or
/// when the user's own channel is annihilated by the basis.
inline NullBasis compute_null_basis(const ChannelRealization& ch) {
  const Dimensions& d = ch.dims;
  const int m = d.total_antennas();
  const int r = d.null_dim();
  if (r < 1) throw FeasibilityError("compute_null_basis: M - N(K-1) must be >= 1");

  NullBasis out;
  out.v_tilde.reserve(static_cast<std::size_t>(d.num_users));
  for (int k = 0; k < d.num_users; ++k) {
    bool degenerate = false;
    CMatrix v;
    if (d.num_users == 1) {
      v = CMatrix::Identity(m, m);
    } else {
      const int rows = d.antennas_per_user * (d.num_users - 1);
      CMatrix g(rows, m);
      int row = 0;
      for (int j = 0; j < d.num_users; ++j) {
        if (j == k) continue;
        g.middleRows(row, d.antennas_per_user) = ch.user(j);
        row += d.antennas_per_user;
      }
      if (!g.allFinite()) throw NumericError("compute_null_basis: non-finite channel");
      Eigen::JacobiSVD<CMatrix> svd(g, Eigen::ComputeFullV);
      const RVector& sv = svd.singularValues();
      if (sv(0) <= 0.0 || sv(sv.size() - 1) < kDegenerateGap * sv(0)) degenerate = true;
      v = svd.matrixV().rightCols(r);
    }

    const CMatrix& h = ch.user(k);
    const double h_norm = h.norm();
    const CMatrix hv = h * v;
    Eigen::JacobiSVD<CMatrix> own(hv);
    const RVector& s = own.singularValues();
    if (h_norm <= 0.0 || s.size() == 0 || s(s.size() - 1) < kDegenerateGap * h_norm)
      degenerate = true;

    out.v_tilde.push_back(std::move(v));
    out.degenerate_users.push_back(degenerate);
  }
  return out;
}

/// Restricts each basis to vectors that vanish on antennas of RAPs outside
/// `active` (one flag per RAP). The result spans null(H_j) intersected with
/// the active antennas' coordinate subspace.
inline NullBasis restrict_basis_to_active(const NullBasis& basis, const Dimensions& d,
                                          const std::vector<bool>& active) {
  require(active.size() == static_cast<std::size_t>(d.num_raps),
          "restrict_basis_to_active: need one flag per RAP");
  std::vector<int> off_rows;
  for (int l = 0; l < d.num_raps; ++l)
    if (!active[static_cast<std::size_t>(l)])
      for (int a = 0; a < d.antennas_per_rap; ++a) off_rows.push_back(d.rap_offset(l) + a);
  if (off_rows.empty()) return basis;

  NullBasis out;
  out.degenerate_users = basis.degenerate_users;
  for (const CMatrix& v : basis.v_tilde) {
    const int r = static_cast<int>(v.cols());
    const int keep = r - static_cast<int>(off_rows.size());
    if (keep < 1) throw FeasibilityError("restrict_basis_to_active: no room for block diagonalization");
    CMatrix rows(static_cast<Eigen::Index>(off_rows.size()), r);
    for (std::size_t i = 0; i < off_rows.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = v.row(off_rows[i]);
    Eigen::JacobiSVD<CMatrix> svd(rows, Eigen::ComputeFullV);
    out.v_tilde.push_back(v * svd.matrixV().rightCols(keep));
  }
  return out;
}

/// Whitened single-user channel and its reduced SVD.
struct EffectiveChannel {
  CMatrix inv_sqrt_w;  // (V^H Omega V + ridge I)^{-1/2}
  CMatrix whitened;    // H V (V^H Omega V)^{-1/2} = U_hat diag(xi) V_hat^H
  RVector xi;          // descending, min(N, r) entries
  CMatrix u_hat;
  CMatrix v_hat;
};

inline double ridge_for(const RVector& omega_diag) {
  return 1e-10 * (1.0 + (omega_diag.size() ? omega_diag.maxCoeff() : 0.0));
}

/// `omega_diag` is the diagonal of the (diagonal) price matrix Omega.
inline EffectiveChannel effective_channel(const CMatrix& h, const CMatrix& v_tilde,
                                          const RVector& omega_diag) {
  require(v_tilde.rows() == omega_diag.size() && h.cols() == v_tilde.rows(),
          "effective_channel: dimension mismatch");
  if (!h.allFinite() || !v_tilde.allFinite() || !omega_diag.allFinite())
    throw NumericError("effective_channel: non-finite input");
  if (omega_diag.size() && omega_diag.minCoeff() < 0.0)
    throw NumericError("effective_channel: price matrix is indefinite");

  const double ridge = ridge_for(omega_diag);
  CMatrix w = v_tilde.adjoint() * (omega_diag.asDiagonal() * v_tilde);
  w.diagonal().array() += ridge;

  EffectiveChannel eff;
  eff.inv_sqrt_w = linalg::inverse_sqrt_hpd(w, ridge);
  eff.whitened = h * (v_tilde * eff.inv_sqrt_w);
  Eigen::JacobiSVD<CMatrix> svd(eff.whitened, Eigen::ComputeThinU | Eigen::ComputeThinV);
  eff.xi = svd.singularValues();
  eff.u_hat = svd.matrixU();
  eff.v_hat = svd.matrixV();
  return eff;
}

/// Per-stream loading (1/ln2 - sigma2/xi^2)^+ ; zero gain gets zero power.
inline RVector waterfill_dual(const RVector& xi, double sigma2) {
  RVector out(xi.size());
  for (Eigen::Index n = 0; n < xi.size(); ++n) {
    const double g = xi(n) * xi(n);
    out(n) = g > 0.0 ? std::max(linalg::kInvLn2 - sigma2 / g, 0.0) : 0.0;
  }
  return out;
}

/// T = V (V^H Omega V)^{-1/2} V_hat diag(loading)^{1/2}.
inline CMatrix precoder_from_dual(const CMatrix& v_tilde, const EffectiveChannel& eff,
                                  const RVector& loading) {
  require(loading.size() == eff.v_hat.cols(), "precoder_from_dual: loading size mismatch");
  require(v_tilde.cols() == eff.inv_sqrt_w.rows(), "precoder_from_dual: basis size mismatch");
  const RVector root = loading.cwiseMax(0.0).cwiseSqrt();
  return v_tilde * (eff.inv_sqrt_w * (eff.v_hat * root.asDiagonal()));
}

/// S = T T^H with T from precoder_from_dual.
inline CMatrix covariance_from_dual(const CMatrix& v_tilde, const EffectiveChannel& eff,
                                    const RVector& loading) {
  const CMatrix t = precoder_from_dual(v_tilde, eff, loading);
  return t * t.adjoint();
}

inline double user_rate(const CMatrix& h, const CMatrix& s, double sigma2) {
  const Eigen::Index n = h.rows();
  const CMatrix a = CMatrix::Identity(n, n) + (h * s * h.adjoint()) / sigma2;
  return std::max(linalg::log2det_hpd(a), 0.0);
}

/// Interference-free sum rate; no PSD check on `s`.
inline double sum_rate_unchecked(const ChannelRealization& ch, const std::vector<CMatrix>& s,
                                 double sigma2) {
  double acc = 0.0;
  for (int k = 0; k < ch.dims.num_users; ++k) acc += user_rate(ch.user(k), s[static_cast<std::size_t>(k)], sigma2);
  return acc;
}

/// sum_k log2 det(I + H_k S_k H_k^H / sigma2).
inline double sum_rate(const ChannelRealization& ch, const std::vector<CMatrix>& s, double sigma2) {
  require(s.size() == static_cast<std::size_t>(ch.dims.num_users), "sum_rate: need one covariance per user");
  for (const CMatrix& sk : s) {
    require(sk.rows() == ch.dims.total_antennas() && sk.cols() == sk.rows(), "sum_rate: covariance has wrong shape");
    if (!linalg::is_psd(sk)) throw NumericError("sum_rate: covariance is not PSD");
  }
  return sum_rate_unchecked(ch, s, sigma2);
}

/// Sum rate with other users' signals treated as interference. Equal to
/// sum_rate() when the covariances are zero-forcing.
inline double sum_rate_with_interference(const ChannelRealization& ch, const std::vector<CMatrix>& s,
                                         double sigma2) {
  const int n = ch.dims.antennas_per_user;
  double acc = 0.0;
  for (int k = 0; k < ch.dims.num_users; ++k) {
    const CMatrix& h = ch.user(k);
    CMatrix interference = sigma2 * CMatrix::Identity(n, n);
    for (int j = 0; j < ch.dims.num_users; ++j)
      if (j != k) interference += h * s[static_cast<std::size_t>(j)] * h.adjoint();
    const CMatrix total = interference + h * s[static_cast<std::size_t>(k)] * h.adjoint();
    acc += linalg::log2det_hpd(total) - linalg::log2det_hpd(interference);
  }
  return acc;
}

/// omega_l = Tr{B_l sum_k S_k}.
inline RVector per_rap_powers(const Dimensions& d, const std::vector<CMatrix>& s) {
  RVector diag = RVector::Zero(d.total_antennas());
  for (const CMatrix& sk : s) diag += sk.diagonal().real();
  RVector omega(d.num_raps);
  for (int l = 0; l < d.num_raps; ++l)
    omega(l) = diag.segment(d.rap_offset(l), d.antennas_per_rap).sum();
  return omega;
}

/// max over j != k of ||H_j S_k H_j^H||_F / (||H_j||_F^2 Tr S_k).
inline double zf_residual(const ChannelRealization& ch, const std::vector<CMatrix>& s) {
  double worst = 0.0;
  for (int k = 0; k < ch.dims.num_users; ++k) {
    const CMatrix& sk = s[static_cast<std::size_t>(k)];
    const double tr = sk.trace().real();
    if (tr <= 0.0) continue;
    for (int j = 0; j < ch.dims.num_users; ++j) {
      if (j == k) continue;
      const CMatrix& hj = ch.user(j);
      const double hn = hj.squaredNorm();
      if (hn <= 0.0) continue;
      worst = std::max(worst, (hj * sk * hj.adjoint()).norm() / (hn * tr));
    }
  }
  return worst;
}

/// Zero-pads covariances of a subset problem back to the full antenna index.
inline std::vector<CMatrix> embed_covariances(const Dimensions& full, const std::vector<int>& subset,
                                              const std::vector<CMatrix>& sub_cov) {
  const int nc = full.antennas_per_rap;
  std::vector<CMatrix> out;
  out.reserve(sub_cov.size());
  for (const CMatrix& s : sub_cov) {
    CMatrix big = CMatrix::Zero(full.total_antennas(), full.total_antennas());
    for (std::size_t a = 0; a < subset.size(); ++a)
      for (std::size_t b = 0; b < subset.size(); ++b)
        big.block(full.rap_offset(subset[a]), full.rap_offset(subset[b]), nc, nc) =
            s.block(static_cast<Eigen::Index>(a) * nc, static_cast<Eigen::Index>(b) * nc, nc, nc);
    out.push_back(std::move(big));
  }
  return out;
}

}  // namespace cran
