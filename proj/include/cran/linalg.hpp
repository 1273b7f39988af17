#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "cran/types.hpp"

namespace cran::linalg {

inline constexpr double kInvLn2 = 1.0 / std::numbers::ln2;

inline CMatrix hermitian_part(const CMatrix& x) {
  return 0.5 * (x + x.adjoint());
}

inline bool all_finite(const CMatrix& x) { return x.allFinite(); }

/// Eigenvalues of the Hermitian part of `x`, ascending.
inline RVector hermitian_eigenvalues(const CMatrix& x) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(x),
                                            Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// PSD test with a tolerance relative to the spectral radius:
/// min eigenvalue >= -rel_tol * max |eigenvalue|.
inline bool is_psd(const CMatrix& x, double rel_tol = 1e-9) {
  if (x.size() == 0) return true;
  if (!x.allFinite()) return false;
  const RVector ev = hermitian_eigenvalues(x);
  const double scale = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  return ev(0) >= -rel_tol * scale;
}

/// W^{-1/2} for a Hermitian matrix that is positive definite after the
/// caller's ridge. Eigenvalues below `floor` are lifted to `floor`; a
/// negative eigenvalue larger in magnitude than `floor` is an error.
inline CMatrix inverse_sqrt_hpd(const CMatrix& w, double floor) {
  if (!w.allFinite()) throw NumericError("inverse_sqrt_hpd: non-finite input");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(w));
  if (es.info() != Eigen::Success)
    throw NumericError("inverse_sqrt_hpd: eigendecomposition failed");
  const RVector& ev = es.eigenvalues();
  if (ev.size() > 0 && ev(0) < -floor)
    throw NumericError("inverse_sqrt_hpd: matrix is indefinite");
  const RVector scale =
      ev.unaryExpr([floor](double e) { return 1.0 / std::sqrt(std::max(e, floor)); });
  const CMatrix& u = es.eigenvectors();
  return u * scale.asDiagonal() * u.adjoint();
}

/// log2 det(A) for Hermitian positive definite A. Cholesky first; if that
/// fails the Hermitian eigenvalues are clamped at zero (giving -inf for a
/// singular matrix rather than NaN).
inline double log2det_hpd(const CMatrix& a) {
  if (a.size() == 0) return 0.0;
  const CMatrix h = hermitian_part(a);
  Eigen::LLT<CMatrix> llt(h);
  if (llt.info() == Eigen::Success) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < h.rows(); ++i)
      acc += std::log2(llt.matrixLLT()(i, i).real());
    return 2.0 * acc;
  }
  const RVector ev = hermitian_eigenvalues(h);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    acc += std::log2(std::max(ev(i), 0.0));
  return acc;
}

/// Projection onto the PSD cone: clip negative eigenvalues.
inline CMatrix project_psd(const CMatrix& x) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(x));
  const RVector clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace cran::linalg
