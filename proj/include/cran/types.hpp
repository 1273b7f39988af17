#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cran {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Raised when a computation produces or receives non-finite values, or when
/// a matrix that must be positive (semi)definite is not.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a RAP subset cannot support block diagonalization.
class FeasibilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Array dimensions shared by every channel, basis and solution object.
struct Dimensions {
  int num_raps = 0;           // L
  int antennas_per_rap = 0;   // N_c
  int num_users = 0;          // K
  int antennas_per_user = 0;  // N

  int total_antennas() const { return num_raps * antennas_per_rap; }

  /// Columns of each user's interference null space, M - N(K-1).
  int null_dim() const {
    return total_antennas() - antennas_per_user * (num_users - 1);
  }

  /// Smallest active-set size that still lets every user send N streams.
  int min_active() const {
    const int streams = num_users * antennas_per_user;
    return (streams + antennas_per_rap - 1) / antennas_per_rap;
  }

  /// First antenna index of RAP `l` (0-based).
  int rap_offset(int l) const { return l * antennas_per_rap; }

  bool operator==(const Dimensions&) const = default;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace cran
