#pragma once

#include <Eigen/Dense>

#include <string>

namespace qlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Threshold below which the largest real part of a spectrum counts as stable.
inline constexpr double kStabilityTol = 1e-10;

struct StabilityVerdict {
    bool stable = false;
    double max_real_part = 0.0;
};

/// Eigenvalue-based stability test: stable iff max Re(spec M) < -1e-10.
StabilityVerdict is_stable(const Mat& m);

/// Smallest eigenvalue of the symmetric part of `m`.
double min_sym_eigenvalue(const Mat& m);

/// Symmetric eigendecomposition with negative eigenvalues clipped to zero,
/// returned as a square root factor L with L L^T = clip(m).
Mat psd_sqrt(const Mat& m, double* clipped_mass = nullptr);

/// Matrix exponential (scaling and squaring with Pade approximants).
Mat expm(const Mat& m);

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// 2-norm condition number via SVD; +inf for singular input.
double condition_number(const Mat& m);

/// Compact "[a, b; c, d]" rendering used in diagnostics.
std::string format_matrix(const Mat& m);
std::string format_vector(const Vec& v);

}  // namespace qlab
