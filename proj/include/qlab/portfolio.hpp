#pragma once

#include "qlab/model.hpp"
#include "qlab/montecarlo.hpp"
#include "qlab/utility.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlab {

class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// lambda_hat solving E_N[H I(lambda H)] = x on one ensemble.
struct CalibratedMultiplier {
    double lambda_hat = 0.0;
    double budget_residual = 0.0;  // E_N[H I(lambda_hat H)] - x
    int iterations = 0;
    double x = 0.0;
    std::uint64_t ensemble_id = 0;
};

/// Bisection on log(lambda) over an automatically expanded bracket. Throws
/// CalibrationError when the bracket would exceed 1000 decades.
CalibratedMultiplier find_lambda_hat(const Utility& u, const PathEnsemble& ens, double x);

/// Estimated vector with per-path influence values (N x dim, row-major) that
/// include the effect of calibrating lambda_hat on the same sample.
struct InfluenceEstimate {
    Vec value;
    std::vector<double> psi;

    std::size_t dim() const { return static_cast<std::size_t>(value.size()); }
    /// sqrt(sum psi^2 / (N (N - 1))) per component.
    Vec se() const;
    InfluenceEstimate operator-(const InfluenceEstimate& o) const;
    InfluenceEstimate operator+(const InfluenceEstimate& o) const;
    InfluenceEstimate scaled(double c) const;
};

/// Euclidean norm of an estimated vector with its delta-method standard error.
struct ScalarEstimate {
    double value = 0.0;
    double se = 0.0;
};
ScalarEstimate norm_estimate(const InfluenceEstimate& e);

/// -(Sigma')^{-1} theta(y) E_N[H J(lambda_hat H)], J(z) = z I'(z).
InfluenceEstimate myopic_feedback(const Utility& u, const QtsmModel& model, const PathEnsemble& ens,
                                  const CalibratedMultiplier& cal, const Vec& y);

/// (Sigma')^{-1} Lambda' E_N[-H L_T (I + J)(lambda_hat H)].
InfluenceEstimate hedging_feedback(const Utility& u, const QtsmModel& model, const PathEnsemble& ens,
                                   const CalibratedMultiplier& cal, const Vec& y);

struct PortfolioDecomposition {
    InfluenceEstimate myopic;
    InfluenceEstimate hedging;
    InfluenceEstimate total;
    CalibratedMultiplier multiplier;
    double T = 0.0;
    double x = 0.0;
    Vec y;
    std::string utility;
    std::uint64_t ensemble_id = 0;
};

/// Calibrates and evaluates both terms at the ensemble's initial factor.
PortfolioDecomposition decompose(const Utility& u, const QtsmModel& model, const PathEnsemble& ens, double x);

/// E_N[H |I1(lambda1 H) - I2(lambda2 H)|] with both multipliers calibrated on `ens`.
ScalarEstimate terminal_wealth_gap(const Utility& u1, const CalibratedMultiplier& c1, const Utility& u2,
                                   const CalibratedMultiplier& c2, const PathEnsemble& ens);
ScalarEstimate terminal_wealth_gap(const Utility& u1, const Utility& u2, const PathEnsemble& ens, double x);

struct DBoundReport {
    double lhs = 0.0;  // |E_N[H (I1 - C I2)(lambda1 H)]|
    double rhs = 0.0;  // K (E_N[H] + lambda1^alpha E_N[H^{1+alpha}])
    double K = 0.0;
    double alpha = 0.0;
    double normalization = 1.0;
    double lambda1 = 0.0;
    std::size_t pointwise_violations = 0;  // paths with |d| > K(1 + z^alpha)
    bool holds = false;
    std::string message;
};

/// Integrated difference bound on the empirical measure. K, alpha and the
/// normalization C come from estimate_diff_bound.
DBoundReport d_bound_check(const Utility& u1, const Utility& u2, const PathEnsemble& ens, double x,
                           const DiffBoundEstimate& bound);

}  // namespace qlab
