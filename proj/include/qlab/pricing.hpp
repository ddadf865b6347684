#pragma once

#include "qlab/model.hpp"
#include "qlab/riccati.hpp"

#include <stdexcept>
#include <vector>

namespace qlab {

/// Bond system: C, beta, alpha with price exp(-alpha - beta'y - y'Cy/2).
RiccatiSpec bond_riccati_spec(const QtsmModel& model, double T);
CompanionSpec bond_companion(const QtsmModel& model);

/// CRRA value-function system (P, q, k) for U(x) = x^p/p, p < 1.
RiccatiSpec crra_riccati_spec(const QtsmModel& model, double p, double T);
CompanionSpec crra_companion(const QtsmModel& model, double p);

/// Exponential-quadratic system for E[H_T^gamma] = exp(-alpha - beta'y - y'Cy/2),
/// gamma in [0, 1], written directly in gamma.
RiccatiSpec gamma_riccati_spec(const QtsmModel& model, double gamma, double T);
CompanionSpec gamma_companion(const QtsmModel& model, double gamma);

double bond_price(const QtsmModel& model, double T, const Vec& y, const RiccatiOptions& opts = {});

struct BondCurve {
    std::vector<double> horizons;
    std::vector<double> alpha0;
    std::vector<Vec> beta0;
    std::vector<Mat> C0;

    double price(std::size_t i, const Vec& y) const;
};

/// Horizons must be nonnegative and strictly ascending.
BondCurve bond_curve(const QtsmModel& model, const std::vector<double>& horizons, const RiccatiOptions& opts = {});

/// E[H_T^gamma] through the CRRA value function with p = gamma/(gamma-1).
/// gamma = 0 gives 1 and gamma = 1 the bond price. Throws std::domain_error
/// outside [0, 1].
double eh_gamma_closed_form(const QtsmModel& model, double gamma, double T, const Vec& y,
                            const RiccatiOptions& opts = {});

/// Same quantity from the gamma system; an independent route used for cross-checks.
double eh_gamma_direct(const QtsmModel& model, double gamma, double T, const Vec& y, const RiccatiOptions& opts = {});

/// CRRA utility for feedback purposes: p < 0, or p = 0 meaning log.
struct CrraFeedback {
    Vec myopic;
    Vec hedging;
    Vec total;
};

/// Optimal dollar holdings x/(1-p) (Sigma')^{-1}[theta(y) - Lambda'(P(t;T)y + q(t;T))].
CrraFeedback crra_feedback(const QtsmModel& model, double p, double t, double T, double x, const Vec& y,
                           const RiccatiOptions& opts = {});

/// Drift of Y under the gamma-myopic measure, frozen per query time:
///   dY = (intercept(t) + slope(t) Y) dt + Lambda dW^gamma,
/// and the kernel with dW = dW^gamma + (k0(t) + k1(t) Y) dt.
class MyopicMeasureCoeffs {
public:
    double gamma() const { return gamma_; }
    double horizon() const { return T_; }

    Vec drift_intercept(double t) const;
    Mat drift_slope(double t) const;
    Vec kernel_intercept(double t) const;
    Mat kernel_slope(double t) const;

    /// C^gamma(t;T) and beta^gamma(t;T).
    Mat C(double t) const;
    Vec beta(double t) const;

    friend MyopicMeasureCoeffs myopic_measure_coeffs(const QtsmModel&, double, double, const RiccatiOptions&);

private:
    double gamma_ = 0.0;
    double T_ = 0.0;
    Vec a_, b_;
    Mat A_, B_, Lambda_, LLt_;
    RiccatiSpec spec_;
    RiccatiSolution sol_;
    double c_scale_ = 1.0;  // 1 - gamma for the CRRA route, else 1
    bool trivial_ = true;
};

/// gamma = 0: (b, B). gamma = 1: bond (C, beta). Otherwise (1-gamma)(P, q).
MyopicMeasureCoeffs myopic_measure_coeffs(const QtsmModel& model, double gamma, double T,
                                          const RiccatiOptions& opts = {});

struct DecayDiagnostics {
    std::vector<double> horizons;
    std::vector<double> prices;
    std::vector<double> incremental_slopes;  // -d log price / dT between consecutive horizons
    bool strictly_decreasing = false;
    double final_slope = 0.0;
    /// Relative spread of the incremental slope over the last half of the grid.
    double slope_variation = 0.0;
};

DecayDiagnostics bond_decay(const QtsmModel& model, const Vec& y, const std::vector<double>& horizons,
                            const RiccatiOptions& opts = {});

}  // namespace qlab
