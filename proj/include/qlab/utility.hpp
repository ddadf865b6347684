#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qlab {

/// U(x) = x^p / p with p < 1, p != 0.
struct PowerUtility {
    double p = -1.0;
};

/// U(x) = log x.
struct LogUtility {};

/// Sup-convolution of n CRRA investors with Pareto weights beta_i; the
/// inverse marginal is I(z) = sum_i (z / beta_i)^(q_i - 1).
struct ParetoCollective {
    std::vector<double> weights;    // beta_i > 0, sum 1
    std::vector<double> exponents;  // p_1 < ... < p_n <= 0
};

/// Linear sharing: U(x) = sum_i beta_i U_i(alpha_i x) = sum_i w_i x^p_i / p_i
/// with w_i = beta_i alpha_i^p_i (log for p_i = 0).
struct LinearSharing {
    std::vector<double> proportions;  // alpha_i > 0, sum 1 (empty when built from weights)
    std::vector<double> weights;      // beta_i > 0, sum 1 (empty when built from weights)
    std::vector<double> exponents;    // p_1 < ... < p_n <= 0
    std::vector<double> w;            // effective weights beta_i alpha_i^p_i
};

using UtilityVariant = std::variant<PowerUtility, LogUtility, ParetoCollective, LinearSharing>;

enum class UtilityKind { Power, Log, Pareto, LinearSharing };

/// A utility function with its marginal, inverse marginal and risk tolerance.
///
/// Besides I = (U')^{-1} the class exposes J(z) = z I'(z) = -ART(I(z)) and
/// K(z) = z J'(z), which are what the duality formulas and their sensitivity
/// to the multiplier need. A positive scale c represents c * U; scaling
/// leaves the optimal strategy unchanged and maps I(z) to I(z / c).
class Utility {
public:
    static Utility power(double p);
    static Utility log();
    static Utility pareto(std::vector<double> weights, std::vector<double> exponents);
    static Utility linear_sharing(std::vector<double> proportions, std::vector<double> weights,
                                  std::vector<double> exponents);
    /// Linear sharing specified directly through its effective weights w_i > 0.
    static Utility linear_sharing_from_weights(std::vector<double> w, std::vector<double> exponents);

    Utility scaled(double c) const;

    UtilityKind kind() const;
    const UtilityVariant& variant() const { return v_; }
    double scale() const { return scale_; }
    std::string describe() const;

    /// Exponents p_i of the CRRA building blocks (a single entry for Power/Log).
    std::vector<double> exponents() const;

    double value(double x) const;
    double marginal(double x) const;
    double inverse_marginal(double z) const;
    /// J(z) = z I'(z).
    double inverse_marginal_derivative_weighted(double z) const;
    /// K(z) = z J'(z).
    double inverse_marginal_curvature(double z) const;
    double risk_tolerance(double x) const;

    /// Evaluates I(z) and J(z) together (shares the root solve for linear sharing).
    void inverse_marginal_pair(double z, double& i_out, double& j_out) const;

    bool same_as(const Utility& other) const;

private:
    Utility(UtilityVariant v, double scale) : v_(std::move(v)), scale_(scale) {}
    UtilityVariant v_;
    double scale_ = 1.0;
};

/// q = p / (p - 1); 0 for log.
double crra_q(double p);

/// Reference (Power/Log) exponent p of a utility, or nullopt for collectives.
std::optional<double> reference_exponent(const Utility& u);

struct DiffBoundEstimate {
    double alpha = 0.0;
    double K = 0.0;
    double normalization = 1.0;  // C in |I1 - C I2| <= K(1 + z^alpha)
    std::vector<double> zgrid;
    double max_violation = 0.0;  // max over grid of (lhs - K(1 + z^alpha)), <= 0
    bool alpha_from_theory = false;
    /// Ratio of sup_z |lhs|/(1+z^alpha) over the outermost decade to that over
    /// the next decade inward, worst edge. A bounded ratio levels off (growth
    /// near 1); a wrong alpha shows power-law growth. Feasible iff <= 1.05.
    double edge_growth = 1.0;
    bool feasible = true;
    std::string diagnostic;
};

/// 200 log-spaced points on [1e-6, 1e6].
std::vector<double> default_zgrid(std::size_t points = 200, double lo = 1e-6, double hi = 1e6);

/// Admissible interval (lo, 1) for the linear sharing exponent factor beta.
std::pair<double, double> linear_sharing_beta_range(const Utility& u);

/// Grid estimate of the smallest K with |I1 - C I2| and |zI1' - C zI2'| both
/// below K(1 + z^alpha). u2 must be Power or Log. alpha comes from theory for
/// identical utilities, Pareto collectives and linear sharing (using
/// `sharing_beta`, default mid-interval), else from `alpha_override`.
DiffBoundEstimate estimate_diff_bound(const Utility& u1, const Utility& u2, std::span<const double> zgrid,
                                      std::optional<double> alpha_override = std::nullopt,
                                      std::optional<double> sharing_beta = std::nullopt);

}  // namespace qlab
