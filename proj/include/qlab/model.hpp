#pragma once

#include "qlab/linalg.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlab {

/// Raised for structurally invalid model input; `field()` names the culprit.
class ModelError : public std::invalid_argument {
public:
    ModelError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Raw coefficients of the quadratic term-structure market: m factors, n assets.
///   r(y)     = r0 + r1'y + y'R2 y / 2
///   theta(y) = a + A y
///   dY       = (b + B Y) dt + Lambda dW
///   dS / S   = mu(Y) dt + Sigma dW,   mu = Sigma theta + 1 r
struct QtsmCoefficients {
    double r0 = 0.0;
    Vec r1;
    Mat R2;
    Vec a;
    Mat A;
    Vec b;
    Mat B;
    Mat Lambda;
    Mat Sigma;
};

/// Validated, immutable market model. Construction checks dimensions and
/// symmetrizes R2; economic assumptions are checked separately by validate().
class QtsmModel {
public:
    static QtsmModel create(QtsmCoefficients c);

    int m() const { return static_cast<int>(c_.B.rows()); }
    int n() const { return static_cast<int>(c_.Sigma.rows()); }

    double r0() const { return c_.r0; }
    const Vec& r1() const { return c_.r1; }
    const Mat& R2() const { return c_.R2; }
    const Vec& a() const { return c_.a; }
    const Mat& A() const { return c_.A; }
    const Vec& b() const { return c_.b; }
    const Mat& B() const { return c_.B; }
    const Mat& Lambda() const { return c_.Lambda; }
    const Mat& Sigma() const { return c_.Sigma; }
    const QtsmCoefficients& coefficients() const { return c_; }

    /// (Sigma^T)^{-1}; empty when Sigma is singular.
    const Mat& sigma_t_inv() const { return sigma_t_inv_; }
    /// Lambda Lambda^T.
    const Mat& diffusion() const { return diffusion_; }

    double rate(const Vec& y) const;
    Vec theta(const Vec& y) const;
    Vec mu(const Vec& y) const;

    /// Stable textual digest of all coefficients (17 significant digits).
    std::string fingerprint() const;

private:
    explicit QtsmModel(QtsmCoefficients c);
    QtsmCoefficients c_;
    Mat sigma_t_inv_;
    Mat diffusion_;
};

struct MarketPoint {
    double r = 0.0;
    Vec theta;
    Vec mu;
};

/// Evaluates (r, theta, mu) at y. Non-finite y is rejected.
MarketPoint eval_market(const QtsmModel& model, const Vec& y);

/// Infimum of r over R^m when it is finite and attained: R2 positive definite
/// gives r0 - r1' R2^{-1} r1 / 2; r1 = 0 and R2 = 0 gives r0.
std::optional<double> rate_lower_bound(const QtsmModel& model);

struct AssumptionCheck {
    std::string id;        // "(i)" .. "(iv)"
    std::string name;
    bool pass = false;
    std::string evidence;
};

struct ValidationReport {
    std::vector<AssumptionCheck> checks;
    std::vector<double> gammas;
    std::string note;
    bool pass() const;
    std::string to_string() const;
};

struct ValidationOptions {
    double sigma_condition_cap = 1e12;
    double psd_tol = 1e-10;
    double pd_tol = 1e-10;
};

/// Checks (i) Sigma invertible, (ii) R2 positive semidefinite,
/// (iii) R2 = 0 or gamma(1-gamma)A'A + gamma R2 positive definite for every
/// gamma in `gammas`, (iv) B stable.
ValidationReport validate(const QtsmModel& model, const std::vector<double>& gammas,
                          const ValidationOptions& opts = {});

}  // namespace qlab
