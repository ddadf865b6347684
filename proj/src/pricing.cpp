#include "qlab/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qlab {

RiccatiSpec bond_riccati_spec(const QtsmModel& model, double T) {
    RiccatiSpec s;
    s.quad = model.diffusion();
    s.lin = model.B() - model.Lambda() * model.A();
    s.src = model.R2();
    s.horizon = T;
    return s;
}

CompanionSpec bond_companion(const QtsmModel& model) {
    CompanionSpec c;
    c.drift = model.b() - model.Lambda() * model.a();
    c.src_lin = model.r1();
    c.src0 = model.r0();
    c.diffusion = model.diffusion();
    return c;
}

RiccatiSpec crra_riccati_spec(const QtsmModel& model, double p, double T) {
    if (!(p < 1.0)) throw std::domain_error("CRRA exponent p must be below 1");
    const double q = p / (p - 1.0);
    RiccatiSpec s;
    s.quad = model.diffusion() / (1.0 - p);
    s.lin = model.B() - q * model.Lambda() * model.A();
    s.src = symmetrize(q * model.A().transpose() * model.A() - p * model.R2());
    s.horizon = T;
    return s;
}

CompanionSpec crra_companion(const QtsmModel& model, double p) {
    const double q = p / (p - 1.0);
    CompanionSpec c;
    c.drift = model.b() - q * model.Lambda() * model.a();
    c.src_lin = q * model.A().transpose() * model.a() - p * model.r1();
    c.src0 = 0.5 * q * model.a().squaredNorm() - p * model.r0();
    c.diffusion = model.diffusion();
    return c;
}

RiccatiSpec gamma_riccati_spec(const QtsmModel& model, double gamma, double T) {
    RiccatiSpec s;
    s.quad = model.diffusion();
    s.lin = model.B() - gamma * model.Lambda() * model.A();
    s.src = symmetrize(gamma * (1.0 - gamma) * model.A().transpose() * model.A() + gamma * model.R2());
    s.horizon = T;
    return s;
}

CompanionSpec gamma_companion(const QtsmModel& model, double gamma) {
    CompanionSpec c;
    c.drift = model.b() - gamma * model.Lambda() * model.a();
    c.src_lin = gamma * (1.0 - gamma) * model.A().transpose() * model.a() + gamma * model.r1();
    c.src0 = gamma * model.r0() + 0.5 * gamma * (1.0 - gamma) * model.a().squaredNorm();
    c.diffusion = model.diffusion();
    return c;
}

namespace {

void check_horizon(double T) {
    if (!(T >= 0.0) || !std::isfinite(T)) throw std::domain_error("horizon must be finite and nonnegative");
}

void check_gamma(double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        std::ostringstream os;
        os << "gamma = " << gamma << " outside [0, 1]";
        throw std::domain_error(os.str());
    }
}

double exp_quadratic(double alpha, const Vec& beta, const Mat& C, const Vec& y) {
    return std::exp(-alpha - beta.dot(y) - 0.5 * y.dot(C * y));
}

}  // namespace

double bond_price(const QtsmModel& model, double T, const Vec& y, const RiccatiOptions& opts) {
    check_horizon(T);
    if (y.size() != model.m()) throw ModelError("y", "dimension mismatch");
    const auto sol = solve_riccati_system(bond_riccati_spec(model, T), bond_companion(model), opts);
    return exp_quadratic(sol.scalar0(), sol.beta0(), sol.C0(), y);
}

double BondCurve::price(std::size_t i, const Vec& y) const { return exp_quadratic(alpha0.at(i), beta0.at(i), C0.at(i), y); }

BondCurve bond_curve(const QtsmModel& model, const std::vector<double>& horizons, const RiccatiOptions& opts) {
    BondCurve curve;
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        check_horizon(horizons[i]);
        if (i && !(horizons[i] > horizons[i - 1])) throw std::invalid_argument("bond_curve: horizons must ascend");
        const auto sol = solve_riccati_system(bond_riccati_spec(model, horizons[i]), bond_companion(model), opts);
        curve.horizons.push_back(horizons[i]);
        curve.alpha0.push_back(sol.scalar0());
        curve.beta0.push_back(sol.beta0());
        curve.C0.push_back(sol.C0());
    }
    return curve;
}

double eh_gamma_closed_form(const QtsmModel& model, double gamma, double T, const Vec& y, const RiccatiOptions& opts) {
    check_gamma(gamma);
    check_horizon(T);
    if (gamma == 0.0 || T == 0.0) return 1.0;
    if (gamma == 1.0) return bond_price(model, T, y, opts);
    const double p = gamma / (gamma - 1.0);
    const auto sol = solve_riccati_system(crra_riccati_spec(model, p, T), crra_companion(model, p), opts);
    const double v = 0.5 * y.dot(sol.C0() * y) + sol.beta0().dot(y) + sol.scalar0();
    return std::exp(-v / (1.0 - p));
}

double eh_gamma_direct(const QtsmModel& model, double gamma, double T, const Vec& y, const RiccatiOptions& opts) {
    check_gamma(gamma);
    check_horizon(T);
    const auto sol = solve_riccati_system(gamma_riccati_spec(model, gamma, T), gamma_companion(model, gamma), opts);
    return exp_quadratic(sol.scalar0(), sol.beta0(), sol.C0(), y);
}

CrraFeedback crra_feedback(const QtsmModel& model, double p, double t, double T, double x, const Vec& y,
                           const RiccatiOptions& opts) {
    if (!(p <= 0.0)) throw std::domain_error("crra_feedback supports p < 0 and log (p = 0) only");
    if (!(t >= 0.0 && t <= T)) throw std::domain_error("crra_feedback: t must lie in [0, T]");
    if (model.sigma_t_inv().size() == 0) throw ModelError("Sigma", "singular");
    const auto spec = crra_riccati_spec(model, p, T);
    auto sol = solve_riccati_system(spec, crra_companion(model, p), opts);
    const Mat P = sol.C_at(spec, t);
    const Vec q = sol.beta_at(t);
    const double scale = x / (1.0 - p);
    CrraFeedback f;
    f.myopic = scale * model.sigma_t_inv() * model.theta(y);
    f.hedging = -scale * model.sigma_t_inv() * model.Lambda().transpose() * (P * y + q);
    f.total = f.myopic + f.hedging;
    return f;
}

MyopicMeasureCoeffs myopic_measure_coeffs(const QtsmModel& model, double gamma, double T, const RiccatiOptions& opts) {
    check_gamma(gamma);
    check_horizon(T);
    MyopicMeasureCoeffs mc;
    mc.gamma_ = gamma;
    mc.T_ = T;
    mc.a_ = model.a();
    mc.b_ = model.b();
    mc.A_ = model.A();
    mc.B_ = model.B();
    mc.Lambda_ = model.Lambda();
    mc.LLt_ = model.diffusion();
    if (gamma == 0.0) {
        mc.trivial_ = true;
        return mc;
    }
    mc.trivial_ = false;
    if (gamma == 1.0) {
        mc.spec_ = bond_riccati_spec(model, T);
        mc.sol_ = solve_riccati_system(mc.spec_, bond_companion(model), opts);
        mc.c_scale_ = 1.0;
    } else {
        const double p = gamma / (gamma - 1.0);
        mc.spec_ = crra_riccati_spec(model, p, T);
        mc.sol_ = solve_riccati_system(mc.spec_, crra_companion(model, p), opts);
        mc.c_scale_ = 1.0 - gamma;
    }
    return mc;
}

Mat MyopicMeasureCoeffs::C(double t) const {
    if (trivial_) return Mat::Zero(B_.rows(), B_.rows());
    return c_scale_ * sol_.C_at(spec_, t);
}

Vec MyopicMeasureCoeffs::beta(double t) const {
    if (trivial_) return Vec::Zero(B_.rows());
    return c_scale_ * sol_.beta_at(t);
}

Vec MyopicMeasureCoeffs::drift_intercept(double t) const {
    if (trivial_) return b_;
    return b_ - gamma_ * Lambda_ * a_ - LLt_ * beta(t);
}

Mat MyopicMeasureCoeffs::drift_slope(double t) const {
    if (trivial_) return B_;
    return B_ - gamma_ * Lambda_ * A_ - LLt_ * C(t);
}

Vec MyopicMeasureCoeffs::kernel_intercept(double t) const {
    if (trivial_) return Vec::Zero(a_.size());
    return -gamma_ * a_ - Lambda_.transpose() * beta(t);
}

Mat MyopicMeasureCoeffs::kernel_slope(double t) const {
    if (trivial_) return Mat::Zero(A_.rows(), A_.cols());
    return -gamma_ * A_ - Lambda_.transpose() * C(t);
}

DecayDiagnostics bond_decay(const QtsmModel& model, const Vec& y, const std::vector<double>& horizons,
                            const RiccatiOptions& opts) {
    DecayDiagnostics d;
    const auto curve = bond_curve(model, horizons, opts);
    d.horizons = horizons;
    for (std::size_t i = 0; i < horizons.size(); ++i) d.prices.push_back(curve.price(i, y));
    d.strictly_decreasing = true;
    for (std::size_t i = 1; i < d.prices.size(); ++i) {
        if (!(d.prices[i] < d.prices[i - 1])) d.strictly_decreasing = false;
        d.incremental_slopes.push_back(-(std::log(d.prices[i]) - std::log(d.prices[i - 1])) /
                                       (horizons[i] - horizons[i - 1]));
    }
    if (!d.incremental_slopes.empty()) {
        d.final_slope = d.incremental_slopes.back();
        const std::size_t half = d.incremental_slopes.size() / 2;
        const auto first = d.incremental_slopes.begin() + static_cast<std::ptrdiff_t>(half);
        const auto [lo, hi] = std::minmax_element(first, d.incremental_slopes.end());
        d.slope_variation = std::abs(d.final_slope) > 0.0 ? (*hi - *lo) / std::abs(d.final_slope)
                                                           : std::numeric_limits<double>::infinity();
    }
    return d;
}

}  // namespace qlab
