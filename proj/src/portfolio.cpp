#include "qlab/portfolio.hpp"

#include <cmath>
#include <sstream>

namespace qlab {

namespace {

void require_functionals(const PathEnsemble& ens) {
    if (!ens.has_functionals || ens.f.H.size() != ens.npaths || ens.npaths == 0)
        throw std::invalid_argument("ensemble carries no state-price functionals");
}

void require_same_ensemble(const CalibratedMultiplier& cal, const PathEnsemble& ens) {
    if (cal.ensemble_id != ens.id)
        throw std::invalid_argument("multiplier was calibrated on a different ensemble");
}

void require_start(const PathEnsemble& ens, const Vec& y) {
    if (y.size() != ens.y0.size() || y != ens.y0)
        throw std::invalid_argument("evaluation point differs from the ensemble's initial factor");
}

double budget(const Utility& u, const std::vector<double>& H, double log_lambda) {
    const double lam = std::exp(log_lambda);
    double s = 0.0;
    for (double h : H) s += h * u.inverse_marginal(lam * h);
    return s / static_cast<double>(H.size());
}

struct PathIJK {
    std::vector<double> I, J, K;
};

PathIJK eval_ijk(const Utility& u, const std::vector<double>& H, double lambda) {
    PathIJK r;
    const std::size_t N = H.size();
    r.I.resize(N);
    r.J.resize(N);
    r.K.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        const double z = lambda * H[i];
        u.inverse_marginal_pair(z, r.I[i], r.J[i]);
        r.K[i] = u.inverse_marginal_curvature(z);
    }
    return r;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

CalibratedMultiplier find_lambda_hat(const Utility& u, const PathEnsemble& ens, double x) {
    require_functionals(ens);
    if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("initial wealth x must be positive");
    const auto& H = ens.f.H;
    const double max_width = 1000.0 * std::log(10.0);
    CalibratedMultiplier out;
    out.x = x;
    out.ensemble_id = ens.id;

    double lo = -std::log(x) - 1.0, hi = -std::log(x) + 1.0;
    double flo = budget(u, H, lo), fhi = budget(u, H, hi);
    while (!(flo >= x && fhi <= x)) {
        if (std::isnan(flo) || std::isnan(fhi)) throw CalibrationError("budget function evaluated to NaN");
        const double w = hi - lo;
        if (2.0 * w > max_width) {
            std::ostringstream os;
            os << "bracket expansion exceeded 1000 decades (budget " << flo << " .. " << fhi << " vs x = " << x << ")";
            throw CalibrationError(os.str());
        }
        if (flo < x) {
            lo -= w;
            flo = budget(u, H, lo);
        }
        if (fhi > x) {
            hi += w;
            fhi = budget(u, H, hi);
        }
        ++out.iterations;
    }
    double best = lo, best_res = std::abs(flo - x);
    if (std::abs(fhi - x) < best_res) {
        best = hi;
        best_res = std::abs(fhi - x);
    }
    for (int it = 0; it < 400 && best_res > 1e-13 * x; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        const double fm = budget(u, H, mid);
        if (std::isnan(fm)) throw CalibrationError("budget function evaluated to NaN");
        ++out.iterations;
        if (std::abs(fm - x) < best_res) {
            best = mid;
            best_res = std::abs(fm - x);
        }
        if (fm > x)
            lo = mid;
        else
            hi = mid;
    }
    out.lambda_hat = std::exp(best);
    out.budget_residual = budget(u, H, std::log(out.lambda_hat)) - x;
    return out;
}

Vec InfluenceEstimate::se() const {
    const std::size_t d = dim();
    const std::size_t N = d ? psi.size() / d : 0;
    Vec s = Vec::Zero(static_cast<Eigen::Index>(d));
    if (N < 2) return Vec::Constant(static_cast<Eigen::Index>(d), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < d; ++k) s[static_cast<Eigen::Index>(k)] += psi[i * d + k] * psi[i * d + k];
    const double n = static_cast<double>(N);
    return (s / (n * (n - 1.0))).cwiseSqrt();
}

InfluenceEstimate InfluenceEstimate::operator-(const InfluenceEstimate& o) const {
    if (o.dim() != dim() || o.psi.size() != psi.size()) throw std::invalid_argument("influence estimates differ in shape");
    InfluenceEstimate r;
    r.value = value - o.value;
    r.psi.resize(psi.size());
    for (std::size_t i = 0; i < psi.size(); ++i) r.psi[i] = psi[i] - o.psi[i];
    return r;
}

InfluenceEstimate InfluenceEstimate::operator+(const InfluenceEstimate& o) const {
    if (o.dim() != dim() || o.psi.size() != psi.size()) throw std::invalid_argument("influence estimates differ in shape");
    InfluenceEstimate r;
    r.value = value + o.value;
    r.psi.resize(psi.size());
    for (std::size_t i = 0; i < psi.size(); ++i) r.psi[i] = psi[i] + o.psi[i];
    return r;
}

InfluenceEstimate InfluenceEstimate::scaled(double c) const {
    InfluenceEstimate r;
    r.value = c * value;
    r.psi.resize(psi.size());
    for (std::size_t i = 0; i < psi.size(); ++i) r.psi[i] = c * psi[i];
    return r;
}

ScalarEstimate norm_estimate(const InfluenceEstimate& e) {
    ScalarEstimate s;
    const std::size_t d = e.dim();
    const std::size_t N = d ? e.psi.size() / d : 0;
    s.value = e.value.norm();
    if (s.value == 0.0) {
        s.se = e.se().norm();
        return s;
    }
    const Vec u = e.value / s.value;
    double ss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double p = 0.0;
        for (std::size_t k = 0; k < d; ++k) p += u[static_cast<Eigen::Index>(k)] * e.psi[i * d + k];
        ss += p * p;
    }
    const double n = static_cast<double>(N);
    s.se = N > 1 ? std::sqrt(ss / (n * (n - 1.0))) : std::numeric_limits<double>::infinity();
    return s;
}

InfluenceEstimate myopic_feedback(const Utility& u, const QtsmModel& model, const PathEnsemble& ens,
                                  const CalibratedMultiplier& cal, const Vec& y) {
    require_functionals(ens);
    require_same_ensemble(cal, ens);
    require_start(ens, y);
    if (model.sigma_t_inv().size() == 0) throw ModelError("Sigma", "singular");
    const auto& H = ens.f.H;
    const std::size_t N = H.size();
    const auto ijk = eval_ijk(u, H, cal.lambda_hat);
    std::vector<double> g(N), f(N), dg(N), df(N);
    for (std::size_t i = 0; i < N; ++i) {
        g[i] = H[i] * ijk.J[i];
        dg[i] = H[i] * ijk.K[i];
        f[i] = H[i] * ijk.I[i];
        df[i] = H[i] * ijk.J[i];
    }
    const double gbar = mean(g), fbar = mean(f);
    const double mdf = mean(df);
    const double D = mdf != 0.0 ? mean(dg) / mdf : 0.0;
    const Vec v = -model.sigma_t_inv() * model.theta(y);
    const std::size_t n = static_cast<std::size_t>(v.size());
    InfluenceEstimate out;
    out.value = v * gbar;
    out.psi.resize(N * n);
    for (std::size_t i = 0; i < N; ++i) {
        const double p = (g[i] - gbar) - D * (f[i] - fbar);
        for (std::size_t k = 0; k < n; ++k) out.psi[i * n + k] = v[static_cast<Eigen::Index>(k)] * p;
    }
    return out;
}

InfluenceEstimate hedging_feedback(const Utility& u, const QtsmModel& model, const PathEnsemble& ens,
                                   const CalibratedMultiplier& cal, const Vec& y) {
    require_functionals(ens);
    require_same_ensemble(cal, ens);
    if (model.sigma_t_inv().size() == 0) throw ModelError("Sigma", "singular");
    require_start(ens, y);
    const auto& H = ens.f.H;
    const std::size_t N = H.size();
    const int m = ens.m;
    const std::size_t n = static_cast<std::size_t>(model.n());
    const Mat M = model.sigma_t_inv() * model.Lambda().transpose();
    const auto ijk = eval_ijk(u, H, cal.lambda_hat);

    std::vector<double> w(N * n), dw_sum(n, 0.0), f(N);
    Vec hv(m), dv(m);
    double df_sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double c = -H[i] * (ijk.I[i] + ijk.J[i]);
        const double dc = -H[i] * (ijk.J[i] + ijk.K[i]);
        for (int k = 0; k < m; ++k) {
            const double L = ens.f.L_at(i, k, m);
            hv[k] = c * L;
            dv[k] = dc * L;
        }
        const Vec wi = M * hv;
        const Vec di = M * dv;
        for (std::size_t k = 0; k < n; ++k) {
            w[i * n + k] = wi[static_cast<Eigen::Index>(k)];
            dw_sum[k] += di[static_cast<Eigen::Index>(k)];
        }
        f[i] = H[i] * ijk.I[i];
        df_sum += H[i] * ijk.J[i];
    }
    const double fbar = mean(f);
    InfluenceEstimate out;
    out.value = Vec::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < n; ++k) out.value[static_cast<Eigen::Index>(k)] += w[i * n + k];
    out.value /= static_cast<double>(N);
    out.psi.resize(N * n);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double D = df_sum != 0.0 ? dw_sum[k] / df_sum : 0.0;
            out.psi[i * n + k] = (w[i * n + k] - out.value[static_cast<Eigen::Index>(k)]) - D * (f[i] - fbar);
        }
    return out;
}

PortfolioDecomposition decompose(const Utility& u, const QtsmModel& model, const PathEnsemble& ens, double x) {
    PortfolioDecomposition d;
    d.multiplier = find_lambda_hat(u, ens, x);
    d.myopic = myopic_feedback(u, model, ens, d.multiplier, ens.y0);
    d.hedging = hedging_feedback(u, model, ens, d.multiplier, ens.y0);
    d.total = d.myopic + d.hedging;
    d.T = ens.grid.T;
    d.x = x;
    d.y = ens.y0;
    d.utility = u.describe();
    d.ensemble_id = ens.id;
    return d;
}

ScalarEstimate terminal_wealth_gap(const Utility& u1, const CalibratedMultiplier& c1, const Utility& u2,
                                   const CalibratedMultiplier& c2, const PathEnsemble& ens) {
    require_functionals(ens);
    require_same_ensemble(c1, ens);
    require_same_ensemble(c2, ens);
    const auto& H = ens.f.H;
    const std::size_t N = H.size();
    std::vector<double> g(N), f1(N), f2(N);
    double s1 = 0.0, s2 = 0.0, j1 = 0.0, j2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double I1, J1, I2, J2;
        u1.inverse_marginal_pair(c1.lambda_hat * H[i], I1, J1);
        u2.inverse_marginal_pair(c2.lambda_hat * H[i], I2, J2);
        const double d = I1 - I2;
        const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        g[i] = H[i] * std::abs(d);
        f1[i] = H[i] * I1;
        f2[i] = H[i] * I2;
        s1 += sg * H[i] * J1;
        s2 -= sg * H[i] * J2;
        j1 += H[i] * J1;
        j2 += H[i] * J2;
    }
    const double gbar = mean(g), f1bar = mean(f1), f2bar = mean(f2);
    const double D1 = j1 != 0.0 ? s1 / j1 : 0.0;
    const double D2 = j2 != 0.0 ? s2 / j2 : 0.0;
    double ss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double p = (g[i] - gbar) - D1 * (f1[i] - f1bar) - D2 * (f2[i] - f2bar);
        ss += p * p;
    }
    const double n = static_cast<double>(N);
    return {gbar, N > 1 ? std::sqrt(ss / (n * (n - 1.0))) : std::numeric_limits<double>::infinity()};
}

ScalarEstimate terminal_wealth_gap(const Utility& u1, const Utility& u2, const PathEnsemble& ens, double x) {
    const auto c1 = find_lambda_hat(u1, ens, x);
    const auto c2 = find_lambda_hat(u2, ens, x);
    return terminal_wealth_gap(u1, c1, u2, c2, ens);
}

DBoundReport d_bound_check(const Utility& u1, const Utility& u2, const PathEnsemble& ens, double x,
                           const DiffBoundEstimate& bound) {
    require_functionals(ens);
    DBoundReport r;
    r.K = bound.K;
    r.alpha = bound.alpha;
    r.normalization = bound.normalization;
    const auto c1 = find_lambda_hat(u1, ens, x);
    r.lambda1 = c1.lambda_hat;
    const auto& H = ens.f.H;
    const std::size_t N = H.size();
    double sd = 0.0, sh = 0.0, sha = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double z = c1.lambda_hat * H[i];
        const double d = u1.inverse_marginal(z) - bound.normalization * u2.inverse_marginal(z);
        sd += H[i] * d;
        sh += H[i];
        sha += std::pow(H[i], 1.0 + bound.alpha);
        if (std::abs(d) > bound.K * (1.0 + std::pow(z, bound.alpha)) * (1.0 + 1e-12)) ++r.pointwise_violations;
    }
    const double n = static_cast<double>(N);
    r.lhs = std::abs(sd / n);
    r.rhs = bound.K * (sh / n + std::pow(c1.lambda_hat, bound.alpha) * sha / n);
    r.holds = r.lhs <= r.rhs * (1.0 + 1e-12);
    std::ostringstream os;
    os.precision(6);
    os << "|E[H d]| = " << r.lhs << (r.holds ? " <= " : " > ") << r.rhs << " = K(E[H] + lambda^alpha E[H^(1+alpha)])"
       << " with K = " << r.K << ", alpha = " << r.alpha << ", lambda = " << r.lambda1;
    if (r.pointwise_violations) os << "; pointwise violations on " << r.pointwise_violations << " paths";
    r.message = os.str();
    return r;
}

}  // namespace qlab
