#include "qlab/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace qlab {

void RiccatiSpec::check() const {
    const Eigen::Index m = lin.rows();
    if (lin.cols() != m || quad.rows() != m || quad.cols() != m || src.rows() != m || src.cols() != m)
        throw std::invalid_argument("RiccatiSpec: inconsistent dimensions");
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("RiccatiSpec: bad horizon");
    if ((src - src.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, src.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("RiccatiSpec: source term must be symmetric");
    if (min_sym_eigenvalue(src) < -1e-12 * std::max(1.0, src.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("RiccatiSpec: source term must be positive semidefinite");
}

Mat riccati_rhs(const RiccatiSpec& spec, const Mat& C) {
    Mat F = spec.lin.transpose() * C + C * spec.lin - C * spec.quad * C + spec.src;
    return symmetrize(F);
}

namespace {

std::size_t step_count(double horizon, const RiccatiOptions& opts) {
    if (horizon == 0.0) return 0;
    return std::max<std::size_t>(opts.min_steps, static_cast<std::size_t>(std::ceil(opts.steps_per_unit * horizon - 1e-9)));
}

struct CompanionState {
    Vec beta;
    double alpha = 0.0;
};

CompanionState companion_rhs(const RiccatiSpec& spec, const CompanionSpec& comp, const Mat& C, const Vec& beta) {
    CompanionState d;
    d.beta = (spec.lin - spec.quad * C).transpose() * beta + C * comp.drift + comp.src_lin;
    d.alpha = 0.5 * (comp.diffusion * C).trace() - 0.5 * beta.dot(spec.quad * beta) + comp.drift.dot(beta) + comp.src0;
    return d;
}

}  // namespace

RiccatiSolution solve_terminal_riccati(const RiccatiSpec& spec, const RiccatiOptions& opts) {
    spec.check();
    const Eigen::Index m = spec.lin.rows();
    const std::size_t N = step_count(spec.horizon, opts);
    RiccatiSolution sol;
    sol.meta.method = "rk4-fixed";
    sol.meta.steps = N;
    sol.tgrid.resize(N + 1);
    sol.Cpath.assign(N + 1, Mat::Zero(m, m));
    const double h = N ? spec.horizon / double(N) : 0.0;
    for (std::size_t k = 0; k <= N; ++k) sol.tgrid[k] = double(k) * h;
    sol.tgrid[N] = spec.horizon;

    double min_eig = 0.0;
    Mat C = Mat::Zero(m, m);
    for (std::size_t k = N; k-- > 0;) {
        const Mat k1 = riccati_rhs(spec, C);
        const Mat k2 = riccati_rhs(spec, C + 0.5 * h * k1);
        const Mat k3 = riccati_rhs(spec, C + 0.5 * h * k2);
        const Mat k4 = riccati_rhs(spec, C + h * k3);
        C = symmetrize(C + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        if (!C.allFinite()) {
            std::ostringstream os;
            os << "Riccati solution became non-finite at t=" << sol.tgrid[k] << " (horizon " << spec.horizon
               << ", step " << h << ")";
            throw RiccatiError(os.str());
        }
        const double e = min_sym_eigenvalue(C);
        min_eig = std::min(min_eig, e);
        if (e < -opts.psd_tol * std::max(1.0, C.cwiseAbs().maxCoeff())) {
            std::ostringstream os;
            os << "Riccati solution left the PSD cone at t=" << sol.tgrid[k] << " (min eigenvalue " << e << ")";
            throw RiccatiError(os.str());
        }
        sol.Cpath[k] = C;
    }
    sol.meta.min_eigenvalue = min_eig;
    return sol;
}

Mat RiccatiSolution::C_at(const RiccatiSpec& spec, double t) const {
    if (tgrid.size() == 1) return Cpath.front();
    const double T = tgrid.back();
    t = std::clamp(t, 0.0, T);
    const std::size_t N = tgrid.size() - 1;
    const double h = T / double(N);
    std::size_t k = std::min<std::size_t>(N - 1, static_cast<std::size_t>(t / h));
    // s measured in backward time from node k+1 toward node k.
    const double s = std::clamp((tgrid[k + 1] - t) / h, 0.0, 1.0);
    const Mat& c1 = Cpath[k + 1];
    const Mat& c0 = Cpath[k];
    const Mat f1 = riccati_rhs(spec, c1);
    const Mat f0 = riccati_rhs(spec, c0);
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * c1 + (s3 - 2 * s2 + s) * h * f1 + (-2 * s3 + 3 * s2) * c0 + (s3 - s2) * h * f0;
}

Vec RiccatiSolution::beta_at(double t) const {
    if (tgrid.size() == 1) return betapath.front();
    const double T = tgrid.back();
    t = std::clamp(t, 0.0, T);
    const std::size_t N = tgrid.size() - 1;
    const double h = T / double(N);
    std::size_t k = std::min<std::size_t>(N - 1, static_cast<std::size_t>(t / h));
    const double w = std::clamp((t - tgrid[k]) / h, 0.0, 1.0);
    return (1.0 - w) * betapath[k] + w * betapath[k + 1];
}

void solve_companion_linear(const RiccatiSpec& spec, const CompanionSpec& comp, RiccatiSolution& sol) {
    const Eigen::Index m = spec.lin.rows();
    if (comp.drift.size() != m || comp.src_lin.size() != m || comp.diffusion.rows() != m || comp.diffusion.cols() != m)
        throw std::invalid_argument("solve_companion_linear: coefficient dimensions do not match the Riccati system");
    if (sol.tgrid.empty() || sol.Cpath.size() != sol.tgrid.size())
        throw std::invalid_argument("solve_companion_linear: C path does not match its grid");
    if (std::abs(sol.tgrid.back() - spec.horizon) > 1e-12 * std::max(1.0, spec.horizon))
        throw std::invalid_argument("solve_companion_linear: grid horizon differs from the Riccati specification");
    const std::size_t N = sol.tgrid.size() - 1;
    sol.betapath.assign(N + 1, Vec::Zero(m));
    sol.scalarpath.assign(N + 1, 0.0);
    if (N == 0) return;
    const double h = spec.horizon / double(N);

    Vec beta = Vec::Zero(m);
    double alpha = 0.0;
    Mat f_next = riccati_rhs(spec, sol.Cpath[N]);
    for (std::size_t k = N; k-- > 0;) {
        const Mat& c_start = sol.Cpath[k + 1];
        const Mat& c_end = sol.Cpath[k];
        const Mat f_end = riccati_rhs(spec, c_end);
        const Mat c_mid = 0.5 * (c_start + c_end) + (h / 8.0) * (f_next - f_end);
        const auto k1 = companion_rhs(spec, comp, c_start, beta);
        const auto k2 = companion_rhs(spec, comp, c_mid, beta + 0.5 * h * k1.beta);
        const auto k3 = companion_rhs(spec, comp, c_mid, beta + 0.5 * h * k2.beta);
        const auto k4 = companion_rhs(spec, comp, c_end, beta + h * k3.beta);
        beta += (h / 6.0) * (k1.beta + 2.0 * k2.beta + 2.0 * k3.beta + k4.beta);
        alpha += (h / 6.0) * (k1.alpha + 2.0 * k2.alpha + 2.0 * k3.alpha + k4.alpha);
        if (!beta.allFinite() || !std::isfinite(alpha))
            throw RiccatiError("companion linear system became non-finite");
        sol.betapath[k] = beta;
        sol.scalarpath[k] = alpha;
        f_next = f_end;
    }
}

RiccatiSolution solve_riccati_system(const RiccatiSpec& spec, const CompanionSpec& comp, const RiccatiOptions& opts) {
    auto sol = solve_terminal_riccati(spec, opts);
    solve_companion_linear(spec, comp, sol);
    return sol;
}

AdaptiveResult solve_terminal_riccati_adaptive(const RiccatiSpec& spec, double rtol, double atol) {
    spec.check();
    const Eigen::Index m = spec.lin.rows();
    // Dormand-Prince 5(4) tableau.
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    AdaptiveResult res;
    res.meta.method = "dopri54";
    Mat C = Mat::Zero(m, m);
    double tau = 0.0;
    const double T = spec.horizon;
    double h = std::min(1e-3, std::max(T, 1e-12));
    Mat k1 = riccati_rhs(spec, C);
    while (tau < T) {
        if (tau + h > T) h = T - tau;
        if (h < 1e-14 * std::max(1.0, T)) throw RiccatiError("adaptive Riccati solver: step size underflow (stiffness?)");
        const Mat k2 = riccati_rhs(spec, C + h * (a21 * k1));
        const Mat k3 = riccati_rhs(spec, C + h * (a31 * k1 + a32 * k2));
        const Mat k4 = riccati_rhs(spec, C + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Mat k5 = riccati_rhs(spec, C + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Mat k6 = riccati_rhs(spec, C + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Mat C5 = C + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Mat k7 = riccati_rhs(spec, C5);
        const Mat err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double en = 0.0;
        for (Eigen::Index i = 0; i < err.size(); ++i) {
            const double sc = atol + rtol * std::max(std::abs(C(i)), std::abs(C5(i)));
            en = std::max(en, std::abs(err(i)) / sc);
        }
        if (!std::isfinite(en)) throw RiccatiError("adaptive Riccati solver: non-finite error estimate");
        if (en <= 1.0) {
            tau += h;
            C = symmetrize(C5);
            k1 = k7;
            ++res.meta.steps;
        } else {
            ++res.meta.rejected;
        }
        const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
        h *= fac;
    }
    res.meta.min_eigenvalue = min_sym_eigenvalue(C);
    res.C0 = C;
    return res;
}

double loewner_monotonicity_margin(const RiccatiSolution& sol, std::size_t npoints) {
    const std::size_t N = sol.Cpath.size();
    if (N < 2 || npoints < 2) return 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < npoints; ++i) idx.push_back((i * (N - 1)) / (npoints - 1));
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < idx.size(); ++i)
        worst = std::min(worst, min_sym_eigenvalue(sol.Cpath[idx[i]] - sol.Cpath[idx[i + 1]]));
    return worst;
}

AreLimit are_limit(const RiccatiSpec& spec_in, const CompanionSpec& comp, const AreOptions& opts) {
    RiccatiSpec spec = spec_in;
    spec.horizon = 0.0;
    spec.check();
    const Eigen::Index m = spec.lin.rows();
    const double h = 1.0 / opts.steps_per_unit;
    AreLimit out;
    Mat C = Mat::Zero(m, m);
    double tau = 0.0;
    const std::size_t per_unit = static_cast<std::size_t>(std::llround(opts.steps_per_unit));
    for (std::size_t step = 0;; ++step) {
        const Mat k1 = riccati_rhs(spec, C);
        const double dn = k1.cwiseAbs().maxCoeff();
        if (step % per_unit == 0) out.residual_trace.push_back(dn);
        if (dn < opts.derivative_tol) {
            out.converged = true;
            break;
        }
        if (tau >= opts.horizon_cap) break;
        const Mat k2 = riccati_rhs(spec, C + 0.5 * h * k1);
        const Mat k3 = riccati_rhs(spec, C + 0.5 * h * k2);
        const Mat k4 = riccati_rhs(spec, C + h * k3);
        C = symmetrize(C + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        tau += h;
        if (!C.allFinite()) throw RiccatiError("are_limit: Riccati flow diverged");
    }
    out.horizon_used = tau;
    out.Cinf = C;
    out.residual = riccati_rhs(spec, C).cwiseAbs().maxCoeff();
    const Mat closed = spec.lin - spec.quad * C;
    out.closed_loop_max_realpart = is_stable(closed).max_real_part;
    if (!out.converged) {
        std::ostringstream os;
        os << "are_limit: no convergence within horizon cap " << opts.horizon_cap << "; residual trace:";
        const std::size_t stride = std::max<std::size_t>(1, out.residual_trace.size() / 10);
        for (std::size_t i = 0; i < out.residual_trace.size(); i += stride) os << ' ' << out.residual_trace[i];
        throw RiccatiError(os.str());
    }
    if (comp.drift.size() == m && comp.src_lin.size() == m) {
        const Mat M = closed.transpose();
        const Vec rhs = -(C * comp.drift + comp.src_lin);
        out.betainf = M.fullPivLu().solve(rhs);
        out.beta_residual = (M * out.betainf - rhs).cwiseAbs().maxCoeff();
    } else {
        out.betainf = Vec::Zero(m);
    }
    return out;
}

std::string riccati_csv(const RiccatiSolution& sol) {
    std::ostringstream os;
    os << std::setprecision(17);
    const Eigen::Index m = sol.Cpath.empty() ? 0 : sol.Cpath.front().rows();
    os << 't';
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) os << ",C" << i << j;
    for (Eigen::Index i = 0; i < m; ++i) os << ",beta" << i;
    os << ",scalar\n";
    for (std::size_t k = 0; k < sol.tgrid.size(); ++k) {
        os << sol.tgrid[k];
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) os << ',' << sol.Cpath[k](i, j);
        for (Eigen::Index i = 0; i < m; ++i) os << ',' << (sol.betapath.empty() ? 0.0 : sol.betapath[k][i]);
        os << ',' << (sol.scalarpath.empty() ? 0.0 : sol.scalarpath[k]) << '\n';
    }
    return os.str();
}

}  // namespace qlab
