#pragma once

#include "qlab/linalg.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace qlab {

class RiccatiError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Terminal-value matrix Riccati equation on [0, T] with C(T) = 0,
///   -dC/dt = lin' C + C lin - C quad C + src.
/// Integration runs in backward time tau = T - t.
struct RiccatiSpec {
    Mat quad;
    Mat lin;
    Mat src;
    double horizon = 1.0;

    void check() const;
};

/// Companion linear system driven by a Riccati path,
///   -dbeta/dt  = (lin - quad C)' beta + C drift + src_lin,
///   -dalpha/dt = tr(diffusion C)/2 - beta' quad beta / 2 + drift' beta + src0,
/// with zero terminal values. `diffusion` is Lambda Lambda' and equals `quad`
/// except in the CRRA value-function system.
struct CompanionSpec {
    Vec drift;
    Vec src_lin;
    double src0 = 0.0;
    Mat diffusion;
};

struct SolverMeta {
    std::size_t steps = 0;
    std::size_t rejected = 0;
    double min_eigenvalue = 0.0;
    std::string method;
};

/// Time-gridded solution; index k corresponds to tgrid[k] (ascending in t).
struct RiccatiSolution {
    std::vector<double> tgrid;
    std::vector<Mat> Cpath;
    std::vector<Vec> betapath;
    std::vector<double> scalarpath;
    SolverMeta meta;

    double horizon() const { return tgrid.empty() ? 0.0 : tgrid.back(); }
    const Mat& C0() const { return Cpath.front(); }
    const Vec& beta0() const { return betapath.front(); }
    double scalar0() const { return scalarpath.front(); }

    /// Cubic Hermite interpolation of C at time t using the ODE right-hand side.
    Mat C_at(const RiccatiSpec& spec, double t) const;
    /// Linear interpolation of beta at time t.
    Vec beta_at(double t) const;
};

struct RiccatiOptions {
    double steps_per_unit = 2000.0;
    std::size_t min_steps = 16;
    double psd_tol = 1e-9;
};

/// Right-hand side in backward time: dC/dtau = lin'C + C lin - C quad C + src (symmetrized).
Mat riccati_rhs(const RiccatiSpec& spec, const Mat& C);

/// Classical RK4 in backward time on a uniform grid. Throws RiccatiError on
/// non-finite values or when a node leaves the PSD cone beyond tolerance.
RiccatiSolution solve_terminal_riccati(const RiccatiSpec& spec, const RiccatiOptions& opts = {});

/// Dormand-Prince 5(4) with step control; returns C(0) only.
struct AdaptiveResult {
    Mat C0;
    SolverMeta meta;
};
AdaptiveResult solve_terminal_riccati_adaptive(const RiccatiSpec& spec, double rtol = 1e-12, double atol = 1e-14);

/// Fills betapath/scalarpath of `sol` by RK4 on the same grid, using Hermite
/// interpolated C at stage midpoints.
void solve_companion_linear(const RiccatiSpec& spec, const CompanionSpec& comp, RiccatiSolution& sol);

/// Both steps at once.
RiccatiSolution solve_riccati_system(const RiccatiSpec& spec, const CompanionSpec& comp,
                                     const RiccatiOptions& opts = {});

/// Loewner monotonicity on `npoints` evenly spaced nodes:
/// t1 <= t2 implies C(t2) <= C(t1). Returns the worst min eigenvalue of
/// C(t1) - C(t2) over consecutive sampled nodes (>= -tol means monotone).
double loewner_monotonicity_margin(const RiccatiSolution& sol, std::size_t npoints = 50);

struct AreLimit {
    Mat Cinf;
    Vec betainf;
    double residual = 0.0;
    double beta_residual = 0.0;
    double closed_loop_max_realpart = 0.0;
    double horizon_used = 0.0;
    bool converged = false;
    std::vector<double> residual_trace;  // ||dC/dtau|| sampled once per unit of tau
};

struct AreOptions {
    double steps_per_unit = 2000.0;
    double derivative_tol = 1e-10;
    double horizon_cap = 500.0;
};

/// Long-horizon limit of the Riccati flow with its companion vector:
/// integrates backward until ||dC/dtau||_inf < tol, then solves
/// (lin - quad Cinf)' betainf + Cinf drift + src_lin = 0.
/// Throws RiccatiError (with the residual trace) if the cap is reached.
AreLimit are_limit(const RiccatiSpec& spec, const CompanionSpec& comp, const AreOptions& opts = {});

/// Writes "t,C_ij...,beta_i...,scalar" rows with 17 significant digits.
std::string riccati_csv(const RiccatiSolution& sol);

}  // namespace qlab
