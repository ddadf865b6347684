#pragma once

#include "qlab/model.hpp"
#include "qlab/pricing.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace qlab {

struct SimGrid {
    double T = 1.0;
    std::size_t nsteps = 2;

    double dt() const { return T / static_cast<double>(nsteps); }
    /// Throws std::invalid_argument unless T > 0 and nsteps >= 2.
    static SimGrid make(double T, std::size_t nsteps);
    /// nsteps = round(T * steps_per_unit), at least 2.
    static SimGrid per_unit(double T, double steps_per_unit);
};

enum class MeasureKind { Physical, RiskNeutral, Myopic };

struct MeasureTag {
    MeasureKind kind = MeasureKind::Physical;
    double gamma = 0.0;
    std::string describe() const;
};

/// Factor dynamics dY = (c + D Y) dt + Lambda dW^M under a simulation measure M,
/// with Girsanov kernel dW = dW^M + (k0 + k1 Y) dt back to the physical measure.
/// Time-varying coefficients are frozen at the midpoint of each grid interval.
class FactorDynamics {
public:
    static FactorDynamics physical(const QtsmModel& model);
    static FactorDynamics risk_neutral(const QtsmModel& model);
    static FactorDynamics myopic(const QtsmModel& model, const MyopicMeasureCoeffs& coeffs);

    const MeasureTag& measure() const { return tag_; }
    bool time_varying() const { return static_cast<bool>(coeff_); }
    /// Horizon the coefficients were built for (myopic measures only).
    double horizon() const { return horizon_; }

    struct Frozen {
        Vec c;
        Mat D;
        Vec k0;
        Mat k1;
    };
    Frozen at(double t) const;
    const Mat& Lambda() const { return Lambda_; }

private:
    MeasureTag tag_;
    Mat Lambda_;
    Frozen constant_;
    std::function<Frozen(double)> coeff_;
    double horizon_ = 0.0;
};

/// Per-path functionals, stored column-wise.
struct Functionals {
    std::vector<double> int_r;
    std::vector<double> stoch_int_theta;
    std::vector<double> int_theta_sq;
    std::vector<double> H;
    std::vector<double> L;  // npaths x m, row-major per path

    void resize(std::size_t npaths, int m);
    double L_at(std::size_t path, int i, int m) const { return L[path * static_cast<std::size_t>(m) + i]; }
};

struct PathEnsemble {
    std::size_t npaths = 0;
    std::uint64_t seed = 0;
    SimGrid grid;
    int m = 0;
    int n = 0;
    Vec y0;
    MeasureTag measure;
    /// Stable identity of (seed, grid, npaths, model, measure, y0); used to
    /// reject mixing of ensembles.
    std::uint64_t id = 0;
    std::uint64_t model_hash = 0;

    bool has_paths = false;
    std::vector<double> Y;   // npaths x (nsteps+1) x m
    std::vector<double> dW;  // npaths x nsteps x n, increments under the simulation measure

    bool has_functionals = false;
    Functionals f;

    double Y_at(std::size_t path, std::size_t node, int i) const {
        return Y[(path * (grid.nsteps + 1) + node) * static_cast<std::size_t>(m) + i];
    }
    /// Factor value at the final node, for ensembles with or without stored paths.
    Vec terminal_factor(std::size_t path) const;
    std::vector<double> YT;  // npaths x m, always filled
};

struct SimOptions {
    std::size_t threads = 1;
    std::size_t chunk = 2048;
    std::uint32_t stream = 0;
};

/// Exact-in-law OU transition for frozen coefficients over one step dt:
/// Y' = E Y + mvec + G dW / dt + S eta, dW ~ N(0, dt I), eta ~ N(0, I).
struct OuStep {
    Mat E;
    Vec mvec;
    Mat G_over_dt;
    Mat S;
    double clipped_mass = 0.0;
};
OuStep ou_step(const Mat& D, const Vec& c, const Mat& Lambda, double dt);

/// Simulates paths and increments; functionals are not filled.
PathEnsemble simulate_factor(const QtsmModel& model, const FactorDynamics& dyn, const SimGrid& grid,
                             std::size_t npaths, std::uint64_t seed, const Vec& y0, const SimOptions& opts = {});

/// Fills the functionals from stored paths. Itô sums use left endpoints with
/// physical-measure increments, Lebesgue integrals the trapezoid rule.
void attach_functionals(PathEnsemble& ens, const QtsmModel& model, const FactorDynamics& dyn);

/// Fused single pass producing functional-only ensembles at each horizon.
/// All horizons share dt = 1/steps_per_unit exactly and therefore the same
/// random numbers on their common prefix; each result is bit-identical to
/// simulate_factor + attach_functionals on its own grid.
std::vector<PathEnsemble> simulate_horizons(const QtsmModel& model, const FactorDynamics& dyn,
                                            const std::vector<double>& horizons, double steps_per_unit,
                                            std::size_t npaths, std::uint64_t seed, const Vec& y0,
                                            const SimOptions& opts = {});

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t npaths = 0;
};

struct McVecEstimate {
    Vec mean;
    Vec se;
    std::size_t npaths = 0;
};

/// Sample mean with standard error sqrt(var/n); with weights, the normalized
/// importance-sampling ratio estimator and its delta-method standard error.
McEstimate estimate(std::span<const double> samples, std::span<const double> weights = {});

/// Componentwise version for n_samples x dim row-major data.
McVecEstimate estimate_vec(std::span<const double> samples, std::size_t dim, std::span<const double> weights = {});

struct HolderCheck {
    double lhs = 0.0;  // E_N[H^{1+alpha}]
    double rhs = 0.0;  // E_N[H^q]^{alpha/(q-1)} E_N[H]^{1-alpha/(q-1)}
    bool holds = false;
};

/// Hoelder interpolation bound on the ensemble's empirical measure; requires
/// q in [0, 1) and alpha in (q - 1, 0]. holds iff lhs <= rhs (1 + rel_tol).
HolderCheck empirical_holder(const PathEnsemble& ens, double q, double alpha, double rel_tol = 1e-12);

using PathFunctional = std::function<double(const PathEnsemble&, std::size_t path)>;

struct ConvergenceLevel {
    std::size_t nsteps = 0;
    McEstimate value;
    double bias = 0.0;  // value.mean - extrapolated limit
    bool flagged = false;
};

struct ConvergenceReport {
    std::vector<ConvergenceLevel> levels;
    double extrapolated = 0.0;
    double order = 2.0;
};

/// Simulates once at the finest level and derives coarser levels from the
/// same paths (subsampled nodes, summed increments). Every ladder entry must
/// divide the finest. Richardson extrapolation with `order` uses the two
/// finest levels; a level is flagged when |bias| > se/3.
ConvergenceReport convergence_study(const QtsmModel& model, const FactorDynamics& dyn, double T,
                                    std::vector<std::size_t> ladder, std::size_t npaths, std::uint64_t seed,
                                    const Vec& y0, const PathFunctional& functional, const SimOptions& opts = {},
                                    double order = 2.0);

/// Coarsens a stored-path ensemble by an integer factor.
PathEnsemble coarsen(const PathEnsemble& fine, std::size_t factor);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull);

/// Binary functional dump: magic, seed, T, nsteps, npaths, m, model hash,
/// then per path (int_r, stoch_int_theta, int_theta_sq, H, L[m]); little-endian.
void write_functionals(std::ostream& os, const PathEnsemble& ens);
PathEnsemble read_functionals(std::istream& is);

/// Runs body(begin, end) over fixed chunks of [0, count) on up to `threads`
/// workers. Results must depend only on the index range.
void parallel_chunks(std::size_t count, std::size_t chunk, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace qlab
