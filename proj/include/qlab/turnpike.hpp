#pragma once

#include "qlab/model.hpp"
#include "qlab/montecarlo.hpp"
#include "qlab/portfolio.hpp"
#include "qlab/utility.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlab {

enum class GapComponent { Myopic, Hedging, WealthGap, Proportions };

std::string component_name(GapComponent c);
/// Accepts "myopic", "hedging", "wealth_gap", "proportions".
GapComponent parse_component(const std::string& s);

struct TheoreticalRate {
    double exponent = 0.0;
    double alpha = 0.0;
    double q = 0.0;
    /// Linear sharing: the exponent is the supremum of an open interval of
    /// attainable rates, not itself attained.
    bool supremum = false;
    std::string basis;
};

/// 1 - alpha/(q-1); std::domain_error unless q in [0, 1) and alpha in (q-1, 0].
double theoretical_exponent(double alpha, double q);

/// Rate for a (general, reference) pair. Pareto and linear sharing collectives
/// must be paired with Power/Log at their last exponent p_n; other pairs need
/// an explicit alpha.
TheoreticalRate theoretical_exponent(const Utility& u1, const Utility& u2, std::optional<double> alpha = std::nullopt);

class InsufficientSignal : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double half_width = 0.0;  // 95% Student-t
    std::size_t used = 0;
    std::size_t dropped = 0;
};

struct GapPoint {
    double EH = 0.0;
    double gap = 0.0;
    double se = 0.0;
};

/// OLS of log gap on log EH over rows with gap > 3 se. Throws
/// InsufficientSignal when fewer than 4 rows survive.
RateFit fit_rate(const std::vector<GapPoint>& rows);

struct ExperimentConfig {
    std::string pair_id;
    Utility u1 = Utility::power(-1.0);
    Utility u2 = Utility::power(-1.0);
    std::optional<double> alpha;
    double x = 1.0;
    Vec y;
    std::vector<double> horizons;
    std::size_t npaths = 10000;
    double steps_per_unit = 50.0;
    std::uint64_t seed = 1;
    std::vector<GapComponent> components{GapComponent::Myopic, GapComponent::Hedging, GapComponent::WealthGap};
    std::vector<double> xgrid;  // proportions only
    double tolerance = 0.2;     // accepted |slope - theory|
    std::size_t threads = 1;
};

struct TurnpikeRow {
    double T = 0.0;
    double EH = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    ScalarEstimate myopic;
    ScalarEstimate hedging;
    ScalarEstimate wealth;
    ScalarEstimate proportion;
    double proportion_argmax_x = 0.0;
};

struct ComponentFit {
    GapComponent component = GapComponent::Myopic;
    /// "PASS", "FAIL", "steeper", "degenerate" or "insufficient-signal".
    std::string verdict;
    std::optional<RateFit> fit;
    std::string note;
};

struct TurnpikeReport {
    std::string pair_id;
    TheoreticalRate theory;
    std::vector<TurnpikeRow> rows;
    std::vector<ComponentFit> fits;
    double bond_decay_rate = 0.0;  // -d log E[H_T]/dT at the longest horizons
    bool complete = true;
    std::string error;

    const ComponentFit* fit_for(GapComponent c) const;
    /// Myopic and hedging slopes agree within the sum of their half-widths.
    std::optional<bool> rates_consistent() const;
};

/// Throws std::invalid_argument on malformed configs: fewer than 5 horizons,
/// non-ascending horizons, a non-CRRA reference or a reference exponent that
/// does not match the collective's last block.
void check_experiment(const ExperimentConfig& cfg);

/// Read-only view of each simulated horizon, called in horizon order before evaluation.
using EnsembleObserver = std::function<void(const PathEnsemble&)>;

/// One shared-driver simulation over all horizons, then per-horizon
/// calibration, gap estimates and slope fits. E[H_T] is the closed-form
/// bond price. Refuses (std::domain_error) when E[H_T] does not decay.
TurnpikeReport run_experiment(const QtsmModel& model, const ExperimentConfig& cfg,
                              const EnsembleObserver& observe = {});

/// sup over xgrid of |pi1^M(x)/x - pi2^M(x)/x| with per-x recalibration on one
/// ensemble; returns the sup and the maximizing x.
struct ProportionGap {
    ScalarEstimate sup;
    double argmax_x = 0.0;
    std::vector<ScalarEstimate> per_x;
};
ProportionGap uniform_proportion_gap(const Utility& u1, const Utility& u2, const QtsmModel& model,
                                     const PathEnsemble& ens, const std::vector<double>& xgrid);

/// Compares a linear sharing pair against its Pareto counterpart: the linear
/// sharing slope must not fall below the Pareto slope by more than `tolerance`.
struct CollectiveComparison {
    TurnpikeReport pareto;
    TurnpikeReport linear;
    double pareto_slope = 0.0;
    double linear_slope = 0.0;
    double tolerance = 0.0;
    std::string verdict;
};
CollectiveComparison compare_collectives(const QtsmModel& model, const ExperimentConfig& pareto_cfg,
                                         const ExperimentConfig& linear_cfg);

}  // namespace qlab
