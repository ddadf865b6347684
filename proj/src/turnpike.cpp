#include "qlab/turnpike.hpp"

#include "qlab/pricing.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qlab {

namespace {

double gamma_of(double p) { return 1.0 - p; }

void require_reference_match(const Utility& u1, const Utility& u2) {
    const auto p_ref = reference_exponent(u2);
    if (!p_ref) throw std::invalid_argument("reference utility must be power or log");
    const auto p = u1.exponents();
    if (p.size() < 2) throw std::invalid_argument("collective needs at least two agents");
    if (std::abs(p.back() - *p_ref) > 1e-12)
        throw std::invalid_argument("reference exponent must equal the collective's least risk-averse exponent p_n");
}

ScalarEstimate zero_estimate() { return {0.0, 0.0}; }

TurnpikeRow evaluate_row(const ExperimentConfig& cfg, const QtsmModel& model, const PathEnsemble& ens, double EH) {
    TurnpikeRow row;
    row.T = ens.grid.T;
    row.EH = EH;
    const auto c1 = find_lambda_hat(cfg.u1, ens, cfg.x);
    const auto c2 = find_lambda_hat(cfg.u2, ens, cfg.x);
    row.lambda1 = c1.lambda_hat;
    row.lambda2 = c2.lambda_hat;
    row.myopic = row.hedging = row.wealth = row.proportion = zero_estimate();
    const auto wants = [&](GapComponent c) {
        return std::find(cfg.components.begin(), cfg.components.end(), c) != cfg.components.end();
    };
    if (wants(GapComponent::Myopic))
        row.myopic = norm_estimate(myopic_feedback(cfg.u1, model, ens, c1, cfg.y) -
                                   myopic_feedback(cfg.u2, model, ens, c2, cfg.y));
    if (wants(GapComponent::Hedging))
        row.hedging = norm_estimate(hedging_feedback(cfg.u1, model, ens, c1, cfg.y) -
                                    hedging_feedback(cfg.u2, model, ens, c2, cfg.y));
    if (wants(GapComponent::WealthGap)) row.wealth = terminal_wealth_gap(cfg.u1, c1, cfg.u2, c2, ens);
    if (wants(GapComponent::Proportions)) {
        const auto pg = uniform_proportion_gap(cfg.u1, cfg.u2, model, ens, cfg.xgrid);
        row.proportion = pg.sup;
        row.proportion_argmax_x = pg.argmax_x;
    }
    return row;
}

ScalarEstimate row_value(const TurnpikeRow& r, GapComponent c) {
    switch (c) {
        case GapComponent::Myopic: return r.myopic;
        case GapComponent::Hedging: return r.hedging;
        case GapComponent::WealthGap: return r.wealth;
        case GapComponent::Proportions: return r.proportion;
    }
    return {};
}

ComponentFit fit_component(const TurnpikeReport& rep, GapComponent c, double tol, bool identical) {
    ComponentFit cf;
    cf.component = c;
    std::vector<GapPoint> pts;
    bool all_zero = true;
    for (const auto& r : rep.rows) {
        const auto v = row_value(r, c);
        pts.push_back({r.EH, v.value, v.se});
        if (v.value != 0.0) all_zero = false;
    }
    if (identical || all_zero) {
        cf.verdict = "degenerate";
        cf.note = "all gaps are zero; slope fit skipped";
        return cf;
    }
    try {
        cf.fit = fit_rate(pts);
    } catch (const InsufficientSignal& e) {
        cf.verdict = "insufficient-signal";
        cf.note = std::string(e.what()) + "; increase paths or shorten the horizon grid";
        return cf;
    }
    const double s = cf.fit->slope, th = rep.theory.exponent;
    std::ostringstream os;
    os.precision(4);
    if (rep.theory.supremum) {
        cf.verdict = "reported";
        os << "supremal exponent " << th << " (open interval); slope compared only against the Pareto pair";
    } else if (std::abs(s - th) <= tol) {
        cf.verdict = "PASS";
    } else if (s > th + tol) {
        cf.verdict = "steeper";
        os << "decay faster than the theoretical upper-bound rate " << th;
    } else {
        cf.verdict = "FAIL";
        os << "slope " << s << " outside " << th << " +/- " << tol;
    }
    cf.note = os.str();
    return cf;
}

}  // namespace

std::string component_name(GapComponent c) {
    switch (c) {
        case GapComponent::Myopic: return "myopic";
        case GapComponent::Hedging: return "hedging";
        case GapComponent::WealthGap: return "wealth_gap";
        case GapComponent::Proportions: return "proportions";
    }
    return "?";
}

GapComponent parse_component(const std::string& s) {
    if (s == "myopic") return GapComponent::Myopic;
    if (s == "hedging") return GapComponent::Hedging;
    if (s == "wealth_gap") return GapComponent::WealthGap;
    if (s == "proportions") return GapComponent::Proportions;
    throw std::invalid_argument("unknown gap component '" + s + "'");
}

double theoretical_exponent(double alpha, double q) {
    if (!(q >= 0.0 && q < 1.0)) throw std::domain_error("q must lie in [0, 1)");
    if (!(alpha > q - 1.0 && alpha <= 0.0)) throw std::domain_error("alpha must lie in (q - 1, 0]");
    return 1.0 - alpha / (q - 1.0);
}

TheoreticalRate theoretical_exponent(const Utility& u1, const Utility& u2, std::optional<double> alpha) {
    const auto p_ref = reference_exponent(u2);
    if (!p_ref) throw std::invalid_argument("reference utility must be power or log");
    TheoreticalRate r;
    r.q = crra_q(*p_ref);
    if (u1.same_as(u2)) {
        r.alpha = 0.0;
        r.exponent = 1.0;
        r.basis = "identical utilities";
        return r;
    }
    switch (u1.kind()) {
        case UtilityKind::Pareto: {
            require_reference_match(u1, u2);
            const auto p = u1.exponents();
            const double gm = gamma_of(p[p.size() - 2]), gn = gamma_of(p.back());
            r.alpha = crra_q(p[p.size() - 2]) - 1.0;
            r.exponent = (gm - gn) / gm;
            r.basis = "pareto (gamma_{n-1} - gamma_n) / gamma_{n-1}";
            return r;
        }
        case UtilityKind::LinearSharing: {
            require_reference_match(u1, u2);
            const auto p = u1.exponents();
            const double gm = gamma_of(p[p.size() - 2]), gn = gamma_of(p.back());
            r.alpha = linear_sharing_beta_range(u1).first * (r.q - 1.0);
            r.exponent = std::min(1.0, gm - gn);
            r.supremum = true;
            r.basis = "linear sharing sup min(1, gamma_{n-1} - gamma_n)";
            return r;
        }
        default:
            break;
    }
    if (!alpha) throw std::invalid_argument("pair has no closed-form rate; supply alpha");
    r.alpha = *alpha;
    r.exponent = theoretical_exponent(*alpha, r.q);
    r.basis = "1 - alpha/(q-1)";
    return r;
}

RateFit fit_rate(const std::vector<GapPoint>& rows) {
    RateFit f;
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
        if (r.gap > 3.0 * r.se && r.gap > 0.0 && r.EH > 0.0) {
            xs.push_back(std::log(r.EH));
            ys.push_back(std::log(r.gap));
        } else {
            ++f.dropped;
        }
    }
    f.used = xs.size();
    if (f.used < 4) {
        std::ostringstream os;
        os << "only " << f.used << " of " << rows.size() << " rows exceed 3 standard errors";
        throw InsufficientSignal(os.str());
    }
    const double n = static_cast<double>(f.used);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < f.used; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < f.used; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) throw InsufficientSignal("E[H_T] does not vary across the usable rows");
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < f.used; ++i) {
        const double e = ys[i] - f.intercept - f.slope * xs[i];
        ssr += e * e;
    }
    const double dof = n - 2.0;
    const double se = std::sqrt(ssr / dof / sxx);
    const boost::math::students_t dist(dof);
    f.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
    return f;
}

const ComponentFit* TurnpikeReport::fit_for(GapComponent c) const {
    for (const auto& f : fits)
        if (f.component == c) return &f;
    return nullptr;
}

std::optional<bool> TurnpikeReport::rates_consistent() const {
    const auto* a = fit_for(GapComponent::Myopic);
    const auto* b = fit_for(GapComponent::Hedging);
    if (!a || !b || !a->fit || !b->fit) return std::nullopt;
    return std::abs(a->fit->slope - b->fit->slope) <= a->fit->half_width + b->fit->half_width;
}

void check_experiment(const ExperimentConfig& cfg) {
    if (cfg.horizons.size() < 5) throw std::invalid_argument("experiment needs at least 5 horizons");
    for (std::size_t i = 0; i < cfg.horizons.size(); ++i)
        if (!(cfg.horizons[i] > 0.0) || (i && !(cfg.horizons[i] > cfg.horizons[i - 1])))
            throw std::invalid_argument("horizons must be positive and ascending");
    if (!reference_exponent(cfg.u2)) throw std::invalid_argument("reference utility must be power or log");
    if (cfg.u1.kind() == UtilityKind::Pareto || cfg.u1.kind() == UtilityKind::LinearSharing)
        require_reference_match(cfg.u1, cfg.u2);
    if (!(cfg.x > 0.0)) throw std::invalid_argument("initial wealth must be positive");
    if (cfg.npaths < 2) throw std::invalid_argument("need at least 2 paths");
    if (cfg.components.empty()) throw std::invalid_argument("no gap components requested");
    if (std::find(cfg.components.begin(), cfg.components.end(), GapComponent::Proportions) != cfg.components.end()) {
        if (cfg.xgrid.empty()) throw std::invalid_argument("proportions component needs an xgrid");
        for (double v : cfg.xgrid)
            if (!(v > 0.0)) throw std::invalid_argument("xgrid entries must be positive");
    }
}

ProportionGap uniform_proportion_gap(const Utility& u1, const Utility& u2, const QtsmModel& model,
                                     const PathEnsemble& ens, const std::vector<double>& xgrid) {
    if (xgrid.empty()) throw std::invalid_argument("empty xgrid");
    ProportionGap out;
    double best = -1.0;
    for (double x : xgrid) {
        if (!(x > 0.0)) throw std::invalid_argument("xgrid entries must be positive");
        const auto c1 = find_lambda_hat(u1, ens, x);
        const auto c2 = find_lambda_hat(u2, ens, x);
        const auto diff = (myopic_feedback(u1, model, ens, c1, ens.y0) - myopic_feedback(u2, model, ens, c2, ens.y0))
                              .scaled(1.0 / x);
        const auto e = norm_estimate(diff);
        out.per_x.push_back(e);
        if (e.value > best) {
            best = e.value;
            out.sup = e;
            out.argmax_x = x;
        }
    }
    return out;
}

TurnpikeReport run_experiment(const QtsmModel& model, const ExperimentConfig& cfg, const EnsembleObserver& observe) {
    check_experiment(cfg);
    TurnpikeReport rep;
    rep.pair_id = cfg.pair_id;
    rep.theory = theoretical_exponent(cfg.u1, cfg.u2, cfg.alpha);

    const auto decay = bond_decay(model, cfg.y, cfg.horizons);
    rep.bond_decay_rate = decay.final_slope;
    if (!decay.strictly_decreasing || !(decay.final_slope > 0.0)) {
        std::ostringstream os;
        os << "E[H_T] does not decay over the horizon grid (final rate " << decay.final_slope
           << "); rates in E[H_T] are meaningless";
        throw std::domain_error(os.str());
    }
    const auto curve = bond_curve(model, cfg.horizons);

    SimOptions so;
    so.threads = cfg.threads;
    const auto ens = simulate_horizons(model, FactorDynamics::physical(model), cfg.horizons, cfg.steps_per_unit,
                                       cfg.npaths, cfg.seed, cfg.y, so);
    if (observe)
        for (const auto& e : ens) observe(e);

    const std::size_t H = cfg.horizons.size();
    std::vector<TurnpikeRow> rows(H);
    std::vector<std::string> errors(H);
    parallel_chunks(H, 1, cfg.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t h = begin; h < end; ++h) {
            try {
                rows[h] = evaluate_row(cfg, model, ens[h], curve.price(h, cfg.y));
            } catch (const std::exception& e) {
                errors[h] = e.what();
            }
        }
    });
    for (std::size_t h = 0; h < H; ++h) {
        if (!errors[h].empty()) {
            rep.complete = false;
            std::ostringstream os;
            os << "T = " << cfg.horizons[h] << ": " << errors[h];
            rep.error = os.str();
            break;
        }
        rep.rows.push_back(rows[h]);
    }
    const bool identical = cfg.u1.same_as(cfg.u2);
    for (GapComponent c : cfg.components) rep.fits.push_back(fit_component(rep, c, cfg.tolerance, identical));
    return rep;
}

CollectiveComparison compare_collectives(const QtsmModel& model, const ExperimentConfig& pareto_cfg,
                                         const ExperimentConfig& linear_cfg) {
    if (pareto_cfg.u1.kind() != UtilityKind::Pareto) throw std::invalid_argument("first pair must be a Pareto collective");
    if (linear_cfg.u1.kind() != UtilityKind::LinearSharing)
        throw std::invalid_argument("second pair must be a linear sharing collective");
    CollectiveComparison cc;
    cc.tolerance = linear_cfg.tolerance;
    cc.pareto = run_experiment(model, pareto_cfg);
    cc.linear = run_experiment(model, linear_cfg);
    const auto* fp = cc.pareto.fit_for(GapComponent::Myopic);
    const auto* fl = cc.linear.fit_for(GapComponent::Myopic);
    if (!fp || !fl || !fp->fit || !fl->fit) {
        cc.verdict = "insufficient-signal";
        return cc;
    }
    cc.pareto_slope = fp->fit->slope;
    cc.linear_slope = fl->fit->slope;
    cc.verdict = cc.linear_slope >= cc.pareto_slope - cc.tolerance ? "PASS" : "FAIL";
    return cc;
}

}  // namespace qlab
