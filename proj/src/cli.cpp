#include "qlab/cli.hpp"

#include "qlab/config.hpp"
#include "qlab/montecarlo.hpp"
#include "qlab/portfolio.hpp"
#include "qlab/pricing.hpp"
#include "qlab/report.hpp"
#include "qlab/riccati.hpp"
#include "qlab/turnpike.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace qlab {

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<double> steps_per_unit;
    std::optional<std::size_t> threads;
    std::string out;
};

/// Thrown for unusable input so run_cli can map it to kExitParse.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ConfigDoc effective_config(const GlobalFlags& g) {
    if (g.config.empty()) throw UsageError("--config is required");
    ConfigDoc doc = load_config(g.config);
    auto& ex = doc.root["experiment"];
    if (g.seed) ex["seed"] = *g.seed;
    if (g.paths) ex["paths"] = *g.paths;
    if (g.steps_per_unit) ex["steps_per_unit"] = *g.steps_per_unit;
    if (g.threads) ex["threads"] = *g.threads;
    return doc;
}

std::string out_dir(const GlobalFlags& g) {
    if (!g.out.empty()) return g.out;
    if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
    return "qlab_out";
}

std::string fmt_vec(const Vec& v) {
    std::ostringstream os;
    os << std::setprecision(10);
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

/// Union of {q, 1 + alpha} over every pair in the config.
std::vector<double> config_gammas(const ConfigDoc& doc, std::ostream& err) {
    std::set<double> g;
    if (!doc.root.contains("pairs")) return {};
    for (auto it = doc.root["pairs"].begin(); it != doc.root["pairs"].end(); ++it) {
        try {
            const auto& pj = it.value();
            std::optional<double> alpha;
            if (pj.contains("alpha")) alpha = pj["alpha"].get<double>();
            const auto th = theoretical_exponent(named_utility(doc, pj["general"].get<std::string>()),
                                                 named_utility(doc, pj["reference"].get<std::string>()), alpha);
            g.insert(th.q);
            g.insert(1.0 + th.alpha);
        } catch (const std::exception& e) {
            err << "warning: pair '" << it.key() << "' skipped for the exponent set: " << e.what() << '\n';
        }
    }
    return {g.begin(), g.end()};
}

int cmd_validate(const GlobalFlags& g, std::ostream& out, std::ostream& err) {
    const ConfigDoc doc = effective_config(g);
    const QtsmModel model = model_from_config(doc);
    const auto gammas = config_gammas(doc, err);
    const auto rep = validate(model, gammas);
    out << rep.to_string();
    return rep.pass() ? kExitPass : kExitFail;
}

int cmd_riccati(const GlobalFlags& g, const std::string& system, double param, double T, std::ostream& out) {
    const ConfigDoc doc = effective_config(g);
    const QtsmModel model = model_from_config(doc);
    RiccatiSpec spec;
    CompanionSpec comp;
    if (system == "bond") {
        spec = bond_riccati_spec(model, T);
        comp = bond_companion(model);
    } else if (system == "crra") {
        spec = crra_riccati_spec(model, param, T);
        comp = crra_companion(model, param);
    } else if (system == "gamma") {
        spec = gamma_riccati_spec(model, param, T);
        comp = gamma_companion(model, param);
    } else {
        throw UsageError("unknown Riccati system '" + system + "' (bond, crra, gamma)");
    }
    const auto sol = solve_riccati_system(spec, comp);
    RunManifest man;
    man.command = "riccati";
    man.effective_config = doc.root;
    write_output(man, out_dir(g), "riccati.csv", riccati_csv(sol));
    out << "C(0) = " << fmt17(sol.C0()(0, 0)) << (sol.C0().size() > 1 ? " (first entry)" : "")
        << ", beta(0) = " << fmt_vec(sol.beta0()) << ", scalar(0) = " << fmt17(sol.scalar0())
        << ", Loewner margin = " << loewner_monotonicity_margin(sol) << '\n';
    try {
        const auto lim = are_limit(spec, comp);
        out << "ARE limit: residual " << lim.residual << ", closed-loop max real part " << lim.closed_loop_max_realpart
            << ", reached at tau = " << lim.horizon_used << '\n';
    } catch (const RiccatiError& e) {
        out << "ARE limit: not reached (" << e.what() << ")\n";
    }
    write_manifest(man, out_dir(g));
    return kExitPass;
}

int cmd_bond(const GlobalFlags& g, std::vector<double> horizons, bool want_mc, std::ostream& out) {
    const ConfigDoc doc = effective_config(g);
    const QtsmModel model = model_from_config(doc);
    const Vec y = y0_from_config(doc, model.m());
    if (horizons.empty()) horizons = value_or<std::vector<double>>(doc, "/bond/horizons", {1.0});
    const std::size_t paths = value_or<std::size_t>(doc, "/experiment/paths", 0);
    const double spu = value_or<double>(doc, "/experiment/steps_per_unit", 200.0);
    const std::uint64_t seed = value_or<std::uint64_t>(doc, "/experiment/seed", 1);
    SimOptions so;
    so.threads = value_or<std::size_t>(doc, "/experiment/threads", 1);

    std::vector<double> pos;
    for (double T : horizons) {
        if (T < 0.0) throw UsageError("horizons must be nonnegative");
        if (T > 0.0) pos.push_back(T);
    }
    std::vector<PathEnsemble> ens;
    if (want_mc && !pos.empty())
        ens = simulate_horizons(model, FactorDynamics::physical(model), pos, spu, paths, seed, y, so);
    std::ostringstream csv;
    csv << (want_mc ? "T,closed_form,mc_mean,mc_se\n" : "T,closed_form\n");
    std::size_t k = 0;
    for (double T : horizons) {
        csv << fmt17(T) << ',' << fmt17(bond_price(model, T, y));
        if (want_mc) {
            if (T == 0.0) {
                csv << ",1,0";
            } else {
                const auto e = estimate(ens[k++].f.H);
                csv << ',' << fmt17(e.mean) << ',' << fmt17(e.se);
            }
        }
        csv << '\n';
    }
    RunManifest man;
    man.command = "bond";
    man.seed = seed;
    man.effective_config = doc.root;
    write_output(man, out_dir(g), "bond.csv", csv.str());
    write_manifest(man, out_dir(g));
    out << csv.str();
    return kExitPass;
}

int cmd_portfolio(const GlobalFlags& g, std::string uname, std::optional<double> T_opt, std::optional<double> x_opt,
                  std::ostream& out) {
    const ConfigDoc doc = effective_config(g);
    const QtsmModel model = model_from_config(doc);
    const Vec y = y0_from_config(doc, model.m());
    if (uname.empty()) uname = value_or<std::string>(doc, "/portfolio/utility", "");
    if (uname.empty()) throw UsageError("--utility is required");
    const Utility u = named_utility(doc, uname);
    const double T = T_opt.value_or(value_or<double>(doc, "/portfolio/T", 1.0));
    const double x = x_opt.value_or(value_or<double>(doc, "/portfolio/x", 1.0));
    const std::size_t paths = value_or<std::size_t>(doc, "/experiment/paths", 10000);
    const double spu = value_or<double>(doc, "/experiment/steps_per_unit", 50.0);
    const std::uint64_t seed = value_or<std::uint64_t>(doc, "/experiment/seed", 1);
    SimOptions so;
    so.threads = value_or<std::size_t>(doc, "/experiment/threads", 1);
    const auto ens = simulate_horizons(model, FactorDynamics::physical(model), {T}, spu, paths, seed, y, so);
    const auto d = decompose(u, model, ens[0], x);

    std::optional<CrraFeedback> cf;
    if (const auto p = reference_exponent(u); p && u.scale() == 1.0) cf = crra_feedback(model, *p, 0.0, T, x, y);

    std::ostringstream csv;
    csv << "component,asset,mc,se" << (cf ? ",closed_form" : "") << '\n';
    const auto emit = [&](const char* name, const InfluenceEstimate& e, const Vec* exact) {
        const Vec se = e.se();
        for (Eigen::Index i = 0; i < e.value.size(); ++i) {
            csv << name << ',' << i << ',' << fmt17(e.value[i]) << ',' << fmt17(se[i]);
            if (exact) csv << ',' << fmt17((*exact)[i]);
            csv << '\n';
        }
    };
    emit("myopic", d.myopic, cf ? &cf->myopic : nullptr);
    emit("hedging", d.hedging, cf ? &cf->hedging : nullptr);
    emit("total", d.total, cf ? &cf->total : nullptr);
    RunManifest man;
    man.command = "portfolio";
    man.seed = seed;
    man.effective_config = doc.root;
    write_output(man, out_dir(g), "portfolio.csv", csv.str());
    write_manifest(man, out_dir(g));
    out << csv.str() << "lambda_hat = " << fmt17(d.multiplier.lambda_hat)
        << ", budget residual = " << d.multiplier.budget_residual << '\n';
    return kExitPass;
}

void write_turnpike_outputs(RunManifest& man, const std::string& dir, const TurnpikeReport& rep,
                            const std::string& prefix) {
    write_output(man, dir, prefix + "report.csv", report_csv(rep));
    write_output(man, dir, prefix + "rates.csv", rates_csv(rep));
    for (const auto& f : rep.fits)
        write_output(man, dir, prefix + "plot_" + component_name(f.component) + ".svg", svg_plot(rep, f.component));
}

std::string summary_line(const TurnpikeReport& rep) {
    const ComponentFit* f = rep.fits.empty() ? nullptr : &rep.fits.front();
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "slope=";
    if (f && f->fit)
        os << f->fit->slope;
    else
        os << "n/a";
    os << ", theory=" << rep.theory.exponent << ", verdict=" << (f ? f->verdict : std::string("n/a"));
    if (f && !f->note.empty() && f->verdict != "PASS") os << " (" << f->note << ")";
    return os.str();
}

int verdict_code(const std::string& v) { return v == "FAIL" ? kExitFail : kExitPass; }

int cmd_turnpike(const GlobalFlags& g, const std::string& pair, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const ConfigDoc doc = effective_config(g);
    const QtsmModel model = model_from_config(doc);
    const ExperimentConfig cfg = experiment_from_config(doc, pair);
    const TurnpikeReport rep = run_experiment(model, cfg);
    RunManifest man;
    man.command = "turnpike";
    man.seed = cfg.seed;
    man.effective_config = doc.root;
    const std::string dir = out_dir(g);
    write_turnpike_outputs(man, dir, rep, "");
    man.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(man, dir);
    if (!rep.complete) out << "incomplete: " << rep.error << '\n';
    for (const auto& f : rep.fits) {
        out << component_name(f.component) << ": ";
        if (f.fit) out << "slope " << fmt17(f.fit->slope) << " +/- " << fmt17(f.fit->half_width) << ", ";
        out << f.verdict << '\n';
    }
    if (const auto rc = rep.rates_consistent())
        out << "myopic/hedging slopes " << (*rc ? "agree" : "disagree") << " within combined confidence widths\n";
    out << summary_line(rep) << '\n';
    if (!rep.complete) return kExitFail;
    return rep.fits.empty() ? kExitFail : verdict_code(rep.fits.front().verdict);
}

int cmd_collective(const GlobalFlags& g, std::string pareto_pair, std::string linear_pair, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const ConfigDoc doc = effective_config(g);
    const QtsmModel model = model_from_config(doc);
    if (pareto_pair.empty()) pareto_pair = value_or<std::string>(doc, "/collective/pareto_pair", "");
    if (linear_pair.empty()) linear_pair = value_or<std::string>(doc, "/collective/linear_pair", "");
    if (pareto_pair.empty() || linear_pair.empty()) throw UsageError("collective needs a Pareto and a linear sharing pair");
    const auto cc = compare_collectives(model, experiment_from_config(doc, pareto_pair),
                                        experiment_from_config(doc, linear_pair));
    RunManifest man;
    man.command = "collective";
    man.seed = value_or<std::uint64_t>(doc, "/experiment/seed", 1);
    man.effective_config = doc.root;
    const std::string dir = out_dir(g);
    write_turnpike_outputs(man, dir, cc.pareto, "pareto_");
    write_turnpike_outputs(man, dir, cc.linear, "linear_");
    man.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(man, dir);
    out << std::fixed << std::setprecision(4) << "pareto slope=" << cc.pareto_slope << " (theory "
        << cc.pareto.theory.exponent << "), linear sharing slope=" << cc.linear_slope << " (supremum "
        << cc.linear.theory.exponent << "), tolerance=" << cc.tolerance << ", verdict=" << cc.verdict << '\n';
    return cc.verdict == "PASS" ? kExitPass : kExitFail;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Numerical laboratory for turnpike rates in quadratic term-structure markets", "qlab"};
    app.require_subcommand(1);
    GlobalFlags g;
    std::uint64_t seed = 0;
    std::size_t paths = 0, threads = 0;
    double spu = 0.0;
    app.add_option("--config", g.config, "JSON configuration file");
    auto* o_seed = app.add_option("--seed", seed, "RNG seed (overrides /experiment/seed)");
    auto* o_paths = app.add_option("--paths", paths, "Monte Carlo paths (overrides /experiment/paths)")
                        ->check(CLI::PositiveNumber);
    auto* o_spu = app.add_option("--steps-per-unit", spu, "time steps per unit horizon")->check(CLI::PositiveNumber);
    auto* o_threads = app.add_option("--threads", threads, "worker cap; results do not depend on it")
                          ->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, std::string("output directory (default $") + kOutDirEnv + " or ./qlab_out)");

    auto* validate_cmd = app.add_subcommand("validate", "check the model's standing assumptions")->fallthrough();

    std::string system = "bond";
    double param = -1.0, T_ric = 1.0;
    auto* riccati_cmd = app.add_subcommand("riccati", "solve a terminal-value Riccati system")->fallthrough();
    riccati_cmd->add_option("--system", system, "bond, crra or gamma");
    riccati_cmd->add_option("--param", param, "p for crra, gamma for gamma");
    riccati_cmd->add_option("--T", T_ric, "horizon");

    std::vector<double> horizons;
    bool bond_mc = false;
    auto* bond_cmd = app.add_subcommand("bond", "zero-coupon bond prices")->fallthrough();
    bond_cmd->add_option("--horizons", horizons, "maturities")->delimiter(',');
    bond_cmd->add_flag("--mc", bond_mc, "add a Monte Carlo column (implied by --paths)");

    std::string uname;
    std::optional<double> T_pf, x_pf;
    auto* pf_cmd = app.add_subcommand("portfolio", "optimal feedback decomposition")->fallthrough();
    pf_cmd->add_option("--utility", uname, "utility id from /utilities");
    pf_cmd->add_option("--T", T_pf, "horizon");
    pf_cmd->add_option("--x", x_pf, "initial wealth");

    std::string pair;
    auto* tp_cmd = app.add_subcommand("turnpike", "turnpike rate experiment")->fallthrough();
    tp_cmd->add_option("--pair", pair, "pair id from /pairs");

    std::string pareto_pair, linear_pair;
    auto* col_cmd = app.add_subcommand("collective", "linear sharing against Pareto sharing")->fallthrough();
    col_cmd->add_option("--pareto-pair", pareto_pair, "Pareto pair id");
    col_cmd->add_option("--linear-pair", linear_pair, "linear sharing pair id");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitPass;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitParse;
    }
    if (*o_seed) g.seed = seed;
    if (*o_paths) g.paths = paths;
    if (*o_spu) g.steps_per_unit = spu;
    if (*o_threads) g.threads = threads;

    try {
        if (*validate_cmd) return cmd_validate(g, out, err);
        if (*riccati_cmd) return cmd_riccati(g, system, param, T_ric, out);
        if (*bond_cmd) return cmd_bond(g, horizons, bond_mc || g.paths.has_value(), out);
        if (*pf_cmd) return cmd_portfolio(g, uname, T_pf, x_pf, out);
        if (*tp_cmd) return cmd_turnpike(g, pair, out);
        if (*col_cmd) return cmd_collective(g, pareto_pair, linear_pair, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitParse;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitParse;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFail;
    }
    return kExitParse;
}

}  // namespace qlab
