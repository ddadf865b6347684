#include "fixtures.hpp"
#include "qlab/turnpike.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace qlab;
using namespace qlab::testing;

namespace {

ExperimentConfig small_config(const Utility& u1, const Utility& u2) {
    ExperimentConfig c;
    c.pair_id = "test";
    c.u1 = u1;
    c.u2 = u2;
    c.x = 10.0;
    c.y = v1(0.3);
    c.horizons = {2, 4, 6, 8, 10};
    c.npaths = 4000;
    c.steps_per_unit = 10;
    c.seed = 99;
    return c;
}

}  // namespace

TEST_CASE("theoretical exponents") {
    CHECK(theoretical_exponent(0.0, 0.5) == 1.0);
    CHECK(theoretical_exponent(-1.0 / 3.0, 0.5) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS((void)theoretical_exponent(0.1, 0.5), std::domain_error);
    CHECK_THROWS_AS((void)theoretical_exponent(-0.5, 0.5), std::domain_error);
    CHECK_THROWS_AS((void)theoretical_exponent(-0.1, 1.0), std::domain_error);

    // gamma = (3, 2): (3 - 2) / 3.
    const auto par = theoretical_exponent(Utility::pareto({0.5, 0.5}, {-2.0, -1.0}), Utility::power(-1.0));
    CHECK(par.exponent == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(par.alpha == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
    CHECK(par.q == doctest::Approx(0.5));
    CHECK_FALSE(par.supremum);

    const auto lin = theoretical_exponent(Utility::linear_sharing({0.5, 0.5}, {0.5, 0.5}, {-2.0, -1.0}),
                                          Utility::power(-1.0));
    CHECK(lin.supremum);
    CHECK(lin.exponent == doctest::Approx(1.0));
    const auto lin2 = theoretical_exponent(Utility::linear_sharing({0.5, 0.5}, {0.5, 0.5}, {-1.5, -1.0}),
                                           Utility::power(-1.0));
    CHECK(lin2.exponent == doctest::Approx(0.5));

    CHECK(theoretical_exponent(Utility::power(-1.0), Utility::power(-1.0)).exponent == 1.0);
    CHECK_THROWS((void)theoretical_exponent(Utility::pareto({0.5, 0.5}, {-2.0, -1.0}), Utility::power(-2.0)));
    CHECK_THROWS((void)theoretical_exponent(Utility::power(-3.0), Utility::power(-1.0)));
    CHECK(theoretical_exponent(Utility::power(-3.0), Utility::power(-1.0), -0.25).exponent ==
          doctest::Approx(0.5));
}

TEST_CASE("fit_rate recovers an exact power law") {
    std::vector<GapPoint> rows;
    for (int k = 1; k <= 8; ++k) {
        const double eh = std::exp(-0.5 * k);
        rows.push_back({eh, 2.5 * std::pow(eh, 0.7), 1e-6});
    }
    const auto f = fit_rate(rows);
    CHECK(f.slope == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(2.5)).epsilon(1e-12));
    CHECK(f.half_width < 1e-10);
    CHECK(f.used == 8);
    CHECK(f.dropped == 0);
}

TEST_CASE("fit_rate under 5% multiplicative noise") {
    std::mt19937_64 gen(12345);
    std::normal_distribution<double> noise(0.0, 0.05);
    int within = 0, covered = 0;
    const int draws = 500;
    for (int d = 0; d < draws; ++d) {
        std::vector<GapPoint> rows;
        for (int k = 1; k <= 8; ++k) {
            const double eh = std::exp(-0.5 * k);
            rows.push_back({eh, 2.5 * std::pow(eh, 0.7) * std::exp(noise(gen)), 1e-9});
        }
        const auto f = fit_rate(rows);
        within += std::abs(f.slope - 0.7) <= 0.1;
        covered += std::abs(f.slope - 0.7) <= f.half_width;
    }
    CHECK(within == draws);
    // 95% intervals: coverage within a few binomial standard deviations.
    CHECK(std::abs(covered / static_cast<double>(draws) - 0.95) < 0.04);
}

TEST_CASE("fit_rate noise filter") {
    std::vector<GapPoint> rows;
    for (int k = 1; k <= 8; ++k) rows.push_back({std::exp(-0.5 * k), 1e-3, 1e-3});
    CHECK_THROWS_AS((void)fit_rate(rows), InsufficientSignal);
    rows[0].se = rows[1].se = rows[2].se = rows[3].se = 1e-6;
    rows[0].gap = 1e-3 * std::exp(-0.5);
    const auto f = fit_rate(rows);
    CHECK(f.used == 4);
    CHECK(f.dropped == 4);
}

TEST_CASE("component names round trip") {
    for (auto c : {GapComponent::Myopic, GapComponent::Hedging, GapComponent::WealthGap, GapComponent::Proportions})
        CHECK(parse_component(component_name(c)) == c);
    CHECK_THROWS((void)parse_component("total"));
}

TEST_CASE("experiment configuration checks") {
    auto c = small_config(Utility::pareto({0.5, 0.5}, {-2.0, -1.0}), Utility::power(-1.0));
    CHECK_NOTHROW(check_experiment(c));
    c.horizons = {2, 4, 6, 8};
    CHECK_THROWS_AS(check_experiment(c), std::invalid_argument);
    c.horizons = {2, 4, 4, 8, 10};
    CHECK_THROWS_AS(check_experiment(c), std::invalid_argument);
    c = small_config(Utility::pareto({0.5, 0.5}, {-2.0, -1.0}), Utility::power(-2.0));
    CHECK_THROWS_AS(check_experiment(c), std::invalid_argument);
    c = small_config(Utility::power(-1.0), Utility::pareto({0.5, 0.5}, {-2.0, -1.0}));
    CHECK_THROWS_AS(check_experiment(c), std::invalid_argument);
}

TEST_CASE("identical utilities are degenerate") {
    const auto rep = run_experiment(acceptance_model(), small_config(Utility::power(-1.0), Utility::power(-1.0)));
    CHECK(rep.complete);
    REQUIRE(rep.fits.size() == 3);
    for (const auto& f : rep.fits) CHECK(f.verdict == "degenerate");
    for (const auto& r : rep.rows) {
        CHECK(r.myopic.value == 0.0);
        CHECK(r.hedging.value == 0.0);
        CHECK(r.wealth.value == 0.0);
    }
}

TEST_CASE("log reference contributes no hedging demand") {
    const auto model = acceptance_model();
    const auto par = Utility::pareto({0.5, 0.5}, {-1.0, 0.0});
    const auto cfg = small_config(par, Utility::log());
    const auto rep = run_experiment(model, cfg);
    const auto ens = simulate_horizons(model, FactorDynamics::physical(model), cfg.horizons, cfg.steps_per_unit,
                                       cfg.npaths, cfg.seed, cfg.y);
    for (std::size_t h = 0; h < ens.size(); ++h) {
        const auto c = find_lambda_hat(par, ens[h], cfg.x);
        const auto hp = hedging_feedback(par, model, ens[h], c, cfg.y);
        CHECK(rep.rows[h].hedging.value == doctest::Approx(std::abs(hp.value[0])).epsilon(1e-12));
    }
}

TEST_CASE("acceptance pair at reduced scale: gaps shrink and reports are thread independent") {
    const auto model = acceptance_model();
    auto cfg = small_config(Utility::pareto({0.5, 0.5}, {-2.0, -1.0}), Utility::power(-1.0));
    cfg.horizons = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
    cfg.npaths = 20000;
    const auto rep = run_experiment(model, cfg);
    REQUIRE(rep.rows.size() == 10);
    const auto& first = rep.rows.front().myopic;
    const auto& last = rep.rows.back().myopic;
    CHECK(first.value - last.value > 3.0 * std::hypot(first.se, last.se));
    CHECK(rep.bond_decay_rate > 0.0);
    for (std::size_t i = 1; i < rep.rows.size(); ++i) CHECK(rep.rows[i].EH < rep.rows[i - 1].EH);

    cfg.threads = 3;
    const auto rep3 = run_experiment(model, cfg);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].myopic.value == rep3.rows[i].myopic.value);
        CHECK(rep.rows[i].wealth.se == rep3.rows[i].wealth.se);
    }
}

TEST_CASE("non-decaying deflator is refused") {
    const auto model = scalar_model(-0.02, 0.0, 0.0, 0.1, 0.0, 0.0, -1.0, 0.2, 0.2);
    CHECK_THROWS_AS((void)run_experiment(model, small_config(Utility::pareto({0.5, 0.5}, {-2.0, -1.0}),
                                                             Utility::power(-1.0))),
                    std::domain_error);
}

TEST_CASE("uniform proportion gap") {
    const auto model = acceptance_model();
    const auto dyn = FactorDynamics::physical(model);
    auto ens = simulate_factor(model, dyn, SimGrid::make(4.0, 40), 4000, 5, v1(0.3));
    attach_functionals(ens, model, dyn);
    const std::vector<double> xs{0.5, 1, 2, 5, 10, 20};

    const auto same = uniform_proportion_gap(Utility::power(-1.0), Utility::power(-1.0), model, ens, xs);
    CHECK(same.sup.value == 0.0);

    const auto pw = uniform_proportion_gap(Utility::power(-2.0), Utility::power(-1.0), model, ens, xs);
    for (const auto& g : pw.per_x) CHECK(g.value == doctest::Approx(pw.sup.value).epsilon(1e-9));

    const auto par = uniform_proportion_gap(Utility::pareto({0.5, 0.5}, {-2.0, -1.0}), Utility::power(-1.0), model,
                                            ens, xs);
    CHECK(par.sup.value > 0.0);
    MESSAGE("Pareto proportion gap attains its sup at x = " << par.argmax_x);
}
