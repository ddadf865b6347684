#include "fixtures.hpp"
#include "qlab/pricing.hpp"

#include <doctest.h>

#include <cmath>

using namespace qlab;
using namespace qlab::testing;

TEST_CASE("bond price at zero maturity and under a constant rate") {
    const auto model = quadratic();
    for (double y : {-1.0, 0.0, 2.0}) CHECK(bond_price(model, 0.0, v1(y)) == 1.0);
    const auto flat = scalar_model(0.03, 0.0, 0.0, 0.1, 0.4, 0.0, -1.0, 0.2, 0.2);
    for (double T : {1.0, 5.0, 10.0}) CHECK(bond_price(flat, T, v1(0.7)) == doctest::Approx(std::exp(-0.03 * T)).epsilon(1e-12));
}

TEST_CASE("E[H^gamma] endpoints and the two routes") {
    const auto model = quadratic();
    const Vec y = v1(0.2);
    CHECK(eh_gamma_closed_form(model, 0.0, 5.0, y) == 1.0);
    CHECK(eh_gamma_closed_form(model, 0.5, 0.0, y) == 1.0);
    const double bond = bond_price(model, 5.0, y);
    CHECK(std::abs(eh_gamma_closed_form(model, 1.0, 5.0, y) / bond - 1.0) <= 1e-10);
    for (double g : {0.2, 0.5, 0.8})
        CHECK(eh_gamma_closed_form(model, g, 5.0, y) ==
              doctest::Approx(eh_gamma_direct(model, g, 5.0, y)).epsilon(1e-9));
    CHECK_THROWS_AS((void)eh_gamma_closed_form(model, 1.5, 5.0, y), std::domain_error);
    CHECK_THROWS_AS((void)eh_gamma_closed_form(model, -0.1, 5.0, y), std::domain_error);
}

TEST_CASE("log E[H^gamma] is convex in gamma") {
    const auto model = quadratic();
    const Vec y = v1(0.2);
    // gamma grid {0, q, 1+alpha, 1} for the acceptance pair, then a denser one.
    for (const auto& grid : {std::vector<double>{0.0, 0.5, 2.0 / 3.0, 1.0},
                             std::vector<double>{0.0, 0.1, 0.2, 0.35, 0.5, 0.65, 0.8, 0.9, 1.0}}) {
        std::vector<double> l;
        for (double g : grid) l.push_back(std::log(eh_gamma_closed_form(model, g, 8.0, y)));
        for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
            const double w = (grid[i] - grid[i - 1]) / (grid[i + 1] - grid[i - 1]);
            CHECK(l[i] <= (1.0 - w) * l[i - 1] + w * l[i + 1] + 1e-12);
        }
    }
}

TEST_CASE("bond decay is monotone and exponential") {
    const auto model = acceptance_model();
    std::vector<double> hs;
    for (int k = 0; k <= 40; ++k) hs.push_back(k);
    const auto d = bond_decay(model, v1(0.3), hs);
    CHECK(d.strictly_decreasing);
    CHECK(d.final_slope > 0.0);
    CHECK(d.slope_variation < 0.05);
}

TEST_CASE("bond curve agrees with single prices") {
    const auto model = quadratic();
    const auto curve = bond_curve(model, {0.0, 1.0, 5.0, 10.0});
    for (std::size_t i = 0; i < curve.horizons.size(); ++i)
        CHECK(curve.price(i, v1(0.3)) == doctest::Approx(bond_price(model, curve.horizons[i], v1(0.3))).epsilon(1e-12));
    CHECK_THROWS((void)bond_curve(model, {1.0, 1.0}));
}

TEST_CASE("CRRA feedback: log is myopic, zero opportunity set gives zero") {
    const auto model = quadratic();
    const Vec y = v1(0.4);
    const auto log = crra_feedback(model, 0.0, 0.0, 5.0, 2.0, y);
    const Vec expect = 2.0 * model.sigma_t_inv() * model.theta(y);
    CHECK((log.total - expect).norm() <= 1e-14);
    CHECK(log.hedging.norm() == 0.0);

    const auto quiet = scalar_model(0.05, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.3, 0.2);
    CHECK(crra_feedback(quiet, -1.0, 0.0, 5.0, 1.0, y).total.norm() == 0.0);

    const auto pw = crra_feedback(model, -1.0, 0.0, 5.0, 1.0, y);
    CHECK((pw.myopic + pw.hedging - pw.total).norm() <= 1e-15);
    CHECK((crra_feedback(model, -1.0, 0.0, 5.0, 2.0, y).total - 2.0 * pw.total).norm() <= 1e-14);
}

TEST_CASE("myopic measure coefficients at gamma 0 and 1") {
    const auto model = quadratic();
    const auto c0 = myopic_measure_coeffs(model, 0.0, 5.0);
    for (double t : {0.0, 2.5, 5.0}) {
        CHECK((c0.drift_slope(t) - model.B()).norm() == 0.0);
        CHECK((c0.drift_intercept(t) - model.b()).norm() == 0.0);
    }
    const auto flat = scalar_model(0.03, 0.0, 0.0, 0.1, 0.4, 0.05, -1.0, 0.2, 0.2);
    const auto c1 = myopic_measure_coeffs(flat, 1.0, 5.0);
    for (double t : {0.0, 2.5, 5.0}) {
        CHECK(c1.drift_slope(t)(0, 0) == doctest::Approx(-1.0 - 0.2 * 0.4).epsilon(1e-14));
        CHECK(c1.drift_intercept(t)[0] == doctest::Approx(0.05 - 0.2 * 0.1).epsilon(1e-14));
    }
}
