#include "fixtures.hpp"
#include "qlab/montecarlo.hpp"
#include "qlab/pricing.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

using namespace qlab;
using namespace qlab::testing;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_functionals(const Functionals& a, const Functionals& b) {
    return same_bits(a.int_r, b.int_r) && same_bits(a.stoch_int_theta, b.stoch_int_theta) &&
           same_bits(a.int_theta_sq, b.int_theta_sq) && same_bits(a.H, b.H) && same_bits(a.L, b.L);
}

PathEnsemble simulate(const QtsmModel& model, double T, std::size_t nsteps, std::size_t npaths, std::uint64_t seed,
                      const Vec& y0, std::size_t threads = 1) {
    const auto dyn = FactorDynamics::physical(model);
    SimOptions o;
    o.threads = threads;
    auto e = simulate_factor(model, dyn, SimGrid::make(T, nsteps), npaths, seed, y0, o);
    attach_functionals(e, model, dyn);
    return e;
}

QtsmModel two_factor() {
    QtsmCoefficients c;
    c.r0 = 0.04;
    c.r1 = Vec{{0.3, -0.2}};
    c.R2 = Mat{{0.5, 0.1}, {0.1, 0.3}};
    c.a = Vec{{0.1, 0.05}};
    c.A = Mat{{0.2, 0.0}, {0.1, -0.3}};
    c.b = Vec{{0.01, 0.0}};
    c.B = Mat{{-1.0, 0.2}, {0.0, -0.5}};
    c.Lambda = Mat{{0.2, 0.0}, {0.05, 0.1}};
    c.Sigma = Mat{{0.2, 0.0}, {0.1, 0.3}};
    return QtsmModel::create(c);
}

}  // namespace

TEST_CASE("grid validation") {
    CHECK_THROWS((void)SimGrid::make(0.0, 10));
    CHECK_THROWS((void)SimGrid::make(1.0, 1));
    CHECK(SimGrid::per_unit(2.0, 50).nsteps == 100);
    CHECK(SimGrid::per_unit(0.01, 50).nsteps == 2);
}

TEST_CASE("driftless unit diffusion has i.i.d. Gaussian increments") {
    const auto model = scalar_model(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0);
    const std::size_t N = 20000, steps = 10;
    const auto e = simulate_factor(model, FactorDynamics::physical(model), SimGrid::make(1.0, steps), N, 5, v1(0.0));
    const double dt = 0.1;
    std::vector<double> inc, sq;
    for (std::size_t p = 0; p < N; ++p)
        for (std::size_t k = 0; k < steps; ++k) {
            const double d = e.Y_at(p, k + 1, 0) - e.Y_at(p, k, 0);
            inc.push_back(d);
            sq.push_back(d * d);
            CHECK(std::abs(d - e.dW[p * steps + k]) < 1e-12);
        }
    const auto mi = estimate(inc), ms = estimate(sq);
    CHECK(std::abs(mi.mean) < 4.0 * std::sqrt(dt / static_cast<double>(inc.size())));
    CHECK(std::abs(ms.mean - dt) < 4.0 * ms.se);
}

TEST_CASE("zero diffusion follows the linear ODE") {
    const auto model = scalar_model(0.0, 0.0, 0.0, 0.0, 0.0, 0.5, -1.0, 0.0, 1.0);
    const auto e = simulate_factor(model, FactorDynamics::physical(model), SimGrid::make(3.0, 30), 4, 1, v1(2.0));
    for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t k = 0; k <= 30; ++k) {
            const double t = 0.1 * static_cast<double>(k);
            CHECK(std::abs(e.Y_at(p, k, 0) - (2.0 * std::exp(-t) + 0.5 * (1.0 - std::exp(-t)))) < 1e-10);
        }
}

TEST_CASE("OU stationary variance") {
    const auto model = scalar_model(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 1.0);
    const auto e = simulate_factor(model, FactorDynamics::physical(model), SimGrid::make(12.0, 24), 40000, 9, v1(0.0));
    std::vector<double> sq(e.npaths);
    for (std::size_t p = 0; p < e.npaths; ++p) sq[p] = e.YT[p] * e.YT[p];
    const auto v = estimate(sq);
    CHECK(std::abs(v.mean - 0.5) < 4.0 * v.se);
}

TEST_CASE("constant rate with zero market price of risk gives a deterministic deflator") {
    const auto model = scalar_model(0.04, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.3, 0.2);
    const auto e = simulate(model, 5.0, 100, 200, 3, v1(0.1));
    for (double h : e.f.H) CHECK(h == doctest::Approx(std::exp(-0.2)).epsilon(1e-14));
}

TEST_CASE("deflator is bit-consistent with its stored components") {
    const auto e = simulate(quadratic(), 2.0, 40, 500, 4, v1(0.2));
    for (std::size_t p = 0; p < e.npaths; ++p)
        CHECK(e.f.H[p] == std::exp(-e.f.int_r[p] - e.f.stoch_int_theta[p] - 0.5 * e.f.int_theta_sq[p]));
}

TEST_CASE("deterministic factor sensitivity L_T") {
    const auto model = scalar_model(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.2, 0.2);
    const auto e = simulate(model, 1.0, 2000, 8, 2, v1(0.0));
    for (std::size_t p = 0; p < e.npaths; ++p) CHECK(std::abs(e.f.L[p] - (1.0 - std::exp(-1.0))) <= 1e-6);
}

TEST_CASE("density process is a martingale") {
    SUBCASE("constant market price of risk") {
        const auto model = scalar_model(0.02, 0.0, 0.0, 0.4, 0.0, 0.0, -1.0, 0.2, 0.2);
        const auto e = simulate(model, 3.0, 30, 40000, 11, v1(0.0));
        std::vector<double> z(e.npaths);
        for (std::size_t p = 0; p < e.npaths; ++p) z[p] = std::exp(-e.f.stoch_int_theta[p] - 0.5 * e.f.int_theta_sq[p]);
        const auto est = estimate(z);
        CHECK(std::abs(est.mean - 1.0) < 3.0 * est.se);
    }
    SUBCASE("affine market price of risk, two factors") {
        const auto model = two_factor();
        const auto e = simulate(model, 2.0, 200, 20000, 12, Vec{{0.1, -0.2}});
        std::vector<double> z(e.npaths);
        for (std::size_t p = 0; p < e.npaths; ++p) z[p] = std::exp(-e.f.stoch_int_theta[p] - 0.5 * e.f.int_theta_sq[p]);
        const auto est = estimate(z);
        CHECK(std::abs(est.mean - 1.0) < 4.0 * est.se);
    }
}

TEST_CASE("estimator oracles") {
    const std::vector<double> ones{1, 1, 1}, pair{0, 2};
    auto e = estimate(ones);
    CHECK(e.mean == 1.0);
    CHECK(e.se == 0.0);
    e = estimate(pair);
    CHECK(e.mean == 1.0);
    CHECK(e.se == doctest::Approx(1.0).epsilon(1e-15));
    const std::vector<double> zeros{0, 0};
    CHECK_THROWS_AS((void)estimate(pair, zeros), std::domain_error);
    CHECK_THROWS((void)estimate(std::vector<double>{}));
    const std::vector<double> w{1, 3};
    CHECK(estimate(pair, w).mean == doctest::Approx(1.5));
}

TEST_CASE("standard error halves when paths quadruple") {
    const auto model = quadratic();
    const auto small = simulate(model, 2.0, 20, 10000, 21, v1(0.2));
    const auto large = simulate(model, 2.0, 20, 40000, 22, v1(0.2));
    const double ratio = estimate(small.f.H).se / estimate(large.f.H).se;
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("results do not depend on the worker count") {
    const auto model = two_factor();
    const auto e1 = simulate(model, 1.5, 30, 5000, 77, Vec{{0.1, 0.0}}, 1);
    for (std::size_t t : {2u, 8u}) {
        const auto et = simulate(model, 1.5, 30, 5000, 77, Vec{{0.1, 0.0}}, t);
        CHECK(same_bits(e1.Y, et.Y));
        CHECK(same_bits(e1.dW, et.dW));
        CHECK(same_functionals(e1.f, et.f));
        CHECK(e1.id == et.id);
    }
}

TEST_CASE("fused horizons reproduce the two-stage pipeline bit for bit") {
    for (const auto& model : {quadratic(), two_factor()}) {
        const Vec y0 = Vec::Constant(model.m(), 0.1);
        const auto dyn = FactorDynamics::physical(model);
        SimOptions o;
        o.threads = 2;
        const auto fused = simulate_horizons(model, dyn, {0.5, 1.0, 2.0}, 20, 3000, 5, y0, o);
        REQUIRE(fused.size() == 3);
        for (const auto& f : fused) {
            auto e = simulate_factor(model, dyn, f.grid, 3000, 5, y0);
            attach_functionals(e, model, dyn);
            CHECK(same_functionals(e.f, f.f));
            CHECK(same_bits(e.YT, f.YT));
            CHECK(e.id == f.id);
        }
    }
}

TEST_CASE("myopic-measure simulation reproduces its own pipeline") {
    const auto model = quadratic();
    const auto coeffs = myopic_measure_coeffs(model, 0.5, 2.0);
    const auto dyn = FactorDynamics::myopic(model, coeffs);
    const auto fused = simulate_horizons(model, dyn, {2.0}, 25, 1000, 8, v1(0.2));
    auto e = simulate_factor(model, dyn, SimGrid::make(2.0, 50), 1000, 8, v1(0.2));
    attach_functionals(e, model, dyn);
    CHECK(same_functionals(e.f, fused[0].f));
    CHECK_THROWS((void)simulate_factor(model, dyn, SimGrid::make(3.0, 50), 10, 8, v1(0.2)));
}

TEST_CASE("convergence study") {
    SUBCASE("constant rate has no discretization bias") {
        const auto model = scalar_model(0.04, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.3, 0.2);
        const auto rep = convergence_study(model, FactorDynamics::physical(model), 2.0, {4, 8, 16}, 500, 1, v1(0.0),
                                           [](const PathEnsemble& e, std::size_t p) { return e.f.H[p]; });
        for (const auto& l : rep.levels) CHECK(std::abs(l.bias) < 1e-15);
    }
    SUBCASE("affine-rate bond bias shrinks at second order") {
        const auto model = scalar_model(0.02, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.05, 0.2);
        const auto rep = convergence_study(model, FactorDynamics::physical(model), 1.0, {5, 10, 20, 40}, 20000, 3,
                                           v1(1.0), [](const PathEnsemble& e, std::size_t p) { return e.f.H[p]; });
        REQUIRE(rep.levels.size() == 4);
        for (std::size_t i = 0; i + 1 < rep.levels.size(); ++i)
            CHECK(std::abs(rep.levels[i].bias) >= 3.5 * std::abs(rep.levels[i + 1].bias));
        CHECK(rep.extrapolated == doctest::Approx(bond_price(model, 1.0, v1(1.0))).epsilon(1e-3));
    }
    SUBCASE("deterministic L_T quadrature error") {
        const auto model = scalar_model(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.2, 0.2);
        const auto rep = convergence_study(model, FactorDynamics::physical(model), 1.0, {500, 1000, 2000}, 4, 1,
                                           v1(0.0), [](const PathEnsemble& e, std::size_t p) { return e.f.L[p]; });
        CHECK(std::abs(rep.levels.back().value.mean - (1.0 - std::exp(-1.0))) < 1e-6);
    }
    CHECK_THROWS((void)convergence_study(quadratic(), FactorDynamics::physical(quadratic()), 1.0, {3, 8}, 10, 1,
                                         v1(0.0), [](const PathEnsemble& e, std::size_t p) { return e.f.H[p]; }));
}

TEST_CASE("binary functional dump round trip") {
    const auto e = simulate(two_factor(), 1.0, 20, 300, 6, Vec{{0.0, 0.1}});
    std::stringstream ss;
    write_functionals(ss, e);
    const auto r = read_functionals(ss);
    CHECK(r.npaths == e.npaths);
    CHECK(r.seed == e.seed);
    CHECK(r.grid.nsteps == e.grid.nsteps);
    CHECK(r.grid.T == e.grid.T);
    CHECK(r.m == e.m);
    CHECK(r.model_hash == e.model_hash);
    CHECK(same_functionals(r.f, e.f));
    std::stringstream bad("not a dump");
    CHECK_THROWS((void)read_functionals(bad));
}

TEST_CASE("empirical Hoelder bound holds on every ensemble") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto e = simulate(quadratic(), 4.0, 40, 5000, seed, v1(0.2));
        for (auto [q, alpha] : {std::pair{0.5, -1.0 / 3.0}, std::pair{0.0, -0.5}, std::pair{0.25, 0.0}}) {
            const auto h = empirical_holder(e, q, alpha);
            CHECK(h.holds);
            CHECK(h.lhs <= h.rhs * (1.0 + 1e-12));
        }
    }
    const auto e = simulate(quadratic(), 1.0, 10, 100, 1, v1(0.0));
    CHECK_THROWS_AS((void)empirical_holder(e, 0.5, -0.6), std::domain_error);
}

TEST_CASE("dimension mismatches are rejected") {
    const auto model = quadratic();
    CHECK_THROWS((void)simulate_factor(model, FactorDynamics::physical(model), SimGrid::make(1.0, 4), 10, 1,
                                       Vec::Zero(2)));
    CHECK_THROWS((void)simulate_factor(model, FactorDynamics::physical(model), SimGrid::make(1.0, 4), 0, 1, v1(0.0)));
}
