#include "fixtures.hpp"
#include "qlab/linalg.hpp"
#include "qlab/model.hpp"

#include <doctest.h>

#include <cmath>

using namespace qlab;
using namespace qlab::testing;

TEST_CASE("validate accepts a stable scalar model") {
    const auto m = scalar_model(0.02, 0.0, 0.0, 0.1, 0.0, 0.0, -1.0, 0.2, 0.2);
    const auto rep = validate(m, {0.5});
    CHECK(rep.pass());
    REQUIRE(rep.checks.size() == 4);
    CHECK(rep.checks[0].id == "(i)");
    CHECK(rep.checks[3].id == "(iv)");
}

TEST_CASE("validate rejects an unstable drift") {
    const auto m = scalar_model(0.02, 0.0, 0.0, 0.1, 0.0, 0.0, 1.0, 0.2, 0.2);
    const auto rep = validate(m, {0.5});
    CHECK_FALSE(rep.pass());
    CHECK_FALSE(rep.checks[3].pass);
    CHECK(rep.to_string().find("(iv)") != std::string::npos);
}

TEST_CASE("validate rejects an indefinite quadratic rate") {
    const auto m = scalar_model(0.02, 0.0, -1.0, 0.1, 0.0, 0.0, -1.0, 0.2, 0.2);
    const auto rep = validate(m, {0.5});
    CHECK_FALSE(rep.pass());
    CHECK_FALSE(rep.checks[1].pass);
}

TEST_CASE("validate rejects a singular volatility") {
    const auto m = scalar_model(0.02, 0.0, 0.0, 0.1, 0.0, 0.0, -1.0, 0.2, 0.0);
    CHECK_FALSE(validate(m, {}).checks[0].pass);
}

TEST_CASE("validate is deterministic") {
    const auto m = quadratic();
    CHECK(validate(m, {0.5, 2.0 / 3.0}).to_string() == validate(m, {0.5, 2.0 / 3.0}).to_string());
}

TEST_CASE("structural errors name the field") {
    QtsmCoefficients c = quadratic().coefficients();
    c.A = Mat::Zero(2, 1);
    try {
        (void)QtsmModel::create(c);
        FAIL("expected ModelError");
    } catch (const ModelError& e) {
        CHECK(e.field() == "A");
    }
}

TEST_CASE("asymmetric R2 is rejected") {
    QtsmCoefficients c;
    c.r0 = 0.0;
    c.r1 = Vec::Zero(2);
    c.R2 = Mat{{1.0, 0.5}, {0.0, 1.0}};
    c.a = Vec::Zero(2);
    c.A = Mat::Zero(2, 2);
    c.b = Vec::Zero(2);
    c.B = -Mat::Identity(2, 2);
    c.Lambda = Mat::Identity(2, 2);
    c.Sigma = Mat::Identity(2, 2);
    CHECK_THROWS_AS((void)QtsmModel::create(c), ModelError);
    c.R2(1, 0) = 0.5;
    CHECK_NOTHROW((void)QtsmModel::create(c));
}

TEST_CASE("eval_market arithmetic") {
    const auto m = scalar_model(0.02, 1.0, 2.0, 0.1, 0.0, 0.0, -1.0, 0.2, 0.2);
    CHECK(eval_market(m, v1(0.1)).r == doctest::Approx(0.13).epsilon(1e-15));
    const auto at0 = eval_market(m, v1(0.0));
    CHECK(at0.r == 0.02);
    CHECK(at0.theta[0] == 0.1);
    CHECK(at0.mu[0] == doctest::Approx(0.2 * 0.1 + 0.02).epsilon(1e-15));
    CHECK_THROWS((void)eval_market(m, v1(std::nan(""))));
}

TEST_CASE("constant rate without linear or quadratic terms") {
    const auto m = scalar_model(0.03, 0.0, 0.0, 0.1, 0.4, 0.0, -1.0, 0.2, 0.2);
    for (double y : {-5.0, 0.0, 3.0}) CHECK(m.rate(v1(y)) == 0.03);
}

TEST_CASE("excess return identity and quadratic lower bound on a grid") {
    QtsmCoefficients c;
    c.r0 = 0.04;
    c.r1 = Vec{{0.3, -0.2}};
    c.R2 = Mat{{0.5, 0.1}, {0.1, 0.3}};
    c.a = Vec{{0.1, 0.05}};
    c.A = Mat{{0.2, 0.0}, {0.1, -0.3}};
    c.b = Vec::Zero(2);
    c.B = Mat{{-1.0, 0.2}, {0.0, -0.5}};
    c.Lambda = Mat{{0.2, 0.0}, {0.05, 0.1}};
    c.Sigma = Mat{{0.2, 0.0}, {0.1, 0.3}};
    const auto m = QtsmModel::create(c);
    const auto lb = rate_lower_bound(m);
    REQUIRE(lb.has_value());
    const double expect = c.r0 - 0.5 * c.r1.dot(c.R2.ldlt().solve(c.r1));
    CHECK(*lb == doctest::Approx(expect).epsilon(1e-14));
    for (double u = -3.0; u <= 3.0; u += 0.25)
        for (double v = -3.0; v <= 3.0; v += 0.25) {
            const Vec y{{u, v}};
            const auto p = eval_market(m, y);
            const Vec resid = p.mu - Vec::Constant(2, p.r) - c.Sigma * p.theta;
            CHECK(resid.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + p.mu.cwiseAbs().maxCoeff()));
            CHECK(p.r >= *lb - 1e-14);
        }
}

TEST_CASE("is_stable verdicts") {
    auto v = is_stable(m1(-1.0));
    CHECK(v.stable);
    CHECK(v.max_real_part == doctest::Approx(-1.0));
    v = is_stable(Mat{{0.0, 1.0}, {-1.0, 0.0}});
    CHECK_FALSE(v.stable);
    CHECK(v.max_real_part == doctest::Approx(0.0));
    v = is_stable(Mat{{-2.0, 1.0}, {0.0, -3.0}});
    CHECK(v.stable);
    CHECK(v.max_real_part == doctest::Approx(-2.0));
}

TEST_CASE("expm of a diagonal and a nilpotent matrix") {
    const Mat d = expm(Mat{{1.0, 0.0}, {0.0, -2.0}});
    CHECK(d(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
    CHECK(d(1, 1) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
    const Mat n = expm(Mat{{0.0, 3.0}, {0.0, 0.0}});
    CHECK(n(0, 1) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(n(1, 0) == 0.0);
}
