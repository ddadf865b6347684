#include "qlab/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace qlab;

TEST_CASE("Philox4x32-10 known-answer vectors") {
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are pure functions of (seed, path, stream)") {
    CounterStream a(42, 7), b(42, 7), c(42, 8), d(42, 7, 1);
    bool differs_path = false, differs_stream = false;
    for (int i = 0; i < 64; ++i) {
        const auto x = a.next_u32();
        CHECK(x == b.next_u32());
        differs_path |= x != c.next_u32();
        differs_stream |= x != d.next_u32();
    }
    CHECK(differs_path);
    CHECK(differs_stream);
}

TEST_CASE("uniforms stay inside the open unit interval") {
    CounterStream s(1, 0);
    for (int i = 0; i < 100000; ++i) {
        const double u = s.uniform();
        CHECK_UNARY(u > 0.0 && u < 1.0);
    }
}

TEST_CASE("ziggurat normals have standard moments") {
    CounterStream s(2024, 3);
    const int N = 2000000;
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0, tail = 0;
    for (int i = 0; i < N; ++i) {
        const double z = s.normal();
        m1 += z;
        m2 += z * z;
        m3 += z * z * z;
        m4 += z * z * z * z;
        tail += std::abs(z) > 3.0;
    }
    m1 /= N;
    m2 /= N;
    m3 /= N;
    m4 /= N;
    tail /= N;
    // Tolerances are about 5 standard errors of each moment estimator.
    CHECK(std::abs(m1) < 5.0 * std::sqrt(1.0 / N));
    CHECK(std::abs(m2 - 1.0) < 5.0 * std::sqrt(2.0 / N));
    CHECK(std::abs(m3) < 5.0 * std::sqrt(15.0 / N));
    CHECK(std::abs(m4 - 3.0) < 5.0 * std::sqrt(96.0 / N));
    const double p3 = std::erfc(3.0 / std::sqrt(2.0));
    CHECK(std::abs(tail - p3) < 5.0 * std::sqrt(p3 / N));
}

TEST_CASE("ziggurat tables are monotone") {
    const auto& t = ziggurat_tables();
    for (int i = 0; i < 128; ++i) {
        CHECK(t.ratio[i] >= 0.0);
        CHECK(t.ratio[i] <= 1.0);
    }
}
