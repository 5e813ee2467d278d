// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dait/rng.hpp"
#include "dait/schedule.hpp"

using namespace dait;

TEST_CASE("fixed-weight schedule: k=0 keeps lambda constant") {
    ScheduleParams p{0.0, 0.3, 0.0, 1.0};
    for (std::int64_t e : {0, 1, 7, 100, 100000}) CHECK(lambda_at(p, e) == doctest::Approx(0.3));
}

TEST_CASE("lambda starts at b") {
    CHECK(lambda_at({0.01, 0.0, 0.0, 1.0}, 0) == 0.0);
    CHECK(lambda_at({0.5, 0.25, 0.0, 1.0}, 0) == 0.25);
}

TEST_CASE("clamping at the top of the ramp") {
    CHECK(lambda_at({0.01, 0.0, 0.0, 1.0}, 150) == 1.0);
    CHECK(lambda_at({0.01, 0.0, 0.0, 1.0}, 99) == doctest::Approx(0.99));
}

TEST_CASE("direct evaluation of k*e + b") {
    CHECK(lambda_at({0.005, 0.1, 0.0, 1.0}, 20) == doctest::Approx(0.2));
}

TEST_CASE("default ramp covers the run") {
    const auto p = ScheduleParams::linear_ramp(30);
    CHECK(lambda_at(p, 0) == 0.0);
    CHECK(lambda_at(p, 30) == doctest::Approx(1.0));
    CHECK(lambda_at(p, 15) == doctest::Approx(0.5));
}

TEST_CASE("negative epoch is rejected") {
    CHECK_THROWS_AS(lambda_at({0.1, 0.0, 0.0, 1.0}, -1), ContractError);
}

TEST_CASE("invalid clamp interval is rejected") {
    CHECK_THROWS_AS(lambda_at({0.1, 0.0, 0.8, 0.2}, 3), ContractError);
}

TEST_CASE("randomized properties: clamping, monotonicity, k=0 constancy, lambda(0)=b") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        ScheduleParams p;
        p.k = rng.uniform(-0.2, 0.2);
        p.b = rng.uniform(-0.5, 1.5);
        p.clamp_lo = rng.uniform(0.0, 0.4);
        p.clamp_hi = p.clamp_lo + rng.uniform(0.0, 0.6);
        const auto e = static_cast<std::int64_t>(rng.uniform_index(500));

        const double v = lambda_at(p, e);
        CHECK(v >= p.clamp_lo);
        CHECK(v <= p.clamp_hi);

        if (p.k >= 0.0) CHECK(lambda_at(p, e + 1) >= v);
        if (p.k == 0.0) CHECK(lambda_at(p, e + 17) == v);

        const double at0 = lambda_at(p, 0);
        CHECK(at0 == std::min(p.clamp_hi, std::max(p.clamp_lo, p.b)));
    }
}
