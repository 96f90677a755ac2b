#include <catch2/catch_amalgamated.hpp>

#include <lzforge/pulse.hpp>

#include <cmath>

using namespace lzforge;

TEST_CASE("window_amplitude shape") {
    const Window w{15.0, 2.8};
    const double lr = 120.24;
    const LinearOscillating windowed{0.0, lr, 1.0, 0.0, w};
    auto wa = [&](double t) { return window_amplitude(windowed, t); };
    // flat inside |t| < (T - Ts)/2 = 6.1
    CHECK(wa(0.0) == Catch::Approx(lr));
    CHECK(wa(6.0999) == Catch::Approx(lr));
    CHECK(wa(-6.0999) == Catch::Approx(lr));
    // zero beyond |t| > (T + Ts)/2 = 8.9
    CHECK(wa(8.9001) == 0.0);
    CHECK(wa(-50.0) == 0.0);
    // ramp samples, cross-checked against the piecewise-linear closed form
    CHECK_THAT(wa(7.5),
               Catch::Matchers::WithinRel(60.12, 1e-13));
    CHECK_THAT(wa(8.85),
               Catch::Matchers::WithinRel(2.1471428571428571, 1e-13));
    CHECK_THAT(wa(-6.3),
               Catch::Matchers::WithinRel(111.65142857142857, 1e-13));
    // even in t
    for (double t : {0.3, 4.2, 6.5, 7.7, 8.89}) {
        CHECK_THAT(wa(-t),
                   Catch::Matchers::WithinRel(wa(t), 1e-14));
    }
    // continuity at the two breakpoints
    CHECK_THAT(wa(6.1 - 1e-9),
               Catch::Matchers::WithinAbs(wa(6.1 + 1e-9), 1e-5));
    CHECK_THAT(wa(8.9 - 1e-9),
               Catch::Matchers::WithinAbs(0.0, 1e-5));
}

TEST_CASE("linear oscillating pulse evaluation") {
    LinearOscillating p{10.0, 120.24, 50.0, 0.4, std::nullopt};
    for (double t : {-3.0, -0.7, 0.0, 1.1, 2.9}) {
        const double expect = 10.0 * t + 120.24 * std::cos(50.0 * t + 0.4);
        CHECK_THAT(evaluate_pulse(p, t), Catch::Matchers::WithinRel(expect, 1e-14));
    }
    // windowed version: amplitude is modulated, linear term stays
    p.window = Window{15.0, 2.8};
    const double t = 7.5;
    const double expect = 10.0 * t + 60.12 * std::cos(50.0 * t + 0.4);
    CHECK_THAT(evaluate_pulse(p, t), Catch::Matchers::WithinRel(expect, 1e-13));
    const double far = 20.0;
    CHECK_THAT(evaluate_pulse(p, far), Catch::Matchers::WithinRel(10.0 * far, 1e-14));
}

TEST_CASE("linear oscillating validation") {
    LinearOscillating p{10.0, 0.0, 50.0, 0.0, std::nullopt};
    CHECK_NOTHROW(validate(p));
    p.window = Window{15.0, 2.8};
    CHECK_NOTHROW(validate(p));
    p.window = Window{2.0, 2.8};  // Ts >= T
    CHECK_THROWS_AS(validate(p), std::invalid_argument);
    p.window = Window{15.0, 0.0};
    CHECK_THROWS_AS(validate(p), std::invalid_argument);
}

TEST_CASE("erf_tan profile") {
    // eps0 = 50, lambda_erf = 0.4, T = 10, delta = 1;
    // reference values computed with 50-digit arithmetic
    ErfTan p{50.0, 0.4, 10.0, 1.0};
    CHECK_NOTHROW(validate(p));
    CHECK_THAT(evaluate_pulse(p, -5.0), Catch::Matchers::WithinRel(50.0, 1e-12));
    CHECK_THAT(evaluate_pulse(p, -2.5),
               Catch::Matchers::WithinRel(3.7927377024030303, 1e-12));
    CHECK_THAT(evaluate_pulse(p, -1.0),
               Catch::Matchers::WithinRel(0.78814877289053466, 1e-12));
    CHECK_THAT(evaluate_pulse(p, 0.5),
               Catch::Matchers::WithinRel(-0.36162124740227527, 1e-12));
    CHECK_THAT(evaluate_pulse(p, 3.0),
               Catch::Matchers::WithinRel(-6.5087333002992505, 1e-12));
    CHECK_THAT(evaluate_pulse(p, 5.0), Catch::Matchers::WithinRel(-50.0, 1e-12));
    // antisymmetric
    for (double t : {0.25, 1.5, 3.75, 4.9}) {
        CHECK_THAT(evaluate_pulse(p, -t),
                   Catch::Matchers::WithinRel(-evaluate_pulse(p, t), 1e-12));
    }
    // monotone decreasing
    double prev = evaluate_pulse(p, -5.0);
    for (int k = 1; k <= 100; ++k) {
        const double cur = evaluate_pulse(p, -5.0 + 0.1 * k);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK_THROWS_AS(evaluate_pulse(p, 5.1), std::domain_error);
    CHECK_THROWS_AS(validate(ErfTan{0.0, 0.4, 10.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate(ErfTan{50.0, 0.4, -10.0, 1.0}), std::invalid_argument);
}

TEST_CASE("pixelated pulse semantics") {
    Pixelated p{{1.0, 2.0, 3.0, 4.0}, 0.5};
    CHECK_NOTHROW(validate(p));
    CHECK(evaluate_pulse(p, 0.0) == 1.0);
    CHECK(evaluate_pulse(p, 0.49) == 1.0);
    CHECK(evaluate_pulse(p, 0.5) == 2.0);
    CHECK(evaluate_pulse(p, 1.999) == 4.0);
    CHECK_THROWS_AS(validate(Pixelated{{}, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(validate(Pixelated{{1.0}, 0.0}), std::invalid_argument);
}

TEST_CASE("pixelate samples midpoints") {
    LinearOscillating lin{2.0, 0.0, 1.0, 0.0, std::nullopt};
    const Pixelated px = pixelate(lin, 10, -1.0, 1.0);
    REQUIRE(px.values.size() == 10);
    CHECK_THAT(px.dt, Catch::Matchers::WithinRel(0.2, 1e-15));
    for (std::size_t j = 0; j < 10; ++j) {
        const double t = -1.0 + (static_cast<double>(j) + 0.5) * 0.2;
        CHECK_THAT(px.values[j], Catch::Matchers::WithinAbs(2.0 * t, 1e-14));
    }
}

TEST_CASE("gaussian_smooth preserves constants and locality") {
    // constant input is unchanged (kernel renormalized at the edges)
    std::vector<double> c(50, 3.25);
    const auto sc = gaussian_smooth_values(c, 2.5);
    REQUIRE(sc.size() == c.size());
    for (double v : sc) CHECK_THAT(v, Catch::Matchers::WithinRel(3.25, 1e-12));

    // a delta spike spreads symmetrically and keeps its mass in the interior
    std::vector<double> spike(101, 0.0);
    spike[50] = 1.0;
    const auto ss = gaussian_smooth_values(spike, 3.0);
    double sum = 0.0;
    for (double v : ss) sum += v;
    CHECK_THAT(sum, Catch::Matchers::WithinRel(1.0, 1e-10));
    for (int k = 1; k <= 10; ++k)
        CHECK_THAT(ss[50 - k], Catch::Matchers::WithinRel(ss[50 + k], 1e-12));
    CHECK(ss[50] > ss[49]);
    // 4 sigma truncation
    CHECK(ss[50 + 13] == 0.0);

    // sigma <= 0 is the identity
    const auto id = gaussian_smooth_values(spike, 0.0);
    CHECK(id == spike);
}
