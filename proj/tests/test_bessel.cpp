#include <catch2/catch_amalgamated.hpp>

#include <lzforge/bessel.hpp>

#include <cmath>

using namespace lzforge;

namespace {

// mixed tolerance: relative away from zeros, absolute floor near them
void check_close(double got, double ref, double rel = 5e-13, double abs_floor = 2e-15) {
    CHECK(std::abs(got - ref) <= std::max(rel * std::abs(ref), abs_floor));
}

}  // namespace

TEST_CASE("bessel_j reference values") {
    // 50-digit arithmetic references
    const double j01 = 2.404825557695773;
    check_close(bessel_j(1, j01), 0.51914749728946674);
    check_close(bessel_j(0, 10.0), -0.24593576445134834);
    check_close(bessel_j(3, j01), 0.19899990535769085);
    check_close(bessel_j(60, 499.5), 0.033867531331596922);
    // J0 at its first zero: tiny value, absolute-floor regime
    check_close(bessel_j(0, j01), -1.2011950073676858e-16);
}

TEST_CASE("bessel_j reflection identities") {
    check_close(bessel_j(-1, 2.5), -0.49709410246427404);
    check_close(bessel_j(-3, 10.0), -0.058379379305186812);
    check_close(bessel_j(2, -7.5), -0.23027341052579026);
    check_close(bessel_j(-5, -3.25), 0.059903888098560425);
    // J_{-m}(x) = (-1)^m J_m(x)
    for (int m = 0; m <= 8; ++m) {
        for (double x : {0.7, 3.3, 11.0}) {
            const double sign = (m % 2 == 0) ? 1.0 : -1.0;
            check_close(bessel_j(-m, x), sign * bessel_j(m, x), 1e-13);
        }
    }
    // J_m(-x) = (-1)^m J_m(x)
    for (int m = 0; m <= 8; ++m) {
        for (double x : {0.7, 3.3, 11.0}) {
            const double sign = (m % 2 == 0) ? 1.0 : -1.0;
            check_close(bessel_j(m, -x), sign * bessel_j(m, x), 1e-13);
        }
    }
}

TEST_CASE("bessel_j special arguments") {
    CHECK(bessel_j(0, 0.0) == 1.0);
    for (int m = 1; m <= 6; ++m) CHECK(bessel_j(m, 0.0) == 0.0);
    // high order, small argument: far beyond the turning point, essentially zero
    CHECK(std::abs(bessel_j(80, 1.0)) < 1e-120);
    // cross-check against the standard library where it exists
    for (double x : {0.5, 1.0, 4.0, 9.5, 30.0}) {
        check_close(bessel_j(0, x), std::cyl_bessel_j(0.0, x), 1e-12);
        check_close(bessel_j(1, x), std::cyl_bessel_j(1.0, x), 1e-12);
        check_close(bessel_j(5, x), std::cyl_bessel_j(5.0, x), 1e-12);
    }
}

TEST_CASE("bessel_j recurrence consistency") {
    // 2m/x J_m = J_{m-1} + J_{m+1}
    for (double x : {1.7, 6.2, 25.0}) {
        for (int m = 1; m <= 12; ++m) {
            const double lhs = 2.0 * m / x * bessel_j(m, x);
            const double rhs = bessel_j(m - 1, x) + bessel_j(m + 1, x);
            CHECK_THAT(lhs, Catch::Matchers::WithinAbs(rhs, 1e-12));
        }
    }
}

TEST_CASE("bessel_j normalization sum") {
    // J_0^2 + 2 sum_{m>=1} J_m^2 = 1
    for (double x : {0.9, 5.0, 17.5, 60.0}) {
        double s = bessel_j(0, x) * bessel_j(0, x);
        const int top = static_cast<int>(x) + 40;
        for (int m = 1; m <= top; ++m) {
            const double j = bessel_j(m, x);
            s += 2.0 * j * j;
        }
        CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-10));
    }
}
