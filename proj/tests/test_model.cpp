#include "support.hpp"

using namespace townsend;
using Catch::Approx;

TEST_CASE("h at reference points") {
    CHECK(townsend_h(0.0, {1, 1, 1, 1}) == 0.0);
    CHECK(townsend_h(1.0, {1, 1, 1, 1}) == Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(townsend_h(0.5, {2, 0.5, 1, 1}) == Approx(0.36787944117144233).epsilon(1e-15));
}

TEST_CASE("negative field magnitude is rejected") {
    const ModelParams p{1, 1, 1, 1};
    CHECK_THROWS_AS(townsend_h(-1e-3, p), DomainError);
    CHECK_THROWS_AS(g(-1.0, p), DomainError);
    CHECK_THROWS_AS(g_prime(-1.0, p), DomainError);
    CHECK_THROWS_AS(g_tilde(-1.0, p), DomainError);
}

TEST_CASE("parameter validation") {
    CHECK_NOTHROW(ModelParams{0, 0, 1, 1}.validate());
    CHECK_THROWS_AS((ModelParams{-1, 0, 1, 1}.validate()), DomainError);
    CHECK_THROWS_AS((ModelParams{1, -1, 1, 1}.validate()), DomainError);
    CHECK_THROWS_AS((ModelParams{1, 1, 0, 1}.validate()), DomainError);
    CHECK_THROWS_AS((ModelParams{1, 1, 1, 0}.validate()), DomainError);
    CHECK_THROWS_AS((ModelParams{NAN, 1, 1, 1}.validate()), DomainError);
}

TEST_CASE("without ionization g is the pure diffusion penalty") {
    const ModelParams p{0, 1, 1, 1};
    for (double s : {0.1, 1.0, 7.0}) {
        CHECK(g(s, p) == Approx(-s * s / 4));
        CHECK(g(s, p) < 0.0);
        CHECK(g_tilde(s, p) == Approx(-s * s / 4));
    }
}

TEST_CASE("g_prime matches central differences") {
    const ModelParams p{10, 0.1, 1, 1};
    for (double s : {0.5, 1.0, 5.0}) {
        const double d = 1e-5 * s;
        const double fd = (g(s + d, p) - g(s - d, p)) / (2 * d);
        CHECK(fixture::rel(g_prime(s, p), fd) < 1e-6);
        const double fdh = (townsend_h(s + d, p) - townsend_h(s - d, p)) / (2 * d);
        CHECK(fixture::rel(townsend_h_prime(s, p), fdh) < 1e-6);
        const double fdt = (g_tilde(s + d, p) - g_tilde(s - d, p)) / (2 * d);
        CHECK(fixture::rel(g_tilde_prime(s, p), fdt) < 1e-8);
    }
}

TEST_CASE("zeros of g satisfy t = (b/4a) e^t with t = b/s") {
    const ModelParams p{50, 0.01, 1, 1};
    // g > 0 at s = 2a and g < 0 for s large; bisect on s in [2a, 8a].
    double lo = 2 * p.a, hi = 8 * p.a;
    REQUIRE(g(lo, p) > 0.0);
    REQUIRE(g(hi, p) < 0.0);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid, p) > 0.0 ? lo : hi) = mid;
    }
    const double s = 0.5 * (lo + hi);
    const double t = p.b / s;
    CHECK(std::abs(t - p.b / (4 * p.a) * std::exp(t)) < 1e-10);
}

TEST_CASE("g_tilde is maximized at 2a with value a^2") {
    for (double a : {0.5, 3.0, 50.0}) {
        const ModelParams p{a, 0, 1, 1};
        CHECK(g_tilde(2 * a, p) == Approx(a * a));
        CHECK(g_tilde(2 * a * 1.01, p) < a * a);
        CHECK(g_tilde(2 * a * 0.99, p) < a * a);
    }
}

TEST_CASE("g is dominated by g_tilde and converges to it as b vanishes") {
    const ModelParams p{3, 0.2, 1, 1};
    for (int k = 0; k <= 60; ++k) {
        const double s = std::pow(10.0, -3.0 + 0.1 * k);
        CHECK(g(s, p) < g_tilde(s, p));
    }
    const ModelParams tiny{3, 1e-6, 1, 1};
    for (int k = 0; k <= 20; ++k) {
        const double s = 0.1 * std::pow(100.0, k / 20.0);
        CHECK(fixture::rel(g(s, tiny), g_tilde(s, tiny)) < 1e-4);
    }
}

TEST_CASE("h is nonnegative and increasing") {
    const ModelParams p{2, 1.5, 1, 1};
    double prev = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double v = townsend_h(0.05 * k, p);
        CHECK(v > prev);
        CHECK(townsend_h_prime(0.05 * k, p) > 0.0);
        prev = v;
    }
}
