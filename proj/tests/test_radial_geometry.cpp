#include "support.hpp"

#include <random>

using namespace townsend;
using Catch::Approx;

namespace {

/// Interior values of the discrete harmonic function with H = 0 on the anode, 1 on the cathode.
Grid discrete_harmonic(const RadialMesh& mesh, ElectrodeOrientation o) {
    Grid lifted = mesh.zeros();
    lifted[mesh.cathode_index(o)] = 1.0;
    // L(H) = 0 with H = lifted + W, W = 0 on the boundary  =>  L W = -L lifted.
    const auto rhs = radial_laplacian(lifted, mesh);
    Grid neg(rhs.size());
    for (std::size_t j = 0; j < rhs.size(); ++j) neg[j] = -rhs[j];
    auto W = poisson_solve(neg, mesh);
    for (std::size_t j = 0; j < W.size(); ++j) W[j] += lifted[j];
    return W;
}

double harmonic_error(int d, std::size_t n) {
    RadialMesh mesh(d, 1.0, d == 2 ? std::exp(1.0) : 2.0, n);
    const auto f = harmonic_potential(mesh, fixture::inner_anode());
    const auto H = discrete_harmonic(mesh, fixture::inner_anode());
    double e = 0.0;
    for (std::size_t j = 0; j < mesh.size(); ++j) e = std::max(e, std::abs(H[j] - f.H[j]));
    return e;
}

}  // namespace

TEST_CASE("mesh construction and weights") {
    RadialMesh m(3, 1.0, 2.0, 9);
    CHECK(m.size() == 11);
    CHECK(m.dr() == Approx(0.1));
    CHECK(m.r(0) == 1.0);
    CHECK(m.r(10) == 2.0);
    CHECK(m.weights()[5] == Approx(1.5 * 1.5 * 0.1));
    CHECK_THROWS_AS(RadialMesh(3, 0.0, 2.0, 10), DomainError);
    CHECK_THROWS_AS(RadialMesh(4, 1.0, 2.0, 10), DomainError);
    CHECK_THROWS_AS(RadialMesh(3, 2.0, 1.0, 10), DomainError);
    CHECK_THROWS_AS(RadialMesh(2, 1.0, 2.0, 2), DomainError);
}

TEST_CASE("closed-form harmonic potential") {
    RadialMesh m(3, 1.0, 2.0, 9);  // r = 1.5 is node 5
    const auto f = harmonic_potential(m, fixture::inner_anode());
    CHECK(f.H[5] == Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(f.H[0] == 0.0);
    CHECK(f.H[10] == 1.0);
    CHECK(f.dH[0] == Approx(2.0));
    for (std::size_t j = 1; j <= m.interior(); ++j) {
        CHECK(f.H[j] > 0.0);
        CHECK(f.H[j] < 1.0);
    }
    const auto g = harmonic_potential(m, fixture::outer_anode());
    CHECK(g.H[0] == 1.0);
    CHECK(g.H[10] == 0.0);
    for (double v : g.dH) CHECK(v < 0.0);
}

TEST_CASE("two-dimensional harmonic potential against a discrete Poisson solve") {
    RadialMesh m(2, 1.0, std::exp(1.0), 199);  // r = sqrt(e) is not a node; check the formula directly
    CHECK(harmonic_value(2, std::exp(0.5), 1.0, std::exp(1.0)) == Approx(0.5).epsilon(1e-15));
    const auto f = harmonic_potential(m, fixture::inner_anode());
    const auto H = discrete_harmonic(m, fixture::inner_anode());
    double e = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) e = std::max(e, std::abs(H[j] - f.H[j]));
    CHECK(e < 10 * m.dr() * m.dr());
}

TEST_CASE("harmonic potential converges at second order in both dimensions") {
    for (int d : {2, 3}) {
        const double e1 = harmonic_error(d, 49), e2 = harmonic_error(d, 99);
        CHECK(std::log2(e1 / e2) >= 1.8);
    }
}

TEST_CASE("radial Laplacian") {
    RadialMesh m(3, 1.0, 2.0, 50);
    Grid c(m.size(), 3.7), r2(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) r2[j] = m.r(j) * m.r(j);
    const auto Lc = radial_laplacian(c, m);
    const auto Lr2 = radial_laplacian(r2, m);
    for (std::size_t j = 1; j <= m.interior(); ++j) {
        CHECK(std::abs(Lc[j]) < 1e-9);
        CHECK(std::abs(Lr2[j] - 6.0) < 2 * m.dr() * m.dr());
    }
    const auto f = harmonic_potential(m, fixture::inner_anode());
    CHECK(max_abs(radial_laplacian(f.H, m)) < 20 * m.dr() * m.dr());
}

TEST_CASE("Poisson solve") {
    RadialMesh m(3, 1.0, 2.0, 40);
    CHECK(max_abs(poisson_solve(m.zeros(), m)) == 0.0);

    Grid exact(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) exact[j] = (m.r(j) - 1.0) * (2.0 - m.r(j));
    exact.back() = 0.0;
    const auto V = poisson_solve(radial_laplacian(exact, m), m);
    for (std::size_t j = 0; j < m.size(); ++j) CHECK(std::abs(V[j] - exact[j]) < 1e-10);

    std::mt19937 gen(7);
    std::uniform_real_distribution<double> u(-1, 1);
    Grid f(m.size()), g(m.size()), h(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
        f[j] = u(gen);
        g[j] = u(gen);
        h[j] = 2.5 * f[j] - 0.75 * g[j];
    }
    const auto Vf = poisson_solve(f, m), Vg = poisson_solve(g, m), Vh = poisson_solve(h, m);
    for (std::size_t j = 0; j < m.size(); ++j) CHECK(std::abs(Vh[j] - (2.5 * Vf[j] - 0.75 * Vg[j])) < 1e-12);
}

TEST_CASE("discrete maximum principle") {
    RadialMesh m(2, 0.5, 3.0, 60);
    std::mt19937 gen(11);
    std::uniform_real_distribution<double> u(0, 1);
    Grid rhs(m.size());
    for (double& v : rhs) v = -u(gen);
    for (double v : poisson_solve(rhs, m)) CHECK(v >= 0.0);
}

TEST_CASE("summation by parts") {
    RadialMesh m(3, 1.0, 2.0, 30);
    std::mt19937 gen(3);
    std::uniform_real_distribution<double> u(-1, 1);
    Grid f = m.zeros(), g = m.zeros();
    for (std::size_t j = 1; j <= m.interior(); ++j) {
        f[j] = u(gen);
        g[j] = u(gen);
    }
    const double a = weighted_dot(radial_laplacian(f, m), g, m);
    const double b = weighted_dot(f, radial_laplacian(g, m), m);
    CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
}

TEST_CASE("gradient") {
    RadialMesh m(3, 1.0, 2.0, 100);
    Grid r(m.nodes()), c(m.size(), 2.0);
    for (double v : gradient(r, m)) CHECK(v == Approx(1.0).epsilon(1e-12));
    for (double v : gradient(c, m)) CHECK(std::abs(v) < 1e-12);
    const auto f = harmonic_potential(m, fixture::inner_anode());
    const auto dH = gradient(f.H, m);
    CHECK(std::abs(dH[0] - 2.0) < 10 * m.dr() * m.dr());
    for (std::size_t j = 0; j < m.size(); ++j) CHECK(std::abs(dH[j] - f.dH[j]) < 10 * m.dr() * m.dr());
}

TEST_CASE("tridiagonal solver") {
    const std::vector<double> lo{0, -1, -1}, di{2, 2, 2}, up{-1, -1, 0}, rhs{1, 0, 1};
    const auto x = solve_tridiagonal(lo, di, up, rhs);
    CHECK(x[0] == Approx(1.0));
    CHECK(x[1] == Approx(1.0));
    CHECK(x[2] == Approx(1.0));
}
