#include "support.hpp"

using namespace townsend;
using Catch::Approx;

namespace {

struct Sparked {
    fixture::Shell shell;
    SparkingResult roots;
    Sparked(std::size_t n, ModelParams p) : shell(n, p) {
        roots = find_sparking(shell.field, shell.params, shell.mesh, default_scan(shell.field, shell.params));
    }
};

const Sparked& halfloop_case() {
    static const Sparked s(40, {5, 0.01, 100, 1});
    return s;
}

const Sparked& blowup_case() {
    static const Sparked s(60, {50, 0.01, 1, 1});
    return s;
}

SteadyState scaled_triple(const NullTriple& t, double s) {
    SteadyState st{t.lambda_star, t.phi_i, t.phi_e, t.phi_v};
    for (auto* g : {&st.rho_i, &st.R_e, &st.V})
        for (double& v : *g) v *= s;
    return st;
}

}  // namespace

TEST_CASE("trivial state solves the stationary problem for every voltage") {
    fixture::Shell s(30, {5, 0.01, 1, 1});
    for (double lambda : {0.0, 1.0, 40.0}) {
        const auto r = residual(SteadyState::trivial(lambda, s.mesh), s.field, s.params, s.mesh);
        CHECK(r.max_norm() == 0.0);
    }
}

TEST_CASE("null triple has the expected structure") {
    const auto& c = blowup_case();
    REQUIRE(c.roots.lambda_star);
    const auto& sh = c.shell;
    const auto t = null_triple(*c.roots.lambda_star, sh.field, sh.params, sh.mesh);
    CHECK(t.norm_e == Approx(1.0).epsilon(1e-12));
    CHECK(t.norm_i > 0.0);
    CHECK(t.norm_v > 0.0);
    const auto anode = sh.mesh.anode_index(sh.field.orient);
    CHECK(t.phi_i[anode] == 0.0);
    for (std::size_t j = 0; j < sh.mesh.size(); ++j) {
        if (j != anode) CHECK(t.phi_i[j] > 0.0);
        if (j > 0 && j + 1 < sh.mesh.size()) CHECK(t.phi_e[j] > 0.0);
    }
    CHECK(t.phi_v.front() == 0.0);
    CHECK(t.phi_v.back() == 0.0);
}

TEST_CASE("null triple is refused away from a root") {
    fixture::Shell s(30, {5, 0.01, 1, 1});
    CHECK_THROWS_AS(null_triple(0.5, s.field, s.params, s.mesh), SolverError);
}

TEST_CASE("ion component matches the transport solver") {
    const auto& c = blowup_case();
    const auto& sh = c.shell;
    const double lambda = *c.roots.lambda_star;
    const auto t = null_triple(lambda, sh.field, sh.params, sh.mesh);
    TransportProblem tp{sh.mesh.zeros(), Grid(sh.mesh.size(), 0.0), sh.mesh.zeros(), sh.field.orient};
    for (std::size_t j = 0; j < sh.mesh.size(); ++j) {
        tp.Phi[j] = lambda * sh.field.H[j];
        const double field_strength = std::abs(lambda * sh.field.dH[j]);
        tp.f[j] = sh.params.k_e / sh.params.k_i * townsend_h(field_strength, sh.params) *
                  std::exp(-0.5 * lambda * sh.field.H[j]) * t.phi_e[j];
    }
    const auto rho = solve_transport(tp, sh.mesh);
    for (std::size_t j = 0; j < rho.size(); ++j)
        CHECK(std::abs(rho[j] - t.phi_i[j]) <= 1e-10 * t.norm_i + 1e-3 * std::abs(t.phi_i[j]));
}

TEST_CASE("residual along the null direction is quadratic in the amplitude") {
    const auto& c = halfloop_case();
    const auto& sh = c.shell;
    const auto t = null_triple(*c.roots.lambda_star, sh.field, sh.params, sh.mesh);
    const double r1 = residual(scaled_triple(t, 1e-3), sh.field, sh.params, sh.mesh).max_norm();
    const double r2 = residual(scaled_triple(t, 5e-4), sh.field, sh.params, sh.mesh).max_norm();
    CHECK(r1 / r2 == Approx(4.0).epsilon(0.05));
}

TEST_CASE("Poisson residual vanishes for a manufactured state") {
    fixture::Shell s(50, {5, 0.01, 1, 1});
    SteadyState st = SteadyState::trivial(2.0, s.mesh);
    for (std::size_t j = 1; j + 1 < s.mesh.size(); ++j) {
        const double r = s.mesh.r(j);
        st.R_e[j] = std::sin(M_PI * (r - 1.0));
        st.rho_i[j] = r;
    }
    const auto rho_e = st.rho_e(s.field);
    Grid rhs(s.mesh.size());
    for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] = st.rho_i[j] - rho_e[j];
    st.V = poisson_solve(rhs, s.mesh);
    const auto r = residual(st, s.field, s.params, s.mesh);
    CHECK(max_abs(r.F3) <= 1e-12 * r.scale3);
}

TEST_CASE("stationary system packs and unpacks losslessly") {
    fixture::Shell s(12, {5, 0.01, 1, 1});
    StationarySystem sys(s.field, s.params, s.mesh, 1.0);
    CHECK(sys.unknowns() == 3 * 12 + 2);
    CHECK(sys.equations() + 1 == sys.unknowns());
    std::vector<double> x(sys.unknowns());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = 0.1 * static_cast<double>(k + 1);
    CHECK(sys.pack(sys.unpack(x)) == x);
}

TEST_CASE("branch from a HalfLoop regime returns to the anti-sparking voltage") {
    const auto& c = halfloop_case();
    const auto& sh = c.shell;
    REQUIRE(c.roots.lambda_sharp);
    const auto t = null_triple(*c.roots.lambda_star, sh.field, sh.params, sh.mesh);
    const auto run = continue_branch(t, sh.field, sh.params, sh.mesh);
    REQUIRE(run.outcome.kind == OutcomeKind::HalfLoop);
    REQUIRE(run.outcome.lambda_sharp_observed);
    CHECK(fixture::rel(*run.outcome.lambda_sharp_observed, *c.roots.lambda_sharp) < 1e-3);
    CHECK(run.points.front().state.lambda == *c.roots.lambda_star);
    CHECK(run.points.front().sup_density == 0.0);
    for (std::size_t k = 1; k + 1 < run.points.size(); ++k) {
        const auto& pt = run.points[k];
        CHECK(pt.rho_i_positive);
        CHECK(pt.rho_e_positive);
        CHECK(pt.min_field > 0.0);
        CHECK(pt.scaled_residual < 1e-8);
        CHECK(pt.s > run.points[k - 1].s);
    }
    const auto rows = branch_diagnostics(run.points);
    CHECK(rows.size() == run.points.size());
}

TEST_CASE("branch points carry their own stationary ion profile") {
    const auto& c = blowup_case();
    const auto& sh = c.shell;
    const auto t = null_triple(*c.roots.lambda_star, sh.field, sh.params, sh.mesh);
    ContinuationOptions o;
    o.max_steps = 15;
    const auto run = continue_branch(t, sh.field, sh.params, sh.mesh, o);
    REQUIRE(run.points.size() > 5);
    for (std::size_t k = 1; k < run.points.size(); k += 4) {
        const auto& st = run.points[k].state;
        const auto rho = steady_ion_profile(st.lambda, st.R_e, st.V, sh.field, sh.params, sh.mesh);
        CHECK(std::abs(max_abs(rho) - max_abs(st.rho_i)) <= 1e-6 * max_abs(st.rho_i));
    }
}

TEST_CASE("first branch point is close to the null direction") {
    const auto& c = blowup_case();
    const auto& sh = c.shell;
    const auto t = null_triple(*c.roots.lambda_star, sh.field, sh.params, sh.mesh);
    auto deviation = [&](double s0) {
        ContinuationOptions o;
        o.s0 = s0;
        o.max_steps = 1;
        const auto run = continue_branch(t, sh.field, sh.params, sh.mesh, o);
        const auto& st = run.points.at(1).state;
        double num = 0.0;
        for (std::size_t j = 1; j + 1 < sh.mesh.size(); ++j) {
            const double d = st.R_e[j] / s0 - t.phi_e[j];
            num += sh.mesh.weights()[j] * d * d;
        }
        return std::sqrt(num) / t.norm_e;
    };
    const double d1 = deviation(1e-3), d2 = deviation(5e-4);
    CHECK(d1 < 0.05);
    CHECK(d1 / d2 == Approx(2.0).epsilon(0.1));
}

TEST_CASE("Blowup regime ends above the density cap") {
    const auto& c = blowup_case();
    const auto& sh = c.shell;
    const auto t = null_triple(*c.roots.lambda_star, sh.field, sh.params, sh.mesh);
    const auto run = continue_branch(t, sh.field, sh.params, sh.mesh);
    REQUIRE(run.outcome.kind == OutcomeKind::Blowup);
    CHECK(run.outcome.terminal.sup_density > 1e6 * run.points.at(1).sup_density);
    CHECK_FALSE(run.outcome.lambda_sharp_observed);
    for (std::size_t k = 1; k < run.points.size(); ++k) {
        const auto& pt = run.points[k];
        CHECK(pt.rho_i_positive);
        CHECK(pt.scaled_residual < 1e-8);
    }
}

TEST_CASE("empty branch has no diagnostics") {
    CHECK_THROWS_AS(branch_diagnostics({}), DomainError);
}
