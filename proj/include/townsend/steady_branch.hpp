#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "townsend/discharge_operator.hpp"
#include "townsend/errors.hpp"
#include "townsend/model.hpp"
#include "townsend/radial_geometry.hpp"
#include "townsend/spectral.hpp"
#include "townsend/transport.hpp"

namespace townsend {

/// Radial stationary solution in the variables (rho_i, R_e, V) at voltage lambda,
/// with R_e = rho_e exp(lambda H / 2).
struct SteadyState {
    double lambda = 0.0;
    Grid rho_i;
    Grid R_e;
    Grid V;

    static SteadyState trivial(double lambda, const RadialMesh& mesh) {
        return {lambda, mesh.zeros(), mesh.zeros(), mesh.zeros()};
    }

    Grid rho_e(const HarmonicField& field) const {
        Grid out(R_e.size());
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = R_e[j] * std::exp(-0.5 * lambda * field.H[j]);
        return out;
    }
};

/// Residuals of the three stationary equations together with the
/// magnitude of their largest individual terms, used to scale convergence tests.
struct StationaryResidual {
    Grid F1, F2, F3;
    double scale1 = 0.0, scale2 = 0.0, scale3 = 0.0;

    /// max_k ||F_k||_inf / scale_k
    double scaled_norm() const {
        auto part = [](const Grid& f, double s) { return max_abs(f) / (s > 0.0 ? s : 1.0); };
        return std::max({part(F1, scale1), part(F2, scale2), part(F3, scale3)});
    }
    double max_norm() const { return std::max({max_abs(F1), max_abs(F2), max_abs(F3)}); }
};

/// Evaluates F1 (ion balance, every node but the anode), F2 (weighted
/// electron balance, interior nodes) and F3 (Poisson, interior nodes).
inline StationaryResidual residual(const SteadyState& state, const HarmonicField& field,
                                   const ModelParams& p, const RadialMesh& mesh) {
    const auto c = discharge_coefficients(state.lambda, state.V, field, p, mesh);
    StationaryResidual res{mesh.zeros(), mesh.zeros(), mesh.zeros()};
    Grid rho_e(mesh.size());
    for (std::size_t j = 0; j < mesh.size(); ++j) rho_e[j] = c.damping[j] * state.R_e[j];
    const auto ions = ion_terms(state.rho_i, rho_e, c, field.orient, mesh);
    for (std::size_t j : ion_nodes(field.orient, mesh)) {
        const double transport = p.k_i * ions.divergence[j];
        const double source = p.k_e * ions.source[j];
        res.F1[j] = transport - source;
        res.scale1 = std::max({res.scale1, std::abs(transport), std::abs(source)});
    }
    const auto F2 = electron_operator(state.R_e, c, mesh);
    for (std::size_t j = 1; j <= mesh.interior(); ++j) {
        res.F2[j] = F2[j];
        const double coupling = (c.east[j] + c.west[j]) * std::abs(state.R_e[j]);
        res.scale2 = std::max({res.scale2, coupling,
                               std::abs(c.zeroth[j] - c.ionization[j]) * std::abs(state.R_e[j])});
        res.F3[j] = c.lapV[j] - state.rho_i[j] + rho_e[j];
        res.scale3 = std::max({res.scale3, std::abs(c.lapV[j]), std::abs(state.rho_i[j]), std::abs(rho_e[j])});
    }
    return res;
}

/// Stationary ion density from its own electrons and potential,
///   rho_i(r) = k_e/k_i r^{1-d} / Phi'(r) int_{r_a}^r t^{d-1} h(|Phi'|) e^{-lambda H/2} R_e dt,
/// with the integral accumulated by the trapezoidal rule from the anode.
inline Grid steady_ion_profile(double lambda, std::span<const double> R_e, std::span<const double> V,
                               const HarmonicField& field, const ModelParams& p, const RadialMesh& mesh) {
    const auto c = discharge_coefficients(lambda, V, field, p, mesh);
    Grid rho = mesh.zeros();
    const double step = field.orient.outward_sign() * mesh.dr();
    auto integrand = [&](std::size_t j) {
        return mesh.area(mesh.r(j)) * c.ionization[j] * c.damping[j] * R_e[j];
    };
    double integral = 0.0;
    for (std::size_t j : ion_nodes(field.orient, mesh)) {
        const std::size_t u = upstream(j, field.orient);
        integral += 0.5 * step * (integrand(j) + integrand(u));
        rho[j] = p.k_e / p.k_i * integral / (mesh.area(mesh.r(j)) * c.dPhi[j]);
    }
    return rho;
}

/// Kernel of the stationary operator linearized at (lambda*, 0, 0, 0).
struct NullTriple {
    Grid phi_i, phi_e, phi_v;
    double lambda_star = 0.0;
    double kappa = 0.0;  ///< kappa(lambda*) as evaluated
    double norm_i = 0.0, norm_e = 0.0, norm_v = 0.0;
};

/// phi_e is the normalized ground state at lambda*, phi_i the stationary ion
/// response to it, phi_v the Poisson response to phi_i - e^{-lambda* H/2} phi_e.
inline NullTriple null_triple(double lambda_star, const HarmonicField& field, const ModelParams& p,
                              const RadialMesh& mesh, double tol_root = 1e-8) {
    const auto pair = stability_index(lambda_star, field, p, mesh);
    if (!(std::abs(pair.kappa) < 10.0 * tol_root))
        throw SolverError("lambda = " + std::to_string(lambda_star) +
                          " is not a root of kappa (kappa = " + std::to_string(pair.kappa) + ")");
    NullTriple t;
    t.lambda_star = lambda_star;
    t.kappa = pair.kappa;
    t.phi_e = pair.phi;
    const Grid zero = mesh.zeros();
    t.phi_i = steady_ion_profile(lambda_star, t.phi_e, zero, field, p, mesh);
    Grid rhs(mesh.size());
    for (std::size_t j = 0; j < mesh.size(); ++j)
        rhs[j] = t.phi_i[j] - std::exp(-0.5 * lambda_star * field.H[j]) * t.phi_e[j];
    t.phi_v = poisson_solve(rhs, mesh);
    t.norm_i = weighted_norm(t.phi_i, mesh);
    t.norm_e = weighted_norm(t.phi_e, mesh);
    t.norm_v = weighted_norm(t.phi_v, mesh);
    return t;
}

/// Maps steady states to the flat unknown vector of the continuation and
/// evaluates residuals and finite-difference Jacobians.
///
/// Layout: (rho_i, R_e, V) interleaved per interior node, then rho_i at the
/// cathode node, then lambda.
class StationarySystem {
public:
    StationarySystem(const HarmonicField& field, const ModelParams& p, const RadialMesh& mesh,
                     double lambda_weight = 1.0)
        : field_(field), p_(p), mesh_(mesh), theta2_(lambda_weight * lambda_weight) {}

    std::size_t n() const { return mesh_.interior(); }
    std::size_t unknowns() const { return 3 * n() + 2; }
    std::size_t equations() const { return 3 * n() + 1; }
    std::size_t lambda_index() const { return 3 * n() + 1; }
    std::size_t cathode_index() const { return 3 * n(); }

    std::vector<double> pack(const SteadyState& s) const {
        std::vector<double> x(unknowns());
        for (std::size_t j = 1; j <= n(); ++j) {
            x[3 * (j - 1)] = s.rho_i[j];
            x[3 * (j - 1) + 1] = s.R_e[j];
            x[3 * (j - 1) + 2] = s.V[j];
        }
        x[cathode_index()] = s.rho_i[mesh_.cathode_index(field_.orient)];
        x[lambda_index()] = s.lambda;
        return x;
    }

    SteadyState unpack(std::span<const double> x) const {
        SteadyState s = SteadyState::trivial(x[lambda_index()], mesh_);
        for (std::size_t j = 1; j <= n(); ++j) {
            s.rho_i[j] = x[3 * (j - 1)];
            s.R_e[j] = x[3 * (j - 1) + 1];
            s.V[j] = x[3 * (j - 1) + 2];
        }
        s.rho_i[mesh_.cathode_index(field_.orient)] = x[cathode_index()];
        return s;
    }

    /// Residual rows in unknown layout (without the constraint row).
    std::vector<double> evaluate(std::span<const double> x, double* scaled = nullptr) const {
        const auto res = residual(unpack(x), field_, p_, mesh_);
        std::vector<double> g(equations());
        for (std::size_t j = 1; j <= n(); ++j) {
            g[3 * (j - 1)] = res.F1[j];
            g[3 * (j - 1) + 1] = res.F2[j];
            g[3 * (j - 1) + 2] = res.F3[j];
        }
        g[cathode_index()] = res.F1[mesh_.cathode_index(field_.orient)];
        if (scaled) *scaled = res.scaled_norm();
        return g;
    }

    /// Mesh node of a row or column (0-based interior index, cathode mapped to its node).
    std::size_t node_of(std::size_t k) const {
        if (k == cathode_index()) return mesh_.cathode_index(field_.orient);
        return k / 3 + 1;
    }

    /// Jacobian of the residual rows by coloured forward differences. Every
    /// row depends only on unknowns within two nodes of its own node.
    Eigen::SparseMatrix<double> jacobian(std::span<const double> x, std::span<const double> g0) const {
        const std::size_t N = unknowns();
        const std::size_t rows = equations();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(rows * 16 + rows);
        std::vector<double> field_scale(3, 0.0);
        for (std::size_t j = 0; j < n(); ++j)
            for (std::size_t f = 0; f < 3; ++f) field_scale[f] = std::max(field_scale[f], std::abs(x[3 * j + f]));
        const double eps = 1.4901161193847656e-08;
        auto increment = [&](std::size_t col) {
            const double fs = col == lambda_index() ? 1.0
                              : col == cathode_index() ? field_scale[0]
                                                        : field_scale[col % 3];
            const double h = eps * std::max({std::abs(x[col]), fs, 1e-12});
            return (x[col] + h) - x[col];
        };
        std::vector<double> xp(x.begin(), x.end());
        auto push_column_block = [&](const std::vector<std::size_t>& cols) {
            std::vector<double> hs(cols.size());
            for (std::size_t k = 0; k < cols.size(); ++k) {
                hs[k] = increment(cols[k]);
                xp[cols[k]] += hs[k];
            }
            const auto g1 = evaluate(xp);
            for (std::size_t k = 0; k < cols.size(); ++k) xp[cols[k]] = x[cols[k]];
            // Map each row to the unique perturbed column in its stencil.
            std::vector<long> owner(mesh_.size(), -1);
            for (std::size_t k = 0; k < cols.size(); ++k) owner[node_of(cols[k])] = static_cast<long>(k);
            for (std::size_t r = 0; r < rows; ++r) {
                const long node = static_cast<long>(node_of(r));
                for (long dn = -2; dn <= 2; ++dn) {
                    const long m = node + dn;
                    if (m < 0 || m >= static_cast<long>(mesh_.size()) || owner[m] < 0) continue;
                    const std::size_t k = static_cast<std::size_t>(owner[m]);
                    const double v = (g1[r] - g0[r]) / hs[k];
                    if (v != 0.0) trip.emplace_back(static_cast<int>(r), static_cast<int>(cols[k]), v);
                }
            }
        };
        for (std::size_t f = 0; f < 3; ++f) {
            for (std::size_t cls = 0; cls < 5; ++cls) {
                std::vector<std::size_t> cols;
                for (std::size_t j = cls; j < n(); j += 5) cols.push_back(3 * j + f);
                if (!cols.empty()) push_column_block(cols);
            }
        }
        push_column_block({cathode_index()});
        {
            const std::size_t col = lambda_index();
            const double h = increment(col);
            xp[col] += h;
            const auto g1 = evaluate(xp);
            xp[col] = x[col];
            for (std::size_t r = 0; r < rows; ++r) {
                const double v = (g1[r] - g0[r]) / h;
                if (v != 0.0) trip.emplace_back(static_cast<int>(r), static_cast<int>(col), v);
            }
        }
        Eigen::SparseMatrix<double> J(static_cast<int>(rows), static_cast<int>(N));
        J.setFromTriplets(trip.begin(), trip.end());
        return J;
    }

    /// Weight of unknown k in the arclength inner product.
    double weight(std::size_t k) const {
        if (k == lambda_index()) return theta2_;
        return mesh_.weights()[node_of(k)];
    }

    double dot(std::span<const double> a, std::span<const double> b) const {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += weight(k) * a[k] * b[k];
        return s;
    }

    double norm(std::span<const double> a) const { return std::sqrt(dot(a, a)); }

    const HarmonicField& field() const { return field_; }
    const ModelParams& params() const { return p_; }
    const RadialMesh& mesh() const { return mesh_; }

private:
    const HarmonicField& field_;
    const ModelParams& p_;
    const RadialMesh& mesh_;
    double theta2_;
};

/// Linear side condition c.x = target appended to the stationary equations.
struct LinearConstraint {
    std::vector<double> coeff;
    double target = 0.0;
};

struct NewtonReport {
    bool converged = false;
    int iterations = 0;
    double scaled_residual = 0.0;
};

/// Newton's method on [F(x) = 0; c.x = target] with a sparse LU solve.
inline NewtonReport newton_correct(const StationarySystem& sys, std::vector<double>& x,
                                   const LinearConstraint& con, double tol, int max_iterations) {
    NewtonReport rep;
    const std::size_t N = sys.unknowns();
    const std::size_t rows = sys.equations();
    double first = -1.0;
    for (int it = 0; it <= max_iterations; ++it) {
        double scaled = 0.0;
        std::vector<double> g;
        try {
            g = sys.evaluate(x, &scaled);
        } catch (const DomainError&) {
            return rep;  // diverged iterate
        }
        double cx = 0.0, cnorm = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
            cx += con.coeff[k] * x[k];
            cnorm += std::abs(con.coeff[k] * x[k]);
        }
        const double con_err = std::abs(cx - con.target) / std::max({cnorm, std::abs(con.target), 1e-300});
        rep.iterations = it;
        rep.scaled_residual = scaled;
        if (!std::isfinite(scaled)) return rep;
        if (scaled <= tol && con_err <= tol) {
            rep.converged = true;
            return rep;
        }
        if (first < 0.0) first = scaled;
        if (scaled > 1e6 * std::max(first, tol)) return rep;
        if (it == max_iterations) break;
        Eigen::SparseMatrix<double> J;
        try {
            J = sys.jacobian(x, g);
        } catch (const DomainError&) {
            return rep;
        }
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(J.nonZeros() + N);
        for (int k = 0; k < J.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator itj(J, k); itj; ++itj)
                trip.emplace_back(itj.row(), itj.col(), itj.value());
        for (std::size_t k = 0; k < N; ++k)
            if (con.coeff[k] != 0.0) trip.emplace_back(static_cast<int>(rows), static_cast<int>(k), con.coeff[k]);
        Eigen::SparseMatrix<double> A(static_cast<int>(N), static_cast<int>(N));
        A.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(A);
        if (lu.info() != Eigen::Success) return rep;
        Eigen::VectorXd rhs(static_cast<int>(N));
        for (std::size_t r = 0; r < rows; ++r) rhs[static_cast<int>(r)] = -g[r];
        rhs[static_cast<int>(rows)] = con.target - cx;
        const Eigen::VectorXd dx = lu.solve(rhs);
        if (lu.info() != Eigen::Success || !dx.allFinite()) return rep;
        for (std::size_t k = 0; k < N; ++k) x[k] += dx[static_cast<int>(k)];
        if (!std::isfinite(x[sys.lambda_index()])) return rep;
    }
    return rep;
}

struct BranchPoint {
    double s = 0.0;          ///< accumulated arclength
    SteadyState state;
    double amplitude = 0.0;  ///< <u, phi*>_w / <phi*, phi*>_w
    double sup_density = 0.0;
    double max_rho_i = 0.0, max_rho_e = 0.0, max_V = 0.0;
    double min_field = 0.0;  ///< min over nodes of |dPhi/dr| taken in the anode-to-cathode direction
    bool rho_i_positive = false;
    bool rho_e_positive = false;
    double scaled_residual = 0.0;
};

enum class OutcomeKind { Blowup, HalfLoop, Budget };

inline const char* to_string(OutcomeKind k) {
    switch (k) {
        case OutcomeKind::Blowup: return "Blowup";
        case OutcomeKind::HalfLoop: return "HalfLoop";
        case OutcomeKind::Budget: return "Budget";
    }
    return "?";
}

struct BranchOutcome {
    OutcomeKind kind = OutcomeKind::Budget;
    BranchPoint terminal;
    std::optional<double> lambda_sharp_observed;
};

struct BranchRun {
    std::vector<BranchPoint> points;
    BranchOutcome outcome;
};

/// Continuation failure; carries the branch accepted so far.
class BranchError : public SolverError {
public:
    BranchError(const std::string& what, std::vector<BranchPoint> pts)
        : SolverError(what), points(std::move(pts)) {}
    std::vector<BranchPoint> points;
};

struct ContinuationOptions {
    double s0 = 1e-3;            ///< first point u = s0 phi* + ..., in units of phi*
    double tol_newton = 1e-10;   ///< on the scaled residual
    int max_newton = 12;
    int max_halvings = 20;
    double growth = 1.3;
    int easy_iterations = 3;
    double ds_max = 0.0;         ///< 0: unlimited
    double cap_factor = 1e6;     ///< blow-up cap relative to the first point's density
    double eps_trivial = 1e-6;
    double sep_factor = 0.05;    ///< HalfLoop requires |lambda - lambda*| > sep_factor lambda*
    std::size_t max_steps = 2000;
    double lambda_weight = 1.0;  ///< weight of lambda in the arclength norm
    double min_cos = 0.8;        ///< reject steps turning the secant by more than this
    bool negative_direction = false;
};

namespace detail {

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

inline std::vector<double> pack_triple(const StationarySystem& sys, const NullTriple& t, double scale) {
    SteadyState s{0.0, t.phi_i, t.phi_e, t.phi_v};
    for (auto* g : {&s.rho_i, &s.R_e, &s.V})
        for (double& v : *g) v *= scale;
    auto x = sys.pack(s);
    x[sys.lambda_index()] = 0.0;
    return x;
}

inline BranchPoint make_point(const StationarySystem& sys, std::span<const double> x, double s,
                              std::span<const double> tangent_dir, double dir_norm2, double scaled) {
    BranchPoint pt;
    pt.s = s;
    pt.state = sys.unpack(x);
    pt.amplitude = sys.dot(x.first(sys.lambda_index()), tangent_dir.first(sys.lambda_index())) / dir_norm2;
    const auto rho_e = pt.state.rho_e(sys.field());
    pt.max_rho_i = max_abs(pt.state.rho_i);
    pt.max_rho_e = max_abs(rho_e);
    pt.max_V = max_abs(pt.state.V);
    pt.sup_density = std::max(pt.max_rho_i, pt.max_rho_e);
    const auto& mesh = sys.mesh();
    pt.rho_i_positive = pt.rho_e_positive = true;
    for (std::size_t j = 1; j <= mesh.interior(); ++j) {
        if (!(pt.state.rho_i[j] > 0.0)) pt.rho_i_positive = false;
        if (!(pt.state.R_e[j] > 0.0)) pt.rho_e_positive = false;
    }
    const auto c = discharge_coefficients(pt.state.lambda, pt.state.V, sys.field(), sys.params(), mesh);
    pt.min_field = std::numeric_limits<double>::infinity();
    for (double v : c.dPhi) pt.min_field = std::min(pt.min_field, sys.field().orient.outward_sign() * v);
    pt.scaled_residual = scaled;
    return pt;
}

inline bool admissible(const SteadyState& s, const HarmonicField& field, const ModelParams& p,
                       const RadialMesh& mesh) {
    const auto c = discharge_coefficients(s.lambda, s.V, field, p, mesh);
    const double floor = degeneracy_threshold(c.Phi, mesh);
    const int sign = field.orient.outward_sign();
    for (double v : c.dPhi)
        if (!(sign * v > floor)) return false;
    return true;
}

}  // namespace detail

/// Solves for the branch point with prescribed amplitude <u, phi*>_w / |phi*|^2 = a.
inline NewtonReport solve_at_amplitude(const StationarySystem& sys, std::vector<double>& x,
                                       std::span<const double> dir, double dir_norm2, double a,
                                       const ContinuationOptions& opts) {
    LinearConstraint con;
    con.coeff.assign(sys.unknowns(), 0.0);
    for (std::size_t k = 0; k < sys.lambda_index(); ++k) con.coeff[k] = sys.weight(k) * dir[k] / dir_norm2;
    con.target = a;
    return newton_correct(sys, x, con, opts.tol_newton, opts.max_newton);
}

/// Pseudo-arclength continuation of the nontrivial branch bifurcating at lambda*.
///
/// The first point fixes the amplitude along the null triple; later points
/// use a secant predictor and the arclength hyperplane as side condition.
/// The run ends on blow-up of the densities, on return to the trivial
/// solution at another voltage (located by solving at amplitudes +-s0 on
/// either side of the crossing and averaging), or when the step budget is spent.
inline BranchRun continue_branch(const NullTriple& start, const HarmonicField& field, const ModelParams& p,
                                 const RadialMesh& mesh, const ContinuationOptions& opts = {}) {
    StationarySystem sys(field, p, mesh, opts.lambda_weight);
    const auto dir = detail::pack_triple(sys, start, 1.0);
    const double dir_norm2 = sys.dot(dir, dir);
    const double lam_star = start.lambda_star;
    const double s0 = opts.negative_direction ? -std::abs(opts.s0) : std::abs(opts.s0);

    BranchRun run;
    std::vector<double> x0 = sys.pack(SteadyState::trivial(lam_star, mesh));
    run.points.push_back(detail::make_point(sys, x0, 0.0, dir, dir_norm2, 0.0));

    std::vector<double> x1(dir);
    for (double& v : x1) v *= s0;
    x1[sys.lambda_index()] = lam_star;
    auto rep = solve_at_amplitude(sys, x1, dir, dir_norm2, s0, opts);
    if (!rep.converged)
        throw BranchError("Newton failed at the first branch point (scaled residual " +
                          detail::sci(rep.scaled_residual) + ")", run.points);

    auto distance = [&](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> d(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
        return sys.norm(d);
    };
    double s_acc = distance(x1, x0);
    run.points.push_back(detail::make_point(sys, x1, s_acc, dir, dir_norm2, rep.scaled_residual));
    const double cap = opts.cap_factor * run.points.back().sup_density;

    std::vector<double> prev = x0, cur = x1;
    double ds = s_acc;
    auto finish = [&](OutcomeKind kind) {
        run.outcome.kind = kind;
        run.outcome.terminal = run.points.back();
        return run;
    };
    for (std::size_t step = 1; step < opts.max_steps; ++step) {
        std::vector<double> tau(cur.size());
        for (std::size_t k = 0; k < tau.size(); ++k) tau[k] = cur[k] - prev[k];
        const double tn = sys.norm(tau);
        if (!(tn > 0.0)) throw BranchError("continuation step collapsed to zero length at lambda = " +
                                              std::to_string(cur[sys.lambda_index()]) + ", min |dPhi/dr| = " +
                                              detail::sci(run.points.back().min_field),
                                          run.points);
        for (double& v : tau) v /= tn;

        std::vector<double> next;
        NewtonReport nrep;
        int halvings = 0;
        while (true) {
            next = cur;
            for (std::size_t k = 0; k < next.size(); ++k) next[k] += ds * tau[k];
            LinearConstraint con;
            con.coeff.resize(sys.unknowns());
            for (std::size_t k = 0; k < con.coeff.size(); ++k) con.coeff[k] = sys.weight(k) * tau[k];
            con.target = 0.0;
            for (std::size_t k = 0; k < con.coeff.size(); ++k) con.target += con.coeff[k] * next[k];
            nrep = newton_correct(sys, next, con, opts.tol_newton, opts.max_newton);
            const char* failure = nullptr;
            if (!nrep.converged) {
                failure = "Newton stagnation";
            } else {
                std::vector<double> tnew(next.size());
                for (std::size_t k = 0; k < tnew.size(); ++k) tnew[k] = next[k] - cur[k];
                const double cosang = sys.dot(tnew, tau) / sys.norm(tnew);
                if (!detail::admissible(sys.unpack(next), field, p, mesh))
                    failure = "branch left the admissible set |dPhi/dr| > 0";
                else if (cosang < opts.min_cos)
                    failure = "branch turns too sharply";
            }
            if (!failure) break;
            if (++halvings > opts.max_halvings)
                throw BranchError(std::string(failure) + " after " + std::to_string(opts.max_halvings) +
                                      " step halvings at lambda = " + std::to_string(cur[sys.lambda_index()]) +
                                      ", min |dPhi/dr| = " + detail::sci(run.points.back().min_field) +
                                      " (scaled residual " + detail::sci(nrep.scaled_residual) + ")",
                                  run.points);
            ds *= 0.5;
        }
        const double seg = distance(next, cur);
        auto pt = detail::make_point(sys, next, s_acc + seg, dir, dir_norm2, nrep.scaled_residual);

        // Crossing of the trivial line: the amplitude changes sign.
        if (!opts.negative_direction && pt.amplitude <= 0.0) {
            std::vector<double> pos = cur, neg = next;
            double a_pos = run.points.back().amplitude, a_neg = pt.amplitude;
            const double target = std::abs(s0);
            std::optional<double> lam_plus, lam_minus;
            for (int attempt = 0; attempt < 12 && !(lam_plus && lam_minus); ++attempt) {
                auto interpolate = [&](double a) {
                    const double t = (a_pos - a) / (a_pos - a_neg);
                    std::vector<double> g(pos.size());
                    for (std::size_t k = 0; k < g.size(); ++k) g[k] = pos[k] + t * (neg[k] - pos[k]);
                    return g;
                };
                if (!lam_plus) {
                    auto g = interpolate(target);
                    if (solve_at_amplitude(sys, g, dir, dir_norm2, target, opts).converged)
                        lam_plus = g[sys.lambda_index()];
                }
                if (!lam_minus) {
                    auto g = interpolate(-target);
                    if (solve_at_amplitude(sys, g, dir, dir_norm2, -target, opts).converged)
                        lam_minus = g[sys.lambda_index()];
                }
                if (lam_plus && lam_minus) break;
                // Shrink the bracket with a shorter arclength step from the positive side.
                std::vector<double> mid(pos.size());
                for (std::size_t k = 0; k < mid.size(); ++k) mid[k] = 0.5 * (pos[k] + neg[k]);
                LinearConstraint con;
                con.coeff.resize(sys.unknowns());
                for (std::size_t k = 0; k < con.coeff.size(); ++k) con.coeff[k] = sys.weight(k) * tau[k];
                con.target = 0.0;
                for (std::size_t k = 0; k < con.coeff.size(); ++k) con.target += con.coeff[k] * mid[k];
                if (!newton_correct(sys, mid, con, opts.tol_newton, opts.max_newton).converged) break;
                const double a_mid = sys.dot(std::span<const double>(mid).first(sys.lambda_index()),
                                             std::span<const double>(dir).first(sys.lambda_index())) / dir_norm2;
                if (a_mid > 0.0) {
                    pos = mid;
                    a_pos = a_mid;
                } else {
                    neg = mid;
                    a_neg = a_mid;
                }
            }
            if (!(lam_plus && lam_minus))
                throw BranchError("could not resolve the return to the trivial solution", run.points);
            const double lam_sharp = 0.5 * (*lam_plus + *lam_minus);
            auto trivial = sys.pack(SteadyState::trivial(lam_sharp, mesh));
            const double s_end = run.points.back().s + distance(trivial, cur);
            run.points.push_back(detail::make_point(sys, trivial, s_end, dir, dir_norm2, 0.0));
            run.outcome.lambda_sharp_observed = lam_sharp;
            return finish(OutcomeKind::HalfLoop);
        }

        s_acc += seg;
        run.points.push_back(pt);
        prev = cur;
        cur = next;
        if (pt.sup_density > cap) return finish(OutcomeKind::Blowup);
        const double state_norm = std::max(pt.sup_density, pt.max_V);
        if (state_norm < opts.eps_trivial && std::abs(pt.state.lambda - lam_star) > opts.sep_factor * lam_star) {
            run.outcome.lambda_sharp_observed = pt.state.lambda;
            return finish(OutcomeKind::HalfLoop);
        }
        if (nrep.iterations <= opts.easy_iterations) ds *= opts.growth;
        if (opts.ds_max > 0.0) ds = std::min(ds, opts.ds_max);
    }
    return finish(OutcomeKind::Budget);
}

/// One row of the bifurcation diagram.
struct DiagramRow {
    double s, lambda, max_rho_i, max_rho_e, max_V, min_field;
    bool rho_i_positive, rho_e_positive;
};

inline std::vector<DiagramRow> branch_diagnostics(std::span<const BranchPoint> points) {
    if (points.empty()) throw DomainError("empty branch");
    std::vector<DiagramRow> rows;
    rows.reserve(points.size());
    for (const auto& pt : points)
        rows.push_back({pt.s, pt.state.lambda, pt.max_rho_i, pt.max_rho_e, pt.max_V, pt.min_field, pt.rho_i_positive,
                        pt.rho_e_positive});
    return rows;
}

}  // namespace townsend
