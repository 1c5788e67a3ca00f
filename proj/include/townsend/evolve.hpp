#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "townsend/discharge_operator.hpp"
#include "townsend/errors.hpp"
#include "townsend/model.hpp"
#include "townsend/radial_geometry.hpp"

namespace townsend {

struct EvolState {
    double t = 0.0;
    Grid rho_i;
    Grid rho_e;
    Grid V;  ///< potential perturbation from the last Poisson solve

    static EvolState zero(const RadialMesh& mesh) { return {0.0, mesh.zeros(), mesh.zeros(), mesh.zeros()}; }

    Grid Phi(double lambda, const HarmonicField& field) const {
        Grid out(V.size());
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = V[j] + lambda * field.H[j];
        return out;
    }
};

/// Checks the zeroth-order compatibility conditions of the initial data.
inline void check_initial(const EvolState& s, const HarmonicField& field, const RadialMesh& mesh) {
    if (s.rho_i.size() != mesh.size() || s.rho_e.size() != mesh.size() || s.V.size() != mesh.size())
        throw DomainError("initial data must live on the mesh");
    const std::size_t last = mesh.size() - 1;
    if (s.rho_e[0] != 0.0 || s.rho_e[last] != 0.0)
        throw DomainError("initial electron density must vanish on both electrodes");
    if (s.rho_i[mesh.anode_index(field.orient)] != 0.0)
        throw DomainError("initial ion density must vanish on the anode");
    for (std::size_t j = 0; j < mesh.size(); ++j)
        if (!(s.rho_i[j] >= 0.0) || !(s.rho_e[j] >= 0.0)) throw DomainError("initial densities must be nonnegative");
}

/// Largest step allowed by the ion CFL condition, the electron gain and the
/// space-charge relaxation time of the lagged potential.
struct StepLimits {
    double ion = 0.0;         ///< dr / max k_i |Phi'|
    double electron = 0.0;    ///< 1 / (2 k_e max (h - zeroth)^+)
    double relaxation = 0.0;  ///< 1 / (k_i max rho_i + k_e max rho_e)
    double limit(double cfl) const { return std::min({cfl * ion, electron, cfl * relaxation}); }
};

inline StepLimits step_limits(const DischargeCoefficients& c, std::span<const double> rho_i,
                              std::span<const double> rho_e, const ModelParams& p, const RadialMesh& mesh) {
    double vmax = 0.0, gain = 0.0;
    for (std::size_t j = 0; j < mesh.size(); ++j) vmax = std::max(vmax, p.k_i * std::abs(c.dPhi[j]));
    for (std::size_t j = 1; j <= mesh.interior(); ++j)
        gain = std::max(gain, p.k_e * (c.ionization[j] - c.zeroth[j]));
    const double charge = p.k_i * max_abs(rho_i) + p.k_e * max_abs(rho_e);
    const double inf = std::numeric_limits<double>::infinity();
    return {vmax > 0.0 ? mesh.dr() / vmax : inf, gain > 0.0 ? 0.5 / gain : inf, charge > 0.0 ? 1.0 / charge : inf};
}

namespace detail {

inline void clamp_density(Grid& g, const char* what, double t) {
    for (double& v : g) {
        if (v >= 0.0) continue;
        if (v < -1e-13 || std::isnan(v))
            throw SolverError(std::string("negative ") + what + " density " + std::to_string(v) +
                              " at t = " + std::to_string(t));
        v = 0.0;
    }
}

}  // namespace detail

/// Total ion content sum_j r_j^{d-1} dr rho_i over the nodes carrying ions.
inline double ion_content(std::span<const double> rho_i, const HarmonicField& field, const RadialMesh& mesh) {
    double s = 0.0;
    for (std::size_t j : ion_nodes(field.orient, mesh)) s += mesh.area(mesh.r(j)) * mesh.dr() * rho_i[j];
    return s;
}

/// Advances one operator-split step of length dt:
///  1. V from the Poisson equation for the current densities;
///  2. electrons by backward Euler in R = rho_e e^{lambda H/2} with the
///     fitted operator (one tridiagonal M-matrix solve);
///  3. ions by explicit upwinding of the nodal flux plus the ionization source.
inline EvolState step(const EvolState& s, double lambda, const HarmonicField& field, const ModelParams& p,
                      const RadialMesh& mesh, double dt, double cfl = 1.0) {
    const std::size_t m = mesh.size();
    EvolState out;
    out.t = s.t + dt;
    Grid rhs(m);
    for (std::size_t j = 0; j < m; ++j) rhs[j] = s.rho_i[j] - s.rho_e[j];
    out.V = poisson_solve(rhs, mesh);
    const auto c = discharge_coefficients(lambda, out.V, field, p, mesh);
    const auto lim = step_limits(c, s.rho_i, s.rho_e, p, mesh);
    if (dt > cfl * lim.ion * (1.0 + 1e-12))
        throw SolverError("time step " + std::to_string(dt) + " violates the ion CFL bound " +
                          std::to_string(cfl * lim.ion));
    if (dt > lim.electron * (1.0 + 1e-12))
        throw SolverError("time step " + std::to_string(dt) + " exceeds the electron gain bound " +
                          std::to_string(lim.electron));
    if (dt > cfl * lim.relaxation * (1.0 + 1e-12))
        throw SolverError("time step " + std::to_string(dt) + " exceeds the space-charge relaxation time " +
                          std::to_string(cfl * lim.relaxation));

    const std::size_t n = mesh.interior();
    std::vector<double> lo(n), di(n), up(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + 1;
        const double k = dt * p.k_e;
        lo[i] = -k * c.west[j];
        up[i] = -k * c.east[j];
        di[i] = 1.0 + k * (c.east[j] + c.west[j] + c.zeroth[j] - c.ionization[j]);
        b[i] = s.rho_e[j] / c.damping[j];
    }
    const auto R = solve_tridiagonal(lo, di, up, b);
    out.rho_e = mesh.zeros();
    for (std::size_t i = 0; i < n; ++i) out.rho_e[i + 1] = c.damping[i + 1] * R[i];
    detail::clamp_density(out.rho_e, "electron", out.t);

    const auto ions = ion_terms(s.rho_i, out.rho_e, c, field.orient, mesh);
    out.rho_i = mesh.zeros();
    for (std::size_t j : ion_nodes(field.orient, mesh))
        out.rho_i[j] = s.rho_i[j] - dt * (p.k_i * ions.divergence[j] - p.k_e * ions.source[j]);
    detail::clamp_density(out.rho_i, "ion", out.t);
    return out;
}

struct RateReport {
    std::vector<double> times;
    std::vector<double> norms;  ///< weighted L2 norm of rho_e
    double fitted_rate = 0.0;
    double fit_residual = 0.0;  ///< RMS deviation of log-norms from the fit
    std::size_t window_begin = 0;
    bool in_linear_regime = true;
    std::optional<double> predicted_rate;  ///< -k_e kappa(lambda) when supplied
};

/// Least-squares slope of log(norm) against time over the final half of the samples.
inline void fit_rate(RateReport& rep, double lo = 1e-12, double hi = 1e-2) {
    const std::size_t m = rep.times.size();
    rep.window_begin = m / 2;
    std::vector<double> x, y;
    rep.in_linear_regime = true;
    for (std::size_t k = rep.window_begin; k < m; ++k) {
        if (rep.norms[k] < lo || rep.norms[k] > hi) rep.in_linear_regime = false;
        if (!(rep.norms[k] > 0.0)) continue;
        x.push_back(rep.times[k]);
        y.push_back(std::log(rep.norms[k]));
    }
    if (x.size() < 2) {
        rep.fitted_rate = 0.0;
        rep.fit_residual = 0.0;
        rep.in_linear_regime = false;
        return;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    rep.fitted_rate = sxy / sxx;
    double ss = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double e = y[k] - (my + rep.fitted_rate * (x[k] - mx));
        ss += e * e;
    }
    rep.fit_residual = std::sqrt(ss / static_cast<double>(x.size()));
}

struct EvolveOptions {
    double T_final = 1.0;
    double cfl = 0.5;
    double dt_max = 0.0;  ///< 0: no cap beyond the stability limits
    std::size_t stride = 1;
    double extinction_level = 1e-12;
};

struct TrajectorySample {
    double t, norm_rho_i, norm_rho_e, max_rho_i, max_rho_e, max_V;
};

struct Trajectory {
    double dt = 0.0;
    std::size_t steps = 0;
    std::vector<TrajectorySample> samples;
    EvolState final_state;
    RateReport rate;
    std::optional<double> extinction_time;  ///< first recorded time after which max rho_i stays below the level
};

inline TrajectorySample sample_of(const EvolState& s, const RadialMesh& mesh) {
    return {s.t, weighted_norm(s.rho_i, mesh), weighted_norm(s.rho_e, mesh), max_abs(s.rho_i),
            max_abs(s.rho_e), max_abs(s.V)};
}

/// Time step used by run(): the stability limit at the initial state, capped by dt_max,
/// shortened so that a whole number of steps reaches T_final.
inline double choose_dt(const EvolState& s, double lambda, const HarmonicField& field, const ModelParams& p,
                        const RadialMesh& mesh, const EvolveOptions& opts) {
    Grid rhs(mesh.size());
    for (std::size_t j = 0; j < mesh.size(); ++j) rhs[j] = s.rho_i[j] - s.rho_e[j];
    const auto V = poisson_solve(rhs, mesh);
    const auto c = discharge_coefficients(lambda, V, field, p, mesh);
    double dt = step_limits(c, s.rho_i, s.rho_e, p, mesh).limit(opts.cfl);
    if (opts.dt_max > 0.0) dt = std::min(dt, opts.dt_max);
    const double steps = std::ceil(opts.T_final / dt);
    return opts.T_final / std::max(steps, 1.0);
}

/// Integrates from `initial` to T_final with a fixed step, recording norms every `stride` steps.
inline Trajectory run(const EvolState& initial, double lambda, const HarmonicField& field, const ModelParams& p,
                      const RadialMesh& mesh, const EvolveOptions& opts = {}) {
    p.validate();
    check_initial(initial, field, mesh);
    if (!(opts.T_final > 0.0)) throw DomainError("T_final must be > 0");
    if (opts.stride == 0) throw DomainError("stride must be >= 1");
    Trajectory tr;
    tr.dt = choose_dt(initial, lambda, field, p, mesh, opts);
    tr.steps = static_cast<std::size_t>(std::llround(opts.T_final / tr.dt));
    EvolState s = initial;
    auto record = [&](const EvolState& st) {
        tr.samples.push_back(sample_of(st, mesh));
        tr.rate.times.push_back(st.t);
        tr.rate.norms.push_back(tr.samples.back().norm_rho_e);
    };
    record(s);
    // The step bound is re-checked each step against the current field, with
    // headroom from the cfl factor used to pick dt.
    for (std::size_t k = 1; k <= tr.steps; ++k) {
        s = step(s, lambda, field, p, mesh, tr.dt);
        s.t = static_cast<double>(k) * tr.dt;
        if (k % opts.stride == 0 || k == tr.steps) record(s);
    }
    tr.final_state = s;
    fit_rate(tr.rate);
    for (std::size_t k = tr.samples.size(); k-- > 0;) {
        if (!(tr.samples[k].max_rho_i < opts.extinction_level)) break;
        tr.extinction_time = tr.samples[k].t;
    }
    return tr;
}

}  // namespace townsend
