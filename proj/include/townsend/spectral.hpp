#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "townsend/errors.hpp"
#include "townsend/model.hpp"
#include "townsend/radial_geometry.hpp"

namespace townsend {

/// Ground state of A = -Laplacian - g(lambda |dH|) with Dirichlet ends.
struct EigenPair {
    double kappa = 0.0;
    Grid phi;  ///< positive inside, zero on the boundary, sum_j w_j phi_j^2 = 1
    double residual = 0.0;
};

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
struct SymTridiagonal {
    std::vector<double> diag;
    std::vector<double> off;  ///< off[i] couples rows i and i+1

    std::size_t size() const { return diag.size(); }

    /// Number of eigenvalues strictly below x (Sturm sequence count).
    std::size_t count_below(double x) const {
        std::size_t count = 0;
        double q = 1.0;
        for (std::size_t i = 0; i < diag.size(); ++i) {
            const double coupling = i == 0 ? 0.0 : off[i - 1] * off[i - 1] / q;
            q = diag[i] - x - coupling;
            if (q == 0.0) q = -std::numeric_limits<double>::epsilon() * (std::abs(x) + 1.0);
            if (q < 0.0) ++count;
        }
        return count;
    }

    /// Gershgorin enclosure [lo, hi] of the spectrum.
    std::pair<double, double> gershgorin() const {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < diag.size(); ++i) {
            double radius = 0.0;
            if (i > 0) radius += std::abs(off[i - 1]);
            if (i + 1 < diag.size()) radius += std::abs(off[i]);
            lo = std::min(lo, diag[i] - radius);
            hi = std::max(hi, diag[i] + radius);
        }
        return {lo, hi};
    }

    std::vector<double> multiply(std::span<const double> x) const {
        const std::size_t m = diag.size();
        std::vector<double> y(m);
        for (std::size_t i = 0; i < m; ++i) {
            y[i] = diag[i] * x[i];
            if (i > 0) y[i] += off[i - 1] * x[i - 1];
            if (i + 1 < m) y[i] += off[i] * x[i + 1];
        }
        return y;
    }
};

/// q_j = g(lambda |dH_j|) at every node.
inline Grid growth_potential(double lambda, const HarmonicField& field, const ModelParams& p) {
    Grid q(field.dH.size());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = g(lambda * std::abs(field.dH[j]), p);
    return q;
}

/// W^{1/2} (-L_h - diag(q)) W^{-1/2} on the interior nodes, W = diag(w_j).
inline SymTridiagonal symmetrized_operator(std::span<const double> q, const RadialMesh& mesh) {
    const std::size_t n = mesh.interior();
    const double h2 = mesh.dr() * mesh.dr();
    SymTridiagonal t;
    t.diag.resize(n);
    t.off.resize(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + 1;
        const auto s = laplacian_stencil(mesh, j);
        t.diag[i] = -s.centre - q[j];
        if (i + 1 < n) {
            const double aj = mesh.area(mesh.r(j));
            const double ak = mesh.area(mesh.r(j + 1));
            t.off[i] = -mesh.face_area(j) / (h2 * std::sqrt(aj * ak));
        }
    }
    return t;
}

/// Lowest eigenvalue by Sturm bisection to working precision.
inline double lowest_eigenvalue(const SymTridiagonal& t) {
    auto [lo, hi] = t.gershgorin();
    const double scale = std::max(std::abs(lo), std::abs(hi));
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (t.count_below(mid) >= 1)
            hi = mid;
        else
            lo = mid;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * scale) break;
    }
    return 0.5 * (lo + hi);
}

struct EigenOptions {
    double tol_eig = 1e-12;  ///< residual relative to the operator scale
    int max_iterations = 50;
};

/// Inverse iteration for the eigenvector of the lowest eigenvalue `kappa`.
inline std::vector<double> ground_vector(const SymTridiagonal& t, double kappa,
                                         const EigenOptions& opts, double* residual_out) {
    const std::size_t m = t.size();
    auto [glo, ghi] = t.gershgorin();
    const double scale = std::max({std::abs(glo), std::abs(ghi), 1.0});
    // Shift strictly below kappa so the shifted matrix is positive definite.
    const double shift = kappa - 1e-9 * scale;
    std::vector<double> lower(m), diag(m), upper(m);
    for (std::size_t i = 0; i < m; ++i) {
        diag[i] = t.diag[i] - shift;
        if (i > 0) lower[i] = t.off[i - 1];
        if (i + 1 < m) upper[i] = t.off[i];
    }
    std::vector<double> y(m, 1.0 / std::sqrt(static_cast<double>(m)));
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iterations; ++it) {
        y = solve_tridiagonal(lower, diag, upper, y);
        double norm = 0.0;
        for (double v : y) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : y) v /= norm;
        const auto ty = t.multiply(y);
        double r2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) r2 += (ty[i] - kappa * y[i]) * (ty[i] - kappa * y[i]);
        residual = std::sqrt(r2) / scale;
        if (residual <= opts.tol_eig) break;
    }
    if (!(residual <= opts.tol_eig))
        throw SolverError("inverse iteration did not converge (relative residual " +
                          std::to_string(residual) + ")");
    if (residual_out) *residual_out = residual;
    return y;
}

/// Ground eigenpair of the radial operator for an arbitrary node potential q.
inline EigenPair ground_state(std::span<const double> q, const RadialMesh& mesh,
                              const EigenOptions& opts = {}) {
    const auto t = symmetrized_operator(q, mesh);
    EigenPair pair;
    pair.kappa = lowest_eigenvalue(t);
    const auto y = ground_vector(t, pair.kappa, opts, &pair.residual);
    pair.phi = mesh.zeros();
    double mean = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) mean += y[i];
    const double sign = mean < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        pair.phi[i + 1] = sign * y[i] / std::sqrt(mesh.weights()[i + 1]);
    return pair;
}

/// kappa(lambda): lowest eigenvalue of -Laplacian - g(lambda |dH|).
inline EigenPair stability_index(double lambda, const HarmonicField& field, const ModelParams& p,
                                 const RadialMesh& mesh, const EigenOptions& opts = {}) {
    if (!(lambda >= 0.0)) throw DomainError("voltage must be >= 0");
    return ground_state(growth_potential(lambda, field, p), mesh, opts);
}

/// dkappa/dlambda by Hellmann-Feynman: -sum_j w_j |dH_j| g'(lambda |dH_j|) phi_j^2.
inline double kappa_prime(double lambda, const HarmonicField& field, const ModelParams& p,
                          const RadialMesh& mesh, const EigenPair& pair) {
    double s = 0.0;
    for (std::size_t j = 1; j <= mesh.interior(); ++j) {
        const double dh = std::abs(field.dH[j]);
        s += mesh.weights()[j] * dh * g_prime(lambda * dh, p) * pair.phi[j] * pair.phi[j];
    }
    return -s;
}

/// <u, A u>_w / <u, u>_w for u vanishing on the boundary.
inline double rayleigh_quotient(std::span<const double> u, std::span<const double> q,
                                const RadialMesh& mesh) {
    const auto lap = radial_laplacian(u, mesh);
    double num = 0.0;
    for (std::size_t j = 1; j <= mesh.interior(); ++j)
        num += mesh.weights()[j] * u[j] * (-lap[j] - q[j] * u[j]);
    return num / weighted_dot(u, u, mesh);
}

struct ScanSpec {
    double lambda_min = 0.0;
    double lambda_max = 1.0;
    std::size_t samples = 200;
    bool log_spaced = true;

    std::vector<double> grid() const {
        std::vector<double> out(samples);
        for (std::size_t k = 0; k < samples; ++k) {
            const double t = samples == 1 ? 0.0 : static_cast<double>(k) / (samples - 1);
            out[k] = log_spaced
                         ? std::exp(std::log(lambda_min) + t * (std::log(lambda_max) - std::log(lambda_min)))
                         : lambda_min + t * (lambda_max - lambda_min);
        }
        if (samples > 1) out.back() = lambda_max;
        return out;
    }
};

/// 200 log-spaced samples over [1e-4, 1] * 8 max(a, 1) / min|dH|.
inline ScanSpec default_scan(const HarmonicField& field, const ModelParams& p) {
    double min_dh = std::numeric_limits<double>::infinity();
    for (double v : field.dH) min_dh = std::min(min_dh, std::abs(v));
    ScanSpec s;
    s.lambda_max = 8.0 * std::max(p.a, 1.0) / min_dh;
    s.lambda_min = 1e-4 * s.lambda_max;
    return s;
}

struct KappaSample {
    double lambda, kappa, kappa_prime;
};

struct SparkingOptions {
    double tol_root = 1e-8;
    unsigned threads = 1;
    EigenOptions eig{};
};

struct SparkingResult {
    std::optional<double> lambda_star;
    std::optional<double> lambda_sharp;
    std::vector<KappaSample> kappa_profile;
    std::vector<KappaSample> roots;  ///< every refined zero crossing, ascending
    std::string diagnostic;          ///< non-empty when the root pattern is unexpected
};

inline KappaSample sample_kappa(double lambda, const HarmonicField& field, const ModelParams& p,
                                const RadialMesh& mesh, const EigenOptions& eig = {}) {
    const auto pair = stability_index(lambda, field, p, mesh, eig);
    return {lambda, pair.kappa, kappa_prime(lambda, field, p, mesh, pair)};
}

/// Evaluates kappa on every lambda of the grid; the work is split into
/// contiguous blocks over `threads` workers.
inline std::vector<KappaSample> kappa_profile(std::span<const double> lambdas,
                                              const HarmonicField& field, const ModelParams& p,
                                              const RadialMesh& mesh, unsigned threads = 1,
                                              const EigenOptions& eig = {}) {
    std::vector<KappaSample> out(lambdas.size());
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(lambdas.size(), 1));
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) out[k] = sample_kappa(lambdas[k], field, p, mesh, eig);
    };
    if (workers == 1) {
        work(0, lambdas.size());
        return out;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (lambdas.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(lambdas.size(), begin + chunk);
        if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
    return out;
}

/// Bisection on kappa inside a sign-change bracket until |kappa| < tol_root.
inline double refine_root(double lo, double hi, double kappa_lo, const HarmonicField& field,
                          const ModelParams& p, const RadialMesh& mesh, const SparkingOptions& opts) {
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double k = stability_index(mid, field, p, mesh, opts.eig).kappa;
        if (std::abs(k) < opts.tol_root) return mid;
        if ((k < 0.0) == (kappa_lo < 0.0)) {
            lo = mid;
            kappa_lo = k;
        } else {
            hi = mid;
        }
        if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * hi) break;
    }
    const double k = stability_index(mid, field, p, mesh, opts.eig).kappa;
    if (!(std::abs(k) < opts.tol_root))
        throw SolverError("root bracket collapsed with |kappa| = " + std::to_string(std::abs(k)));
    return mid;
}

/// Scans kappa, brackets every sign change, refines it, and classifies the
/// roots: lambda* is the first root where kappa decreases through zero,
/// lambda# the next root after it where kappa increases.
inline SparkingResult find_sparking(const HarmonicField& field, const ModelParams& p,
                                    const RadialMesh& mesh, const ScanSpec& scan,
                                    const SparkingOptions& opts = {}) {
    if (!(scan.lambda_max > scan.lambda_min) || scan.samples < 2 ||
        (scan.log_spaced && !(scan.lambda_min > 0.0)))
        throw DomainError("invalid lambda scan");
    SparkingResult res;
    const auto lambdas = scan.grid();
    res.kappa_profile = kappa_profile(lambdas, field, p, mesh, opts.threads, opts.eig);
    const auto& prof = res.kappa_profile;
    for (std::size_t k = 0; k + 1 < prof.size(); ++k) {
        if (prof[k].kappa == 0.0) {
            res.roots.push_back(prof[k]);
            continue;
        }
        if ((prof[k].kappa < 0.0) == (prof[k + 1].kappa < 0.0) || prof[k + 1].kappa == 0.0) continue;
        const double root = refine_root(prof[k].lambda, prof[k + 1].lambda, prof[k].kappa, field, p, mesh, opts);
        res.roots.push_back(sample_kappa(root, field, p, mesh, opts.eig));
    }
    for (std::size_t k = 0; k < res.roots.size(); ++k) {
        if (!res.lambda_star && res.roots[k].kappa_prime < 0.0) {
            res.lambda_star = res.roots[k].lambda;
        } else if (res.lambda_star && !res.lambda_sharp && res.roots[k].kappa_prime > 0.0) {
            res.lambda_sharp = res.roots[k].lambda;
        }
    }
    if (res.roots.size() > 2) {
        res.diagnostic = std::to_string(res.roots.size()) + " sign changes of kappa at lambda =";
        for (const auto& r : res.roots) res.diagnostic += " " + std::to_string(r.lambda);
    }
    return res;
}

}  // namespace townsend
