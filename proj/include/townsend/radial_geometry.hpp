#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "townsend/errors.hpp"

namespace townsend {

/// Values sampled on every mesh node, boundary nodes included.
using Grid = std::vector<double>;

enum class Electrode { inner, outer };

inline const char* to_string(Electrode e) { return e == Electrode::inner ? "inner" : "outer"; }

/// Which boundary carries the anode; the cathode is the other one.
struct ElectrodeOrientation {
    Electrode anode_at;

    Electrode cathode_at() const {
        return anode_at == Electrode::inner ? Electrode::outer : Electrode::inner;
    }
    /// +1 when the anode is the inner sphere (H increases outward), -1 otherwise.
    int outward_sign() const { return anode_at == Electrode::inner ? 1 : -1; }
};

/// Uniform radial grid on [r_inner, r_outer] with n interior nodes.
///
/// Node j sits at r_inner + j*dr for j = 0..n+1. The quadrature weight of
/// node j is r_j^{d-1} dr, the radial volume element up to the constant
/// surface measure of the unit sphere.
class RadialMesh {
public:
    RadialMesh(int d, double r_inner, double r_outer, std::size_t n)
        : d_(d), r_inner_(r_inner), r_outer_(r_outer), n_(n) {
        if (d != 2 && d != 3) throw DomainError("dimension must be 2 or 3");
        if (!(r_inner > 0.0)) throw DomainError("r_inner must be > 0 (the origin is singular)");
        if (!(r_outer > r_inner)) throw DomainError("r_outer must exceed r_inner");
        if (n < 3) throw DomainError("need at least 3 interior nodes");
        dr_ = (r_outer - r_inner) / static_cast<double>(n + 1);
        nodes_.resize(n + 2);
        weights_.resize(n + 2);
        for (std::size_t j = 0; j < n + 2; ++j) {
            nodes_[j] = j == n + 1 ? r_outer : r_inner + static_cast<double>(j) * dr_;
            weights_[j] = area(nodes_[j]) * dr_;
        }
    }

    int dim() const { return d_; }
    double r_inner() const { return r_inner_; }
    double r_outer() const { return r_outer_; }
    double dr() const { return dr_; }
    std::size_t interior() const { return n_; }
    std::size_t size() const { return n_ + 2; }
    double r(std::size_t j) const { return nodes_[j]; }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }

    /// r^{d-1}
    double area(double r) const { return d_ == 2 ? r : r * r; }
    /// r_{j+1/2}^{d-1}, the area of the face between nodes j and j+1.
    double face_area(std::size_t j) const { return area(nodes_[j] + 0.5 * dr_); }

    std::size_t anode_index(ElectrodeOrientation o) const {
        return o.anode_at == Electrode::inner ? 0 : n_ + 1;
    }
    std::size_t cathode_index(ElectrodeOrientation o) const {
        return o.anode_at == Electrode::inner ? n_ + 1 : 0;
    }
    double radius_of(Electrode e) const { return e == Electrode::inner ? r_inner_ : r_outer_; }

    Grid zeros() const { return Grid(size(), 0.0); }

private:
    int d_;
    double r_inner_, r_outer_;
    std::size_t n_;
    double dr_ = 0.0;
    std::vector<double> nodes_, weights_;
};

/// The harmonic reference potential: H = 0 on the anode, 1 on the cathode.
struct HarmonicField {
    Grid H;
    Grid dH;  ///< dH/dr
    ElectrodeOrientation orient;
};

/// Closed-form radial Laplace solution.
inline double harmonic_value(int d, double r, double r_a, double r_c) {
    if (d == 3) return r_c * (r - r_a) / (r * (r_c - r_a));
    return std::log(r / r_a) / std::log(r_c / r_a);
}

inline double harmonic_slope(int d, double r, double r_a, double r_c) {
    if (d == 3) return r_c * r_a / ((r_c - r_a) * r * r);
    return 1.0 / (r * std::log(r_c / r_a));
}

inline HarmonicField harmonic_potential(const RadialMesh& mesh, ElectrodeOrientation orient) {
    const double r_a = mesh.radius_of(orient.anode_at);
    const double r_c = mesh.radius_of(orient.cathode_at());
    HarmonicField f{mesh.zeros(), mesh.zeros(), orient};
    for (std::size_t j = 0; j < mesh.size(); ++j) {
        f.H[j] = harmonic_value(mesh.dim(), mesh.r(j), r_a, r_c);
        f.dH[j] = harmonic_slope(mesh.dim(), mesh.r(j), r_a, r_c);
    }
    f.H[mesh.anode_index(orient)] = 0.0;
    f.H[mesh.cathode_index(orient)] = 1.0;
    return f;
}

/// Solves a tridiagonal system by the Thomas algorithm. `lower[i]` couples
/// row i to i-1 and `upper[i]` couples row i to i+1; lower[0] and
/// upper[m-1] are ignored. Requires a matrix that needs no pivoting
/// (diagonally dominant or symmetric positive definite).
inline std::vector<double> solve_tridiagonal(std::span<const double> lower,
                                             std::span<const double> diag,
                                             std::span<const double> upper,
                                             std::span<const double> rhs) {
    const std::size_t m = diag.size();
    std::vector<double> c(m), x(m);
    double denom = diag[0];
    if (denom == 0.0) throw SolverError("singular tridiagonal system");
    c[0] = m > 1 ? upper[0] / denom : 0.0;
    x[0] = rhs[0] / denom;
    for (std::size_t i = 1; i < m; ++i) {
        denom = diag[i] - lower[i] * c[i - 1];
        if (denom == 0.0) throw SolverError("singular tridiagonal system");
        c[i] = i + 1 < m ? upper[i] / denom : 0.0;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / denom;
    }
    for (std::size_t i = m - 1; i-- > 0;) x[i] -= c[i] * x[i + 1];
    return x;
}

/// Coefficients of the conservative radial Laplacian at interior node j:
/// (Lf)_j = west*f_{j-1} + centre*f_j + east*f_{j+1}.
struct LaplacianStencil {
    double west, centre, east;
};

inline LaplacianStencil laplacian_stencil(const RadialMesh& mesh, std::size_t j) {
    const double h2 = mesh.dr() * mesh.dr();
    const double aj = mesh.area(mesh.r(j));
    const double west = mesh.face_area(j - 1) / (aj * h2);
    const double east = mesh.face_area(j) / (aj * h2);
    return {west, -(west + east), east};
}

/// r^{1-d} d/dr (r^{d-1} df/dr) in flux form; zero at the boundary nodes.
inline Grid radial_laplacian(std::span<const double> f, const RadialMesh& mesh) {
    Grid out = mesh.zeros();
    for (std::size_t j = 1; j <= mesh.interior(); ++j) {
        const auto s = laplacian_stencil(mesh, j);
        out[j] = s.west * f[j - 1] + s.centre * f[j] + s.east * f[j + 1];
    }
    return out;
}

/// Solves radial_laplacian(V) = rhs at interior nodes with V = 0 at both
/// boundaries. Boundary entries of `rhs` are ignored.
inline Grid poisson_solve(std::span<const double> rhs, const RadialMesh& mesh) {
    const std::size_t n = mesh.interior();
    std::vector<double> lo(n), di(n), up(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = laplacian_stencil(mesh, i + 1);
        lo[i] = s.west;
        di[i] = s.centre;
        up[i] = s.east;
        b[i] = rhs[i + 1];
    }
    const auto x = solve_tridiagonal(lo, di, up, b);
    Grid V = mesh.zeros();
    std::copy(x.begin(), x.end(), V.begin() + 1);
    return V;
}

/// df/dr: centred differences inside, second-order one-sided at the ends.
inline Grid gradient(std::span<const double> f, const RadialMesh& mesh) {
    const std::size_t last = mesh.size() - 1;
    const double h = mesh.dr();
    Grid out(mesh.size());
    for (std::size_t j = 1; j < last; ++j) out[j] = (f[j + 1] - f[j - 1]) / (2.0 * h);
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    out[last] = (3.0 * f[last] - 4.0 * f[last - 1] + f[last - 2]) / (2.0 * h);
    return out;
}

/// Sum_j w_j f_j g_j over interior nodes.
inline double weighted_dot(std::span<const double> f, std::span<const double> g,
                           const RadialMesh& mesh) {
    double s = 0.0;
    for (std::size_t j = 1; j <= mesh.interior(); ++j) s += mesh.weights()[j] * f[j] * g[j];
    return s;
}

inline double weighted_norm(std::span<const double> f, const RadialMesh& mesh) {
    return std::sqrt(weighted_dot(f, f, mesh));
}

inline double max_abs(std::span<const double> f) {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace townsend
