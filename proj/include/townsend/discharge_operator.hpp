#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "townsend/model.hpp"
#include "townsend/radial_geometry.hpp"

namespace townsend {

// Spatial discretization of the stationary and evolution operators.
//
// Both the steady solver and the time integrator evaluate the same discrete
// operator, so an accepted steady state is an exact fixed point of the time
// stepper. Electrons are carried in the weighted variable
// R = rho_e exp(lambda H / 2); in that variable the drift by lambda H is
// absorbed exactly and the remaining drift by V is exponentially fitted:
//
//   -Lap R - V' R' = -exp(-V) div(exp(V) grad R)
//
// with the face average of exp(V) taken as its exact integral mean across
// the cell. At V = 0 the electron operator reduces to the symmetric
// tridiagonal operator used for the stability index. Ions use first-order
// upwind differences of the nodal flux keyed to the drift direction.

/// (exp(x) - 1) / x, equal to 1 at x = 0.
inline double exprel(double x) { return x == 0.0 ? 1.0 : std::expm1(x) / x; }

/// Field-dependent coefficients of the discrete operators for given (lambda, V).
struct DischargeCoefficients {
    double lambda = 0.0;
    Grid Phi;          ///< V + lambda H
    Grid dPhi;         ///< nodal dPhi/dr
    Grid ionization;   ///< h(|dPhi/dr|) at nodes
    Grid damping;      ///< exp(-lambda H / 2)
    Grid lapV;         ///< radial_laplacian(V)
    std::vector<double> east, west;  ///< fitted electron diffusion couplings per node
    Grid zeroth;       ///< lambda/2 V' H' - Lap V + lambda^2/4 H'^2 at nodes
};

inline DischargeCoefficients discharge_coefficients(double lambda, std::span<const double> V,
                                                    const HarmonicField& field, const ModelParams& p,
                                                    const RadialMesh& mesh) {
    const std::size_t m = mesh.size();
    DischargeCoefficients c;
    c.lambda = lambda;
    c.Phi.resize(m);
    for (std::size_t j = 0; j < m; ++j) c.Phi[j] = V[j] + lambda * field.H[j];
    const auto dV = gradient(V, mesh);
    c.dPhi.resize(m);
    c.ionization.resize(m);
    c.damping.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        c.dPhi[j] = dV[j] + lambda * field.dH[j];
        c.ionization[j] = townsend_h(std::abs(c.dPhi[j]), p);
        c.damping[j] = std::exp(-0.5 * lambda * field.H[j]);
    }
    c.lapV = radial_laplacian(V, mesh);
    c.east.assign(m, 0.0);
    c.west.assign(m, 0.0);
    c.zeroth.assign(m, 0.0);
    const double h2 = mesh.dr() * mesh.dr();
    for (std::size_t j = 1; j + 1 < m; ++j) {
        const double aj = mesh.area(mesh.r(j));
        c.east[j] = mesh.face_area(j) / (aj * h2) * exprel(V[j + 1] - V[j]);
        c.west[j] = mesh.face_area(j - 1) / (aj * h2) * exprel(-(V[j] - V[j - 1]));
        c.zeroth[j] = 0.5 * lambda * dV[j] * field.dH[j] - c.lapV[j] +
                      0.25 * lambda * lambda * field.dH[j] * field.dH[j];
    }
    return c;
}

/// Index of the node upstream of j for ion drift (towards the anode).
inline std::size_t upstream(std::size_t j, ElectrodeOrientation orient) {
    return orient.anode_at == Electrode::inner ? j - 1 : j + 1;
}

/// Nodes carrying an ion unknown: every node except the anode, ordered
/// from the anode towards the cathode.
inline std::vector<std::size_t> ion_nodes(ElectrodeOrientation orient, const RadialMesh& mesh) {
    std::vector<std::size_t> out;
    out.reserve(mesh.size() - 1);
    if (orient.anode_at == Electrode::inner)
        for (std::size_t j = 1; j < mesh.size(); ++j) out.push_back(j);
    else
        for (std::size_t j = mesh.size() - 1; j-- > 0;) out.push_back(j);
    return out;
}

/// Ion transport terms at every non-anode node:
///   div_j = (G_j - G_up) / (r_j^{d-1} (r_j - r_up)),  G = r^{d-1} Phi' rho_i,
///   src_j = (r_j^{d-1} S_j + r_up^{d-1} S_up) / (2 r_j^{d-1}),  S = h rho_e.
/// The upstream difference is first-order upwind for drift away from the
/// anode; the trapezoidal source average makes the stationary balance the
/// trapezoidal quadrature of the characteristic integral.
struct IonTerms {
    Grid divergence;  ///< div(rho_i grad Phi)
    Grid source;      ///< cell-averaged h(|grad Phi|) rho_e
};

inline IonTerms ion_terms(std::span<const double> rho_i, std::span<const double> rho_e,
                          const DischargeCoefficients& c, ElectrodeOrientation orient,
                          const RadialMesh& mesh) {
    IonTerms t{mesh.zeros(), mesh.zeros()};
    const double step = orient.outward_sign() * mesh.dr();
    const std::size_t anode = mesh.anode_index(orient);
    auto flux = [&](std::size_t j) {
        return j == anode ? 0.0 : mesh.area(mesh.r(j)) * c.dPhi[j] * rho_i[j];
    };
    auto src = [&](std::size_t j) { return mesh.area(mesh.r(j)) * c.ionization[j] * rho_e[j]; };
    for (std::size_t j : ion_nodes(orient, mesh)) {
        const std::size_t u = upstream(j, orient);
        const double aj = mesh.area(mesh.r(j));
        t.divergence[j] = (flux(j) - flux(u)) / (aj * step);
        t.source[j] = 0.5 * (src(j) + src(u)) / aj;
    }
    return t;
}

/// -exp(-V) div(exp(V) grad R) + (zeroth - h) R at interior nodes, R = 0 on the boundary.
inline Grid electron_operator(std::span<const double> R, const DischargeCoefficients& c,
                              const RadialMesh& mesh) {
    Grid out = mesh.zeros();
    for (std::size_t j = 1; j <= mesh.interior(); ++j) {
        const double rw = j == 1 ? 0.0 : R[j - 1];
        const double re = j == mesh.interior() ? 0.0 : R[j + 1];
        out[j] = -(c.east[j] * (re - R[j]) - c.west[j] * (R[j] - rw)) +
                 (c.zeroth[j] - c.ionization[j]) * R[j];
    }
    return out;
}

}  // namespace townsend
