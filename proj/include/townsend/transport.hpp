#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "townsend/errors.hpp"
#include "townsend/radial_geometry.hpp"

namespace townsend {

/// dPhi/dr * drho/dr + b rho = f with rho = 0 on the anode.
struct TransportProblem {
    Grid Phi;     ///< total potential, 0 on the anode
    Grid b_coef;  ///< reaction coefficient
    Grid f;       ///< source
    ElectrodeOrientation orient;
};

/// Smallest admissible |dPhi/dr| for a potential of the given scale.
inline double degeneracy_threshold(std::span<const double> Phi, const RadialMesh& mesh) {
    return 1e-10 * std::max(max_abs(Phi), 1e-300) / (mesh.r_outer() - mesh.r_inner());
}

/// Integrates the transport problem along the radial characteristics.
///
/// Along a ray, rho' = p - q rho with p = f/Phi' and q = b/Phi'. Each cell
/// uses an integrating factor for q (trapezoidal exponent) and the
/// trapezoidal rule for the source, so the update kernel is nonnegative and
/// the scheme is second order.
inline Grid solve_transport(const TransportProblem& prob, const RadialMesh& mesh) {
    const std::size_t m = mesh.size();
    if (prob.Phi.size() != m || prob.b_coef.size() != m || prob.f.size() != m)
        throw DomainError("transport fields must live on the mesh");
    const auto dphi = gradient(prob.Phi, mesh);
    const int sign = prob.orient.outward_sign();
    const double floor = degeneracy_threshold(prob.Phi, mesh);
    for (std::size_t j = 0; j < m; ++j) {
        if (!(sign * dphi[j] > floor))
            throw DegenerateField("|dPhi/dr| = " + std::to_string(std::abs(dphi[j])) + " at r = " +
                                  std::to_string(mesh.r(j)) +
                                  " is below the admissible bound or has the wrong orientation");
    }
    Grid rho = mesh.zeros();
    const double h = sign * mesh.dr();  // step pointing away from the anode
    const std::size_t start = mesh.anode_index(prob.orient);
    auto next = [&](std::size_t j) { return sign > 0 ? j + 1 : j - 1; };
    std::size_t j = start;
    for (std::size_t step = 0; step + 1 < m; ++step) {
        const std::size_t k = next(j);
        const double pj = prob.f[j] / dphi[j], pk = prob.f[k] / dphi[k];
        const double qj = prob.b_coef[j] / dphi[j], qk = prob.b_coef[k] / dphi[k];
        const double decay = std::exp(-0.5 * h * (qj + qk));
        rho[k] = decay * rho[j] + 0.5 * h * (decay * pj + pk);
        j = k;
    }
    return rho;
}

}  // namespace townsend
