#pragma once

#include <catch_amalgamated.hpp>

#include "townsend/townsend.hpp"

namespace fixture {

inline townsend::ElectrodeOrientation inner_anode() { return {townsend::Electrode::inner}; }
inline townsend::ElectrodeOrientation outer_anode() { return {townsend::Electrode::outer}; }

/// Spherical shell 1 < r < 2 with the anode on the inner sphere.
struct Shell {
    townsend::RadialMesh mesh;
    townsend::HarmonicField field;
    townsend::ModelParams params;

    Shell(std::size_t n, townsend::ModelParams p, townsend::ElectrodeOrientation o = inner_anode(), int d = 3)
        : mesh(d, 1.0, 2.0, n), field(townsend::harmonic_potential(mesh, o)), params(p) {}
};

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace fixture
