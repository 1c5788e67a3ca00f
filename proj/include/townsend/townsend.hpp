#pragma once

#include "townsend/errors.hpp"
#include "townsend/model.hpp"
#include "townsend/radial_geometry.hpp"
#include "townsend/spectral.hpp"
#include "townsend/transport.hpp"
#include "townsend/discharge_operator.hpp"
#include "townsend/steady_branch.hpp"
#include "townsend/evolve.hpp"
