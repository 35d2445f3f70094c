#pragma once

#include "spancca/errors.hpp"
#include "spancca/linalg.hpp"
#include "spancca/matrix_io.hpp"
#include "spancca/oracles.hpp"
#include "spancca/projections.hpp"
#include "spancca/rng.hpp"
#include "spancca/solver.hpp"
