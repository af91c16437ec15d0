#pragma once

// Everything: splines, geometry, dG discretization, IETI-DP solver,
// verification oracles and the experiment harness.

#include "dgieti/bspline.hpp"
#include "dgieti/geometry.hpp"
#include "dgieti/linalg.hpp"
#include "dgieti/discretize.hpp"
#include "dgieti/ieti.hpp"
#include "dgieti/verify.hpp"
#include "dgieti/experiment.hpp"
