#pragma once

// Umbrella header for the drolab library: linear programming core,
// distribution handling, worst-case risk and chance evaluation, the four
// program solvers, and the consistency experiment engine.

#include "dro/chance.hpp"
#include "dro/consistency.hpp"
#include "dro/core.hpp"
#include "dro/distributions.hpp"
#include "dro/lp.hpp"
#include "dro/problem.hpp"
#include "dro/risk.hpp"
#include "dro/rng.hpp"
#include "dro/solvers.hpp"
