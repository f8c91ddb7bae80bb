#pragma once

#include "mbprox/core.hpp"
#include "mbprox/problems.hpp"
#include "mbprox/prox.hpp"
#include "mbprox/solvers.hpp"
#include "mbprox/cost_model.hpp"
#include "mbprox/trace.hpp"
#include "mbprox/drivers.hpp"
#include "mbprox/diagnostics.hpp"
#include "mbprox/config.hpp"
#include "mbprox/csv.hpp"
#include "mbprox/harness.hpp"
