#pragma once

#include "ratioprox/types.hpp"
#include "ratioprox/rng.hpp"
#include "ratioprox/prox.hpp"
#include "ratioprox/prox_oracle.hpp"
#include "ratioprox/linalg.hpp"
#include "ratioprox/solvers.hpp"
#include "ratioprox/sensing.hpp"
#include "ratioprox/metrics.hpp"
#include "ratioprox/imaging.hpp"
#include "ratioprox/harness.hpp"
