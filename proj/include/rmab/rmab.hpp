#pragma once

#include "rmab/errors.hpp"
#include "rmab/index.hpp"
#include "rmab/model.hpp"
#include "rmab/oracle.hpp"
#include "rmab/policy.hpp"
#include "rmab/rng.hpp"
#include "rmab/scenario_io.hpp"
#include "rmab/simulate.hpp"
#include "rmab/stopping.hpp"
